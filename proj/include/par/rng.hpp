#pragma once

#include <cstdint>
#include <string_view>

namespace par {

// SplitMix64 finalizer; used to derive independent streams from (seed, key).
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t key) {
    return mix64(seed ^ mix64(key + 0x632BE59BD9B4E019ULL));
}

// FNV-1a, for turning names into seed keys.
constexpr std::uint64_t hash_name(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Uniform double in [0, 1) from 53 random bits.
constexpr double unit_interval(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace par
