#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "par/tensor.hpp"

namespace par {

// Row-major H x W x C float image with values in [0, 1]. Masks are
// single-channel images holding exactly 0 or 1.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
        : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

    bool empty() const { return pixels.empty(); }
    float& at(std::size_t y, std::size_t x, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
    float at(std::size_t y, std::size_t x, std::size_t c = 0) const { return pixels[(y * width + x) * channels + c]; }

    bool operator==(const Image&) const = default;
};

bool is_binary(const Image& mask);
double foreground_fraction(const Image& mask);

// 8-bit PNG I/O via libpng. RGB for 3 channels, grayscale for 1; values are
// quantized as round(v * 255).
void write_png(const std::filesystem::path& path, const Image& image);
// Decodes to `channels` (1 or 3) channels; throws std::runtime_error.
Image read_png(const std::filesystem::path& path, std::size_t channels);
// Grayscale PNG with foreground = 255; any value >= 128 becomes 1.
Image read_mask_png(const std::filesystem::path& path);

// Packs equally sized images into an N x H x W x C tensor.
template <typename T>
Tensor<T> stack_images(const std::vector<const Image*>& images);

}  // namespace par
