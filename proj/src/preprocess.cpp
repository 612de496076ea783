#include "par/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "par/errors.hpp"

namespace par {

std::string to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_string(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw ConfigurationError("unknown split '" + name + "'");
}

Padding square_padding(std::size_t height, std::size_t width) {
    Padding p;
    if (height > width) {
        const auto extra = height - width;
        p.left = extra / 2;
        p.right = extra - p.left;
    } else {
        const auto extra = width - height;
        p.top = extra / 2;
        p.bottom = extra - p.top;
    }
    return p;
}

Image pad(const Image& image, const Padding& padding) {
    Image out(image.height + padding.top + padding.bottom, image.width + padding.left + padding.right, image.channels);
    for (std::size_t y = 0; y < image.height; ++y) {
        const float* src = &image.pixels[y * image.width * image.channels];
        float* dst = &out.at(y + padding.top, padding.left);
        std::copy(src, src + image.width * image.channels, dst);
    }
    return out;
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
    if (image.empty() || height == 0 || width == 0) throw ValidationError("resize_bilinear: empty image");
    if (image.height == height && image.width == width) return image;
    Image out(height, width, image.channels);
    const double sy = static_cast<double>(image.height) / static_cast<double>(height);
    const double sx = static_cast<double>(image.width) / static_cast<double>(width);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const auto y1 = std::min(y0 + 1, image.height - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const auto x1 = std::min(x0 + 1, image.width - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::size_t c = 0; c < image.channels; ++c) {
                const double top = image.at(y0, x0, c) * (1.0 - wx) + image.at(y0, x1, c) * wx;
                const double bottom = image.at(y1, x0, c) * (1.0 - wx) + image.at(y1, x1, c) * wx;
                out.at(y, x, c) = static_cast<float>(top * (1.0 - wy) + bottom * wy);
            }
        }
    }
    return out;
}

namespace {

// For each target index, the (source index, overlap) pairs of its interval.
std::vector<std::vector<std::pair<std::size_t, double>>> area_weights(std::size_t in, std::size_t out) {
    std::vector<std::vector<std::pair<std::size_t, double>>> w(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        const double lo = o * scale, hi = (o + 1) * scale;
        for (auto s = static_cast<std::size_t>(std::floor(lo)); s < in && static_cast<double>(s) < hi; ++s) {
            const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
            if (overlap > 0) w[o].emplace_back(s, overlap / scale);
        }
    }
    return w;
}

}  // namespace

Image resize_area(const Image& image, std::size_t height, std::size_t width) {
    if (image.empty() || height == 0 || width == 0) throw ValidationError("resize_area: empty image");
    if (image.height == height && image.width == width) return image;
    const auto wy = area_weights(image.height, height);
    const auto wx = area_weights(image.width, width);
    Image out(height, width, image.channels);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < image.channels; ++c) {
                double acc = 0.0;
                for (auto [sy, a] : wy[y]) {
                    for (auto [sx, b] : wx[x]) acc += a * b * image.at(sy, sx, c);
                }
                out.at(y, x, c) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

Image binarize(const Image& image, float threshold) {
    Image out = image;
    for (auto& v : out.pixels) v = v >= threshold ? 1.0f : 0.0f;
    return out;
}

ProcessedSample preprocess(const Sample& sample, std::size_t target_size, std::size_t mask_grid) {
    if (sample.image.empty()) throw ValidationError("preprocess: sample '" + sample.id + "' has an empty image");
    if (sample.mask.empty()) throw ValidationError("preprocess: sample '" + sample.id + "' has an empty mask");
    if (mask_grid == 0 || target_size % mask_grid != 0) {
        throw ValidationError("preprocess: target size " + std::to_string(target_size) +
                              " is not divisible by mask grid " + std::to_string(mask_grid));
    }
    ProcessedSample out;
    out.id = sample.id;
    out.labels = sample.labels;
    const auto& img = sample.image;
    out.image = resize_bilinear(pad(img, square_padding(img.height, img.width)), target_size, target_size);
    const auto& m = sample.mask;
    out.mask = binarize(resize_area(pad(m, square_padding(m.height, m.width)), mask_grid, mask_grid), 0.5f);
    return out;
}

}  // namespace par
