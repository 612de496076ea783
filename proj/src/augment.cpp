#include "par/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace par {

AugmentParams sample_augment_params(std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); };
    AugmentParams p;
    p.rotation = uniform(-5.0, 5.0) * std::numbers::pi / 180.0;
    p.flip = uniform(0.0, 1.0) < 0.5;
    p.shift_x = uniform(-0.02, 0.02);
    p.shift_y = uniform(-0.02, 0.02);
    p.shear = uniform(-0.05, 0.05);
    p.zoom = uniform(0.92, 1.08);
    p.brightness = uniform(0.9, 1.1);
    return p;
}

namespace {

// Maps output pixel coordinates back into the source image.
struct InverseAffine {
    double a, b, c, d;  // inverse linear part
    double cx, cy, tx, ty;

    void source(double x, double y, double& sx, double& sy) const {
        const double u = x - cx - tx;
        const double v = y - cy - ty;
        sx = cx + a * u + b * v;
        sy = cy + c * u + d * v;
    }
};

InverseAffine make_inverse(const AugmentParams& p, std::size_t height, std::size_t width) {
    // Forward linear part: Rotation * Shear * Zoom * Flip.
    const double cr = std::cos(p.rotation), sr = std::sin(p.rotation);
    const double sh = std::tan(p.shear);
    const double f = p.flip ? -1.0 : 1.0;
    // R * [[1, sh], [0, 1]] * diag(z, z) * diag(f, 1)
    const double m00 = cr * p.zoom * f;
    const double m01 = (cr * sh - sr) * p.zoom;
    const double m10 = sr * p.zoom * f;
    const double m11 = (sr * sh + cr) * p.zoom;
    const double det = m00 * m11 - m01 * m10;
    InverseAffine inv{m11 / det, -m01 / det, -m10 / det, m00 / det, (static_cast<double>(width) - 1.0) / 2.0,
                      (static_cast<double>(height) - 1.0) / 2.0, p.shift_x * static_cast<double>(width),
                      p.shift_y * static_cast<double>(height)};
    return inv;
}

float bilinear(const Image& img, double x, double y, std::size_t c) {
    if (x < 0.0 || y < 0.0 || x > static_cast<double>(img.width - 1) || y > static_cast<double>(img.height - 1)) {
        return 0.0f;
    }
    const auto x0 = static_cast<std::size_t>(x), y0 = static_cast<std::size_t>(y);
    const double wx = x - static_cast<double>(x0), wy = y - static_cast<double>(y0);
    const auto x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
    if (wx == 0.0 && wy == 0.0) return img.at(y0, x0, c);
    const double top = img.at(y0, x0, c) * (1.0 - wx) + img.at(y0, x1, c) * wx;
    const double bottom = img.at(y1, x0, c) * (1.0 - wx) + img.at(y1, x1, c) * wx;
    return static_cast<float>(top * (1.0 - wy) + bottom * wy);
}

float nearest(const Image& img, double x, double y) {
    const double rx = std::round(x), ry = std::round(y);
    if (rx < 0.0 || ry < 0.0 || rx > static_cast<double>(img.width - 1) || ry > static_cast<double>(img.height - 1)) {
        return 0.0f;
    }
    return img.at(static_cast<std::size_t>(ry), static_cast<std::size_t>(rx));
}

}  // namespace

Sample apply_augmentation(const Sample& sample, const AugmentParams& params) {
    Sample out = sample;
    const auto& img = sample.image;
    const auto inv = make_inverse(params, img.height, img.width);
    const float brightness = static_cast<float>(params.brightness);
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            double sx, sy;
            inv.source(static_cast<double>(x), static_cast<double>(y), sx, sy);
            for (std::size_t c = 0; c < img.channels; ++c) {
                const float v = bilinear(img, sx, sy, c);
                out.image.at(y, x, c) = brightness == 1.0f ? v : std::clamp(v * brightness, 0.0f, 1.0f);
            }
        }
    }
    const auto& mask = sample.mask;
    const auto minv = make_inverse(params, mask.height, mask.width);
    for (std::size_t y = 0; y < mask.height; ++y) {
        for (std::size_t x = 0; x < mask.width; ++x) {
            double sx, sy;
            minv.source(static_cast<double>(x), static_cast<double>(y), sx, sy);
            out.mask.at(y, x) = nearest(mask, sx, sy);
        }
    }
    return out;
}

Sample augment(const Sample& sample, std::uint64_t seed) {
    return apply_augmentation(sample, sample_augment_params(seed));
}

}  // namespace par
