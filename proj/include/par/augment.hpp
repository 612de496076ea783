#pragma once

#include <cstdint>

#include "par/sample.hpp"

namespace par {

// One draw of the training-time augmentation. The geometric part is an
// affine map about the image center applied identically to image and mask.
struct AugmentParams {
    double rotation = 0.0;  // radians
    bool flip = false;      // horizontal
    double shift_x = 0.0;   // fraction of width
    double shift_y = 0.0;   // fraction of height
    double shear = 0.0;     // radians
    double zoom = 1.0;
    double brightness = 1.0;  // image only

    static AugmentParams identity() { return {}; }
};

// Ranges: rotation +-5 deg, flip p = 0.5, shift +-2 %, shear +-0.05 rad,
// zoom [0.92, 1.08], brightness [0.9, 1.1].
AugmentParams sample_augment_params(std::uint64_t seed);

// Image resampled bilinearly, mask nearest-neighbour; uncovered pixels are
// zero. Labels are copied unchanged.
Sample apply_augmentation(const Sample& sample, const AugmentParams& params);

Sample augment(const Sample& sample, std::uint64_t seed);

}  // namespace par
