#pragma once

#include "par/sample.hpp"

namespace par {

struct Padding {
    std::size_t top = 0, bottom = 0, left = 0, right = 0;
};

// Symmetric zero padding to a square; an odd remainder goes to bottom/right.
Padding square_padding(std::size_t height, std::size_t width);
Image pad(const Image& image, const Padding& padding);

// Bilinear resampling with half-pixel centers (same size is the identity).
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);

// Box-filter resampling weighting each source pixel by its exact overlap with
// the target cell.
Image resize_area(const Image& image, std::size_t height, std::size_t width);

// v >= threshold -> 1, else 0.
Image binarize(const Image& image, float threshold = 0.5f);

// Pads image and mask to square, resizes the image to target_size x
// target_size and reduces the mask to mask_grid x mask_grid by area average
// followed by a 0.5 threshold. Throws ValidationError for an empty image or
// a target size not divisible by the grid.
ProcessedSample preprocess(const Sample& sample, std::size_t target_size, std::size_t mask_grid);

}  // namespace par
