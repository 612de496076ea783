#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "par/image.hpp"

namespace par {

enum class Split { train, val, test };

std::string to_string(Split split);
Split split_from_string(const std::string& name);  // throws ConfigurationError

// One annotated pedestrian: RGB image, binary foreground mask of the same
// size, and multi-hot labels in task-policy column order.
struct Sample {
    std::string id;
    Split split = Split::train;
    Image image;
    Image mask;
    std::vector<std::uint8_t> labels;
};

// Network-ready form: S x S x 3 image and g x g x 1 binary mask.
struct ProcessedSample {
    std::string id;
    Image image;
    Image mask;
    std::vector<std::uint8_t> labels;
};

}  // namespace par
