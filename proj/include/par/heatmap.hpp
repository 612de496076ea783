#pragma once

// Per-task activation maps around the multiplication layer.

#include <filesystem>
#include <string>
#include <vector>

#include "par/model.hpp"
#include "par/sample.hpp"

namespace par {

struct TaskHeatmap {
    std::string task;
    Image before;  // S x S x 1, in [0, 1]
    Image after;   // same scale as `before`
};

// Channel maps weighted by the positive part of d(task outputs)/d(pooled
// features), taken before and after the mask is applied, nearest-neighbour
// upsampled to the input size. Both panels of a task share one normalization
// so background cells of `after` are exactly 0. Falls back to the plain
// channel mean when all weights vanish.
std::vector<TaskHeatmap> compute_heatmaps(Model<float>& model, const ProcessedSample& sample);

// Jet colour map of a single-channel [0, 1] image.
Image colorize(const Image& heat);

// Writes <id>_input.png, <id>_mask.png and <id>_<task>_{before,after}.png.
std::vector<std::filesystem::path> emit_heatmaps(Model<float>& model, const ProcessedSample& sample,
                                                 const std::filesystem::path& out_dir);

}  // namespace par
