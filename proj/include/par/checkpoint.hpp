#pragma once

// Versioned checkpoint container.
//
// Layout (all integers little-endian u32, values little-endian IEEE float32):
//   "PARCKPT\0" | version | metadata length | metadata JSON (UTF-8)
//   | entry count | per entry: name length, name, rank, dims..., values...
// The metadata document carries the ModelConfig ("model"), the TaskPolicy
// ("policy") and free-form run state ("state").

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "par/model.hpp"

namespace par {

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    ModelConfig model_config;
    TaskPolicy policy;
    nlohmann::json state = nlohmann::json::object();
    std::vector<CheckpointEntry> entries;

    const CheckpointEntry* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Throws ConfigurationError on a bad magic, version or truncated file.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Parameters plus batch-norm running statistics ("<layer>.running_mean/var").
template <typename T>
Checkpoint capture_checkpoint(Model<T>& model, nlohmann::json state = nlohmann::json::object());

// Copies every parameter and buffer into the model. The checkpoint's config
// and policy must equal the model's and every shape must match; entries under
// the "optimizer." prefix are ignored.
template <typename T>
void restore_model(Model<T>& model, const Checkpoint& checkpoint);

template <typename T>
Model<T> model_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace par
