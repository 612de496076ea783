#pragma once

// Line-delimited JSON manifest, one record per line:
//   {"id": ..., "split": "train", "image": <path>, "mask": <path>,
//    "labels": {<task>: {<category>: [<class>, ...]}}}
// Relative paths resolve against the manifest's directory.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "par/policy.hpp"
#include "par/sample.hpp"

namespace par {

struct ManifestRecord {
    std::string id;
    Split split = Split::train;
    std::filesystem::path image;
    std::filesystem::path mask;
    std::vector<std::uint8_t> labels;  // policy order
};

// Throws ConfigurationError for malformed records or labels not in the policy
// (the message names the record id).
ManifestRecord parse_manifest_record(const nlohmann::json& record, const TaskPolicy& policy);
nlohmann::json to_json(const ManifestRecord& record, const TaskPolicy& policy);

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path, const TaskPolicy& policy);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records,
                    const TaskPolicy& policy);

// Reads the manifest and decodes every image and mask. Missing or undecodable
// files raise DataError carrying the record id.
std::vector<Sample> load_manifest(const std::filesystem::path& path, const TaskPolicy& policy);

std::vector<Sample> filter_split(const std::vector<Sample>& samples, Split split);

}  // namespace par
