#pragma once

// Label-based mean accuracy (mA): per attribute the average of the true
// positive rate and the true negative rate, averaged over attributes.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "par/policy.hpp"

namespace par {

// Sample-major binary matrix: row n holds the A labels of sample n.
struct LabelMatrix {
    std::size_t samples = 0;
    std::size_t attributes = 0;
    std::vector<std::uint8_t> values;

    LabelMatrix() = default;
    LabelMatrix(std::size_t n, std::size_t a) : samples(n), attributes(a), values(n * a, 0) {}

    std::uint8_t at(std::size_t n, std::size_t a) const { return values[n * attributes + a]; }
    std::uint8_t& at(std::size_t n, std::size_t a) { return values[n * attributes + a]; }
};

struct AttributeScore {
    std::string name;
    std::size_t positives = 0;       // P_m
    std::size_t negatives = 0;       // N_m
    std::size_t true_positives = 0;  // P^_m
    std::size_t true_negatives = 0;  // N^_m
    double mean_accuracy = 0.0;      // 1/2 (P^/P + N^/N)
    double accuracy = 0.0;           // (P^ + N^) / (P + N)
    // P_m = 0 or N_m = 0: mean_accuracy uses the one defined ratio.
    bool undefined_ratio = false;
};

struct GroupScore {
    std::string name;
    double mean_accuracy = 0.0;
};

struct MetricReport {
    std::size_t samples = 0;
    std::vector<AttributeScore> attributes;
    double mean_accuracy = 0.0;
    std::vector<GroupScore> tasks;       // empty without a policy
    std::vector<GroupScore> categories;  // empty without a policy

    // One row per attribute: name, P, N, P^, N^, mA_m.
    std::string to_text() const;
    nlohmann::json to_json() const;
};

// Throws DimensionError on mismatched shapes, ValidationError on zero samples
// or non-binary entries. Attribute names and roll-ups come from the policy
// when one is given.
MetricReport mean_accuracy(const LabelMatrix& predictions, const LabelMatrix& targets,
                           const TaskPolicy* policy = nullptr);

}  // namespace par
