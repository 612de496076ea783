#pragma once

// Architecture and loss ablations: every variant is trained from the same
// initial parameters per seed and scored by median test mA over seeds.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "par/losses.hpp"
#include "par/model.hpp"
#include "par/sample.hpp"
#include "par/synth.hpp"
#include "par/trainer.hpp"

namespace par {

struct AblationVariant {
    std::string name;
    bool multi_task_heads = true;
    bool multiplication_layer = true;
    LossKind loss = LossKind::weighted_bce;
    // Row label and published mA (percent) of the matching table row, shown
    // for orientation only.
    std::string table;  // "architecture" or "loss"
    std::string label;
    std::optional<double> reference;
    // Set when the variant also stands for a row of the loss table.
    std::optional<double> loss_reference;
};

struct AblationGrid {
    std::vector<AblationVariant> variants;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    ModelConfig model = ModelConfig::desk_light();
    TrainConfig train;
    SynthSpec data;  // used when no manifest is given
};

// Architecture rows (shared head, +multi-task, +weighted loss, +multiplication
// layer, all-on) and loss rows (focal, prevalence-weighted BCE, category
// weighted focal). all-on doubles as the category-weighted BCE loss row.
std::vector<AblationVariant> standard_variants();
AblationGrid default_ablation_grid();

nlohmann::json to_json(const AblationGrid& grid);
// Missing "variants" selects standard_variants(); a variant may also be given
// by name alone to pick the matching standard one.
AblationGrid ablation_grid_from_json(const nlohmann::json& document);

struct AblationResult {
    AblationVariant variant;
    std::vector<double> mean_accuracy;  // one per seed
    double median = 0.0;
};

struct AblationReport {
    std::vector<AblationResult> results;

    const AblationResult* find(const std::string& name) const;
    // Two tables, published values beside desk-scale medians.
    std::string to_text() const;
    nlohmann::json to_json() const;
};

double median(std::vector<double> values);

using AblationProgress = std::function<void(const AblationVariant&, std::uint64_t seed, double mean_accuracy)>;

AblationReport run_ablation(const AblationGrid& grid, const TaskPolicy& policy, const std::vector<Sample>& train,
                            const std::vector<Sample>& test, const AblationProgress& progress = {});

}  // namespace par
