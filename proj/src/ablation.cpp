#include "par/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "par/errors.hpp"

namespace par {

std::vector<AblationVariant> standard_variants() {
    return {
        {"shared_head", false, false, LossKind::plain_bce, "architecture", "shared head, BCE", 81.11},
        {"multi_task", true, false, LossKind::plain_bce, "architecture", "+ multi-task heads", 89.18},
        {"multi_task_weighted", true, false, LossKind::weighted_bce, "architecture", "+ multi-task + weighted loss",
         89.35},
        {"multi_task_multiplication", true, true, LossKind::plain_bce, "architecture",
         "+ multi-task + multiplication layer", 89.73},
        {"all_on", true, true, LossKind::weighted_bce, "architecture", "all on", std::nullopt, 90.34},
        {"focal", true, true, LossKind::focal, "loss", "binary focal", 79.30},
        {"baseline_weighted_bce", true, true, LossKind::baseline_weighted_bce, "loss", "prevalence-weighted BCE",
         90.19},
        {"weighted_focal", true, true, LossKind::weighted_focal, "loss", "category-weighted focal", 89.27},
    };
}

AblationGrid default_ablation_grid() {
    AblationGrid grid;
    grid.variants = standard_variants();
    grid.train.learning_rate = 1e-3;
    grid.train.epochs = 20;
    grid.train.augment = false;
    grid.data.num_samples = 700;
    grid.data.test_count = 200;
    grid.data.clutter = 0.8;
    grid.data.occluder_probability = 0.3;
    grid.data.seed = 2024;
    return grid;
}

namespace {

nlohmann::json variant_json(const AblationVariant& v) {
    nlohmann::json j{{"name", v.name},
                     {"multi_task_heads", v.multi_task_heads},
                     {"multiplication_layer", v.multiplication_layer},
                     {"loss", to_string(v.loss)},
                     {"table", v.table},
                     {"label", v.label}};
    j["reference"] = v.reference ? nlohmann::json(*v.reference) : nlohmann::json();
    j["loss_reference"] = v.loss_reference ? nlohmann::json(*v.loss_reference) : nlohmann::json();
    return j;
}

AblationVariant variant_from_json(const nlohmann::json& j) {
    const auto name = j.is_string() ? j.get<std::string>() : j.at("name").get<std::string>();
    std::optional<AblationVariant> base;
    for (const auto& v : standard_variants()) {
        if (v.name == name) base = v;
    }
    if (j.is_string()) {
        if (!base) throw ConfigurationError("ablation: unknown variant '" + name + "'");
        return *base;
    }
    AblationVariant v = base.value_or(AblationVariant{});
    v.name = name;
    v.multi_task_heads = j.value("multi_task_heads", v.multi_task_heads);
    v.multiplication_layer = j.value("multiplication_layer", v.multiplication_layer);
    if (j.contains("loss")) v.loss = loss_kind_from_string(j.at("loss").get<std::string>());
    v.table = j.value("table", v.table);
    v.label = j.value("label", v.label.empty() ? name : v.label);
    if (j.contains("loss_reference")) {
        const auto& r = j.at("loss_reference");
        v.loss_reference = r.is_null() ? std::nullopt : std::optional<double>(r.get<double>());
    }
    if (j.contains("reference")) {
        v.reference = j.at("reference").is_null() ? std::nullopt : std::optional<double>(j.at("reference").get<double>());
    }
    return v;
}

}  // namespace

nlohmann::json to_json(const AblationGrid& grid) {
    nlohmann::json variants = nlohmann::json::array();
    for (const auto& v : grid.variants) variants.push_back(variant_json(v));
    return {{"variants", variants},
            {"seeds", grid.seeds},
            {"model", to_json(grid.model)},
            {"train", to_json(grid.train)},
            {"data", to_json(grid.data)}};
}

AblationGrid ablation_grid_from_json(const nlohmann::json& j) {
    AblationGrid grid = default_ablation_grid();
    try {
        if (j.contains("variants")) {
            grid.variants.clear();
            for (const auto& v : j.at("variants")) grid.variants.push_back(variant_from_json(v));
        }
        if (j.contains("seeds")) grid.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("model")) grid.model = model_config_from_json(j.at("model"));
        if (j.contains("train")) {
            auto train = to_json(grid.train);
            train.update(j.at("train"));
            grid.train = train_config_from_json(train);
        }
        if (j.contains("data")) {
            auto data = to_json(grid.data);
            data.update(j.at("data"));
            grid.data = synth_spec_from_json(data);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(std::string("ablation grid: ") + e.what());
    }
    if (grid.seeds.empty()) throw ConfigurationError("ablation grid: at least one seed is required");
    if (grid.variants.empty()) throw ConfigurationError("ablation grid: no variants");
    return grid;
}

double median(std::vector<double> values) {
    if (values.empty()) throw ValidationError("median of an empty list");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

const AblationResult* AblationReport::find(const std::string& name) const {
    for (const auto& r : results) {
        if (r.variant.name == name) return &r;
    }
    return nullptr;
}

std::string AblationReport::to_text() const {
    std::ostringstream os;
    char line[256];
    for (const char* table : {"architecture", "loss"}) {
        bool header = false;
        for (const auto& r : results) {
            const bool loss_row = std::string(table) == "loss" && r.variant.loss_reference;
            if (r.variant.table != table && !loss_row) continue;
            if (!header) {
                os << (std::string(table) == "architecture" ? "Architecture ablation\n" : "Loss comparison\n");
                if (std::string(table) == "architecture") {
                    std::snprintf(line, sizeof line, "  %-5s %-5s %-8s  %-38s %9s %10s\n", "multi", "mult", "loss",
                                  "variant", "published", "median mA");
                } else {
                    std::snprintf(line, sizeof line, "  %-21s  %-38s %9s %10s\n", "loss", "variant", "published",
                                  "median mA");
                }
                os << line;
                header = true;
            }
            const auto published = loss_row ? r.variant.loss_reference : r.variant.reference;
            const std::string reference = published ? std::to_string(*published).substr(0, 5) : "-";
            if (std::string(table) == "architecture") {
                std::snprintf(line, sizeof line, "  %-5s %-5s %-8s  %-38s %9s %9.2f%%\n",
                              r.variant.multi_task_heads ? "yes" : "-", r.variant.multiplication_layer ? "yes" : "-",
                              r.variant.loss == LossKind::plain_bce ? "-" : "weighted", r.variant.label.c_str(),
                              reference.c_str(), 100.0 * r.median);
            } else {
                const std::string label = loss_row ? "category-weighted BCE (" + r.variant.label + ")" : r.variant.label;
                std::snprintf(line, sizeof line, "  %-21s  %-38s %9s %9.2f%%\n", to_string(r.variant.loss).c_str(),
                              label.c_str(), reference.c_str(), 100.0 * r.median);
            }
            os << line;
        }
        if (header) os << "\n";
    }
    os << "Published values come from full-scale training and are not expected at this scale.\n";
    return os.str();
}

nlohmann::json AblationReport::to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : results) {
        out.push_back({{"variant", variant_json(r.variant)}, {"mean_accuracy", r.mean_accuracy}, {"median", r.median}});
    }
    return {{"results", out}};
}

AblationReport run_ablation(const AblationGrid& grid, const TaskPolicy& policy, const std::vector<Sample>& train,
                            const std::vector<Sample>& test, const AblationProgress& progress) {
    if (grid.seeds.empty()) throw ValidationError("run_ablation: at least one seed is required");
    if (test.empty()) throw ValidationError("run_ablation: empty test split");
    AblationReport report;
    for (const auto& v : grid.variants) report.results.push_back({v, {}, 0.0});

    for (const auto seed : grid.seeds) {
        for (auto& result : report.results) {
            ModelConfig mc = grid.model;
            mc.multi_task_heads = result.variant.multi_task_heads;
            mc.multiplication_layer = result.variant.multiplication_layer;
            TrainConfig tc = grid.train;
            tc.seed = seed;
            tc.loss.kind = result.variant.loss;
            // Same init seed for every variant: shared parameter names start equal.
            Model<float> model(mc, policy, seed);
            Trainer trainer(model, tc, train);
            trainer.train();
            const double score = evaluate(model, test).mean_accuracy;
            result.mean_accuracy.push_back(score);
            if (progress) progress(result.variant, seed, score);
        }
    }
    for (auto& r : report.results) r.median = median(r.mean_accuracy);
    return report;
}

}  // namespace par
