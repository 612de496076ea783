// par: train, evaluate and inspect the multi-task attribute network.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "par/ablation.hpp"
#include "par/checkpoint.hpp"
#include "par/errors.hpp"
#include "par/gradient_suite.hpp"
#include "par/heatmap.hpp"
#include "par/manifest.hpp"
#include "par/preprocess.hpp"
#include "par/synth.hpp"
#include "par/trainer.hpp"

namespace fs = std::filesystem;
using namespace par;

namespace {

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void note_threads(int threads) {
    if (threads > 1) std::cerr << "note: execution is single-threaded; --threads " << threads << " runs serially\n";
}

struct Common {
    std::optional<std::uint64_t> seed;
    int threads = 1;
};

void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option("--seed", common.seed, "Random seed");
    cmd->add_option("--threads", common.threads, "Worker threads (results never depend on it)")
        ->check(CLI::PositiveNumber);
}

std::vector<Sample> load_split(const fs::path& manifest, const TaskPolicy& policy, const std::string& split) {
    auto samples = load_manifest(manifest, policy);
    if (split == "all") return samples;
    return filter_split(samples, split_from_string(split));
}

int cmd_train(const fs::path& policy_path, const fs::path& manifest, const fs::path& config_path,
              const fs::path& out, const std::optional<fs::path>& resume, const Common& common) {
    note_threads(common.threads);
    const auto policy = load_task_policy(policy_path);
    const auto doc = read_json(config_path);
    const auto model_config = model_config_from_json(doc.value("model", nlohmann::json::object()));
    auto train_config = train_config_from_json(doc.value("train", nlohmann::json::object()));
    if (common.seed) train_config.seed = *common.seed;

    const auto all = load_manifest(manifest, policy);
    auto train = filter_split(all, Split::train);
    auto val = filter_split(all, Split::val);
    if (train.empty()) throw ConfigurationError("manifest has no training samples");
    std::cout << "train " << train.size() << " samples, val " << val.size() << ", policy " << policy.name() << " ("
              << policy.attribute_count() << " attributes)\n";

    Model<float> model(model_config, policy, train_config.seed);
    Trainer trainer(model, train_config, std::move(train), std::move(val));
    if (resume) {
        trainer.resume(read_checkpoint(*resume));
        std::cout << "resumed at epoch " << trainer.epoch() << ", step " << trainer.step_count() << "\n";
    }
    trainer.on_epoch = [](const EpochRecord& e) {
        std::printf("epoch %4zu  loss %.6f", e.epoch, e.train_loss);
        if (e.val_mean_accuracy) std::printf("  val mA %.4f", *e.val_mean_accuracy);
        std::printf("  %.2fs\n", e.seconds);
        std::fflush(stdout);
    };
    const auto record = trainer.train(out);
    write_text(out / "run.json", record.to_json().dump(2));
    write_text(out / "run.txt", record.to_text());
    std::cout << "fingerprint " << record.fingerprint << "; checkpoints in " << out << "\n";
    return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& manifest, const std::string& split,
             const std::optional<fs::path>& json_out, const Common& common) {
    note_threads(common.threads);
    const auto ck = read_checkpoint(checkpoint);
    auto model = model_from_checkpoint<float>(ck);
    const auto samples = load_split(manifest, ck.policy, split);
    if (samples.empty()) throw ConfigurationError("no samples in split '" + split + "'");
    const auto report = evaluate(model, samples);
    std::cout << report.to_text();
    if (json_out) write_text(*json_out, report.to_json().dump(2));
    return 0;
}

int cmd_infer(const fs::path& checkpoint, const fs::path& image_path, const fs::path& mask_path,
              const Common& common) {
    note_threads(common.threads);
    const auto ck = read_checkpoint(checkpoint);
    auto model = model_from_checkpoint<float>(ck);
    Sample s;
    s.id = image_path.stem().string();
    s.image = read_png(image_path, 3);
    s.mask = read_mask_png(mask_path);
    if (s.image.height != s.mask.height || s.image.width != s.mask.width) {
        throw ValidationError("image and mask sizes differ");
    }
    s.labels.assign(ck.policy.attribute_count(), 0);
    const auto processed = preprocess(s, model.config().input_size, model.config().mask_grid());
    if (model.config().multiplication_layer && foreground_fraction(processed.mask) == 0.0) {
        std::cerr << "warning: mask has no foreground cell at grid " << model.config().mask_grid()
                  << "; prediction reflects head biases only\n";
    }
    const auto probabilities = predict_probabilities(model, {processed});
    const auto prediction = make_prediction(probabilities);
    for (std::size_t a = 0; a < ck.policy.attribute_count(); ++a) {
        std::printf("%-24s %.6f %d\n", ck.policy.attributes()[a].name.c_str(), prediction.probabilities[a],
                    prediction.labels[a]);
    }
    return 0;
}

int cmd_gradcheck(std::size_t shapes, const Common& common) {
    note_threads(common.threads);
    const auto report = run_gradient_suite(common.seed.value_or(0), shapes);
    std::cout << report.to_text();
    return report.passed() ? 0 : 1;
}

int cmd_synth(const std::string& spec_arg, const fs::path& out, const Common& common) {
    note_threads(common.threads);
    SynthSpec spec;
    if (spec_arg != "default") spec = synth_spec_from_json(read_json(spec_arg));
    if (common.seed) spec.seed = *common.seed;
    const auto samples = synth_generate(spec);
    const auto manifest = write_dataset(samples, synthetic_policy(), out);
    write_text(out / "policy.json", to_json(synthetic_policy()).dump(2));
    write_text(out / "spec.json", to_json(spec).dump(2));
    std::cout << samples.size() << " samples written; manifest " << manifest.string() << "\n";
    return 0;
}

int cmd_ablate(const std::optional<fs::path>& grid_path, const std::optional<fs::path>& manifest,
               const std::optional<fs::path>& policy_path, const std::optional<fs::path>& out, const Common& common) {
    note_threads(common.threads);
    auto grid = grid_path ? ablation_grid_from_json(read_json(*grid_path)) : default_ablation_grid();
    if (common.seed) {
        for (std::size_t i = 0; i < grid.seeds.size(); ++i) grid.seeds[i] = *common.seed + i;
    }
    TaskPolicy policy = policy_path ? load_task_policy(*policy_path) : synthetic_policy();
    std::vector<Sample> data = manifest ? load_manifest(*manifest, policy) : synth_generate(grid.data);
    const auto train = filter_split(data, Split::train);
    const auto test = filter_split(data, Split::test);
    std::cout << "ablation: " << grid.variants.size() << " variants x " << grid.seeds.size() << " seeds, train "
              << train.size() << ", test " << test.size() << "\n";
    const auto report = run_ablation(grid, policy, train, test, [](const AblationVariant& v, std::uint64_t seed,
                                                                   double score) {
        std::printf("  %-28s seed %llu  mA %.4f\n", v.name.c_str(), static_cast<unsigned long long>(seed), score);
        std::fflush(stdout);
    });
    std::cout << "\n" << report.to_text();
    if (out) {
        write_text(*out / "ablation.json", report.to_json().dump(2));
        write_text(*out / "ablation.txt", report.to_text());
    }
    return 0;
}

int cmd_heatmap(const fs::path& checkpoint, const std::optional<fs::path>& manifest,
                const std::optional<fs::path>& image_path, const std::optional<fs::path>& mask_path,
                const fs::path& out, std::size_t limit, const Common& common) {
    note_threads(common.threads);
    const auto ck = read_checkpoint(checkpoint);
    auto model = model_from_checkpoint<float>(ck);
    std::vector<Sample> samples;
    if (manifest) {
        samples = load_manifest(*manifest, ck.policy);
        if (samples.size() > limit) samples.resize(limit);
    } else if (image_path && mask_path) {
        Sample s;
        s.id = image_path->stem().string();
        s.image = read_png(*image_path, 3);
        s.mask = read_mask_png(*mask_path);
        s.labels.assign(ck.policy.attribute_count(), 0);
        samples.push_back(std::move(s));
    } else {
        throw ConfigurationError("heatmap needs --manifest or both --image and --mask");
    }
    std::size_t files = 0;
    for (const auto& s : samples) {
        files += emit_heatmaps(model, preprocess(s, model.config().input_size, model.config().mask_grid()), out).size();
    }
    std::cout << files << " files written to " << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-task pedestrian attribute recognition with hard attention"};
    app.require_subcommand(1);

    Common common;

    fs::path policy, manifest, config, out;
    std::optional<fs::path> resume;
    auto* train = app.add_subcommand("train", "Train a model from a manifest");
    train->add_option("--policy", policy, "Task policy JSON")->required()->check(CLI::ExistingFile);
    train->add_option("--manifest", manifest, "Manifest (JSON lines)")->required()->check(CLI::ExistingFile);
    train->add_option("--config", config, "Run config {model, train}")->required()->check(CLI::ExistingFile);
    train->add_option("--out", out, "Output directory")->required();
    train->add_option("--resume", resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
    add_common(train, common);

    fs::path checkpoint;
    std::string split = "test";
    std::optional<fs::path> json_out;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    eval->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    eval->add_option("--split", split, "train, val, test or all")->check(CLI::IsMember({"train", "val", "test", "all"}));
    eval->add_option("--json", json_out, "Write the report as JSON");
    add_common(eval, common);

    fs::path image, mask;
    auto* infer = app.add_subcommand("infer", "Predict attributes for one image");
    infer->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    infer->add_option("--image", image)->required()->check(CLI::ExistingFile);
    infer->add_option("--mask", mask)->required()->check(CLI::ExistingFile);
    add_common(infer, common);

    std::size_t shapes = 10;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    gradcheck->add_option("--shapes", shapes, "Random shapes per check")->check(CLI::PositiveNumber);
    add_common(gradcheck, common);

    std::string spec = "default";
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth->add_option("--spec", spec, "Spec JSON or 'default'");
    synth->add_option("--out", out)->required();
    add_common(synth, common);

    std::optional<fs::path> grid, opt_manifest, opt_policy, opt_out;
    auto* ablate = app.add_subcommand("ablate", "Run the ablation grid");
    ablate->add_option("--grid", grid, "Grid JSON")->check(CLI::ExistingFile);
    ablate->add_option("--manifest", opt_manifest, "Use a dataset instead of generating one")
        ->check(CLI::ExistingFile);
    ablate->add_option("--policy", opt_policy, "Task policy for --manifest")->check(CLI::ExistingFile);
    ablate->add_option("--out", opt_out, "Write ablation.json / ablation.txt here");
    add_common(ablate, common);

    std::optional<fs::path> opt_image, opt_mask;
    std::size_t limit = 4;
    auto* heatmap = app.add_subcommand("heatmap", "Write before/after multiplication heat maps");
    heatmap->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    heatmap->add_option("--manifest", opt_manifest)->check(CLI::ExistingFile);
    heatmap->add_option("--image", opt_image)->check(CLI::ExistingFile);
    heatmap->add_option("--mask", opt_mask)->check(CLI::ExistingFile);
    heatmap->add_option("--limit", limit, "Samples taken from the manifest");
    heatmap->add_option("--out", out)->required();
    add_common(heatmap, common);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(policy, manifest, config, out, resume, common);
        if (*eval) return cmd_eval(checkpoint, manifest, split, json_out, common);
        if (*infer) return cmd_infer(checkpoint, image, mask, common);
        if (*gradcheck) return cmd_gradcheck(shapes, common);
        if (*synth) return cmd_synth(spec, out, common);
        if (*ablate) return cmd_ablate(grid, opt_manifest, opt_policy, opt_out, common);
        if (*heatmap) return cmd_heatmap(checkpoint, opt_manifest, opt_image, opt_mask, out, limit, common);
    } catch (const ConfigurationError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const TrainingDiverged& e) {
        std::cerr << "training diverged at step " << e.step() << ": " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
