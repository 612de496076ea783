// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "par/ablation.hpp"
#include "par/gradcheck.hpp"
#include "par/manifest.hpp"
#include "par/gradient_suite.hpp"
#include "par/losses.hpp"
#include "par/metrics.hpp"
#include "par/model.hpp"
#include "par/preprocess.hpp"
#include "par/synth.hpp"
#include "par/trainer.hpp"

using namespace par;
using Rational = boost::multiprecision::cpp_rational;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
    return buf;
}

// 1 ------------------------------------------------------------------------

Outcome gradient_suite() {
    const auto report = run_gradient_suite(0, 10, 1e-5, 1e-4);
    std::printf("%s", report.to_text().c_str());
    std::map<std::string, std::size_t> shapes;
    double worst = 0.0;
    for (const auto& c : report.checks) {
        ++shapes[c.name.substr(0, c.name.find('['))];
        worst = std::max(worst, c.max_relative_error);
    }
    std::size_t fewest = SIZE_MAX;
    for (const auto& [name, n] : shapes) fewest = std::min(fewest, n);
    const bool ok = report.passed() && worst < 1e-4 && fewest >= 10 && report.seconds < 120.0;
    return {ok, fmt("%.0f check kinds, worst rel err %.2e, >= %.0f shapes each, %.1f s", double(shapes.size()), worst,
                    double(fewest), report.seconds)};
}

// 2 ------------------------------------------------------------------------

struct Counts {
    long p = 0, n = 0, tp = 0, tn = 0;
};

Counts count(const LabelMatrix& pred, const LabelMatrix& truth, std::size_t a) {
    Counts c;
    for (std::size_t s = 0; s < truth.samples; ++s) {
        if (truth.at(s, a)) {
            ++c.p;
            c.tp += pred.at(s, a);
        } else {
            ++c.n;
            c.tn += !pred.at(s, a);
        }
    }
    return c;
}

Rational attribute_oracle(const Counts& c) {
    if (c.p > 0 && c.n > 0) return (Rational(c.tp, c.p) + Rational(c.tn, c.n)) / 2;
    return c.p > 0 ? Rational(c.tp, c.p) : Rational(c.tn, c.n);
}

Outcome metric_oracle() {
    std::mt19937_64 rng(20240601);
    std::size_t count_mismatch = 0, attr_mismatch = 0;
    double worst_aggregate = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t a = 1 + rng() % 20, n = 1 + rng() % 50;
        LabelMatrix pred(n, a), truth(n, a);
        for (auto& v : pred.values) v = static_cast<std::uint8_t>(rng() % 2);
        for (auto& v : truth.values) v = static_cast<std::uint8_t>(rng() % 2);
        const auto report = mean_accuracy(pred, truth);
        Rational total = 0;
        for (std::size_t k = 0; k < a; ++k) {
            const auto c = count(pred, truth, k);
            const auto& s = report.attributes[k];
            if (long(s.positives) != c.p || long(s.negatives) != c.n || long(s.true_positives) != c.tp ||
                long(s.true_negatives) != c.tn) {
                ++count_mismatch;
            }
            const Rational exact = attribute_oracle(c);
            if (s.mean_accuracy != static_cast<double>(exact)) ++attr_mismatch;
            total += exact;
        }
        const double exact_ma = static_cast<double>(total / static_cast<long>(a));
        worst_aggregate = std::max(worst_aggregate, std::abs(report.mean_accuracy - exact_ma));
    }
    LabelMatrix pred(4, 1), truth(4, 1);
    truth.values = {1, 1, 0, 0};
    pred.values = {1, 0, 0, 0};
    const double hand = mean_accuracy(pred, truth).mean_accuracy;
    // the aggregate is a double sum of up to 20 correctly rounded terms
    const bool ok = count_mismatch == 0 && attr_mismatch == 0 && worst_aggregate <= 4e-16 && hand == 0.75;
    return {ok, fmt("count mismatches %.0f, per-attribute mismatches %.0f, max aggregate |diff| %.1e, hand case %.4f",
                    double(count_mismatch), double(attr_mismatch), worst_aggregate, hand)};
}

// 3 ------------------------------------------------------------------------

Outcome loss_hand_values() {
    const double log2 = std::log(2.0);
    const TaskPolicy k2("k2", {Task{"T", {Category{"C", {"a", "b"}}}}});
    const double w = weighted_loss(Tensor<double>({2}, {0.5, 0.5}), std::vector<double>{1, 0}, k2).item();
    const double f = focal_loss(Tensor<double>({1}, {0.5}), std::vector<double>{1}, 2.0).item();

    const TaskPolicy unit("unit", {Task{"A", {Category{"x", {"x"}}, Category{"y", {"y"}}}},
                                   Task{"B", {Category{"z", {"z"}}, Category{"u", {"u"}}}}});
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> p(5 * 4), y(5 * 4);
        for (auto& v : p) v = u(rng);
        for (auto& v : y) v = static_cast<double>(rng() % 2);
        const Tensor<double> probs({5, 4}, p);
        const double weighted = weighted_loss(probs, y, unit).item();
        const double plain = plain_bce_loss(probs, y).item();
        worst = std::max(worst, std::abs(weighted - 4.0 * plain));
    }
    const bool ok = std::abs(w - log2) <= 1e-12 && std::abs(f - 0.25 * log2) <= 1e-12 && worst <= 1e-12;
    return {ok, fmt("weighted K=2 |err| %.1e, focal |err| %.1e, weighted vs plain (unit categories) |err| %.1e",
                    std::abs(w - log2), std::abs(f - 0.25 * log2), worst)};
}

// 4 ------------------------------------------------------------------------

Outcome hard_attention() {
    const auto start = Clock::now();
    const auto config = ModelConfig::desk();
    Model<float> model(config, synthetic_policy(), 7);
    SynthSpec spec;
    spec.num_samples = 4;
    spec.clutter = 0.8;
    spec.occluder_probability = 0.5;
    std::vector<ProcessedSample> samples;
    for (const auto& s : synth_generate(spec)) samples.push_back(preprocess(s, config.input_size, config.mask_grid()));
    std::vector<std::size_t> all{0, 1, 2, 3};
    const auto batch = make_batch(samples, all);
    const std::size_t D = config.feature_depth();

    Tensor<float> features;
    {
        NoTapeScope<float> off;
        features = model.backbone_forward(batch.images, Mode::eval);
    }
    std::size_t masked = 0;
    for (float m : batch.masks.values()) masked += m == 0.0f;

    auto head = [&](const Tensor<float>& f, Mode mode) {
        return model.heads_forward(ops::global_avg_pool(attention_multiply(f, batch.masks)), mode, 5);
    };
    Tensor<float> perturbed = features.detach();
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> u(-50.0f, 50.0f);
    auto pv = perturbed.mutable_values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
        if (batch.masks[i / D] == 0.0f) pv[i] = u(rng);
    }
    bool identical = true;
    for (Mode mode : {Mode::eval, Mode::train}) {
        NoTapeScope<float> off;
        const auto a = head(features, mode);
        const auto b = head(perturbed, mode);
        identical = identical && std::equal(a.values().begin(), a.values().end(), b.values().begin());
    }

    Tensor<float> leaf = features.detach();
    leaf.set_requires_grad(true);
    GradientTape<float> tape;
    std::size_t nonzero_masked = 0, nonzero_visible = 0;
    {
        TapeScope<float> scope(tape);
        const auto loss = weighted_loss(head(leaf, Mode::train), batch.targets, model.policy());
        const auto grads = tape.backward(loss);
        const auto g = grads.grad_of(leaf);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (batch.masks[i / D] == 0.0f) nonzero_masked += g[i] != 0.0f;
            else nonzero_visible += g[i] != 0.0f;
        }
    }
    const double secs = seconds_since(start);
    const bool ok = masked > 0 && identical && nonzero_masked == 0 && nonzero_visible > 0 && secs < 60.0;
    return {ok, fmt("%.0f masked cells, outputs bit-identical %.0f, nonzero masked grads %.0f, %.2f s", double(masked),
                    identical ? 1.0 : 0.0, double(nonzero_masked), secs)};
}

// 5 ------------------------------------------------------------------------

Outcome overfit() {
    const auto start = Clock::now();
    SynthSpec spec;
    spec.num_samples = 32;
    spec.clutter = 0.5;
    spec.occluder_probability = 0.2;
    spec.seed = 31;
    const auto data = synth_generate(spec);
    const auto config = ModelConfig::desk_light();
    const auto processed = preprocess_all(data, config);

    std::vector<double> epochs_needed;
    std::string per_seed;
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        Model<float> model(config, synthetic_policy(), seed);
        TrainConfig tc;
        tc.learning_rate = 1e-3;
        tc.epochs = 300;
        tc.augment = false;
        tc.seed = seed;
        Trainer trainer(model, tc, data);
        double reached = std::numeric_limits<double>::infinity();
        double best = 0.0;
        while (trainer.epoch() < tc.epochs) {
            trainer.run_epoch();
            if (trainer.epoch() % 5 != 0) continue;
            const auto report = evaluate(model, processed);
            double worst = 1.0;
            for (const auto& a : report.attributes) worst = std::min(worst, a.accuracy);
            best = std::max(best, worst);
            if (worst >= 0.99) {
                reached = static_cast<double>(trainer.epoch());
                break;
            }
        }
        epochs_needed.push_back(reached);
        per_seed += (per_seed.empty() ? " " : "; ") + fmt("seed %.0f: ", double(seed)) +
                    (std::isinf(reached) ? fmt("not reached (best min accuracy %.3f)", best)
                                         : fmt("%.0f epochs", reached));
    }
    const double med = median(epochs_needed);
    const double secs = seconds_since(start);
    const bool ok = med <= 300.0 && secs < 600.0;
    return {ok, "min per-attribute train accuracy >= 0.99;" + per_seed + fmt("; median %.0f epochs, %.0f s", med, secs)};
}

// 6 and 7 ------------------------------------------------------------------

AblationReport ablation_report;

Outcome run_ablation_grid() {
    const auto start = Clock::now();
    auto grid = default_ablation_grid();
    std::vector<AblationVariant> chosen;
    for (const auto& v : standard_variants()) {
        if (v.name == "shared_head" || v.name == "multi_task" || v.name == "all_on" || v.name == "focal") {
            chosen.push_back(v);
        }
    }
    grid.variants = chosen;
    const auto data = synth_generate(grid.data);
    const auto train = filter_split(data, Split::train);
    const auto test = filter_split(data, Split::test);
    std::printf("ablation data: %zu train / %zu test, clutter %.1f, occluders %.1f, seeds %zu, %zu epochs\n",
                train.size(), test.size(), grid.data.clutter, grid.data.occluder_probability, grid.seeds.size(),
                grid.train.epochs);
    ablation_report = run_ablation(grid, synthetic_policy(), train, test,
                                   [](const AblationVariant& v, std::uint64_t seed, double ma) {
                                       std::printf("  %-14s seed %llu  mA %.4f\n", v.name.c_str(),
                                                   static_cast<unsigned long long>(seed), ma);
                                       std::fflush(stdout);
                                   });
    std::printf("%s", ablation_report.to_text().c_str());
    const bool sizes = train.size() == 500 && test.size() == 200;
    return {sizes, fmt("%.0f s", seconds_since(start))};
}

Outcome directional_architecture() {
    const double shared = ablation_report.find("shared_head")->median;
    const double multi = ablation_report.find("multi_task")->median;
    const double all_on = ablation_report.find("all_on")->median;
    const bool ok = multi >= shared && all_on >= multi;
    return {ok, fmt("median mA shared-head %.4f, multi-task %.4f, all-on %.4f", shared, multi, all_on)};
}

Outcome directional_loss() {
    const double weighted = ablation_report.find("all_on")->median;
    const double focal = ablation_report.find("focal")->median;
    return {weighted >= focal, fmt("median mA weighted BCE %.4f, binary focal %.4f", weighted, focal)};
}

// 8 ------------------------------------------------------------------------

Outcome shape_contract() {
    const auto full = ModelConfig::full_scale();
    const auto light = ModelConfig::light();
    bool ok = backbone_output_shape(full, 1) == Shape{1, 16, 16, 1024} && full.mask_grid() == 16 &&
              backbone_output_shape(light, 1) == Shape{1, 16, 16, light.feature_depth()} && light.mask_grid() == 16;

    // Real forward passes at the same resolutions with narrow early stages.
    ModelConfig big;
    big.input_size = 256;
    big.stages = 4;
    big.blocks_per_stage = 1;
    big.stem_channels = 4;
    big.stage_channels = {4, 8, 16, 1024};
    ModelConfig small = big;
    small.input_size = 128;
    small.stages = 3;
    small.stage_channels = {4, 8, 16};
    NoTapeScope<float> off;
    Model<float> m256(big, synthetic_policy(), 0);
    const auto s256 = m256.backbone_forward(Tensor<float>::full({1, 256, 256, 3}, 0.5f), Mode::eval).shape();
    Model<float> m128(small, synthetic_policy(), 0);
    const auto s128 = m128.backbone_forward(Tensor<float>::full({1, 128, 128, 3}, 0.5f), Mode::eval).shape();
    ok = ok && s256 == Shape{1, 16, 16, 1024} && s128 == Shape{1, 16, 16, 16};
    return {ok, "256/4 stages -> " + shape_str(s256) + ", 128/3 stages -> " + shape_str(s128) +
                    ", full-scale declared " + shape_str(backbone_output_shape(full, 1))};
}

// 9 ------------------------------------------------------------------------

Outcome determinism() {
    SynthSpec spec;
    spec.num_samples = 40;
    spec.test_count = 8;
    spec.clutter = 0.7;
    spec.occluder_probability = 0.4;
    spec.seed = 77;
    const auto d1 = synth_generate(spec);
    const auto d2 = synth_generate(spec);
    bool synth_same = d1.size() == d2.size();
    for (std::size_t i = 0; synth_same && i < d1.size(); ++i) {
        synth_same = d1[i].image == d2[i].image && d1[i].mask == d2[i].mask && d1[i].labels == d2[i].labels &&
                     d1[i].id == d2[i].id;
    }

    const auto train = filter_split(d1, Split::train);
    const auto test = filter_split(d1, Split::test);
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.epochs = 3;
    tc.seed = 12;
    std::vector<double> losses[2];
    for (int run = 0; run < 2; ++run) {
        Model<float> model(ModelConfig::desk_light(), synthetic_policy(), 12);
        Trainer trainer(model, tc, train);
        losses[run] = trainer.train().step_losses;
    }
    const bool losses_same = !losses[0].empty() && losses[0] == losses[1];

    Model<float> model(ModelConfig::desk_light(), synthetic_policy(), 12);
    Trainer trainer(model, tc, train);
    trainer.train();
    const auto path = std::filesystem::temp_directory_path() / "par_acceptance.ckpt";
    write_checkpoint(path, trainer.capture());
    auto restored = model_from_checkpoint<float>(read_checkpoint(path));
    const auto processed = preprocess_all(test, model.config());
    const auto p1 = predict_probabilities(model, processed);
    const auto p2 = predict_probabilities(restored, processed);
    const auto r1 = evaluate(model, processed);
    const auto r2 = evaluate(restored, processed);
    const bool eval_same = p1 == p2 && r1.mean_accuracy == r2.mean_accuracy;

    const bool ok = synth_same && losses_same && eval_same;
    return {ok, fmt("synth bit-identical %.0f, %.0f step losses bit-identical %.0f, checkpoint eval bit-identical %.0f",
                    synth_same, double(losses[0].size()), losses_same, eval_same)};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    Outcome ablation_status;
    const std::vector<Criterion> criteria{
        {1, "gradient oracle suite", gradient_suite},
        {2, "metric oracle", metric_oracle},
        {3, "loss hand values", loss_hand_values},
        {4, "hard-attention exactness", hard_attention},
        {5, "overfit check", overfit},
        {6, "directional ablation (architecture)",
         [&] {
             ablation_status = run_ablation_grid();
             auto o = directional_architecture();
             o.pass = o.pass && ablation_status.pass;
             o.detail += "; " + ablation_status.detail;
             return o;
         }},
        {7, "directional loss comparison",
         [&] {
             auto o = directional_loss();
             o.pass = o.pass && ablation_status.pass;
             return o;
         }},
        {8, "shape contract", shape_contract},
        {9, "determinism and round-trip", determinism},
    };

    std::vector<std::string> lines;
    bool all = true;
    for (const auto& c : criteria) {
        const auto start = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        char line[1024];
        std::snprintf(line, sizeof line, "%s criterion %d (%s): %s [%.1f s]", o.pass ? "PASS" : "FAIL", c.id, c.name,
                      o.detail.c_str(), seconds_since(start));
        std::printf("%s\n", line);
        std::fflush(stdout);
        lines.push_back(line);
        all = all && o.pass;
    }
    std::printf("\n== acceptance summary ==\n");
    for (const auto& l : lines) std::printf("%s\n", l.c_str());
    return all ? 0 : 1;
}
