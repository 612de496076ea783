#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "par/ablation.hpp"
#include "par/errors.hpp"
#include "par/synth.hpp"
#include "par/trainer.hpp"

using namespace par;
namespace fs = std::filesystem;

namespace {

std::vector<Sample> dataset(std::size_t n, std::uint64_t seed = 5) {
    SynthSpec spec;
    spec.num_samples = n;
    spec.clutter = 0.3;
    spec.seed = seed;
    return synth_generate(spec);
}

TrainConfig quick_config(std::uint64_t seed = 0) {
    TrainConfig c;
    c.learning_rate = 1e-3;
    c.epochs = 2;
    c.batch_size = 8;
    c.seed = seed;
    c.augment = false;
    return c;
}

std::vector<std::vector<float>> snapshot(const Model<float>& model) {
    std::vector<std::vector<float>> out;
    for (const auto& p : model.parameters()) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
    return out;
}

}  // namespace

TEST(TrainConfig, JsonAndValidation) {
    auto c = quick_config(9);
    c.loss.kind = LossKind::focal;
    EXPECT_EQ(train_config_from_json(to_json(c)), c);
    EXPECT_EQ(train_config_from_json({{"weighted_loss", false}}).loss.kind, LossKind::plain_bce);
    EXPECT_EQ(train_config_from_json({{"weighted_loss", false}, {"loss", "weighted_focal"}}).loss.kind,
              LossKind::weighted_focal);
    EXPECT_EQ(train_config_from_json(nlohmann::json::object()).learning_rate, 1e-4);
    EXPECT_THROW(train_config_from_json({{"batch_size", 1}}), ConfigurationError);
    EXPECT_THROW(train_config_from_json({{"learning_rate", -1.0}}), ConfigurationError);
    EXPECT_THROW(train_config_from_json({{"loss", "mse"}}), ConfigurationError);
    EXPECT_THROW(train_config_from_json({{"epochs", "many"}}), ConfigurationError);
}

TEST(Trainer, ReferenceDefaults) {
    TrainConfig c;
    EXPECT_EQ(c.learning_rate, 1e-4);
    EXPECT_EQ(c.lr_decay, 1e-6);
    EXPECT_EQ(c.epochs, 200u);
    EXPECT_EQ(c.batch_size, 8u);
    EXPECT_EQ(c.beta1, 0.9);
    EXPECT_EQ(c.beta2, 0.999);
    EXPECT_EQ(c.adam_epsilon, 1e-8);
    EXPECT_EQ(c.loss.kind, LossKind::weighted_bce);
}

TEST(Trainer, EpochBatchesArePermutations) {
    Model<float> model(ModelConfig::desk_light(), synthetic_policy(), 0);
    Trainer trainer(model, quick_config(), dataset(17));
    const auto batches = trainer.epoch_batches(0);
    ASSERT_EQ(batches.size(), 2u);  // 8 + 8, the trailing single sample is dropped
    std::set<std::size_t> seen;
    for (const auto& b : batches) seen.insert(b.begin(), b.end());
    EXPECT_EQ(seen.size(), 16u);
    EXPECT_NE(trainer.epoch_batches(1), batches);
    EXPECT_EQ(trainer.epoch_batches(0), batches);
}

TEST(Trainer, ZeroLearningRateLeavesParameters) {
    Model<float> model(ModelConfig::desk_light(), synthetic_policy(), 1);
    auto config = quick_config();
    config.learning_rate = 0.0;
    config.augment = true;
    const auto before = snapshot(model);
    Trainer trainer(model, config, dataset(16));
    trainer.run_epoch();
    EXPECT_EQ(trainer.step_count(), 2u);
    EXPECT_EQ(snapshot(model), before);
}

TEST(Trainer, StepChangesEveryReachedParameter) {
    Model<float> model(ModelConfig::desk_light(), synthetic_policy(), 1);
    const auto before = snapshot(model);
    Trainer trainer(model, quick_config(), dataset(16));
    trainer.step({0, 1, 2, 3});
    const auto after = snapshot(model);
    for (std::size_t k = 0; k < before.size(); ++k) EXPECT_NE(after[k], before[k]) << model.parameters()[k].name;
}

TEST(Trainer, LossDecreasesOverFirstEpochs) {
    const auto data = dataset(32, 11);
    std::vector<std::vector<double>> per_seed;
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        Model<float> model(ModelConfig::desk_light(), synthetic_policy(), seed);
        auto config = quick_config(seed);
        config.epochs = 5;
        Trainer trainer(model, config, data);
        std::vector<double> losses;
        for (const auto& e : trainer.train().epochs) losses.push_back(e.train_loss);
        per_seed.push_back(losses);
    }
    std::vector<double> medians;
    for (std::size_t e = 0; e < 5; ++e) medians.push_back(median({per_seed[0][e], per_seed[1][e], per_seed[2][e]}));
    for (std::size_t e = 1; e < 5; ++e) EXPECT_LT(medians[e], medians[e - 1]) << "epoch " << e;
}

TEST(Trainer, FixedSeedIsBitReproducible) {
    const auto data = dataset(16);
    auto run = [&] {
        Model<float> model(ModelConfig::desk_light(), synthetic_policy(), 4);
        auto config = quick_config(4);
        config.augment = true;
        Trainer trainer(model, config, data);
        return trainer.train().step_losses;
    };
    const auto a = run();
    const auto b = run();
    ASSERT_EQ(a.size(), 4u);
    EXPECT_EQ(a, b);
}

TEST(Trainer, ResumeContinuesIdentically) {
    const auto data = dataset(24);
    const auto path = fs::temp_directory_path() / "par_trainer_resume.ckpt";
    auto config = quick_config(6);
    config.augment = true;
    config.epochs = 3;

    Model<float> reference(ModelConfig::desk_light(), synthetic_policy(), 6);
    Trainer uninterrupted(reference, config, data);
    uninterrupted.run_epoch();
    write_checkpoint(path, uninterrupted.capture());
    const auto expected = uninterrupted.run_epoch();

    Model<float> fresh(ModelConfig::desk_light(), synthetic_policy(), 99);
    Trainer resumed(fresh, config, data);
    resumed.resume(read_checkpoint(path));
    EXPECT_EQ(resumed.epoch(), 1u);
    EXPECT_EQ(resumed.step_count(), uninterrupted.step_count() - 3);
    const auto got = resumed.run_epoch();
    EXPECT_EQ(got.train_loss, expected.train_loss);
    const auto& a = uninterrupted.record().step_losses;
    const auto& b = resumed.record().step_losses;
    EXPECT_TRUE(std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size())));
    EXPECT_EQ(snapshot(fresh), snapshot(reference));
}

TEST(Trainer, ResumeNeedsOptimizerState) {
    Model<float> model(ModelConfig::desk_light(), synthetic_policy(), 0);
    Trainer trainer(model, quick_config(), dataset(8));
    EXPECT_THROW(trainer.resume(capture_checkpoint(model)), ConfigurationError);
}

TEST(Trainer, NonFiniteLossAborts) {
    Model<float> model(ModelConfig::desk_light(), synthetic_policy(), 0);
    Trainer trainer(model, quick_config(), dataset(8));
    trainer.step({0, 1});
    model.heads()[0].layers[3].bias.mutable_values()[0] = std::numeric_limits<float>::quiet_NaN();
    try {
        trainer.step({2, 3});
        FAIL() << "expected divergence";
    } catch (const TrainingDiverged& e) {
        EXPECT_EQ(e.step(), 1);
    }
}

TEST(Trainer, WritesCheckpointsAndRecord) {
    const auto dir = fs::temp_directory_path() / "par_trainer_out";
    fs::remove_all(dir);
    auto data = dataset(20);
    std::vector<Sample> val(data.end() - 4, data.end());
    data.resize(16);
    Model<float> model(ModelConfig::desk_light(), synthetic_policy(), 2);
    Trainer trainer(model, quick_config(), data, val);
    std::size_t callbacks = 0;
    trainer.on_epoch = [&](const EpochRecord&) { ++callbacks; };
    const auto record = trainer.train(dir);
    EXPECT_EQ(callbacks, 2u);
    EXPECT_TRUE(fs::exists(dir / "last.ckpt"));
    EXPECT_TRUE(fs::exists(dir / "best.ckpt"));
    ASSERT_EQ(record.epochs.size(), 2u);
    EXPECT_TRUE(record.epochs[0].val_mean_accuracy.has_value());
    ASSERT_TRUE(record.best_epoch.has_value());
    ASSERT_TRUE(record.final_report.has_value());
    for (double l : record.step_losses) EXPECT_TRUE(std::isfinite(l));
    const auto j = record.to_json();
    EXPECT_EQ(j["epochs"].size(), 2u);
    EXPECT_NE(record.to_text().find(record.fingerprint), std::string::npos);
    const auto best = read_checkpoint(dir / "best.ckpt");
    EXPECT_EQ(best.state["fingerprint"], record.fingerprint);
}

TEST(Trainer, FingerprintTracksInputs) {
    const auto data = dataset(8);
    const auto policy = synthetic_policy();
    const auto model = ModelConfig::desk_light();
    const auto base = run_fingerprint(model, quick_config(0), policy, data);
    EXPECT_EQ(base, run_fingerprint(model, quick_config(0), policy, data));
    EXPECT_NE(base, run_fingerprint(model, quick_config(1), policy, data));
    EXPECT_NE(base, run_fingerprint(ModelConfig::desk(), quick_config(0), policy, data));
    EXPECT_NE(base, run_fingerprint(model, quick_config(0), policy, dataset(8, 6)));
}

TEST(Trainer, PositiveRatiosAreSmoothed) {
    std::vector<Sample> s(3);
    s[0].labels = {1, 0};
    s[1].labels = {1, 0};
    s[2].labels = {1, 1};
    const auto r = positive_ratios(s, 2);
    EXPECT_DOUBLE_EQ(r[0], 4.0 / 5.0);
    EXPECT_DOUBLE_EQ(r[1], 2.0 / 5.0);
}

TEST(Evaluate, ConstantHalfPredictorScoresHalf) {
    Model<float> model(ModelConfig::desk_light(), synthetic_policy(), 0);
    for (auto& head : model.heads()) {
        auto& last = head.layers[3];
        std::fill(last.weight.mutable_values().begin(), last.weight.mutable_values().end(), 0.0f);
        std::fill(last.bias.mutable_values().begin(), last.bias.mutable_values().end(), 0.0f);
    }
    const auto data = dataset(40);
    const auto report = evaluate(model, data);
    for (const auto& a : report.attributes) {
        EXPECT_EQ(a.true_positives, a.positives);
        EXPECT_EQ(a.true_negatives, 0u);
    }
    EXPECT_EQ(report.mean_accuracy, 0.5);
}

TEST(Evaluate, OrderDoesNotMatter) {
    Model<float> model(ModelConfig::desk_light(), synthetic_policy(), 3);
    auto data = dataset(24);
    const auto a = evaluate(model, data);
    std::reverse(data.begin(), data.end());
    std::rotate(data.begin(), data.begin() + 7, data.end());
    const auto b = evaluate(model, data);
    for (std::size_t i = 0; i < a.attributes.size(); ++i) {
        EXPECT_EQ(a.attributes[i].true_positives, b.attributes[i].true_positives);
        EXPECT_EQ(a.attributes[i].true_negatives, b.attributes[i].true_negatives);
    }
    EXPECT_EQ(a.mean_accuracy, b.mean_accuracy);
}
