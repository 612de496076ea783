#pragma once

// Mini-batch training with Adam, evaluation, and checkpointing.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "par/checkpoint.hpp"
#include "par/losses.hpp"
#include "par/metrics.hpp"
#include "par/model.hpp"
#include "par/sample.hpp"

namespace par {

struct TrainConfig {
    double learning_rate = 1e-4;
    double lr_decay = 1e-6;  // lr_t = lr / (1 + lr_decay * t)
    std::size_t epochs = 200;
    std::size_t batch_size = 8;
    LossConfig loss;
    std::uint64_t seed = 0;
    bool augment = true;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;

    // Throws ConfigurationError.
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& config);
// A "loss" key names the LossKind; without it the boolean "weighted_loss"
// selects weighted_bce (true, the default) or plain_bce.
TrainConfig train_config_from_json(const nlohmann::json& document);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;  // mean over the epoch's steps
    std::optional<double> val_mean_accuracy;
    double seconds = 0.0;
};

struct RunRecord {
    std::string fingerprint;
    std::vector<double> step_losses;
    std::vector<EpochRecord> epochs;
    std::optional<MetricReport> final_report;
    std::optional<std::size_t> best_epoch;
    double best_val_mean_accuracy = -1.0;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

// Preprocessed, batched view of a dataset for one model configuration.
struct Batch {
    Tensor<float> images;  // N x S x S x 3
    Tensor<float> masks;   // N x g x g x 1
    std::vector<double> targets;
};

Batch make_batch(const std::vector<ProcessedSample>& samples, const std::vector<std::size_t>& indices);
std::vector<ProcessedSample> preprocess_all(const std::vector<Sample>& samples, const ModelConfig& config);

// Hash of (model config, train config, policy, dataset contents).
std::string run_fingerprint(const ModelConfig& model, const TrainConfig& train, const TaskPolicy& policy,
                            const std::vector<Sample>& data);

// Laplace-smoothed training-split positive ratio per attribute, (pos + 1) / (N + 2).
std::vector<double> positive_ratios(const std::vector<Sample>& samples, std::size_t attributes);

// Eval-mode probabilities (N x A, sample-major).
std::vector<double> predict_probabilities(Model<float>& model, const std::vector<ProcessedSample>& samples,
                                          std::size_t batch_size = 32);

MetricReport evaluate(Model<float>& model, const std::vector<Sample>& samples);
MetricReport evaluate(Model<float>& model, const std::vector<ProcessedSample>& samples);

class Trainer {
public:
    Trainer(Model<float>& model, TrainConfig config, std::vector<Sample> train, std::vector<Sample> val = {});

    // Writes last.ckpt every epoch and best.ckpt on improved validation mA
    // (or every epoch without a validation set) when out_dir is set.
    RunRecord train(const std::optional<std::filesystem::path>& out_dir = std::nullopt);

    // One optimizer step on the given training indices; returns the loss.
    double step(const std::vector<std::size_t>& indices);
    // Runs one full epoch and advances the epoch counter.
    EpochRecord run_epoch();

    // Model, batch-norm statistics, Adam moments and counters.
    Checkpoint capture();
    void resume(const Checkpoint& checkpoint);

    std::size_t epoch() const { return epoch_; }
    std::uint64_t step_count() const { return step_; }
    const RunRecord& record() const { return record_; }
    const TrainConfig& config() const { return config_; }

    // Training-order batches of epoch `epoch` (seeded permutation; a trailing
    // batch of one sample is dropped because batch norm needs two).
    std::vector<std::vector<std::size_t>> epoch_batches(std::size_t epoch) const;

    std::function<void(const EpochRecord&)> on_epoch;

private:
    const std::vector<ProcessedSample>& epoch_samples(std::size_t epoch);

    Model<float>& model_;
    TrainConfig config_;
    std::vector<Sample> train_;
    std::vector<ProcessedSample> val_;
    std::vector<ProcessedSample> prepared_;  // un-augmented training set
    std::vector<ProcessedSample> augmented_;
    std::optional<std::size_t> augmented_epoch_;
    std::vector<double> ratios_;
    std::vector<std::vector<float>> m_, v_;
    std::size_t epoch_ = 0;
    std::uint64_t step_ = 0;
    RunRecord record_;
};

}  // namespace par
