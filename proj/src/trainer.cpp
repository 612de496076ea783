#include "par/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "par/augment.hpp"
#include "par/errors.hpp"
#include "par/preprocess.hpp"
#include "par/rng.hpp"

namespace par {

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigurationError("train config: " + what); };
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be >= 0");
    if (!(lr_decay >= 0.0)) fail("lr_decay must be >= 0");
    if (batch_size < 2) fail("batch_size must be at least 2 (batch norm)");
    if (!(loss.focal_gamma >= 0.0)) fail("focal_gamma must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("Adam betas must lie in [0, 1)");
    if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be > 0");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"lr_decay", c.lr_decay},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"loss", to_string(c.loss.kind)},
            {"focal_gamma", c.loss.focal_gamma},
            {"seed", c.seed},
            {"augment", c.augment},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_epsilon", c.adam_epsilon}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.lr_decay = j.value("lr_decay", c.lr_decay);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        if (j.contains("loss")) {
            c.loss.kind = loss_kind_from_string(j.at("loss").get<std::string>());
        } else {
            c.loss.kind = j.value("weighted_loss", true) ? LossKind::weighted_bce : LossKind::plain_bce;
        }
        c.loss.focal_gamma = j.value("focal_gamma", c.loss.focal_gamma);
        c.seed = j.value("seed", c.seed);
        c.augment = j.value("augment", c.augment);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json RunRecord::to_json() const {
    nlohmann::json epochs_json = nlohmann::json::array();
    for (const auto& e : epochs) {
        nlohmann::json row{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"seconds", e.seconds}};
        row["val_mean_accuracy"] = e.val_mean_accuracy ? nlohmann::json(*e.val_mean_accuracy) : nlohmann::json();
        epochs_json.push_back(row);
    }
    nlohmann::json j{{"fingerprint", fingerprint}, {"step_losses", step_losses}, {"epochs", epochs_json}};
    j["best_epoch"] = best_epoch ? nlohmann::json(*best_epoch) : nlohmann::json();
    j["best_val_mean_accuracy"] = best_val_mean_accuracy;
    if (final_report) j["final_report"] = final_report->to_json();
    return j;
}

std::string RunRecord::to_text() const {
    std::ostringstream os;
    os << "run " << fingerprint << "\n";
    os << "epoch  train_loss  val_mA  seconds\n";
    char line[128];
    for (const auto& e : epochs) {
        if (e.val_mean_accuracy) {
            std::snprintf(line, sizeof line, "%5zu  %10.6f  %6.4f  %7.2f\n", e.epoch, e.train_loss,
                          *e.val_mean_accuracy, e.seconds);
        } else {
            std::snprintf(line, sizeof line, "%5zu  %10.6f  %6s  %7.2f\n", e.epoch, e.train_loss, "-", e.seconds);
        }
        os << line;
    }
    if (final_report) os << final_report->to_text();
    return os.str();
}

std::vector<ProcessedSample> preprocess_all(const std::vector<Sample>& samples, const ModelConfig& config) {
    std::vector<ProcessedSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(preprocess(s, config.input_size, config.mask_grid()));
    return out;
}

Batch make_batch(const std::vector<ProcessedSample>& samples, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw DimensionError("make_batch: empty batch");
    std::vector<const Image*> images, masks;
    Batch batch;
    for (auto i : indices) {
        const auto& s = samples.at(i);
        images.push_back(&s.image);
        masks.push_back(&s.mask);
        batch.targets.insert(batch.targets.end(), s.labels.begin(), s.labels.end());
    }
    batch.images = stack_images<float>(images);
    batch.masks = stack_images<float>(masks);
    return batch;
}

namespace {

struct Fnv {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001B3ULL;
        }
    }
    void text(const std::string& s) { bytes(s.data(), s.size()); }
};

}  // namespace

std::string run_fingerprint(const ModelConfig& model, const TrainConfig& train, const TaskPolicy& policy,
                            const std::vector<Sample>& data) {
    Fnv f;
    f.text(to_json(model).dump());
    f.text(to_json(train).dump());
    f.text(to_json(policy).dump());
    for (const auto& s : data) {
        f.text(s.id);
        f.bytes(s.labels.data(), s.labels.size());
        f.bytes(s.image.pixels.data(), s.image.pixels.size() * sizeof(float));
        f.bytes(s.mask.pixels.data(), s.mask.pixels.size() * sizeof(float));
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(f.h));
    return out;
}

std::vector<double> positive_ratios(const std::vector<Sample>& samples, std::size_t attributes) {
    std::vector<double> ratios(attributes, 0.0);
    for (const auto& s : samples) {
        for (std::size_t a = 0; a < attributes; ++a) ratios[a] += s.labels.at(a);
    }
    for (auto& r : ratios) r = (r + 1.0) / (static_cast<double>(samples.size()) + 2.0);
    return ratios;
}

std::vector<double> predict_probabilities(Model<float>& model, const std::vector<ProcessedSample>& samples,
                                          std::size_t batch_size) {
    NoTapeScope<float> no_tape;
    std::vector<double> out;
    out.reserve(samples.size() * model.policy().attribute_count());
    for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
        std::vector<std::size_t> indices;
        for (std::size_t i = begin; i < std::min(samples.size(), begin + batch_size); ++i) indices.push_back(i);
        const auto batch = make_batch(samples, indices);
        const auto result = model.forward(batch.images, batch.masks, Mode::eval);
        for (float p : result.probabilities.values()) out.push_back(p);
    }
    return out;
}

MetricReport evaluate(Model<float>& model, const std::vector<ProcessedSample>& samples) {
    if (samples.empty()) throw ValidationError("evaluate: empty dataset");
    const auto A = model.policy().attribute_count();
    const auto probabilities = predict_probabilities(model, samples);
    LabelMatrix predictions(samples.size(), A), targets(samples.size(), A);
    predictions.values = predict_labels(probabilities);
    for (std::size_t n = 0; n < samples.size(); ++n) {
        if (samples[n].labels.size() != A) throw DimensionError("evaluate: label vector length differs from policy");
        for (std::size_t a = 0; a < A; ++a) targets.at(n, a) = samples[n].labels[a];
    }
    return mean_accuracy(predictions, targets, &model.policy());
}

MetricReport evaluate(Model<float>& model, const std::vector<Sample>& samples) {
    return evaluate(model, preprocess_all(samples, model.config()));
}

Trainer::Trainer(Model<float>& model, TrainConfig config, std::vector<Sample> train, std::vector<Sample> val)
    : model_(model), config_(std::move(config)), train_(std::move(train)) {
    config_.validate();
    if (train_.size() < 2) throw ValidationError("train: need at least two training samples");
    const auto A = model_.policy().attribute_count();
    for (const auto& s : train_) {
        if (s.labels.size() != A) throw ConfigurationError("train: sample '" + s.id + "' label length differs");
    }
    prepared_ = preprocess_all(train_, model_.config());
    val_ = preprocess_all(val, model_.config());
    ratios_ = positive_ratios(train_, A);
    for (const auto& p : model_.parameters()) {
        m_.emplace_back(p.tensor.numel(), 0.0f);
        v_.emplace_back(p.tensor.numel(), 0.0f);
    }
    std::vector<Sample> all = train_;
    all.insert(all.end(), val.begin(), val.end());
    record_.fingerprint = run_fingerprint(model_.config(), config_, model_.policy(), all);
}

std::vector<std::vector<std::size_t>> Trainer::epoch_batches(std::size_t epoch) const {
    std::vector<std::size_t> order(train_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::uint64_t state = combine_seed(combine_seed(config_.seed, hash_name("shuffle")), epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
        state = mix64(state);
        const auto j = static_cast<std::size_t>(unit_interval(state) * static_cast<double>(i));
        std::swap(order[i - 1], order[j]);
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size) {
        const auto end = std::min(order.size(), begin + config_.batch_size);
        if (end - begin < 2) break;
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

const std::vector<ProcessedSample>& Trainer::epoch_samples(std::size_t epoch) {
    if (!config_.augment) return prepared_;
    if (augmented_epoch_ != epoch) {
        augmented_.clear();
        augmented_.reserve(train_.size());
        for (const auto& s : train_) {
            const auto seed = combine_seed(combine_seed(config_.seed, hash_name(s.id)), epoch);
            augmented_.push_back(preprocess(augment(s, seed), model_.config().input_size, model_.config().mask_grid()));
        }
        augmented_epoch_ = epoch;
    }
    return augmented_;
}

double Trainer::step(const std::vector<std::size_t>& indices) {
    const auto& samples = epoch_samples(epoch_);
    const auto batch = make_batch(samples, indices);
    GradientTape<float> tape;
    double loss_value = 0.0;
    {
        TapeScope<float> scope(tape);
        const auto out = model_.forward(batch.images, batch.masks, Mode::train,
                                        combine_seed(combine_seed(config_.seed, hash_name("dropout")), step_));
        const auto loss = compute_loss<float>(config_.loss, out.probabilities, batch.targets, model_.policy(), ratios_);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
            throw TrainingDiverged(static_cast<long>(step_), "loss became non-finite at step " +
                                                                 std::to_string(step_) + " (epoch " +
                                                                 std::to_string(epoch_) + ")");
        }
        tape.backward(loss);
    }

    const double lr = config_.learning_rate / (1.0 + config_.lr_decay * static_cast<double>(step_));
    const double t = static_cast<double>(step_ + 1);
    const double correction1 = 1.0 - std::pow(config_.beta1, t);
    const double correction2 = 1.0 - std::pow(config_.beta2, t);
    auto& params = model_.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k].tensor;
        if (!p.has_grad()) continue;
        auto values = p.mutable_values();
        const auto grad = p.grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = grad[i];
            m[i] = static_cast<float>(config_.beta1 * m[i] + (1.0 - config_.beta1) * g);
            v[i] = static_cast<float>(config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g);
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            values[i] = static_cast<float>(values[i] - lr * m_hat / (std::sqrt(v_hat) + config_.adam_epsilon));
        }
        p.zero_grad();
    }
    ++step_;
    record_.step_losses.push_back(loss_value);
    return loss_value;
}

EpochRecord Trainer::run_epoch() {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch_;
    double total = 0.0;
    const auto batches = epoch_batches(epoch_);
    for (const auto& b : batches) total += step(b);
    rec.train_loss = batches.empty() ? 0.0 : total / static_cast<double>(batches.size());
    if (!val_.empty()) rec.val_mean_accuracy = evaluate(model_, val_).mean_accuracy;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ++epoch_;
    record_.epochs.push_back(rec);
    return rec;
}

Checkpoint Trainer::capture() {
    nlohmann::json state{{"epoch", epoch_},
                         {"step", step_},
                         {"train_config", to_json(config_)},
                         {"fingerprint", record_.fingerprint},
                         {"best_val_mean_accuracy", record_.best_val_mean_accuracy}};
    state["best_epoch"] = record_.best_epoch ? nlohmann::json(*record_.best_epoch) : nlohmann::json();
    auto ck = capture_checkpoint(model_, state);
    const auto& params = model_.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
        ck.entries.push_back({"optimizer.m." + params[k].name, params[k].tensor.shape(), m_[k]});
        ck.entries.push_back({"optimizer.v." + params[k].name, params[k].tensor.shape(), v_[k]});
    }
    return ck;
}

void Trainer::resume(const Checkpoint& ck) {
    restore_model(model_, ck);
    const auto& params = model_.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto* m = ck.find("optimizer.m." + params[k].name);
        const auto* v = ck.find("optimizer.v." + params[k].name);
        if (!m || !v) throw ConfigurationError("checkpoint lacks optimizer state for '" + params[k].name + "'");
        if (m->values.size() != m_[k].size() || v->values.size() != v_[k].size()) {
            throw ConfigurationError("optimizer state shape mismatch for '" + params[k].name + "'");
        }
        m_[k] = m->values;
        v_[k] = v->values;
    }
    epoch_ = ck.state.at("epoch").get<std::size_t>();
    step_ = ck.state.at("step").get<std::uint64_t>();
    record_.best_val_mean_accuracy = ck.state.value("best_val_mean_accuracy", -1.0);
    if (ck.state.contains("best_epoch") && !ck.state.at("best_epoch").is_null()) {
        record_.best_epoch = ck.state.at("best_epoch").get<std::size_t>();
    }
}

RunRecord Trainer::train(const std::optional<std::filesystem::path>& out_dir) {
    if (out_dir) std::filesystem::create_directories(*out_dir);
    while (epoch_ < config_.epochs) {
        const auto rec = run_epoch();
        const double score = rec.val_mean_accuracy.value_or(0.0);
        const bool improved = !rec.val_mean_accuracy || score > record_.best_val_mean_accuracy;
        if (improved) {
            record_.best_val_mean_accuracy = rec.val_mean_accuracy ? score : record_.best_val_mean_accuracy;
            record_.best_epoch = rec.epoch;
        }
        if (out_dir) {
            const auto ck = capture();
            write_checkpoint(*out_dir / "last.ckpt", ck);
            if (improved) write_checkpoint(*out_dir / "best.ckpt", ck);
        }
        if (on_epoch) on_epoch(rec);
    }
    if (!val_.empty()) record_.final_report = evaluate(model_, val_);
    return record_;
}

}  // namespace par
