#include "par/model.hpp"

#include <cmath>
#include <random>

#include "par/errors.hpp"
#include "par/rng.hpp"

namespace par {

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigurationError("model config: " + what); };
    if (stages == 0) fail("stages must be at least 1");
    if (stage_channels.size() != stages) fail("stage_channels must list one width per stage");
    if (blocks_per_stage == 0) fail("blocks_per_stage must be at least 1");
    if (stem_channels == 0 || stem_kernel == 0 || stem_kernel % 2 == 0) fail("stem needs positive channels and odd kernel");
    for (auto c : stage_channels) {
        if (c == 0) fail("stage widths must be positive");
    }
    if (input_size == 0 || stages >= 32 || input_size % (std::size_t{1} << stages) != 0) {
        fail("input_size " + std::to_string(input_size) + " must be divisible by 2^" + std::to_string(stages));
    }
    if (branch_widths.size() != 3) fail("branch_widths must list three hidden widths");
    for (auto w : branch_widths) {
        if (w == 0) fail("branch widths must be positive");
    }
    if (!(dropout_p >= 0.0) || dropout_p >= 1.0) fail("dropout_p must lie in [0, 1)");
}

ModelConfig ModelConfig::full_scale() {
    ModelConfig c;
    c.input_size = 256;
    c.stages = 4;
    c.blocks_per_stage = 2;
    c.stem_channels = 64;
    c.stage_channels = {128, 256, 512, 1024};
    c.branch_widths = {512, 256, 128};
    return c;
}

ModelConfig ModelConfig::light() {
    ModelConfig c;
    c.input_size = 128;
    c.stages = 3;
    c.blocks_per_stage = 1;
    c.stem_channels = 64;
    c.stage_channels = {128, 256, 512};
    c.branch_widths = {512, 256, 128};
    return c;
}

ModelConfig ModelConfig::desk() {
    return ModelConfig{};
}

ModelConfig ModelConfig::desk_light() {
    ModelConfig c;
    c.input_size = 32;
    c.stages = 3;
    c.blocks_per_stage = 1;
    c.stem_channels = 8;
    c.stage_channels = {8, 16, 32};
    c.branch_widths = {64, 32, 16};
    return c;
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"input_size", c.input_size},
            {"stages", c.stages},
            {"blocks_per_stage", c.blocks_per_stage},
            {"stem_channels", c.stem_channels},
            {"stem_kernel", c.stem_kernel},
            {"stage_channels", c.stage_channels},
            {"branch_widths", c.branch_widths},
            {"dropout_p", c.dropout_p},
            {"multi_task_heads", c.multi_task_heads},
            {"multiplication_layer", c.multiplication_layer}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    if (j.contains("preset")) {
        const auto preset = j.at("preset").get<std::string>();
        if (preset == "full_scale") c = ModelConfig::full_scale();
        else if (preset == "light") c = ModelConfig::light();
        else if (preset == "desk") c = ModelConfig::desk();
        else if (preset == "desk_light") c = ModelConfig::desk_light();
        else throw ConfigurationError("unknown model preset '" + preset + "'");
    }
    try {
        c.input_size = j.value("input_size", c.input_size);
        c.stages = j.value("stages", c.stages);
        c.blocks_per_stage = j.value("blocks_per_stage", c.blocks_per_stage);
        c.stem_channels = j.value("stem_channels", c.stem_channels);
        c.stem_kernel = j.value("stem_kernel", c.stem_kernel);
        c.stage_channels = j.value("stage_channels", c.stage_channels);
        c.branch_widths = j.value("branch_widths", c.branch_widths);
        c.dropout_p = j.value("dropout_p", c.dropout_p);
        c.multi_task_heads = j.value("multi_task_heads", c.multi_task_heads);
        c.multiplication_layer = j.value("multiplication_layer", c.multiplication_layer);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

std::vector<std::uint8_t> predict_labels(std::span<const double> probabilities) {
    std::vector<std::uint8_t> labels(probabilities.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = probabilities[i] >= 0.5 ? 1 : 0;
    return labels;
}

Prediction make_prediction(std::span<const double> probabilities) {
    return Prediction{{probabilities.begin(), probabilities.end()}, predict_labels(probabilities)};
}

template <typename T>
Tensor<T> residual_block_forward(ResidualBlock<T>& block, const Tensor<T>& x, Mode mode) {
    if (x.rank() != 4 || x.dim(3) != block.in_channels) {
        throw DimensionError("residual block expects N x H x W x " + std::to_string(block.in_channels) + ", got " +
                             shape_str(x.shape()));
    }
    auto pre = ops::relu(block.norm1(x, mode));
    auto r = block.conv1(pre);
    r = block.conv2(ops::relu(block.norm2(r, mode)));
    const auto skip = block.projection ? (*block.projection)(x) : x;
    return ops::add(skip, r);
}

template <typename T>
Tensor<T> attention_multiply(const Tensor<T>& features, const Tensor<T>& mask) {
    if (mask.shape().back() != 1) throw DimensionError("attention mask must have a single channel");
    return ops::mask_multiply(features, mask, MaskCheck::strict);
}

template <typename T>
Tensor<T> branch_forward(const BranchHead<T>& head, const Tensor<T>& pooled, double dropout_p, Mode mode,
                         std::uint64_t dropout_seed) {
    if (head.layers.size() != 4) throw ConfigurationError("branch head must have four dense layers");
    const auto& L = head.layers;
    auto h = ops::relu(ops::dense(pooled, L[0].weight, L[0].bias));
    h = ops::dropout(h, dropout_p, combine_seed(dropout_seed, 1), mode);
    h = ops::relu(ops::dense(h, L[1].weight, L[1].bias));
    h = ops::dropout(h, dropout_p, combine_seed(dropout_seed, 2), mode);
    h = ops::relu(ops::dense(h, L[2].weight, L[2].bias));
    return ops::sigmoid(ops::dense(h, L[3].weight, L[3].bias));
}

namespace {

enum class Init { he_normal, glorot_uniform, zeros, ones };

template <typename T>
Tensor<T> init_tensor(std::uint64_t seed, const std::string& name, Shape shape, Init init, std::size_t fan_in,
                      std::size_t fan_out) {
    const auto n = shape_numel(shape);
    std::vector<T> v(n);
    std::mt19937_64 gen(combine_seed(seed, hash_name(name)));
    switch (init) {
        case Init::he_normal: {
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
            for (auto& x : v) x = static_cast<T>(dist(gen));
            break;
        }
        case Init::glorot_uniform: {
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            std::uniform_real_distribution<double> dist(-limit, limit);
            for (auto& x : v) x = static_cast<T>(dist(gen));
            break;
        }
        case Init::zeros: std::fill(v.begin(), v.end(), T(0)); break;
        case Init::ones: std::fill(v.begin(), v.end(), T(1)); break;
    }
    Tensor<T> t(std::move(shape), std::move(v));
    t.set_requires_grad(true);
    return t;
}

}  // namespace

Shape backbone_output_shape(const ModelConfig& config, std::size_t batch) {
    config.validate();
    std::size_t side = config.input_size;
    for (std::size_t s = 0; s < config.stages; ++s) side = ops::conv_output_extent(side, 3, 2, 1);
    return {batch, side, side, config.feature_depth()};
}

template <typename T>
Model<T>::Model(ModelConfig config, TaskPolicy policy, std::uint64_t init_seed)
    : config_(std::move(config)), policy_(std::move(policy)) {
    config_.validate();
    if (policy_.attribute_count() == 0) throw ConfigurationError("model needs a non-empty task policy");
    build(init_seed);
}

template <typename T>
void Model<T>::build(std::uint64_t seed) {
    auto conv = [&](const std::string& name, std::size_t k, std::size_t cin, std::size_t cout, std::size_t stride,
                    std::size_t pad) {
        ConvLayer<T> layer{init_tensor<T>(seed, name + ".weight", {k, k, cin, cout}, Init::he_normal, k * k * cin,
                                          cout),
                           stride, pad};
        parameters_.push_back({name + ".weight", layer.weight});
        return layer;
    };
    auto norm = [&](const std::string& name, std::size_t channels) {
        NormLayer<T> layer{init_tensor<T>(seed, name + ".gamma", {channels}, Init::ones, 0, 0),
                           init_tensor<T>(seed, name + ".beta", {channels}, Init::zeros, 0, 0),
                           BatchNormState<T>(channels)};
        parameters_.push_back({name + ".gamma", layer.gamma});
        parameters_.push_back({name + ".beta", layer.beta});
        return layer;
    };
    auto dense = [&](const std::string& name, std::size_t in, std::size_t out, Init init) {
        DenseLayer<T> layer{init_tensor<T>(seed, name + ".weight", {in, out}, init, in, out),
                            init_tensor<T>(seed, name + ".bias", {out}, Init::zeros, 0, 0)};
        parameters_.push_back({name + ".weight", layer.weight});
        parameters_.push_back({name + ".bias", layer.bias});
        return layer;
    };

    const auto& c = config_;
    stem_ = conv("stem.conv", c.stem_kernel, 3, c.stem_channels, 1, c.stem_kernel / 2);
    stem_norm_ = norm("stem.norm", c.stem_channels);

    std::size_t channels = c.stem_channels;
    for (std::size_t s = 0; s < c.stages; ++s) {
        for (std::size_t b = 0; b < c.blocks_per_stage; ++b) {
            const std::string prefix = "stage" + std::to_string(s) + ".block" + std::to_string(b);
            ResidualBlock<T> block;
            block.in_channels = channels;
            block.out_channels = c.stage_channels[s];
            block.downsample = b == 0;
            const std::size_t stride = block.downsample ? 2 : 1;
            block.norm1 = norm(prefix + ".norm1", channels);
            block.conv1 = conv(prefix + ".conv1", 3, channels, block.out_channels, stride, 1);
            block.norm2 = norm(prefix + ".norm2", block.out_channels);
            block.conv2 = conv(prefix + ".conv2", 3, block.out_channels, block.out_channels, 1, 1);
            if (block.downsample) block.projection = conv(prefix + ".projection", 1, channels, block.out_channels, 2, 0);
            channels = block.out_channels;
            blocks_.push_back(std::move(block));
        }
    }
    final_norm_ = norm("final_norm", channels);

    const std::size_t head_count = c.multi_task_heads ? policy_.task_count() : 1;
    for (std::size_t h = 0; h < head_count; ++h) {
        const std::string prefix = head_prefix(h);
        const std::size_t out = c.multi_task_heads ? policy_.task_width(h) : policy_.attribute_count();
        BranchHead<T> head;
        head.layers.push_back(dense(prefix + "dense0", channels, c.branch_widths[0], Init::he_normal));
        head.layers.push_back(dense(prefix + "dense1", c.branch_widths[0], c.branch_widths[1], Init::he_normal));
        head.layers.push_back(dense(prefix + "dense2", c.branch_widths[1], c.branch_widths[2], Init::he_normal));
        head.layers.push_back(dense(prefix + "output", c.branch_widths[2], out, Init::glorot_uniform));
        heads_.push_back(std::move(head));
    }
}

template <typename T>
std::string Model<T>::head_prefix(std::size_t index) const {
    return config_.multi_task_heads ? "head." + policy_.tasks().at(index).name + "." : std::string("head.shared.");
}

template <typename T>
Tensor<T> Model<T>::backbone_forward(const Tensor<T>& images, Mode mode) {
    const auto S = config_.input_size;
    if (images.rank() != 4 || images.dim(1) != S || images.dim(2) != S || images.dim(3) != 3) {
        throw ValidationError("backbone expects N x " + std::to_string(S) + " x " + std::to_string(S) +
                              " x 3 images, got " + shape_str(images.shape()));
    }
    auto x = ops::relu(stem_norm_(stem_(images), mode));
    for (auto& block : blocks_) x = residual_block_forward(block, x, mode);
    return ops::relu(final_norm_(x, mode));
}

template <typename T>
Tensor<T> Model<T>::heads_forward(const Tensor<T>& pooled, Mode mode, std::uint64_t dropout_seed) {
    std::vector<Tensor<T>> outputs;
    for (std::size_t h = 0; h < heads_.size(); ++h) {
        outputs.push_back(branch_forward(heads_[h], pooled, config_.dropout_p, mode, combine_seed(dropout_seed, h)));
    }
    return outputs.size() == 1 ? outputs.front() : ops::concat_last(outputs);
}

template <typename T>
typename Model<T>::Output Model<T>::forward(const Tensor<T>& images, const Tensor<T>& masks, Mode mode,
                                            std::uint64_t dropout_seed) {
    Output out;
    out.features = backbone_forward(images, mode);
    if (config_.multiplication_layer) {
        const auto g = config_.mask_grid();
        if (masks.rank() != 4 || masks.dim(0) != images.dim(0) || masks.dim(1) != g || masks.dim(2) != g) {
            throw DimensionError("masks must be N x " + std::to_string(g) + " x " + std::to_string(g) +
                                 " x 1, got " + shape_str(masks.shape()));
        }
        out.glimpses = attention_multiply(out.features, masks);
    } else {
        out.glimpses = out.features;
    }
    out.pooled = ops::global_avg_pool(out.glimpses);
    out.probabilities = heads_forward(out.pooled, mode, dropout_seed);
    return out;
}

template <typename T>
std::vector<std::pair<std::string, BatchNormState<T>*>> Model<T>::buffers() {
    std::vector<std::pair<std::string, BatchNormState<T>*>> result;
    result.emplace_back("stem.norm", &stem_norm_.state);
    for (std::size_t s = 0, i = 0; s < config_.stages; ++s) {
        for (std::size_t b = 0; b < config_.blocks_per_stage; ++b, ++i) {
            const std::string prefix = "stage" + std::to_string(s) + ".block" + std::to_string(b);
            result.emplace_back(prefix + ".norm1", &blocks_[i].norm1.state);
            result.emplace_back(prefix + ".norm2", &blocks_[i].norm2.state);
        }
    }
    result.emplace_back("final_norm", &final_norm_.state);
    return result;
}

template <typename T>
Tensor<T>& Model<T>::parameter(const std::string& name) {
    for (auto& p : parameters_) {
        if (p.name == name) return p.tensor;
    }
    throw ConfigurationError("model has no parameter '" + name + "'");
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters_) n += p.tensor.numel();
    return n;
}

template class Model<float>;
template class Model<double>;

#define PAR_INSTANTIATE_MODEL_FNS(T)                                                                        \
    template Tensor<T> residual_block_forward(ResidualBlock<T>&, const Tensor<T>&, Mode);                   \
    template Tensor<T> attention_multiply(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> branch_forward(const BranchHead<T>&, const Tensor<T>&, double, Mode, std::uint64_t);

PAR_INSTANTIATE_MODEL_FNS(float)
PAR_INSTANTIATE_MODEL_FNS(double)

#undef PAR_INSTANTIATE_MODEL_FNS

}  // namespace par
