#pragma once

// Multi-task attribute network: residual backbone, hard-attention
// multiplication with the foreground mask, global average pooling and one
// Dense head per task.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "par/ops.hpp"
#include "par/policy.hpp"
#include "par/tensor.hpp"

namespace par {

struct ModelConfig {
    std::size_t input_size = 64;
    std::size_t stages = 4;
    std::size_t blocks_per_stage = 2;
    std::size_t stem_channels = 8;
    std::size_t stem_kernel = 7;
    std::vector<std::size_t> stage_channels{8, 16, 32, 32};
    std::vector<std::size_t> branch_widths{64, 32, 16};
    double dropout_p = 0.7;
    // Ablation switches. Without multi-task heads a single head predicts all
    // attributes; without the multiplication layer the mask is ignored.
    bool multi_task_heads = true;
    bool multiplication_layer = true;

    std::size_t mask_grid() const { return input_size >> stages; }
    std::size_t feature_depth() const { return stage_channels.back(); }
    // Throws ConfigurationError.
    void validate() const;

    // 256 px, 4 stages, D = 1024.
    static ModelConfig full_scale();
    // 128 px, 3 residual blocks.
    static ModelConfig light();
    // 64 px, 4 stages, channels (8, 16, 32, 32).
    static ModelConfig desk();
    // The light network shrunk for laptop-scale runs: 32 px, 3 blocks, grid 4.
    static ModelConfig desk_light();

    bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& document);

// Per-sample sigmoid outputs and their binarized labels.
struct Prediction {
    std::vector<double> probabilities;
    std::vector<std::uint8_t> labels;
};

// y = [p >= 0.5] elementwise.
std::vector<std::uint8_t> predict_labels(std::span<const double> probabilities);
Prediction make_prediction(std::span<const double> probabilities);

template <typename T>
struct ConvLayer {
    Tensor<T> weight;  // k x k x Cin x Cout
    std::size_t stride = 1;
    std::size_t padding = 0;

    Tensor<T> operator()(const Tensor<T>& x) const { return ops::conv2d<T>(x, weight, std::nullopt, stride, padding); }
};

template <typename T>
struct NormLayer {
    Tensor<T> gamma;
    Tensor<T> beta;
    BatchNormState<T> state;

    Tensor<T> operator()(const Tensor<T>& x, Mode mode) { return ops::batch_norm(x, gamma, beta, state, mode); }
};

template <typename T>
struct DenseLayer {
    Tensor<T> weight;  // In x Out
    Tensor<T> bias;
};

template <typename T>
struct ResidualBlock {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    bool downsample = false;
    NormLayer<T> norm1;
    ConvLayer<T> conv1;
    NormLayer<T> norm2;
    ConvLayer<T> conv2;
    std::optional<ConvLayer<T>> projection;  // stride-2 1x1 skip path when downsampling
};

// x + R(x) with R = Conv3x3(ReLU(BN(Conv3x3(ReLU(BN(x)))))).
template <typename T>
Tensor<T> residual_block_forward(ResidualBlock<T>& block, const Tensor<T>& x, Mode mode);

// Multiplies g x g x D features by a g x g x 1 mask ([N x] leading axis allowed).
template <typename T>
Tensor<T> attention_multiply(const Tensor<T>& features, const Tensor<T>& mask);

// Dense[ReLU] -> Dropout -> Dense[ReLU] -> Dropout -> Dense[ReLU] -> Dense[Sigmoid]
template <typename T>
struct BranchHead {
    std::vector<DenseLayer<T>> layers;  // exactly four
};

template <typename T>
Tensor<T> branch_forward(const BranchHead<T>& head, const Tensor<T>& pooled, double dropout_p, Mode mode,
                         std::uint64_t dropout_seed);

template <typename T>
struct NamedParameter {
    std::string name;
    Tensor<T> tensor;
};

template <typename T>
class Model {
public:
    struct Output {
        Tensor<T> features;       // backbone output, N x g x g x D
        Tensor<T> glimpses;       // after the multiplication layer
        Tensor<T> pooled;         // N x D
        Tensor<T> probabilities;  // N x A, policy order
    };

    // Parameters are drawn from streams keyed by (seed, parameter name), so
    // identically named parameters agree across architectures built with the
    // same seed.
    Model(ModelConfig config, TaskPolicy policy, std::uint64_t init_seed);

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    const ModelConfig& config() const { return config_; }
    const TaskPolicy& policy() const { return policy_; }

    // images: N x S x S x 3; masks: N x g x g x 1 (ignored when the
    // multiplication layer is disabled, may then be empty).
    Output forward(const Tensor<T>& images, const Tensor<T>& masks, Mode mode, std::uint64_t dropout_seed = 0);

    Tensor<T> backbone_forward(const Tensor<T>& images, Mode mode);
    // Runs every head on pooled features and concatenates in policy order.
    Tensor<T> heads_forward(const Tensor<T>& pooled, Mode mode, std::uint64_t dropout_seed);

    std::vector<NamedParameter<T>>& parameters() { return parameters_; }
    const std::vector<NamedParameter<T>>& parameters() const { return parameters_; }
    // Batch-norm running statistics, by layer name.
    std::vector<std::pair<std::string, BatchNormState<T>*>> buffers();

    Tensor<T>& parameter(const std::string& name);
    std::size_t parameter_count() const;

    std::vector<ResidualBlock<T>>& blocks() { return blocks_; }
    std::vector<BranchHead<T>>& heads() { return heads_; }
    NormLayer<T>& stem_norm() { return stem_norm_; }
    NormLayer<T>& final_norm() { return final_norm_; }

    // Parameter names owned by head `index` (prefix "head.<name>.").
    std::string head_prefix(std::size_t index) const;

private:
    void build(std::uint64_t seed);

    ModelConfig config_;
    TaskPolicy policy_;
    ConvLayer<T> stem_;
    NormLayer<T> stem_norm_;
    std::vector<ResidualBlock<T>> blocks_;
    NormLayer<T> final_norm_;
    std::vector<BranchHead<T>> heads_;
    std::vector<NamedParameter<T>> parameters_;
};

// Shape the backbone produces for a configuration, without running it.
Shape backbone_output_shape(const ModelConfig& config, std::size_t batch);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace par
