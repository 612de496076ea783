#pragma once

// Differentiable primitives. Every function records itself on the active
// GradientTape<T> when one of its differentiable operands requires a gradient.

#include <cstdint>
#include <optional>
#include <vector>

#include "par/tensor.hpp"

namespace par {

enum class Mode { train, eval };
enum class Activation { relu, sigmoid };
enum class MaskCheck { strict, lenient };

// Per-channel normalization statistics carried between batches.
template <typename T>
struct BatchNormState {
    std::vector<T> running_mean;
    std::vector<T> running_var;

    explicit BatchNormState(std::size_t channels = 0) : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

namespace ops {

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);

template <typename T>
Tensor<T> mean(const Tensor<T>& a);

// Hard attention: out[..., h, w, d] = f[..., h, w, d] * m[..., h, w, c], where m
// has either one channel (broadcast over all D) or D channels. The mask is a
// constant: no gradient flows into it. In strict mode every mask value must
// be exactly 0 or 1.
template <typename T>
Tensor<T> mask_multiply(const Tensor<T>& features, const Tensor<T>& mask, MaskCheck check = MaskCheck::strict);

// Cross-correlation over NHWC input (rank 4) or HWC input (rank 3, treated as
// N = 1). kernels are k x k x Cin x Cout; bias, when given, has Cout entries.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const std::optional<Tensor<T>>& bias,
                 std::size_t stride, std::size_t padding);

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride, std::size_t padding);

// N x H x W x D -> N x D, or H x W x D -> D.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& features);

// x is In or N x In; weights In x Out; bias Out.
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind);

// Normalizes over every axis but the last (channels). Train mode needs a
// leading batch axis of at least 2 and updates `state`; eval mode reads it.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormState<T>& state,
                     Mode mode);

// Inverted dropout. The keep mask is a pure function of (seed, element index).
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, std::uint64_t seed, Mode mode);

// Concatenates rank-1 or rank-2 tensors along their last axis.
template <typename T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts);

// Columns [begin, end) of the last axis.
template <typename T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t begin, std::size_t end);

}  // namespace ops

namespace detail {

// True when an active tape exists and any operand requires a gradient.
template <typename T>
bool should_record(std::initializer_list<const Tensor<T>*> operands) {
    if (GradientTape<T>::active() == nullptr) return false;
    for (const auto* t : operands) {
        if (t != nullptr && t->requires_grad()) return true;
    }
    return false;
}

}  // namespace detail

}  // namespace par
