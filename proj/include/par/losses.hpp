#pragma once

// Multi-label losses over sigmoid outputs. Probabilities are N x A (or A for a
// single sample) in policy column order; targets are the matching flat
// sample-major 0/1 values. Every loss is a scalar tensor on the active tape.

#include <span>
#include <string>
#include <vector>

#include "par/policy.hpp"
#include "par/tensor.hpp"

namespace par {

inline constexpr double kProbabilityEpsilon = 1e-7;

enum class LossKind { weighted_bce, plain_bce, weighted_focal, baseline_weighted_bce, focal };

struct LossConfig {
    LossKind kind = LossKind::weighted_bce;
    double focal_gamma = 2.0;

    bool operator==(const LossConfig&) const = default;
};

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);  // throws ConfigurationError

// sum_{n,a} -[w+_a y (1-p)^g log p + w-_a (1-y) p^g log(1-p)], with p clamped
// to [eps, 1 - eps]. Weights are per attribute and already include any
// 1/N normalization. The common kernel behind every loss below.
template <typename T>
Tensor<T> pointwise_loss(const Tensor<T>& probabilities, std::span<const double> targets,
                         std::span<const double> positive_weights, std::span<const double> negative_weights,
                         double gamma);

// -sum_t sum_c sum_k sum_n 1/(N R_c) [y log p + (1-y) log(1-p)]
template <typename T>
Tensor<T> weighted_loss(const Tensor<T>& probabilities, std::span<const double> targets, const TaskPolicy& policy);

// Mean BCE over all samples and attributes.
template <typename T>
Tensor<T> plain_bce_loss(const Tensor<T>& probabilities, std::span<const double> targets);

// -mean[(1 - p_t)^gamma log p_t].
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& probabilities, std::span<const double> targets, double gamma);

// Focal term under the 1/(N R_c) category weights.
template <typename T>
Tensor<T> weighted_focal_loss(const Tensor<T>& probabilities, std::span<const double> targets,
                              const TaskPolicy& policy, double gamma);

// Prevalence-weighted BCE: positives weighted exp(-r_a), negatives
// exp(-(1 - r_a)), r_a the training-split positive ratio; mean-reduced.
template <typename T>
Tensor<T> baseline_weighted_bce(const Tensor<T>& probabilities, std::span<const double> targets,
                                std::span<const double> positive_ratios);

// Dispatches on config.kind. positive_ratios is only read by the baseline.
template <typename T>
Tensor<T> compute_loss(const LossConfig& config, const Tensor<T>& probabilities, std::span<const double> targets,
                       const TaskPolicy& policy, std::span<const double> positive_ratios);

}  // namespace par
