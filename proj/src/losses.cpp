#include "par/losses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "par/errors.hpp"
#include "par/ops.hpp"

namespace par {

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::weighted_bce: return "weighted_bce";
        case LossKind::plain_bce: return "plain_bce";
        case LossKind::weighted_focal: return "weighted_focal";
        case LossKind::baseline_weighted_bce: return "baseline_weighted_bce";
        case LossKind::focal: return "focal";
    }
    return "unknown";
}

LossKind loss_kind_from_string(const std::string& name) {
    for (auto k : {LossKind::weighted_bce, LossKind::plain_bce, LossKind::weighted_focal,
                   LossKind::baseline_weighted_bce, LossKind::focal}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigurationError("unknown loss kind '" + name + "'");
}

namespace {

struct LossLayout {
    std::size_t samples;
    std::size_t attributes;
};

template <typename T>
LossLayout layout_of(const Tensor<T>& p, std::span<const double> targets) {
    if (p.rank() != 1 && p.rank() != 2) throw DimensionError("loss: probabilities must be A or N x A");
    LossLayout l{p.rank() == 2 ? p.dim(0) : 1, p.shape().back()};
    if (targets.size() != l.samples * l.attributes) {
        throw DimensionError("loss: " + std::to_string(targets.size()) + " targets for " +
                             std::to_string(l.samples * l.attributes) + " probabilities");
    }
    for (double y : targets) {
        if (y != 0.0 && y != 1.0) throw ValidationError("loss: targets must be 0 or 1");
    }
    return l;
}

}  // namespace

template <typename T>
Tensor<T> pointwise_loss(const Tensor<T>& probabilities, std::span<const double> targets,
                         std::span<const double> positive_weights, std::span<const double> negative_weights,
                         double gamma) {
    const auto layout = layout_of(probabilities, targets);
    if (positive_weights.size() != layout.attributes || negative_weights.size() != layout.attributes) {
        throw DimensionError("loss: weight vectors must have one entry per attribute");
    }
    if (!(gamma >= 0.0)) throw ValidationError("loss: focal gamma must be non-negative");

    constexpr double eps = kProbabilityEpsilon;
    auto pv = probabilities.values();
    const std::size_t A = layout.attributes;
    double total = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double p = std::clamp(static_cast<double>(pv[i]), eps, 1.0 - eps);
        const std::size_t a = i % A;
        if (targets[i] == 1.0) {
            total -= positive_weights[a] * std::pow(1.0 - p, gamma) * std::log(p);
        } else {
            total -= negative_weights[a] * std::pow(p, gamma) * std::log(1.0 - p);
        }
    }
    auto result = Tensor<T>::scalar(static_cast<T>(total));

    if (detail::should_record<T>({&probabilities})) {
        auto pn = probabilities.node(), on = result.node();
        auto y = std::make_shared<std::vector<double>>(targets.begin(), targets.end());
        auto wp = std::make_shared<std::vector<double>>(positive_weights.begin(), positive_weights.end());
        auto wn = std::make_shared<std::vector<double>>(negative_weights.begin(), negative_weights.end());
        GradientTape<T>::active()->record("pointwise_loss", {pn}, on, [pn, on, y, wp, wn, A, gamma] {
            T* gp = detail::grad_buffer(*pn).data();
            const double g = static_cast<double>(on->grad[0]);
            for (std::size_t i = 0; i < pn->values.size(); ++i) {
                const double raw = static_cast<double>(pn->values[i]);
                if (raw < eps || raw > 1.0 - eps) continue;  // clamped: flat
                const double p = raw;
                const std::size_t a = i % A;
                double d;
                if ((*y)[i] == 1.0) {
                    const double q = 1.0 - p;
                    const double focal_part = gamma == 0.0 ? 0.0 : gamma * std::pow(q, gamma - 1.0) * std::log(p);
                    d = -(*wp)[a] * (-focal_part + std::pow(q, gamma) / p);
                } else {
                    const double q = 1.0 - p;
                    const double focal_part = gamma == 0.0 ? 0.0 : gamma * std::pow(p, gamma - 1.0) * std::log(q);
                    d = -(*wn)[a] * (focal_part - std::pow(p, gamma) / q);
                }
                gp[i] += static_cast<T>(g * d);
            }
        });
    }
    return result;
}

namespace {

std::vector<double> category_weights(const TaskPolicy& policy, std::size_t attributes, std::size_t samples) {
    if (policy.attribute_count() != attributes) {
        throw DimensionError("loss: policy has " + std::to_string(policy.attribute_count()) +
                             " attributes, probabilities have " + std::to_string(attributes));
    }
    auto w = policy.inverse_category_sizes();
    for (auto& x : w) x /= static_cast<double>(samples);
    return w;
}

}  // namespace

template <typename T>
Tensor<T> weighted_loss(const Tensor<T>& probabilities, std::span<const double> targets, const TaskPolicy& policy) {
    const auto l = layout_of(probabilities, targets);
    const auto w = category_weights(policy, l.attributes, l.samples);
    return pointwise_loss(probabilities, targets, w, w, 0.0);
}

template <typename T>
Tensor<T> plain_bce_loss(const Tensor<T>& probabilities, std::span<const double> targets) {
    return focal_loss(probabilities, targets, 0.0);
}

template <typename T>
Tensor<T> focal_loss(const Tensor<T>& probabilities, std::span<const double> targets, double gamma) {
    const auto l = layout_of(probabilities, targets);
    const std::vector<double> w(l.attributes, 1.0 / static_cast<double>(l.samples * l.attributes));
    return pointwise_loss(probabilities, targets, w, w, gamma);
}

template <typename T>
Tensor<T> weighted_focal_loss(const Tensor<T>& probabilities, std::span<const double> targets,
                              const TaskPolicy& policy, double gamma) {
    const auto l = layout_of(probabilities, targets);
    const auto w = category_weights(policy, l.attributes, l.samples);
    return pointwise_loss(probabilities, targets, w, w, gamma);
}

template <typename T>
Tensor<T> baseline_weighted_bce(const Tensor<T>& probabilities, std::span<const double> targets,
                                std::span<const double> positive_ratios) {
    const auto l = layout_of(probabilities, targets);
    if (positive_ratios.size() != l.attributes) {
        throw DimensionError("baseline_weighted_bce: need one positive ratio per attribute");
    }
    const double norm = 1.0 / static_cast<double>(l.samples * l.attributes);
    std::vector<double> wp(l.attributes), wn(l.attributes);
    for (std::size_t a = 0; a < l.attributes; ++a) {
        const double r = positive_ratios[a];
        if (!(r > 0.0 && r < 1.0)) throw ValidationError("baseline_weighted_bce: positive ratios must lie in (0, 1)");
        wp[a] = std::exp(-r) * norm;
        wn[a] = std::exp(-(1.0 - r)) * norm;
    }
    return pointwise_loss(probabilities, targets, wp, wn, 0.0);
}

template <typename T>
Tensor<T> compute_loss(const LossConfig& config, const Tensor<T>& probabilities, std::span<const double> targets,
                       const TaskPolicy& policy, std::span<const double> positive_ratios) {
    switch (config.kind) {
        case LossKind::weighted_bce: return weighted_loss(probabilities, targets, policy);
        case LossKind::plain_bce: return plain_bce_loss(probabilities, targets);
        case LossKind::weighted_focal: return weighted_focal_loss(probabilities, targets, policy, config.focal_gamma);
        case LossKind::baseline_weighted_bce: return baseline_weighted_bce(probabilities, targets, positive_ratios);
        case LossKind::focal: return focal_loss(probabilities, targets, config.focal_gamma);
    }
    throw ConfigurationError("unhandled loss kind");
}

#define PAR_INSTANTIATE_LOSSES(T)                                                                                   \
    template Tensor<T> pointwise_loss(const Tensor<T>&, std::span<const double>, std::span<const double>,          \
                                      std::span<const double>, double);                                            \
    template Tensor<T> weighted_loss(const Tensor<T>&, std::span<const double>, const TaskPolicy&);                \
    template Tensor<T> plain_bce_loss(const Tensor<T>&, std::span<const double>);                                  \
    template Tensor<T> focal_loss(const Tensor<T>&, std::span<const double>, double);                              \
    template Tensor<T> weighted_focal_loss(const Tensor<T>&, std::span<const double>, const TaskPolicy&, double);  \
    template Tensor<T> baseline_weighted_bce(const Tensor<T>&, std::span<const double>, std::span<const double>);  \
    template Tensor<T> compute_loss(const LossConfig&, const Tensor<T>&, std::span<const double>, const TaskPolicy&, \
                                    std::span<const double>);

PAR_INSTANTIATE_LOSSES(float)
PAR_INSTANTIATE_LOSSES(double)

#undef PAR_INSTANTIATE_LOSSES

}  // namespace par
