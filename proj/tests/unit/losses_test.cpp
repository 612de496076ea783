#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "par/errors.hpp"
#include "par/losses.hpp"

using namespace par;

namespace {

const double kLog2 = std::log(2.0);

TaskPolicy single_category(std::size_t k) {
    Category c{"C", {}};
    for (std::size_t i = 0; i < k; ++i) c.classes.push_back("c" + std::to_string(i));
    return TaskPolicy("single", {Task{"T", {c}}});
}

TaskPolicy random_policy(std::mt19937_64& rng, std::size_t max_attributes) {
    std::vector<Task> tasks;
    std::size_t used = 0, id = 0;
    const std::size_t task_count = 1 + rng() % 3;
    for (std::size_t t = 0; t < task_count && used < max_attributes; ++t) {
        Task task{"t" + std::to_string(t), {}};
        const std::size_t cats = 1 + rng() % 3;
        for (std::size_t c = 0; c < cats && used < max_attributes; ++c) {
            Category cat{"c" + std::to_string(c), {}};
            const std::size_t k = std::min<std::size_t>(1 + rng() % 5, max_attributes - used);
            for (std::size_t i = 0; i < k; ++i) cat.classes.push_back("a" + std::to_string(id++));
            used += k;
            task.categories.push_back(cat);
        }
        tasks.push_back(task);
    }
    return TaskPolicy("random", tasks);
}

double clamp_p(double p) { return std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon); }

// Direct double-precision evaluation of the category-weighted loss.
double weighted_oracle(const std::vector<double>& p, const std::vector<double>& y, const TaskPolicy& policy,
                       std::size_t n) {
    const std::size_t a_count = policy.attribute_count();
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t a = 0; a < a_count; ++a) {
            const double q = clamp_p(p[s * a_count + a]);
            const double r = static_cast<double>(policy.attributes()[a].category_size);
            const double term = y[s * a_count + a] * std::log(q) + (1 - y[s * a_count + a]) * std::log(1 - q);
            total -= term / (static_cast<double>(n) * r);
        }
    }
    return total;
}

struct Batch {
    Tensor<double> probs;
    std::vector<double> targets;
};

Batch random_batch(std::mt19937_64& rng, std::size_t n, std::size_t a) {
    std::uniform_real_distribution<double> u(0.01, 0.99);
    std::vector<double> p(n * a), y(n * a);
    for (auto& v : p) v = u(rng);
    for (auto& v : y) v = static_cast<double>(rng() % 2);
    return {Tensor<double>({n, a}, p), y};
}

}  // namespace

TEST(WeightedLoss, HandValues) {
    const auto policy = single_category(2);
    const std::vector<double> y{1, 0};
    EXPECT_NEAR(weighted_loss(Tensor<double>({2}, {0.5, 0.5}), y, policy).item(), kLog2, 1e-12);
    const double eps = kProbabilityEpsilon;
    EXPECT_NEAR(weighted_loss(Tensor<double>({2}, {1 - eps, eps}), y, policy).item(), 0.0, 1e-6);
}

TEST(WeightedLoss, SixClassCategoryWeight) {
    const auto policy = single_category(6);
    std::vector<double> p(6, 0.5), y(6, 0.0);
    y[2] = 1.0;
    // six terms of log 2, each weighted 1/6
    EXPECT_NEAR(weighted_loss(Tensor<double>({6}, p), y, policy).item(), kLog2, 1e-12);
    for (double w : policy.inverse_category_sizes()) EXPECT_DOUBLE_EQ(w, 1.0 / 6.0);
}

TEST(WeightedLoss, MatchesSummationOracle) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const auto policy = random_policy(rng, 20);
        const std::size_t n = 1 + rng() % 8;
        auto batch = random_batch(rng, n, policy.attribute_count());
        const std::vector<double> p(batch.probs.values().begin(), batch.probs.values().end());
        EXPECT_NEAR(weighted_loss(batch.probs, batch.targets, policy).item(),
                    weighted_oracle(p, batch.targets, policy, n), 1e-10);
    }
}

TEST(PlainBce, HandAndOracle) {
    EXPECT_NEAR(plain_bce_loss(Tensor<double>({1}, {0.5}), std::vector<double>{1}).item(), kLog2, 1e-12);
    std::mt19937_64 rng(5);
    auto batch = random_batch(rng, 4, 3);
    double oracle = 0.0;
    for (std::size_t i = 0; i < 12; ++i) {
        const double q = batch.probs[i], y = batch.targets[i];
        oracle -= y * std::log(q) + (1 - y) * std::log(1 - q);
    }
    EXPECT_NEAR(plain_bce_loss(batch.probs, batch.targets).item(), oracle / 12.0, 1e-12);
}

TEST(PlainBce, AgreesWithWeightedUnderUnitCategories) {
    std::vector<Task> tasks{Task{"A", {Category{"x", {"x"}}, Category{"y", {"y"}}}},
                            Task{"B", {Category{"z", {"z"}}}}};
    TaskPolicy policy("unit", tasks);
    std::mt19937_64 rng(3);
    auto batch = random_batch(rng, 5, 3);
    EXPECT_NEAR(weighted_loss(batch.probs, batch.targets, policy).item(),
                3.0 * plain_bce_loss(batch.probs, batch.targets).item(), 1e-12);
}

TEST(FocalLoss, HandValueAndReduction) {
    EXPECT_NEAR(focal_loss(Tensor<double>({1}, {0.5}), std::vector<double>{1}, 2.0).item(), 0.25 * kLog2, 1e-12);
    std::mt19937_64 rng(8);
    auto batch = random_batch(rng, 3, 4);
    EXPECT_NEAR(focal_loss(batch.probs, batch.targets, 0.0).item(), plain_bce_loss(batch.probs, batch.targets).item(),
                1e-12);
    EXPECT_NEAR(focal_loss(Tensor<double>({1}, {1 - 1e-9}), std::vector<double>{1}, 2.0).item(), 0.0, 1e-12);
    EXPECT_THROW(focal_loss(batch.probs, batch.targets, -1.0), ValidationError);
}

TEST(WeightedFocal, HandValueAndReduction) {
    const auto policy = single_category(2);
    EXPECT_NEAR(weighted_focal_loss(Tensor<double>({2}, {0.5, 0.5}), std::vector<double>{1, 0}, policy, 2.0).item(),
                0.25 * kLog2, 1e-12);
    std::mt19937_64 rng(9);
    const auto p = random_policy(rng, 12);
    auto batch = random_batch(rng, 4, p.attribute_count());
    EXPECT_NEAR(weighted_focal_loss(batch.probs, batch.targets, p, 0.0).item(),
                weighted_loss(batch.probs, batch.targets, p).item(), 1e-12);
}

TEST(BaselineWeightedBce, Weights) {
    const std::vector<double> y{1, 0};
    const Tensor<double> p({2}, {0.3, 0.3});
    // equal prevalence: both terms weighted exp(-0.5)
    const double expected = std::exp(-0.5) * (-std::log(0.3) - std::log(0.7)) / 2.0;
    EXPECT_NEAR(baseline_weighted_bce(p, y, std::vector<double>{0.5, 0.5}).item(), expected, 1e-12);
    // a rare attribute weights its positives above its negatives
    const double pos = baseline_weighted_bce(Tensor<double>({1}, {0.5}), std::vector<double>{1}, std::vector<double>{0.1}).item();
    const double neg = baseline_weighted_bce(Tensor<double>({1}, {0.5}), std::vector<double>{0}, std::vector<double>{0.1}).item();
    EXPECT_NEAR(pos, std::exp(-0.1) * kLog2, 1e-12);
    EXPECT_NEAR(neg, std::exp(-0.9) * kLog2, 1e-12);
    EXPECT_GT(pos, neg);
}

TEST(BaselineWeightedBce, TwoSampleHandValue) {
    const Tensor<double> p({2, 2}, {0.8, 0.4, 0.1, 0.6});
    const std::vector<double> y{1, 0, 0, 1};
    const std::vector<double> r{0.25, 0.6};
    const double expected = (std::exp(-0.25) * -std::log(0.8) + std::exp(-0.4) * -std::log(0.6) +
                             std::exp(-0.75) * -std::log(0.9) + std::exp(-0.6) * -std::log(0.6)) /
                            4.0;
    EXPECT_NEAR(baseline_weighted_bce(p, y, r).item(), expected, 1e-12);
    EXPECT_THROW(baseline_weighted_bce(p, y, std::vector<double>{0.0, 0.5}), ValidationError);
    EXPECT_THROW(baseline_weighted_bce(p, y, std::vector<double>{0.5, 1.0}), ValidationError);
    EXPECT_THROW(baseline_weighted_bce(p, y, std::vector<double>{0.5}), DimensionError);
}

TEST(Losses, NonNegativeAndZeroAtTargets) {
    std::mt19937_64 rng(12);
    const auto policy = random_policy(rng, 10);
    const std::size_t a = policy.attribute_count();
    const std::vector<double> ratios(a, 0.3);
    for (int trial = 0; trial < 20; ++trial) {
        auto batch = random_batch(rng, 3, a);
        for (auto kind : {LossKind::weighted_bce, LossKind::plain_bce, LossKind::weighted_focal,
                          LossKind::baseline_weighted_bce, LossKind::focal}) {
            EXPECT_GE(compute_loss(LossConfig{kind, 2.0}, batch.probs, batch.targets, policy, ratios).item(), 0.0);
            const Tensor<double> exact({3, a}, batch.targets);
            EXPECT_NEAR(compute_loss(LossConfig{kind, 2.0}, exact, batch.targets, policy, ratios).item(), 0.0, 1e-6);
        }
    }
}

TEST(Losses, CommonWeightScaleScalesLoss) {
    std::mt19937_64 rng(13);
    auto batch = random_batch(rng, 4, 5);
    std::vector<double> pos{0.2, 0.5, 1.0, 0.25, 0.125};
    auto scaled = pos;
    for (auto& w : scaled) w *= 3.5;
    auto run = [&](const std::vector<double>& w, std::vector<double>& grad) {
        auto p = batch.probs.detach();
        p.set_requires_grad(true);
        GradientTape<double> tape;
        TapeScope<double> scope(tape);
        auto loss = pointwise_loss(p, batch.targets, w, w, 0.0);
        auto grads = tape.backward(loss);
        grad.assign(grads.grad_of(p).begin(), grads.grad_of(p).end());
        return loss.item();
    };
    std::vector<double> g1, g2;
    const double l1 = run(pos, g1);
    const double l2 = run(scaled, g2);
    EXPECT_NEAR(l2, 3.5 * l1, 1e-12);
    for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g2[i], 3.5 * g1[i], 1e-12);
}

TEST(Losses, InputErrors) {
    const auto policy = single_category(2);
    EXPECT_THROW(weighted_loss(Tensor<double>({2}, {0.5, 0.5}), std::vector<double>{1}, policy), DimensionError);
    EXPECT_THROW(weighted_loss(Tensor<double>({2}, {0.5, 0.5}), std::vector<double>{1, 0.5}, policy),
                 ValidationError);
    EXPECT_THROW(weighted_loss(Tensor<double>({3}, {0.5, 0.5, 0.5}), std::vector<double>{1, 0, 0}, policy),
                 DimensionError);
}

TEST(Losses, KindNames) {
    for (auto kind : {LossKind::weighted_bce, LossKind::plain_bce, LossKind::weighted_focal,
                      LossKind::baseline_weighted_bce, LossKind::focal}) {
        EXPECT_EQ(loss_kind_from_string(to_string(kind)), kind);
    }
    EXPECT_THROW(loss_kind_from_string("hinge"), ConfigurationError);
}
