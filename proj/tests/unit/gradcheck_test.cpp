#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "par/gradcheck.hpp"
#include "par/gradient_suite.hpp"
#include "par/ops.hpp"

using namespace par;

namespace {

// y = 2x with a backward rule that claims dy/dx = 3.
Tensor<double> broken_double(const Tensor<double>& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 2.0 * x[i];
    Tensor<double> y(x.shape(), std::move(out));
    if (auto* tape = GradientTape<double>::active(); tape != nullptr && x.requires_grad()) {
        auto xn = x.node(), yn = y.node();
        tape->record("broken_double", {xn}, yn, [xn, yn] {
            auto g = detail::grad_buffer(*xn);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * yn->grad[i];
        });
    }
    return y;
}

}  // namespace

TEST(FiniteDiff, LinearFunctionAtMachinePrecision) {
    auto x = random_tensor({7}, 3);
    auto report = finite_diff_check(
        "linear", [](const auto& in) { return random_projection(ops::scale(in[0], 0.75), 4); }, {x});
    EXPECT_TRUE(report.passed);
    EXPECT_EQ(report.elements_checked, 7u);
    EXPECT_LT(report.max_relative_error, 1e-8);
}

TEST(FiniteDiff, CorruptedBackwardIsReported) {
    auto x = random_tensor({5}, 8);
    auto report = finite_diff_check("broken", [](const auto& in) { return ops::sum(broken_double(in[0])); }, {x});
    EXPECT_FALSE(report.passed);
    EXPECT_NEAR(report.max_relative_error, 1.0 / 3.0, 1e-6);
}

TEST(FiniteDiff, OnlyInputsRequiringGradAreChecked) {
    auto x = random_tensor({3}, 1);
    auto c = random_tensor({3}, 2, -1, 1, false);
    auto report = finite_diff_check(
        "mul", [](const auto& in) { return ops::sum(ops::mul(in[0], in[1])); }, {x, c});
    EXPECT_TRUE(report.passed);
    EXPECT_EQ(report.elements_checked, 3u);
}

TEST(FiniteDiff, RandomProjectionIsDeterministic) {
    auto t = random_tensor({4, 2}, 6, -1, 1, false);
    EXPECT_EQ(random_projection(t, 10).item(), random_projection(t, 10).item());
    EXPECT_NE(random_projection(t, 10).item(), random_projection(t, 11).item());
}

TEST(GradientSuite, EveryCheckPassesOnTenShapes) {
    auto report = run_gradient_suite(0, 10, 1e-5, 1e-4);
    EXPECT_TRUE(report.passed()) << report.to_text();
    std::map<std::string, std::size_t> counts;
    for (const auto& c : report.checks) {
        EXPECT_LT(c.max_relative_error, 1e-4) << c.name;
        ++counts[c.name.substr(0, c.name.find('['))];
    }
    const std::vector<std::string> expected{
        "add", "mul", "scale", "sum", "mean", "relu", "sigmoid", "dropout", "mask_multiply", "global_avg_pool",
        "dense", "concat_last", "slice_last", "batch_norm", "conv2d", "residual_block", "branch_head",
        "weighted_loss", "plain_bce_loss", "focal_loss", "weighted_focal_loss", "baseline_weighted_bce",
        "conv_relu_gap_dense_sigmoid_bce"};
    for (const auto& name : expected) EXPECT_GE(counts[name], 10u) << name;
    const auto names = report.check_names();
    for (const auto& name : expected) EXPECT_NE(std::find(names.begin(), names.end(), name), names.end()) << name;
}

TEST(GradientSuite, OtherSeedsPass) {
    for (std::uint64_t seed : {1u, 2u}) {
        auto report = run_gradient_suite(seed, 10);
        EXPECT_TRUE(report.passed()) << "seed " << seed << "\n" << report.to_text();
    }
}
