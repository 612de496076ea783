#include "par/gradient_suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <cstdio>
#include <random>
#include <sstream>

#include "par/losses.hpp"
#include "par/model.hpp"
#include "par/ops.hpp"
#include "par/rng.hpp"

namespace par {

namespace {

using Inputs = std::vector<Tensor<double>>;
using T = Tensor<double>;

// Moves values at least `gap` away from zero so ReLU kinks stay outside the
// finite-difference stencil.
T away_from_zero(T t, double gap = 0.05) {
    for (auto& v : t.mutable_values()) v = v < 0 ? v - gap : v + gap;
    return t;
}

T binary_mask(const Shape& shape, std::uint64_t seed) {
    auto m = random_tensor(shape, seed, 0.0, 1.0, false);
    for (auto& v : m.mutable_values()) v = v < 0.5 ? 0.0 : 1.0;
    return m;
}

std::vector<double> binary_targets(std::size_t n, std::uint64_t seed) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = unit_interval(combine_seed(seed, i)) < 0.5 ? 0.0 : 1.0;
    return y;
}

TaskPolicy random_policy(std::mt19937_64& gen) {
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); };
    std::vector<Task> tasks;
    const int task_count = pick(1, 3);
    int cls = 0;
    for (int t = 0; t < task_count; ++t) {
        Task task{"T" + std::to_string(t), {}};
        const int categories = pick(1, 2);
        for (int c = 0; c < categories; ++c) {
            Category cat{"T" + std::to_string(t) + "C" + std::to_string(c), {}};
            const int classes = pick(1, 3);
            for (int k = 0; k < classes; ++k) cat.classes.push_back("a" + std::to_string(cls++));
            task.categories.push_back(cat);
        }
        tasks.push_back(task);
    }
    return TaskPolicy("random", tasks);
}

std::string dims(std::initializer_list<std::size_t> values) {
    std::string s;
    for (auto v : values) s += (s.empty() ? "" : "x") + std::to_string(v);
    return s;
}

class Suite {
public:
    Suite(std::uint64_t seed, std::size_t shapes, double step, double tolerance)
        : gen_(seed), seed_(seed), shapes_(shapes), step_(step), tolerance_(tolerance) {}

    std::size_t pick(std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(gen_);
    }
    std::uint64_t next_seed() { return combine_seed(seed_, counter_++); }
    T rand(const Shape& shape, double lo = -1.0, double hi = 1.0) { return random_tensor(shape, next_seed(), lo, hi); }

    void check(const std::string& name, const std::string& shape, const ScalarFunction& fn, const Inputs& inputs) {
        auto r = finite_diff_check(name, fn, inputs, step_, tolerance_);
        r.name = name + "[" + shape + "]";
        report_.checks.push_back(r);
    }

    void elementwise() {
        for (std::size_t i = 0; i < shapes_; ++i) {
            const Shape s{pick(1, 3), pick(1, 4), pick(1, 3)};
            const auto p = next_seed();
            const auto label = dims({s[0], s[1], s[2]});
            check("add", label, [p](const Inputs& in) { return random_projection(ops::add(in[0], in[1]), p); },
                  {rand(s), rand(s)});
            check("mul", label, [p](const Inputs& in) { return random_projection(ops::mul(in[0], in[1]), p); },
                  {rand(s), rand(s)});
            check("scale", label, [p](const Inputs& in) { return random_projection(ops::scale(in[0], -1.7), p); },
                  {rand(s)});
            check("sum", label, [](const Inputs& in) { return ops::sum(ops::mul(in[0], in[0])); }, {rand(s)});
            check("mean", label, [](const Inputs& in) { return ops::mean(ops::mul(in[0], in[0])); }, {rand(s)});
            check("relu", label, [p](const Inputs& in) { return random_projection(ops::relu(in[0]), p); },
                  {away_from_zero(rand(s))});
            check("sigmoid", label, [p](const Inputs& in) { return random_projection(ops::sigmoid(in[0]), p); },
                  {rand(s, -4.0, 4.0)});
            const auto dseed = next_seed();
            const double prob = 0.1 * static_cast<double>(pick(0, 7));
            check("dropout", label + " p" + std::to_string(prob).substr(0, 3),
                  [p, dseed, prob](const Inputs& in) {
                      return random_projection(ops::dropout(in[0], prob, dseed, Mode::train), p);
                  },
                  {rand(s)});
        }
    }

    void structural() {
        for (std::size_t i = 0; i < shapes_; ++i) {
            const std::size_t n = pick(1, 3), h = pick(1, 4), w = pick(1, 4), d = pick(1, 4);
            const auto p = next_seed();
            const auto mask = binary_mask({n, h, w, 1}, next_seed());
            check("mask_multiply", dims({n, h, w, d}),
                  [p, mask](const Inputs& in) { return random_projection(ops::mask_multiply(in[0], mask), p); },
                  {rand({n, h, w, d})});
            check("global_avg_pool", dims({n, h, w, d}),
                  [p](const Inputs& in) { return random_projection(ops::global_avg_pool(in[0]), p); },
                  {rand({n, h, w, d})});
            const std::size_t in_dim = pick(1, 8), out_dim = pick(1, 6);
            check("dense", dims({n, in_dim, out_dim}),
                  [p](const Inputs& in) { return random_projection(ops::dense(in[0], in[1], in[2]), p); },
                  {rand({n, in_dim}), rand({in_dim, out_dim}), rand({out_dim})});
            const std::size_t a = pick(1, 3), b = pick(1, 3);
            check("concat_last", dims({n, a, b}),
                  [p](const Inputs& in) { return random_projection(ops::concat_last<double>({in[0], in[1]}), p); },
                  {rand({n, a}), rand({n, b})});
            const std::size_t width = pick(2, 6), begin = pick(0, width - 1), end = pick(begin + 1, width);
            check("slice_last", dims({n, width}) + " [" + std::to_string(begin) + "," + std::to_string(end) + ")",
                  [p, begin, end](const Inputs& in) { return random_projection(ops::slice_last(in[0], begin, end), p); },
                  {rand({n, width})});
            const std::size_t bn = pick(2, 4), c = pick(1, 3);
            check("batch_norm", dims({bn, h, w, c}),
                  [p, c](const Inputs& in) {
                      BatchNormState<double> state(c);
                      return random_projection(ops::batch_norm(in[0], in[1], in[2], state, Mode::train), p);
                  },
                  {rand({bn, h, w, c}), rand({c}, 0.5, 1.5), rand({c})});
        }
    }

    void convolution() {
        for (std::size_t i = 0; i < shapes_; ++i) {
            std::size_t n = 1, h = 5, w = 5, cin = 2, cout = 3, k = 3, stride = 1, pad = 0;
            bool bias = false;
            if (i > 0) {
                n = pick(1, 2), h = pick(3, 6), w = pick(3, 6), cin = pick(1, 3), cout = pick(1, 3);
                pad = pick(0, 1), stride = pick(1, 2), k = pick(1, 3), bias = pick(0, 1) == 1;
            }
            const auto p = next_seed();
            Inputs inputs{rand({n, h, w, cin}), rand({k, k, cin, cout})};
            if (bias) inputs.push_back(rand({cout}));
            check("conv2d",
                  dims({n, h, w, cin}) + " k" + std::to_string(k) + " s" + std::to_string(stride) + " p" +
                      std::to_string(pad) + (bias ? " bias" : ""),
                  [p, stride, pad](const Inputs& in) {
                      std::optional<T> b;
                      if (in.size() > 2) b = in[2];
                      return random_projection(ops::conv2d(in[0], in[1], b, stride, pad), p);
                  },
                  inputs);
        }
    }

    void composites() {
        for (std::size_t i = 0; i < shapes_; ++i) {
            // Residual block, alternating plain and downsampling variants.
            const bool down = i % 2 == 1;
            const std::size_t n = 2, side = pick(2, 3) * 2, cin = pick(1, 3);
            const std::size_t cout = down ? pick(1, 3) : cin;
            auto make_block = [cin, cout, down](const Inputs& in) {
                ResidualBlock<double> block;
                block.in_channels = cin;
                block.out_channels = cout;
                block.downsample = down;
                block.norm1 = {in[1], in[2], BatchNormState<double>(cin)};
                block.conv1 = {in[3], down ? 2u : 1u, 1};
                block.norm2 = {in[4], in[5], BatchNormState<double>(cout)};
                block.conv2 = {in[6], 1, 1};
                if (down) block.projection = ConvLayer<double>{in[7], 2, 0};
                return block;
            };
            // Both ReLU inputs sit after a batch norm, so shifting x cannot move
            // them off the kink; draw inputs until every one clears the stencil.
            auto relu_margin = [&](const Inputs& in) {
                NoTapeScope<double> off;
                auto block = make_block(in);
                const auto a = block.norm1(in[0], Mode::train);
                const auto b = block.norm2(block.conv1(ops::relu(a)), Mode::train);
                double m = std::numeric_limits<double>::infinity();
                for (double v : a.values()) m = std::min(m, std::abs(v));
                for (double v : b.values()) m = std::min(m, std::abs(v));
                return m;
            };
            Inputs block_inputs;
            for (int attempt = 0; attempt < 100; ++attempt) {
                block_inputs = {rand({n, side, side, cin}), rand({cin}, 0.5, 1.5), rand({cin}),
                                rand({3, 3, cin, cout}, -0.5, 0.5), rand({cout}, 0.5, 1.5), rand({cout}),
                                rand({3, 3, cout, cout}, -0.5, 0.5)};
                if (down) block_inputs.push_back(rand({1, 1, cin, cout}));
                if (relu_margin(block_inputs) > 1e-3) break;
            }
            const auto p = next_seed();
            check("residual_block", dims({n, side, side, cin}) + (down ? " down " : " ") + std::to_string(cout),
                  [p, make_block](const Inputs& in) {
                      auto block = make_block(in);
                      return random_projection(residual_block_forward(block, in[0], Mode::train), p);
                  },
                  block_inputs);

            // Full branch head in training mode (fixed dropout masks).
            const std::size_t batch = pick(1, 3), d = pick(2, 6), w1 = pick(2, 6), w2 = pick(2, 5), w3 = pick(2, 4),
                              out = pick(1, 4);
            const auto dseed = next_seed();
            Inputs head_inputs{rand({batch, d}, 0.0, 2.0)};
            for (auto [a, b] : {std::pair{d, w1}, {w1, w2}, {w2, w3}, {w3, out}}) {
                head_inputs.push_back(rand({a, b}));
                head_inputs.push_back(rand({b}, 0.1, 0.5));
            }
            check("branch_head", dims({batch, d, w1, w2, w3, out}),
                  [p, dseed](const Inputs& in) {
                      BranchHead<double> head;
                      for (std::size_t l = 0; l < 4; ++l) head.layers.push_back({in[1 + 2 * l], in[2 + 2 * l]});
                      return random_projection(branch_forward(head, in[0], 0.3, Mode::train, dseed), p);
                  },
                  head_inputs);

            // Losses on random policies and probabilities.
            const auto policy = random_policy(gen_);
            const std::size_t samples = pick(1, 4), A = policy.attribute_count();
            const auto targets = binary_targets(samples * A, next_seed());
            std::vector<double> ratios(A);
            for (auto& r : ratios) r = 0.05 + 0.9 * unit_interval(next_seed());
            const double gamma = 0.5 * static_cast<double>(pick(0, 6));
            const auto probs = rand({samples, A}, 0.02, 0.98);
            const auto label = dims({samples, A});
            check("weighted_loss", label,
                  [targets, policy](const Inputs& in) { return weighted_loss(in[0], targets, policy); }, {probs});
            check("plain_bce_loss", label, [targets](const Inputs& in) { return plain_bce_loss(in[0], targets); },
                  {probs});
            check("focal_loss", label + " g" + std::to_string(gamma).substr(0, 3),
                  [targets, gamma](const Inputs& in) { return focal_loss(in[0], targets, gamma); }, {probs});
            check("weighted_focal_loss", label + " g" + std::to_string(gamma).substr(0, 3),
                  [targets, policy, gamma](const Inputs& in) {
                      return weighted_focal_loss(in[0], targets, policy, gamma);
                  },
                  {probs});
            check("baseline_weighted_bce", label,
                  [targets, ratios](const Inputs& in) { return baseline_weighted_bce(in[0], targets, ratios); },
                  {probs});

            // conv -> relu -> GAP -> dense -> sigmoid -> BCE.
            const std::size_t cn = pick(1, 3), ch = pick(3, 5), cc = pick(1, 2), cf = pick(1, 3), co = pick(1, 3);
            const auto chain_targets = binary_targets(cn * co, next_seed());
            check("conv_relu_gap_dense_sigmoid_bce", dims({cn, ch, ch, cc, cf, co}),
                  [chain_targets](const Inputs& in) {
                      auto x = ops::relu(ops::conv2d(in[0], in[1], std::optional<T>(in[2]), 1, 1));
                      auto pr = ops::sigmoid(ops::dense(ops::global_avg_pool(x), in[3], in[4]));
                      return plain_bce_loss(pr, chain_targets);
                  },
                  {rand({cn, ch, ch, cc}), rand({3, 3, cc, cf}), rand({cf}, 0.2, 0.6), rand({cf, co}),
                   rand({co})});
        }
    }

    GradientSuiteReport finish(double seconds) {
        report_.seconds = seconds;
        return report_;
    }

private:
    std::mt19937_64 gen_;
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    std::size_t shapes_;
    double step_;
    double tolerance_;
    GradientSuiteReport report_;
};

std::string base_name(const std::string& name) { return name.substr(0, name.find('[')); }

}  // namespace

bool GradientSuiteReport::passed() const {
    if (checks.empty()) return false;
    for (const auto& c : checks) {
        if (!c.passed) return false;
    }
    return true;
}

std::vector<std::string> GradientSuiteReport::check_names() const {
    std::vector<std::string> names;
    for (const auto& c : checks) {
        const auto b = base_name(c.name);
        if (names.empty() || std::find(names.begin(), names.end(), b) == names.end()) names.push_back(b);
    }
    return names;
}

std::string GradientSuiteReport::to_text() const {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-34s %6s %9s %12s  %s\n", "check", "shapes", "elements", "max rel err",
                  "status");
    os << line;
    for (const auto& name : check_names()) {
        std::size_t shapes = 0, elements = 0;
        double worst = 0.0;
        bool ok = true;
        for (const auto& c : checks) {
            if (base_name(c.name) != name) continue;
            ++shapes;
            elements += c.elements_checked;
            worst = std::max(worst, c.max_relative_error);
            ok = ok && c.passed;
        }
        std::snprintf(line, sizeof line, "%-34s %6zu %9zu %12.3e  %s\n", name.c_str(), shapes, elements, worst,
                      ok ? "ok" : "FAIL");
        os << line;
    }
    for (const auto& c : checks) {
        if (!c.passed) os << "  failed: " << c.name << " max rel err " << c.max_relative_error << "\n";
    }
    std::snprintf(line, sizeof line, "%zu checks, %s, %.2f s\n", checks.size(), passed() ? "all passed" : "FAILURES",
                  seconds);
    os << line;
    return os.str();
}

GradientSuiteReport run_gradient_suite(std::uint64_t seed, std::size_t shapes_per_check, double step,
                                       double tolerance) {
    const auto start = std::chrono::steady_clock::now();
    Suite suite(seed, shapes_per_check, step, tolerance);
    suite.elementwise();
    suite.structural();
    suite.convolution();
    suite.composites();
    return suite.finish(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
}

}  // namespace par
