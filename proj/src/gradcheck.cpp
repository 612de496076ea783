#include "par/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "par/errors.hpp"
#include "par/ops.hpp"
#include "par/rng.hpp"

namespace par {

namespace {

double evaluate(const ScalarFunction& fn, const std::vector<Tensor<double>>& inputs) {
    NoTapeScope<double> no_tape;
    return fn(inputs).item();
}

}  // namespace

GradCheckReport finite_diff_check(const std::string& name, const ScalarFunction& fn,
                                  const std::vector<Tensor<double>>& inputs, double step, double tolerance) {
    if (!(step > 0.0)) throw ValidationError("finite_diff_check: step must be positive");
    GradCheckReport report{name, 0.0, tolerance, 0, false};

    // Analytic gradients on private copies so callers' tensors keep no grads.
    std::vector<Tensor<double>> analytic_inputs;
    for (const auto& in : inputs) {
        auto copy = in.detach();
        copy.set_requires_grad(in.requires_grad());
        analytic_inputs.push_back(copy);
    }
    {
        GradientTape<double> tape;
        TapeScope<double> scope(tape);
        auto loss = fn(analytic_inputs);
        tape.backward(loss);
    }

    std::vector<Tensor<double>> probe;
    for (const auto& in : inputs) probe.push_back(in.detach());

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        if (!inputs[k].requires_grad()) continue;
        auto analytic = analytic_inputs[k].grad();
        auto values = probe[k].mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            values[i] = original + step;
            const double up = evaluate(fn, probe);
            values[i] = original - step;
            const double down = evaluate(fn, probe);
            values[i] = original;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic.empty() ? 0.0 : analytic[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            report.max_relative_error = std::max(report.max_relative_error, std::abs(a - numeric) / denom);
            ++report.elements_checked;
        }
    }
    report.passed = report.max_relative_error < tolerance && std::isfinite(report.max_relative_error);
    return report;
}

Tensor<double> random_projection(const Tensor<double>& t, std::uint64_t seed) {
    auto weights = random_tensor(t.shape(), seed, -1.0, 1.0, false);
    return ops::sum(ops::mul(t, weights));
}

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo, double hi, bool requires_grad) {
    std::vector<double> v(shape_numel(shape));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = lo + (hi - lo) * unit_interval(combine_seed(seed, i));
    Tensor<double> t(std::move(shape), std::move(v));
    t.set_requires_grad(requires_grad);
    return t;
}

}  // namespace par
