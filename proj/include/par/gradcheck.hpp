#pragma once

// Central finite-difference verification of analytic gradients.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "par/tensor.hpp"

namespace par {

struct GradCheckReport {
    std::string name;
    double max_relative_error = 0.0;
    double tolerance = 0.0;
    std::size_t elements_checked = 0;
    bool passed = false;
};

using ScalarFunction = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

// Compares the tape gradient of fn with (f(x+h) - f(x-h)) / 2h for every
// element of every input that requires a gradient. Relative error is
// |a - n| / max(|a|, |n|, 1e-8). fn must be deterministic and return a scalar.
GradCheckReport finite_diff_check(const std::string& name, const ScalarFunction& fn,
                                  const std::vector<Tensor<double>>& inputs, double step = 1e-5,
                                  double tolerance = 1e-4);

// sum(t * R) for a fixed pseudo-random R drawn from `seed`; reduces any
// tensor-valued op to a scalar with a non-degenerate gradient.
Tensor<double> random_projection(const Tensor<double>& t, std::uint64_t seed);

// Tensor of i.i.d. values uniform in [lo, hi).
Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                             bool requires_grad = true);

}  // namespace par
