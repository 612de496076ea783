#pragma once

// Finite-difference checks of every differentiable primitive and of the
// composites built from them, each over several random shapes.

#include <cstdint>
#include <string>
#include <vector>

#include "par/gradcheck.hpp"

namespace par {

struct GradientSuiteReport {
    std::vector<GradCheckReport> checks;  // one per (check, shape)
    double seconds = 0.0;

    bool passed() const;
    // One line per check name: shapes run, elements, worst relative error.
    std::string to_text() const;
    std::vector<std::string> check_names() const;
};

GradientSuiteReport run_gradient_suite(std::uint64_t seed = 0, std::size_t shapes_per_check = 10,
                                       double step = 1e-5, double tolerance = 1e-4);

}  // namespace par
