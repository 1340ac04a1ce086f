#pragma once

#include <functional>
#include <string>

#include "kao/grid.hpp"

namespace kao {

struct GradCheckReport {
    double max_rel_error = 0.0;
    int64_t worst_index = -1;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    bool passed(double rel_tol) const { return max_rel_error < rel_tol; }
};

/// Compares an analytic gradient against central finite differences,
/// coordinate by coordinate. f must be evaluable at perturbed points;
/// the step is h = 1e-3 * (1 + |x_i|). Coordinates may be restricted via
/// `coords` (empty = all).
GradCheckReport check_gradient(const std::function<double(const Grid&)>& f, const Grid& x,
                               const Grid& analytic_grad,
                               const std::vector<int64_t>& coords = {});

}  // namespace kao
