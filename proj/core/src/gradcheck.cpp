#include "kao/gradcheck.hpp"

#include <cmath>

namespace kao {

GradCheckReport check_gradient(const std::function<double(const Grid&)>& f, const Grid& x,
                               const Grid& analytic_grad, const std::vector<int64_t>& coords) {
    if (!x.same_shape(analytic_grad)) throw DomainError("check_gradient: gradient shape mismatch");
    std::vector<int64_t> all;
    const std::vector<int64_t>* use = &coords;
    if (coords.empty()) {
        all.resize(static_cast<size_t>(x.numel()));
        for (int64_t i = 0; i < x.numel(); ++i) all[static_cast<size_t>(i)] = i;
        use = &all;
    }

    GradCheckReport report;
    Grid probe = x;
    for (int64_t i : *use) {
        const double h = 1e-3 * (1.0 + std::fabs(static_cast<double>(x[i])));
        const float saved = probe[i];
        probe[i] = static_cast<float>(saved + h);
        const double fp = f(probe);
        probe[i] = static_cast<float>(saved - h);
        const double fm = f(probe);
        probe[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("check_gradient: non-finite f at coordinate " + std::to_string(i));
        const double numeric = (fp - fm) / (2.0 * h);
        const double analytic = static_cast<double>(analytic_grad[i]);
        const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-6});
        const double rel = std::fabs(numeric - analytic) / denom;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.analytic_at_worst = analytic;
            report.numeric_at_worst = numeric;
        }
    }
    return report;
}

}  // namespace kao
