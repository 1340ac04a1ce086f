#include "kao/schedule.hpp"

#include <cmath>
#include <string>

namespace kao {

namespace {

void require_step(int64_t t, int64_t lo, int64_t T, const char* who) {
    if (t < lo || t > T)
        throw DomainError(std::string(who) + ": step " + std::to_string(t) + " outside [" +
                          std::to_string(lo) + ", " + std::to_string(T) + "]");
}

}  // namespace

double NoiseSchedule::posterior_var(int64_t t) const {
    require_step(t, 2, T_, "posterior_var");
    return posterior_var_.at(static_cast<size_t>(t - 2));
}

NoiseSchedule build_schedule(int64_t T, double beta_start, double beta_end) {
    if (T < 2) throw ConfigError("build_schedule: T must be >= 2");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw ConfigError("build_schedule: betas must satisfy 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.T_ = T;
    s.alpha_.resize(static_cast<size_t>(T));
    s.alpha_bar_.resize(static_cast<size_t>(T));
    double bar = 1.0;
    for (int64_t t = 1; t <= T; ++t) {
        const double beta =
            T == 1 ? beta_start
                   : beta_start + (beta_end - beta_start) * static_cast<double>(t - 1) /
                                      static_cast<double>(T - 1);
        s.alpha_[static_cast<size_t>(t - 1)] = 1.0 - beta;
        bar *= 1.0 - beta;
        s.alpha_bar_[static_cast<size_t>(t - 1)] = bar;
    }
    s.posterior_var_.resize(static_cast<size_t>(T - 1));
    for (int64_t t = 2; t <= T; ++t) {
        const double v = (1.0 - s.alpha_bar(t - 1)) * (1.0 - s.alpha(t)) / (1.0 - s.alpha_bar(t));
        s.posterior_var_[static_cast<size_t>(t - 2)] = v;
    }
    return s;
}

Grid forward_step(const Grid& x_prev, int64_t t, const NoiseSchedule& sched, SeededRng& rng) {
    require_step(t, 1, sched.T(), "forward_step");
    const double a = sched.alpha(t);
    return gaussian_sample(rng, x_prev.shape(), x_prev * static_cast<float>(std::sqrt(a)),
                           Grid::scalar(static_cast<float>(std::sqrt(1.0 - a))));
}

Grid marginal_sample(const Grid& x0, int64_t t, const NoiseSchedule& sched, SeededRng& rng) {
    require_step(t, 0, sched.T(), "marginal_sample");
    if (t == 0) return x0;
    const double ab = sched.alpha_bar(t);
    return gaussian_sample(rng, x0.shape(), x0 * static_cast<float>(std::sqrt(ab)),
                           Grid::scalar(static_cast<float>(std::sqrt(1.0 - ab))));
}

void posterior_coeffs(int64_t t, const NoiseSchedule& sched, double& c0, double& c1) {
    require_step(t, 2, sched.T(), "posterior_params");
    const double at = sched.alpha(t);
    const double ab_t = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(t - 1);
    c0 = std::sqrt(ab_prev) * (1.0 - at) / (1.0 - ab_t);
    c1 = std::sqrt(at) * (1.0 - ab_prev) / (1.0 - ab_t);
}

PosteriorParams posterior_params(const Grid& x0, const Grid& xt, int64_t t,
                                 const NoiseSchedule& sched) {
    if (!x0.same_shape(xt)) throw DomainError("posterior_params: shape mismatch");
    double c0, c1;
    posterior_coeffs(t, sched, c0, c1);
    return {x0 * static_cast<float>(c0) + xt * static_cast<float>(c1), sched.posterior_var(t)};
}

}  // namespace kao
