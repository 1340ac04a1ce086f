#pragma once

#include "kao/grid.hpp"
#include "kao/rng.hpp"

namespace kao {

/// Discrete diffusion schedule: per-step alpha_t, cumulative alpha_bar_t and
/// the true-posterior variances, for t = 1..T. By convention alpha_bar(0) = 1
/// so the step-0 marginal returns the clean image exactly.
class NoiseSchedule {
public:
    int64_t T() const { return T_; }
    double alpha(int64_t t) const { return alpha_.at(static_cast<size_t>(t - 1)); }
    double alpha_bar(int64_t t) const {
        return t == 0 ? 1.0 : alpha_bar_.at(static_cast<size_t>(t - 1));
    }
    /// sigma_q^2(t) = (1 - alpha_bar_{t-1})(1 - alpha_t) / (1 - alpha_bar_t), 2 <= t <= T
    double posterior_var(int64_t t) const;

    const std::vector<double>& alphas() const { return alpha_; }
    const std::vector<double>& alpha_bars() const { return alpha_bar_; }
    const std::vector<double>& posterior_vars() const { return posterior_var_; }

    friend NoiseSchedule build_schedule(int64_t T, double beta_start, double beta_end);

private:
    int64_t T_ = 0;
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_;
    std::vector<double> posterior_var_;  // entry t-2 holds sigma_q^2(t), t >= 2
};

/// alpha_t = 1 - beta_t with beta linear from beta_start to beta_end.
NoiseSchedule build_schedule(int64_t T, double beta_start, double beta_end);

/// One forward corruption step: sqrt(alpha_t) x_prev + sqrt(1 - alpha_t) z.
Grid forward_step(const Grid& x_prev, int64_t t, const NoiseSchedule& sched, SeededRng& rng);

/// Closed-form marginal: sqrt(abar_t) x0 + sqrt(1 - abar_t) z. Accepts t = 0
/// (returns x0 exactly); this is the q-sample generator of the conditioned path.
Grid marginal_sample(const Grid& x0, int64_t t, const NoiseSchedule& sched, SeededRng& rng);

struct PosteriorParams {
    Grid mean;
    double var;
};

/// True posterior q(x_{t-1} | x_t, x_0) for 2 <= t <= T.
PosteriorParams posterior_params(const Grid& x0, const Grid& xt, int64_t t,
                                 const NoiseSchedule& sched);

/// Affine coefficients of the posterior mean: mean = c0 * x0 + c1 * xt.
void posterior_coeffs(int64_t t, const NoiseSchedule& sched, double& c0, double& c1);

}  // namespace kao
