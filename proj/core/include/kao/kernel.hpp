#pragma once

#include <utility>
#include <vector>

#include "kao/autodiff.hpp"
#include "kao/denoiser.hpp"
#include "kao/grid.hpp"
#include "kao/schedule.hpp"

namespace kao {

struct KernelConfig {
    enum class Bandwidth { kFixed, kMedian };
    Bandwidth bandwidth_policy = Bandwidth::kMedian;
    double sigma = 1.0;        // used by the fixed policy
    double sigma_floor = 1e-3;
    int64_t hsv_window = 5;
    double hsv_epsilon = 0.0;
    bool hsv_modulate = false;  // optional per-pixel loss modifier, off by default

    void validate() const;
};

/// Gaussian RBF weight exp(-||a-b||^2 / (2 sigma^2)) over the full grids.
double rbf_kernel(const Grid& a, const Grid& b, double sigma);

/// Fixed policy returns the configured sigma; the median policy picks sigma so
/// the median pair gets weight exp(-1). Never below sigma_floor.
double resolve_bandwidth(const std::vector<std::pair<const Grid*, const Grid*>>& pairs,
                         const KernelConfig& cfg);

/// High-structural-variance map: per pixel, the variance of the gradient
/// magnitude |grad I| (central differences) over the window neighborhood,
/// minus epsilon. Out-of-range indices are clamped (replicate padding), both
/// for the gradient and for the neighborhood.
Grid hsv_map(const Grid& image, int64_t window, double epsilon);

struct LossSample {
    Grid x0;
    Grid xt;
    int64_t t = 0;  // 2 <= t <= T
};

struct KernelLossResult {
    double value = 0.0;
    ad::Var loss_var;               // graph root for backward()
    std::vector<double> weights;    // per-sample kernel weight, stop-grad
    double sigma = 0.0;             // resolved bandwidth
};

/// Mean over the batch of K(x_t, mu_q) * 1/(2 sigma_q^2(t)) * ||mu_theta - mu_q||^2.
/// The kernel weight is a constant under differentiation.
KernelLossResult kernel_weighted_loss(const std::vector<LossSample>& batch,
                                      const DenoiserParams& params, const NoiseSchedule& sched,
                                      const KernelConfig& cfg);

}  // namespace kao
