#include "kao/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kao/errors.hpp"

namespace kao {

void KernelConfig::validate() const {
    if (sigma_floor <= 0.0) throw ConfigError("kernel: sigma_floor must be > 0");
    if (bandwidth_policy == Bandwidth::kFixed && sigma <= 0.0)
        throw ConfigError("kernel: fixed sigma must be > 0");
    if (hsv_window < 3 || hsv_window % 2 == 0)
        throw ConfigError("kernel: hsv_window must be odd and >= 3");
    if (hsv_epsilon < 0.0) throw ConfigError("kernel: hsv_epsilon must be >= 0");
}

double rbf_kernel(const Grid& a, const Grid& b, double sigma) {
    if (!a.same_shape(b)) throw DomainError("rbf_kernel: shape mismatch");
    if (sigma <= 0.0) throw DomainError("rbf_kernel: sigma must be > 0");
    return std::exp(-a.sq_dist(b) / (2.0 * sigma * sigma));
}

double resolve_bandwidth(const std::vector<std::pair<const Grid*, const Grid*>>& pairs,
                         const KernelConfig& cfg) {
    if (pairs.empty()) throw DomainError("resolve_bandwidth: empty pair list");
    if (cfg.bandwidth_policy == KernelConfig::Bandwidth::kFixed)
        return std::max(cfg.sigma, cfg.sigma_floor);
    std::vector<double> d2;
    d2.reserve(pairs.size());
    for (auto& [a, b] : pairs) d2.push_back(a->sq_dist(*b));
    std::sort(d2.begin(), d2.end());
    const size_t n = d2.size();
    const double med = (n % 2 == 1) ? d2[n / 2] : 0.5 * (d2[n / 2 - 1] + d2[n / 2]);
    return std::max(cfg.sigma_floor, std::sqrt(med / 2.0));
}

Grid hsv_map(const Grid& image, int64_t window, double epsilon) {
    if (window % 2 == 0 || window < 3) throw ConfigError("hsv_map: window must be odd and >= 3");
    if (image.rank() != 3 || image.extent(0) != 1)
        throw DomainError("hsv_map: expected [1,H,W] grid");
    const int64_t h = image.extent(1), w = image.extent(2);
    if (h < window || w < window) throw DomainError("hsv_map: image smaller than window");

    auto clamp = [](int64_t v, int64_t hi) { return std::min(std::max(v, int64_t{0}), hi - 1); };

    // gradient magnitude via central differences, replicate padded
    Grid gmag({1, h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const double gx =
                0.5 * (image.at(0, y, clamp(x + 1, w)) - image.at(0, y, clamp(x - 1, w)));
            const double gy =
                0.5 * (image.at(0, clamp(y + 1, h), x) - image.at(0, clamp(y - 1, h), x));
            gmag.at(0, y, x) = static_cast<float>(std::sqrt(gx * gx + gy * gy));
        }

    const int64_t r = window / 2;
    const double count = static_cast<double>(window * window);
    Grid out({1, h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            double s = 0.0, s2 = 0.0;
            for (int64_t dy = -r; dy <= r; ++dy)
                for (int64_t dx = -r; dx <= r; ++dx) {
                    const double v = gmag.at(0, clamp(y + dy, h), clamp(x + dx, w));
                    s += v;
                    s2 += v * v;
                }
            const double mean = s / count;
            out.at(0, y, x) = static_cast<float>(s2 / count - mean * mean - epsilon);
        }
    return out;
}

KernelLossResult kernel_weighted_loss(const std::vector<LossSample>& batch,
                                      const DenoiserParams& params, const NoiseSchedule& sched,
                                      const KernelConfig& cfg) {
    if (batch.empty()) throw DomainError("kernel_weighted_loss: empty batch");

    std::vector<Grid> targets;
    targets.reserve(batch.size());
    for (auto& s : batch) {
        if (s.t < 2 || s.t > sched.T())
            throw DomainError("kernel_weighted_loss: t must be in {2..T}");
        targets.push_back(posterior_params(s.x0, s.xt, s.t, sched).mean);
    }

    std::vector<std::pair<const Grid*, const Grid*>> pairs;
    for (size_t i = 0; i < batch.size(); ++i) pairs.emplace_back(&batch[i].xt, &targets[i]);
    const double sigma = resolve_bandwidth(pairs, cfg);

    KernelLossResult res;
    res.sigma = sigma;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    ad::Var total;
    for (size_t i = 0; i < batch.size(); ++i) {
        const auto& s = batch[i];
        const double k = rbf_kernel(s.xt, targets[i], sigma);
        res.weights.push_back(k);
        auto fwd = denoise_forward(s.xt, s.t, params);
        ad::Var term;
        if (cfg.hsv_modulate) {
            // per-pixel multiplier 1 + max(0, HSV(x0)); diagnostic coupling
            Grid hsv = hsv_map(s.x0, cfg.hsv_window, cfg.hsv_epsilon);
            Grid wmap(hsv.shape());
            for (int64_t j = 0; j < hsv.numel(); ++j)
                wmap[j] = 1.0f + std::max(0.0f, hsv[j]);
            auto diff = ad::sub(fwd.mean_var, ad::constant(targets[i]));
            Grid wfull(fwd.mean_var->value.shape());
            const int64_t per_chan = hsv.numel();
            for (int64_t j = 0; j < wfull.numel(); ++j) wfull[j] = wmap[j % per_chan];
            term = ad::sum(ad::mul(ad::mul(diff, diff), ad::constant(wfull)));
        } else {
            term = ad::sq_dist_const(fwd.mean_var, targets[i]);
        }
        const double coeff = k / (2.0 * sched.posterior_var(s.t)) * inv_b;
        term = ad::scale(term, coeff);
        if (!std::isfinite(static_cast<double>(term->value[0])))
            throw NumericError("kernel_weighted_loss: non-finite term at sample " +
                               std::to_string(i));
        total = total ? ad::add(total, term) : term;
    }
    res.loss_var = total;
    res.value = static_cast<double>(total->value[0]);
    if (!std::isfinite(res.value))
        throw NumericError("kernel_weighted_loss: non-finite batch loss");
    return res;
}

}  // namespace kao
