#include "kao/sampler.hpp"

#include <cmath>
#include <string>

#include "kao/errors.hpp"

namespace kao {

void SamplerConfig::validate() const {
    if (resample_jumps < 0) throw ConfigError("sampler: resample_jumps must be >= 0");
    if (flags.ep_modules < 0 || flags.ep_modules > 2)
        throw ConfigError("sampler: ep_modules must be 0, 1 or 2");
    kernel.validate();
}

Grid blend_pixels(const Grid& x_infr, const Grid& x_cond, const Grid& m) {
    if (!x_infr.same_shape(x_cond)) throw DomainError("blend_pixels: shape mismatch");
    const int64_t c = x_infr.extent(0), h = x_infr.extent(1), w = x_infr.extent(2);
    if (m.numel() != h * w) throw DomainError("blend_pixels: mask extent mismatch");
    Grid out(x_infr.shape());
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t p = 0; p < h * w; ++p) {
            const float mv = m[p];
            out[ci * h * w + p] =
                x_infr[ci * h * w + p] * (1.0f - mv) + x_cond[ci * h * w + p] * mv;
        }
    return out;
}

SampleResult inpaint(const Grid& x0, const Grid& m, const DenoiserParams& params,
                     const NoiseSchedule& sched, const SamplerConfig& cfg, SeededRng& rng,
                     const StepTrace& trace) {
    cfg.validate();
    const DenoiserConfig& dcfg = params.config();
    if (x0.rank() != 3 || x0.extent(1) != dcfg.img_size || x0.extent(2) != dcfg.img_size ||
        x0.extent(0) != dcfg.img_channels)
        throw DomainError("inpaint: image does not match model extents");
    if (m.rank() != 3 || m.extent(0) != 1 || m.extent(1) != x0.extent(1) ||
        m.extent(2) != x0.extent(2))
        throw DomainError("inpaint: mask extents mismatch");
    for (int64_t i = 0; i < m.numel(); ++i)
        if (m[i] != 0.0f && m[i] != 1.0f) throw DomainError("inpaint: mask must be binary");
    if (sched.T() > dcfg.max_timestep)
        throw ConfigError("inpaint: schedule T exceeds model max_timestep");

    const MaskPyramid masks = build_mask_pyramid(m, dcfg);
    // an all-zero mask conditions nothing: skip the q-sample passes entirely so
    // the run is draw-for-draw identical to unconditional generation
    const bool cond_pass = cfg.flags.any() && m.max_value() > 0.0f;

    SampleResult res;
    Grid x = gaussian_sample(rng, x0.shape(), 0.0f, 1.0f);
    for (int64_t t = sched.T(); t >= 1; --t) {
        for (int64_t rep = 0; rep <= cfg.resample_jumps; ++rep) {
            ConditioningHook hook;
            CachedTaps cached;
            if (cond_pass) {
                const Grid xt_cond = marginal_sample(x0, t, sched, rng);
                auto cond_fwd = denoise_forward(xt_cond, t, params);
                ++res.forward_passes;
                cached = cache_taps(cond_fwd.pyramid);
                hook = make_conditioning_hook(masks, cached, params, cfg.flags, cfg.kernel);
            }
            auto fwd = denoise_forward(x, t, params, hook);
            ++res.forward_passes;

            Grid x_infr =
                t >= 2 ? gaussian_sample(rng, x.shape(), fwd.mean,
                                         Grid::scalar(static_cast<float>(
                                             std::sqrt(sched.posterior_var(t)))))
                       : fwd.mean;
            const Grid x_cond = marginal_sample(x0, t - 1, sched, rng);
            Grid x_next = blend_pixels(x_infr, x_cond, m);
            if (!x_next.all_finite())
                throw NumericError("inpaint: non-finite state at step " + std::to_string(t));

            // RePaint-style resampling: re-noise one step and redo
            x = rep < cfg.resample_jumps ? forward_step(x_next, t, sched, rng) : x_next;
        }
        if (trace) trace(t, x);
    }
    res.x0 = x;
    return res;
}

SampleResult sample_unconditional(const DenoiserParams& params, const NoiseSchedule& sched,
                                  SeededRng& rng) {
    const DenoiserConfig& dcfg = params.config();
    const Grid x0({dcfg.img_channels, dcfg.img_size, dcfg.img_size});
    const Grid m({1, dcfg.img_size, dcfg.img_size});
    SamplerConfig cfg;
    cfg.resample_jumps = 0;
    cfg.flags = {false, 0, false};
    return inpaint(x0, m, params, sched, cfg, rng);
}

}  // namespace kao
