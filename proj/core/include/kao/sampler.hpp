#pragma once

#include <cstdint>
#include <functional>

#include "kao/conditioning.hpp"
#include "kao/denoiser.hpp"
#include "kao/grid.hpp"
#include "kao/kernel.hpp"
#include "kao/schedule.hpp"

namespace kao {

struct SamplerConfig {
    int64_t resample_jumps = 1;  // RePaint-style re-noising repeats per step, 0 = off
    CondFlags flags;
    KernelConfig kernel;
    bool trace = false;

    void validate() const;
};

struct SampleResult {
    Grid x0;
    int64_t forward_passes = 0;  // denoiser invocations, matches the closed form
};

/// Per-step trace callback: (t, current estimate).
using StepTrace = std::function<void(int64_t, const Grid&)>;

/// Conditioned reverse process: p-sample, q-sample, latent post-conditioning
/// and masked pixel blending, iterated t = T..1. m is binary with 1 marking
/// known (conditioned) pixels.
SampleResult inpaint(const Grid& x0, const Grid& m, const DenoiserParams& params,
                     const NoiseSchedule& sched, const SamplerConfig& cfg, SeededRng& rng,
                     const StepTrace& trace = nullptr);

/// Elementwise select: x_infr o (1 - m) + x_cond o m.
Grid blend_pixels(const Grid& x_infr, const Grid& x_cond, const Grid& m);

/// Ancestral sampling from pure noise, no conditioning.
SampleResult sample_unconditional(const DenoiserParams& params, const NoiseSchedule& sched,
                                  SeededRng& rng);

}  // namespace kao
