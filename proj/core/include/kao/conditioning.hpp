#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "kao/autodiff.hpp"
#include "kao/denoiser.hpp"
#include "kao/grid.hpp"
#include "kao/kernel.hpp"

namespace kao {

/// Binary pixel mask plus its average-pooled versions at each tap
/// resolution. Downsampled values are fractional.
struct MaskPyramid {
    Grid m;                    // [1,H,W], values in {0,1}; 1 = conditioned pixel
    std::vector<Grid> levels;  // one [1,Hl,Wl] grid per encoder tap
    const Grid& level_for(TapId tap) const {
        return tap.is_mid() ? levels.back() : levels[static_cast<size_t>(tap.level)];
    }
};

/// Non-overlapping average pooling; source extents must be integer multiples
/// of the target extents.
Grid downsample_mask(const Grid& m, int64_t target_h, int64_t target_w);

MaskPyramid build_mask_pyramid(const Grid& m, const DenoiserConfig& cfg);

/// h* = h_infr o (1 - D(m)) + h_cond o D(m). Tokens are [N,C]; dm is the
/// [1,Hl,Wl] level mask broadcast over channels.
ad::Var blend_latent(const ad::Var& h_infr, const ad::Var& h_cond, const Grid& dm);

struct RegionPools {
    ad::Var cond;                // [1,C] channelwise max over conditioned rows
    ad::Var infr;                // [1,C] over inferred rows
    std::vector<uint8_t> assign; // per row: 1 = conditioned
    int64_t rows = 0;
    bool cond_empty = false;
    bool infr_empty = false;
};

/// Partitions token rows by D(m) >= threshold and max-pools each region.
/// An empty region falls back to the other region's vector.
RegionPools maskwise_maxpool(const Grid& dm, const ad::Var& h, double threshold);

/// Residual two-layer mixer on the concatenated region vectors. Zero-init
/// last layer makes this the identity at construction.
std::pair<ad::Var, ad::Var> ep_mix(const ad::Var& cond_vec, const ad::Var& infr_vec,
                                   const ad::Var& w1, const ad::Var& w2);

/// Broadcasts each region's additive update (mixed minus pooled) back onto h.
ad::Var maskwise_unpool(const ad::Var& cond_mixed, const ad::Var& infr_mixed,
                        const RegionPools& pools, const ad::Var& h);

/// h_final = K(h_infr, h_cond) * h_infr + (1 - K) * h_cond, with one scalar
/// K per level map. K is a constant under differentiation.
ad::Var kernel_token_blend(const ad::Var& h_infr, const ad::Var& h_cond, double sigma);

struct CondFlags {
    bool lsc = true;
    int ep_modules = 2;       // 0, 1 (mid only) or 2 (input tap + mid)
    bool kernel_blend = true;
    bool any() const { return lsc || ep_modules > 0 || kernel_blend; }
};

/// Cached tap latents from a hook-free pass over the conditioned q-sample.
struct CachedTaps {
    std::vector<Grid> levels;
    Grid mid;
    const Grid& for_tap(TapId tap) const {
        return tap.is_mid() ? mid : levels[static_cast<size_t>(tap.level)];
    }
};

CachedTaps cache_taps(const TokenPyramid& pyr);

/// Composes the fixed conditioning order blend_latent -> (gamma, phi,
/// gamma^-1) -> kernel_token_blend into a denoiser hook. A tap whose level
/// mask is entirely zero is left untouched.
ConditioningHook make_conditioning_hook(const MaskPyramid& masks, const CachedTaps& cond,
                                        const DenoiserParams& params, const CondFlags& flags,
                                        const KernelConfig& kcfg);

}  // namespace kao
