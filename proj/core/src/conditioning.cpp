#include "kao/conditioning.hpp"

#include <cmath>

#include "kao/errors.hpp"

namespace kao {

namespace ad = kao::ad;

Grid downsample_mask(const Grid& m, int64_t target_h, int64_t target_w) {
    if (m.rank() != 3 || m.extent(0) != 1) throw DomainError("downsample_mask: expected [1,H,W]");
    const int64_t h = m.extent(1), w = m.extent(2);
    if (target_h < 1 || target_w < 1 || h % target_h != 0 || w % target_w != 0)
        throw DomainError("downsample_mask: extents not integer multiples of target");
    const int64_t sy = h / target_h, sx = w / target_w;
    Grid out({1, target_h, target_w});
    for (int64_t y = 0; y < target_h; ++y)
        for (int64_t x = 0; x < target_w; ++x) {
            double acc = 0.0;
            for (int64_t dy = 0; dy < sy; ++dy)
                for (int64_t dx = 0; dx < sx; ++dx) acc += m.at(0, y * sy + dy, x * sx + dx);
            out.at(0, y, x) = static_cast<float>(acc / static_cast<double>(sy * sx));
        }
    return out;
}

MaskPyramid build_mask_pyramid(const Grid& m, const DenoiserConfig& cfg) {
    MaskPyramid pyr;
    pyr.m = m;
    for (int64_t l = 0; l < cfg.levels; ++l) {
        const int64_t s = int64_t{1} << l;
        pyr.levels.push_back(downsample_mask(m, cfg.img_size / s, cfg.img_size / s));
    }
    return pyr;
}

ad::Var blend_latent(const ad::Var& h_infr, const ad::Var& h_cond, const Grid& dm) {
    if (dm.numel() != h_infr->value.extent(0))
        throw DomainError("blend_latent: mask extent does not match token rows");
    return ad::blend_rows(h_infr, h_cond, dm);
}

RegionPools maskwise_maxpool(const Grid& dm, const ad::Var& h, double threshold) {
    const int64_t n = h->value.extent(0);
    if (dm.numel() != n) throw DomainError("maskwise_maxpool: mask extent mismatch");
    RegionPools pools;
    pools.rows = n;
    pools.assign.resize(static_cast<size_t>(n));
    std::vector<uint8_t> cond_sel(static_cast<size_t>(n)), infr_sel(static_cast<size_t>(n));
    int64_t n_cond = 0;
    for (int64_t i = 0; i < n; ++i) {
        const bool is_cond = dm[i] >= static_cast<float>(threshold);
        pools.assign[static_cast<size_t>(i)] = is_cond ? 1 : 0;
        cond_sel[static_cast<size_t>(i)] = is_cond;
        infr_sel[static_cast<size_t>(i)] = !is_cond;
        n_cond += is_cond;
    }
    pools.cond_empty = n_cond == 0;
    pools.infr_empty = n_cond == n;
    if (pools.cond_empty) {
        pools.infr = ad::rowset_max(h, infr_sel);
        pools.cond = pools.infr;  // empty-region fallback
    } else if (pools.infr_empty) {
        pools.cond = ad::rowset_max(h, cond_sel);
        pools.infr = pools.cond;
    } else {
        pools.cond = ad::rowset_max(h, cond_sel);
        pools.infr = ad::rowset_max(h, infr_sel);
    }
    return pools;
}

std::pair<ad::Var, ad::Var> ep_mix(const ad::Var& cond_vec, const ad::Var& infr_vec,
                                   const ad::Var& w1, const ad::Var& w2) {
    const int64_t c = cond_vec->value.extent(1);
    auto z = ad::concat_cols({cond_vec, infr_vec});
    auto update = ad::matmul(ad::relu(ad::matmul(z, w1)), w2);
    auto cond_out = ad::add(cond_vec, ad::slice_cols(update, 0, c));
    auto infr_out = ad::add(infr_vec, ad::slice_cols(update, c, c));
    return {cond_out, infr_out};
}

ad::Var maskwise_unpool(const ad::Var& cond_mixed, const ad::Var& infr_mixed,
                        const RegionPools& pools, const ad::Var& h) {
    if (h->value.extent(0) != pools.rows)
        throw DomainError("maskwise_unpool: assignment map does not match token rows");
    auto cond_update = ad::sub(cond_mixed, pools.cond);
    auto infr_update = ad::sub(infr_mixed, pools.infr);
    return ad::add_region_rows(h, infr_update, cond_update, pools.assign);
}

ad::Var kernel_token_blend(const ad::Var& h_infr, const ad::Var& h_cond, double sigma) {
    const double k = rbf_kernel(h_infr->value, h_cond->value, sigma);
    return ad::add(ad::scale(h_infr, k), ad::scale(h_cond, 1.0 - k));
}

CachedTaps cache_taps(const TokenPyramid& pyr) {
    CachedTaps taps;
    for (auto& l : pyr.levels) taps.levels.push_back(l->value);
    taps.mid = pyr.mid->value;
    return taps;
}

ConditioningHook make_conditioning_hook(const MaskPyramid& masks, const CachedTaps& cond,
                                        const DenoiserParams& params, const CondFlags& flags,
                                        const KernelConfig& kcfg) {
    if (!flags.any()) return nullptr;
    return [&masks, &cond, &params, flags, kcfg](TapId tap, const ad::Var& h_in) -> ad::Var {
        const Grid& dm_map = masks.level_for(tap);
        if (dm_map.max_value() <= 0.0f) return h_in;  // nothing conditioned at this tap
        const Grid dm = dm_map.reshaped({dm_map.numel()});
        auto h_cond = ad::constant(cond.for_tap(tap));

        ad::Var h = h_in;
        if (flags.lsc) h = blend_latent(h, h_cond, dm);

        const bool ep_here = (tap.is_mid() && flags.ep_modules >= 1) ||
                             (!tap.is_mid() && tap.level == 0 && flags.ep_modules >= 2);
        if (ep_here) {
            const std::string prefix = tap.is_mid() ? "mixer.mid" : "mixer.enc0";
            auto pools = maskwise_maxpool(dm, h, 0.5);
            auto [cm, im] = ep_mix(pools.cond, pools.infr, params.at(prefix + ".w1"),
                                   params.at(prefix + ".w2"));
            h = maskwise_unpool(cm, im, pools, h);
        }

        if (flags.kernel_blend) {
            const double sigma =
                resolve_bandwidth({{&h->value, &h_cond->value}}, kcfg);
            h = kernel_token_blend(h, h_cond, sigma);
        }
        return h;
    };
}

}  // namespace kao
