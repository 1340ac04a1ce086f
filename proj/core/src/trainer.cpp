#include "kao/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>

#include "kao/errors.hpp"

namespace kao {

void TrainConfig::validate() const {
    if (batch_size < 1 || total_iters < 1) throw ConfigError("train: sizes must be positive");
    if (!(lr_peak > 0.0)) throw ConfigError("train: lr_peak must be > 0");
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
        throw ConfigError("train: warmup_fraction must be in [0,1)");
    if (!(mask_ratio_lo > 0.0) || mask_ratio_lo > mask_ratio_hi || !(mask_ratio_hi < 1.0))
        throw ConfigError("train: mask ratio range must satisfy 0 < lo <= hi < 1");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    kernel.validate();
}

double lr_at(int64_t iter, const TrainConfig& cfg) {
    if (iter < 0 || iter >= cfg.total_iters) throw DomainError("lr_at: iteration out of range");
    const int64_t warmup = static_cast<int64_t>(
        cfg.warmup_fraction * static_cast<double>(cfg.total_iters));
    if (warmup > 0 && iter < warmup)
        return cfg.lr_peak * static_cast<double>(iter) / static_cast<double>(warmup);
    const int64_t span = cfg.total_iters - 1 - warmup;
    const double progress =
        span > 0 ? static_cast<double>(iter - warmup) / static_cast<double>(span) : 1.0;
    return cfg.lr_peak * 0.5 * (1.0 + std::cos(M_PI * progress));
}

TrainingMask sample_training_mask(int64_t h, int64_t w, double ratio_lo, double ratio_hi,
                                  SeededRng& rng) {
    if (!(ratio_lo > 0.0) || ratio_lo > ratio_hi || !(ratio_hi < 1.0))
        throw ConfigError("sample_training_mask: invalid ratio range");
    const double target = ratio_lo + (ratio_hi - ratio_lo) * rng.next_uniform();
    const int64_t total = h * w;
    constexpr double kTol = 0.02;
    constexpr int kRestarts = 32;

    TrainingMask out;
    for (int attempt = 0; attempt < kRestarts; ++attempt) {
        Grid m({1, h, w});
        int64_t covered = 0;
        for (int rect = 0; rect < 64 && covered < static_cast<int64_t>((target - kTol) * static_cast<double>(total)); ++rect) {
            const int64_t rw = rng.next_range(std::max<int64_t>(1, w / 8), std::max<int64_t>(2, w / 2));
            const int64_t rh = rng.next_range(std::max<int64_t>(1, h / 8), std::max<int64_t>(2, h / 2));
            const int64_t x0 = rng.next_range(0, w - rw);
            const int64_t y0 = rng.next_range(0, h - rh);
            for (int64_t y = y0; y < y0 + rh; ++y)
                for (int64_t x = x0; x < x0 + rw; ++x) {
                    if (m.at(0, y, x) == 0.0f) ++covered;
                    m.at(0, y, x) = 1.0f;
                }
        }
        const double frac = static_cast<double>(covered) / static_cast<double>(total);
        if (std::fabs(frac - target) <= kTol) {
            out.m = std::move(m);
            return out;
        }
    }
    // fallback: random-pixel fill hits the target count exactly
    Grid m({1, h, w});
    std::vector<int64_t> order(static_cast<size_t>(total));
    std::iota(order.begin(), order.end(), 0);
    for (int64_t i = total - 1; i > 0; --i)
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.next_range(0, i))]);
    const int64_t k = static_cast<int64_t>(std::lround(target * static_cast<double>(total)));
    for (int64_t i = 0; i < k; ++i) m[order[static_cast<size_t>(i)]] = 1.0f;
    out.m = std::move(m);
    out.used_pixel_fill = true;
    return out;
}

Grid augment(const Grid& image, bool flip_h, bool flip_v, bool rot90, SeededRng& rng) {
    const int64_t c = image.extent(0), h = image.extent(1), w = image.extent(2);
    const bool do_h = flip_h && rng.next_uniform() < 0.5;
    const bool do_v = flip_v && rng.next_uniform() < 0.5;
    const int64_t rot = rot90 ? rng.next_range(0, 3) : 0;
    if (rot90 && h != w) throw ConfigError("augment: rot90 requires square images");

    Grid out(image.shape());
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                int64_t sy = y, sx = x;
                // inverse rotation of the output coordinate
                for (int64_t r = 0; r < rot; ++r) {
                    const int64_t ny = sx, nx = h - 1 - sy;
                    sy = ny;
                    sx = nx;
                }
                if (do_h) sx = w - 1 - sx;
                if (do_v) sy = h - 1 - sy;
                out.at(ci, y, x) = image.at(ci, sy, sx);
            }
    return out;
}

TrainResult train(const std::vector<Grid>& dataset, const TrainConfig& cfg,
                  const NoiseSchedule& sched, DenoiserParams& params, uint64_t start_iter) {
    cfg.validate();
    if (dataset.empty()) throw DataError("train: empty dataset");

    const auto& names = params.names();
    std::vector<Grid> m_state, v_state;
    if (start_iter > 0 && !params.opt_state.empty()) {
        for (auto& name : names) {
            bool found_m = false, found_v = false;
            for (auto& [n, g] : params.opt_state) {
                if (n == "m." + name) { m_state.push_back(g); found_m = true; }
                if (n == "v." + name) { v_state.push_back(g); found_v = true; }
            }
            if (!found_m || !found_v) throw DataError("train: missing optimizer state for " + name);
        }
    } else {
        for (auto& name : names) {
            m_state.emplace_back(params.at(name)->value.shape());
            v_state.emplace_back(params.at(name)->value.shape());
        }
    }

    SeededRng master(cfg.seed);
    SeededRng data_rng = master.split(1);
    SeededRng noise_rng = master.split(2);
    // consume the streams up to the resume point
    for (uint64_t skip = 0; skip < start_iter; ++skip) {
        for (int64_t b = 0; b < cfg.batch_size; ++b) {
            data_rng.next_u64();
            augment(dataset[0], cfg.flip_h, cfg.flip_v, cfg.rot90, data_rng);
            sample_training_mask(dataset[0].extent(1), dataset[0].extent(2), cfg.mask_ratio_lo,
                                 cfg.mask_ratio_hi, data_rng);
            data_rng.next_u64();
            for (int64_t i = 0; i < dataset[0].numel(); ++i) noise_rng.next_normal();
        }
    }

    TrainResult res;
    for (int64_t it = static_cast<int64_t>(start_iter); it < cfg.total_iters; ++it) {
        std::vector<LossSample> batch;
        batch.reserve(static_cast<size_t>(cfg.batch_size));
        for (int64_t b = 0; b < cfg.batch_size; ++b) {
            const int64_t idx = data_rng.next_range(0, static_cast<int64_t>(dataset.size()) - 1);
            Grid img = augment(dataset[static_cast<size_t>(idx)], cfg.flip_h, cfg.flip_v,
                               cfg.rot90, data_rng);
            // masks are drawn per the recipe but condition only at inference
            sample_training_mask(img.extent(1), img.extent(2), cfg.mask_ratio_lo,
                                 cfg.mask_ratio_hi, data_rng);
            const int64_t t = data_rng.next_range(2, sched.T());
            Grid xt = marginal_sample(img, t, sched, noise_rng);
            batch.push_back({std::move(img), std::move(xt), t});
        }

        KernelLossResult loss;
        try {
            loss = kernel_weighted_loss(batch, params, sched, cfg.kernel);
        } catch (const NumericError& e) {
            throw NumericError("train: " + std::string(e.what()) + " at iteration " +
                               std::to_string(it));
        }
        if (!std::isfinite(loss.value) || loss.value > 1e6)
            throw NumericError("train: divergence at iteration " + std::to_string(it) +
                               " (loss " + std::to_string(loss.value) + ")");
        res.loss_history.push_back(loss.value);

        params.zero_grad();
        ad::backward(loss.loss_var);

        const double lr = lr_at(it, cfg);
        const double step = static_cast<double>(it + 1);
        const double bc1 = 1.0 - std::pow(cfg.adam_beta1, step);
        const double bc2 = 1.0 - std::pow(cfg.adam_beta2, step);
        for (size_t p = 0; p < names.size(); ++p) {
            ad::Var& var = params.at(names[p]);
            if (!var->grad_alloc) continue;  // no gradient reached this parameter
            Grid& val = var->value;
            Grid& g = var->grad;
            Grid& mm = m_state[p];
            Grid& vv = v_state[p];
            for (int64_t i = 0; i < val.numel(); ++i) {
                const double gi = g[i];
                const double mi = cfg.adam_beta1 * mm[i] + (1.0 - cfg.adam_beta1) * gi;
                const double vi = cfg.adam_beta2 * vv[i] + (1.0 - cfg.adam_beta2) * gi * gi;
                mm[i] = static_cast<float>(mi);
                vv[i] = static_cast<float>(vi);
                const double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg.adam_eps);
                val[i] = static_cast<float>(val[i] - lr * update -
                                            lr * cfg.weight_decay * val[i]);
            }
        }
        res.final_iteration = static_cast<uint64_t>(it + 1);
    }

    params.opt_state.clear();
    for (size_t p = 0; p < names.size(); ++p) {
        params.opt_state.emplace_back("m." + names[p], m_state[p]);
        params.opt_state.emplace_back("v." + names[p], v_state[p]);
    }
    return res;
}

void write_loss_table(const std::string& path, const std::vector<double>& losses,
                      uint64_t first_iter) {
    const std::string tmp = path + ".tmp";
    std::FILE* f = std::fopen(tmp.c_str(), "w");
    if (!f) throw DataError("loss table: cannot open " + tmp);
    for (size_t i = 0; i < losses.size(); ++i)
        std::fprintf(f, "%llu\t%.9g\n", static_cast<unsigned long long>(first_iter + i),
                     losses[i]);
    std::fclose(f);
    std::filesystem::rename(tmp, path);
}

}  // namespace kao
