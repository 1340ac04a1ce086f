#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kao/denoiser.hpp"
#include "kao/grid.hpp"
#include "kao/kernel.hpp"
#include "kao/rng.hpp"
#include "kao/schedule.hpp"

namespace kao {

struct TrainConfig {
    int64_t batch_size = 16;
    int64_t total_iters = 2000;
    double lr_peak = 5e-5;
    double warmup_fraction = 0.1;
    double weight_decay = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double mask_ratio_lo = 0.30;
    double mask_ratio_hi = 0.50;
    bool flip_h = true;
    bool flip_v = true;
    bool rot90 = true;
    uint64_t seed = 0;
    KernelConfig kernel;

    void validate() const;
};

/// Linear warmup to lr_peak, then cosine decay to zero.
double lr_at(int64_t iter, const TrainConfig& cfg);

/// Binary mask whose covered fraction lands in [ratio-0.02, ratio+0.02] for a
/// ratio drawn uniformly from the configured range; composed of random
/// rectangles with a random-pixel fallback. 1 = masked (occluded) pixel.
struct TrainingMask {
    Grid m;
    bool used_pixel_fill = false;
};
TrainingMask sample_training_mask(int64_t h, int64_t w, double ratio_lo, double ratio_hi,
                                  SeededRng& rng);

/// Independent coin flips for horizontal/vertical flip and 0/90/180/270
/// rotation, per the enabled flags.
Grid augment(const Grid& image, bool flip_h, bool flip_v, bool rot90, SeededRng& rng);

struct TrainResult {
    std::vector<double> loss_history;
    uint64_t final_iteration = 0;
};

/// Kernel-weighted diffusion training with decoupled weight decay. Resumes
/// iteration numbering (and optimizer moments) from params.opt_state when
/// start_iter > 0. Aborts with NumericError on divergence.
TrainResult train(const std::vector<Grid>& dataset, const TrainConfig& cfg,
                  const NoiseSchedule& sched, DenoiserParams& params, uint64_t start_iter = 0);

/// Writes the loss series as a tab-separated (iteration, loss) table.
void write_loss_table(const std::string& path, const std::vector<double>& losses,
                      uint64_t first_iter);

}  // namespace kao
