#pragma once

#include <cstdint>

#include "kao/grid.hpp"

namespace kao {

/// 10 log10(peak^2 / MSE); identical grids return +infinity.
double psnr(const Grid& a, const Grid& b, double peak);

/// Mean squared error restricted to pixels where m = 1. m is a single-channel
/// binary mask broadcast over channels.
double masked_mse(const Grid& a, const Grid& b, const Grid& m);

/// Mean structural similarity over all valid window positions, uniform window,
/// stabilizers C1 = (0.01 * peak)^2 and C2 = (0.03 * peak)^2 with peak = 2.
double ssim(const Grid& a, const Grid& b, int64_t window = 8);

}  // namespace kao
