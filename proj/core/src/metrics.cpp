#include "kao/metrics.hpp"

#include <cmath>
#include <limits>

#include "kao/errors.hpp"

namespace kao {

double psnr(const Grid& a, const Grid& b, double peak) {
    if (!a.same_shape(b)) throw DomainError("psnr: shape mismatch");
    if (!(peak > 0.0)) throw DomainError("psnr: peak must be positive");
    const double mse = a.sq_dist(b) / static_cast<double>(a.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double masked_mse(const Grid& a, const Grid& b, const Grid& m) {
    if (!a.same_shape(b)) throw DomainError("masked_mse: shape mismatch");
    const int64_t c = a.extent(0), hw = a.extent(1) * a.extent(2);
    if (m.numel() != hw) throw DomainError("masked_mse: mask extent mismatch");
    double acc = 0.0;
    int64_t count = 0;
    for (int64_t p = 0; p < hw; ++p) {
        const float mv = m[p];
        if (mv != 0.0f && mv != 1.0f) throw DomainError("masked_mse: mask must be binary");
        if (mv != 1.0f) continue;
        for (int64_t ci = 0; ci < c; ++ci) {
            const double d = static_cast<double>(a[ci * hw + p]) - b[ci * hw + p];
            acc += d * d;
        }
        count += c;
    }
    if (count == 0) throw DomainError("masked_mse: empty masked region");
    return acc / static_cast<double>(count);
}

double ssim(const Grid& a, const Grid& b, int64_t window) {
    if (!a.same_shape(b)) throw DomainError("ssim: shape mismatch");
    if (a.rank() != 3 || a.extent(0) != 1) throw DomainError("ssim: expects grayscale [1,H,W]");
    const int64_t h = a.extent(1), w = a.extent(2);
    if (window < 1 || window > h || window > w)
        throw DomainError("ssim: window exceeds image extents");

    constexpr double kPeak = 2.0;
    const double c1 = (0.01 * kPeak) * (0.01 * kPeak);
    const double c2 = (0.03 * kPeak) * (0.03 * kPeak);
    const double n = static_cast<double>(window * window);

    double total = 0.0;
    int64_t positions = 0;
    for (int64_t y0 = 0; y0 + window <= h; ++y0)
        for (int64_t x0 = 0; x0 + window <= w; ++x0) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (int64_t y = y0; y < y0 + window; ++y)
                for (int64_t x = x0; x < x0 + window; ++x) {
                    const double av = a.at(0, y, x), bv = b.at(0, y, x);
                    sa += av;
                    sb += bv;
                    saa += av * av;
                    sbb += bv * bv;
                    sab += av * bv;
                }
            const double mu_a = sa / n, mu_b = sb / n;
            const double var_a = saa / n - mu_a * mu_a;
            const double var_b = sbb / n - mu_b * mu_b;
            const double cov = sab / n - mu_a * mu_b;
            total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                     ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            ++positions;
        }
    return total / static_cast<double>(positions);
}

}  // namespace kao
