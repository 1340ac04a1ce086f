#include "kao/rng.hpp"

#include <cmath>

namespace kao {

namespace {

// splitmix64 finalizer; full-period mix of a 64-bit word
uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

SeededRng SeededRng::split(uint64_t stream) const {
    return SeededRng(mix64(seed_ ^ mix64(stream + 0x1234567899abcdefULL)));
}

uint64_t SeededRng::next_u64() { return mix64(seed_ ^ mix64(counter_++)); }

double SeededRng::next_uniform() {
    // top 53 bits -> [0,1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::next_normal() {
    // Box-Muller; u1 shifted away from zero
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int64_t SeededRng::next_range(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo + 1);
    return lo + static_cast<int64_t>(next_u64() % span);
}

Grid gaussian_sample(SeededRng& rng, const std::vector<int64_t>& shape, const Grid& mean,
                     const Grid& std_dev) {
    const int64_t n = shape_numel(shape);
    const bool mean_scalar = mean.numel() == 1;
    const bool std_scalar = std_dev.numel() == 1;
    if (!mean_scalar && mean.numel() != n)
        throw DomainError("gaussian_sample: mean shape incompatible");
    if (!std_scalar && std_dev.numel() != n)
        throw DomainError("gaussian_sample: std shape incompatible");
    for (int64_t i = 0; i < std_dev.numel(); ++i)
        if (std_dev[i] < 0.0f) throw DomainError("gaussian_sample: negative std");

    Grid out(shape);
    for (int64_t i = 0; i < n; ++i) {
        const float m = mean_scalar ? mean[0] : mean[i];
        const float s = std_scalar ? std_dev[0] : std_dev[i];
        out[i] = m + s * static_cast<float>(rng.next_normal());
    }
    return out;
}

Grid gaussian_sample(SeededRng& rng, const std::vector<int64_t>& shape, float mean, float std_dev) {
    return gaussian_sample(rng, shape, Grid::scalar(mean), Grid::scalar(std_dev));
}

}  // namespace kao
