#pragma once

#include <cstdint>

#include "kao/grid.hpp"

namespace kao {

/// Counter-based deterministic generator. The value stream is a pure function
/// of (seed, counter), so parallel draws can be made deterministic by index and
/// worker streams are derived by stream-splitting from the master seed.
class SeededRng {
public:
    explicit SeededRng(uint64_t seed) : seed_(seed) {}

    uint64_t seed() const { return seed_; }

    /// Derived stream: independent deterministic sub-generator.
    SeededRng split(uint64_t stream) const;

    uint64_t next_u64();
    double next_uniform();                 // [0, 1)
    double next_normal();                  // standard normal, Box-Muller
    int64_t next_range(int64_t lo, int64_t hi);  // uniform inclusive [lo, hi]

private:
    uint64_t seed_;
    uint64_t counter_ = 0;
};

/// Returns mean + std * z with z i.i.d. standard normal.
/// mean/std are either scalars (numel 1) or grids of the requested shape.
Grid gaussian_sample(SeededRng& rng, const std::vector<int64_t>& shape, const Grid& mean,
                     const Grid& std_dev);
Grid gaussian_sample(SeededRng& rng, const std::vector<int64_t>& shape, float mean, float std_dev);

}  // namespace kao
