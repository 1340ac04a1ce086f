#pragma once

#include <cstdint>
#include <string>

#include "kao/grid.hpp"
#include "kao/rng.hpp"

namespace kao {

struct SceneSpec {
    enum class Kind { kRoads, kFields };
    Kind kind = Kind::kRoads;
    int64_t size = 32;        // H = W
    int64_t channels = 1;
    uint64_t seed = 0;
    int64_t road_width = 2;   // roads kind
    int64_t road_count = 3;
    int64_t plot_count = 8;   // fields kind
    double noise_amplitude = 0.3;

    void validate() const;
};

/// Deterministic satellite-like scene in [-1, 1]: random polyline roads over
/// filtered noise, or a Voronoi field mosaic with per-cell striped textures.
Grid generate_scene(const SceneSpec& spec);

/// Nearest-seed Voronoi labels for the fields kind; each of plot_count cells
/// is guaranteed at least its seed pixel.
std::vector<int64_t> voronoi_labels(const SceneSpec& spec);

/// Scene plus an occlusion mask (1 = missing) with coverage ratio +- 0.02.
struct EvalPair {
    Grid image;
    Grid mask;
};
EvalPair generate_eval_pair(const SceneSpec& spec, double mask_ratio, SeededRng& rng);

const char* kind_name(SceneSpec::Kind kind);
SceneSpec::Kind kind_from_name(const std::string& name);

}  // namespace kao
