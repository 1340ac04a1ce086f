#include "kao/scenegen.hpp"

#include <algorithm>
#include <cmath>

#include "kao/errors.hpp"
#include "kao/trainer.hpp"

namespace kao {

void SceneSpec::validate() const {
    if (size < 16) throw ConfigError("scenegen: extents must be >= 16");
    if (channels != 1 && channels != 3) throw ConfigError("scenegen: channels must be 1 or 3");
    if (kind == Kind::kRoads && (road_width < 1 || road_count < 1))
        throw ConfigError("scenegen: invalid road parameters");
    if (kind == Kind::kFields && (plot_count < 1 || plot_count > size * size))
        throw ConfigError("scenegen: invalid plot count");
    if (noise_amplitude < 0.0 || noise_amplitude > 1.0)
        throw ConfigError("scenegen: noise amplitude must be in [0,1]");
}

namespace {

constexpr float kRoadIntensity = 0.8f;

// bilinearly upsampled lattice noise, one channel, values in [lo, hi]
Grid value_noise(int64_t size, double lo, double hi, SeededRng& rng) {
    const int64_t cell = 4;
    const int64_t nodes = size / cell + 2;
    std::vector<double> lattice(static_cast<size_t>(nodes * nodes));
    for (auto& v : lattice) v = lo + (hi - lo) * rng.next_uniform();
    Grid out({1, size, size});
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) {
            const double fy = static_cast<double>(y) / cell, fx = static_cast<double>(x) / cell;
            const int64_t iy = static_cast<int64_t>(fy), ix = static_cast<int64_t>(fx);
            const double ty = fy - static_cast<double>(iy), tx = fx - static_cast<double>(ix);
            auto at = [&](int64_t yy, int64_t xx) {
                return lattice[static_cast<size_t>(yy * nodes + xx)];
            };
            const double v = (1 - ty) * ((1 - tx) * at(iy, ix) + tx * at(iy, ix + 1)) +
                             ty * ((1 - tx) * at(iy + 1, ix) + tx * at(iy + 1, ix + 1));
            out.at(0, y, x) = static_cast<float>(v);
        }
    return out;
}

void stamp_disc(Grid& road_mask, int64_t cy, int64_t cx, int64_t radius) {
    const int64_t size = road_mask.extent(1);
    for (int64_t y = std::max<int64_t>(0, cy - radius); y <= std::min(size - 1, cy + radius); ++y)
        for (int64_t x = std::max<int64_t>(0, cx - radius); x <= std::min(size - 1, cx + radius);
             ++x)
            if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= radius * radius)
                road_mask.at(0, y, x) = 1.0f;
}

Grid roads_scene(const SceneSpec& spec, SeededRng& rng) {
    const int64_t size = spec.size;
    Grid base = value_noise(size, -0.8, 0.0, rng);
    for (int64_t i = 0; i < base.numel(); ++i) {
        const double jitter = spec.noise_amplitude * (2.0 * rng.next_uniform() - 1.0) * 0.3;
        base[i] = static_cast<float>(std::clamp(static_cast<double>(base[i]) + jitter, -1.0, 0.2));
    }

    Grid road_mask({1, size, size});
    const int64_t radius = spec.road_width / 2;
    for (int64_t r = 0; r < spec.road_count; ++r) {
        double y = static_cast<double>(rng.next_range(0, size - 1));
        double x = static_cast<double>(rng.next_range(0, size - 1));
        double angle = 2.0 * M_PI * rng.next_uniform();
        const int64_t steps = size * 2;
        for (int64_t s = 0; s < steps; ++s) {
            const int64_t iy = static_cast<int64_t>(std::lround(y));
            const int64_t ix = static_cast<int64_t>(std::lround(x));
            if (iy < 0 || iy >= size || ix < 0 || ix >= size) break;
            stamp_disc(road_mask, iy, ix, radius);
            angle += 0.2 * (rng.next_uniform() - 0.5);
            y += std::sin(angle);
            x += std::cos(angle);
        }
    }

    Grid out({spec.channels, size, size});
    bool any_background = false;
    for (int64_t p = 0; p < size * size; ++p) {
        const bool road = road_mask[p] > 0.0f;
        if (!road) any_background = true;
        for (int64_t c = 0; c < spec.channels; ++c)
            out[c * size * size + p] = road ? kRoadIntensity : base[p];
    }
    if (!any_background)
        for (int64_t c = 0; c < spec.channels; ++c) out[c * size * size] = -0.5f;
    return out;
}

Grid fields_scene(const SceneSpec& spec, SeededRng& rng) {
    const int64_t size = spec.size;
    const auto labels = voronoi_labels(spec);

    struct CellStyle {
        double base;
        int orient;     // 0 horizontal, 1 vertical, 2 diagonal
        int64_t period;
        double stripe;
    };
    std::vector<CellStyle> styles(static_cast<size_t>(spec.plot_count));
    for (auto& st : styles) {
        st.base = -0.7 + 1.2 * rng.next_uniform();
        st.orient = static_cast<int>(rng.next_range(0, 2));
        st.period = rng.next_range(2, 4);
        st.stripe = 0.15 + 0.25 * rng.next_uniform();
    }

    Grid out({spec.channels, size, size});
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) {
            const auto& st = styles[static_cast<size_t>(labels[static_cast<size_t>(y * size + x)])];
            const int64_t phase = st.orient == 0 ? y : st.orient == 1 ? x : y + x;
            const double stripe = (phase / st.period) % 2 == 0 ? st.stripe : -st.stripe;
            const double jitter = spec.noise_amplitude * (2.0 * rng.next_uniform() - 1.0) * 0.1;
            for (int64_t c = 0; c < spec.channels; ++c) {
                const double tone = spec.channels == 3 ? 0.05 * static_cast<double>(c - 1) : 0.0;
                out.at(c, y, x) = static_cast<float>(
                    std::clamp(st.base + stripe + jitter + tone, -1.0, 1.0));
            }
        }
    return out;
}

}  // namespace

std::vector<int64_t> voronoi_labels(const SceneSpec& spec) {
    spec.validate();
    SeededRng rng = SeededRng(spec.seed).split(7);
    const int64_t size = spec.size;
    std::vector<int64_t> seeds;  // distinct pixel indices
    while (static_cast<int64_t>(seeds.size()) < spec.plot_count) {
        const int64_t p = rng.next_range(0, size * size - 1);
        if (std::find(seeds.begin(), seeds.end(), p) == seeds.end()) seeds.push_back(p);
    }
    std::vector<int64_t> labels(static_cast<size_t>(size * size));
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) {
            int64_t best = 0;
            int64_t best_d = INT64_MAX;
            for (size_t s = 0; s < seeds.size(); ++s) {
                const int64_t sy = seeds[s] / size, sx = seeds[s] % size;
                const int64_t d = (y - sy) * (y - sy) + (x - sx) * (x - sx);
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int64_t>(s);
                }
            }
            labels[static_cast<size_t>(y * size + x)] = best;
        }
    return labels;
}

Grid generate_scene(const SceneSpec& spec) {
    spec.validate();
    SeededRng rng = SeededRng(spec.seed).split(3);
    Grid out = spec.kind == SceneSpec::Kind::kRoads ? roads_scene(spec, rng)
                                                    : fields_scene(spec, rng);
    out.require_finite("generate_scene");
    return out;
}

EvalPair generate_eval_pair(const SceneSpec& spec, double mask_ratio, SeededRng& rng) {
    if (!(mask_ratio > 0.0) || !(mask_ratio < 1.0))
        throw ConfigError("generate_eval_pair: ratio must be in (0,1)");
    EvalPair pair;
    pair.image = generate_scene(spec);
    pair.mask = sample_training_mask(spec.size, spec.size, mask_ratio, mask_ratio, rng).m;
    return pair;
}

const char* kind_name(SceneSpec::Kind kind) {
    return kind == SceneSpec::Kind::kRoads ? "roads" : "fields";
}

SceneSpec::Kind kind_from_name(const std::string& name) {
    if (name == "roads") return SceneSpec::Kind::kRoads;
    if (name == "fields") return SceneSpec::Kind::kFields;
    throw ConfigError("scenegen: unknown kind '" + name + "'");
}

}  // namespace kao
