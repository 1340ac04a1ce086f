#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kao/autodiff.hpp"
#include "kao/grid.hpp"
#include "kao/rng.hpp"

namespace kao {

/// Per-level token latents. Level l holds [C_l, H/2^l, W/2^l] worth of tokens
/// stored as a [N_l, C_l] matrix (row-major over the spatial positions).
struct TokenPyramid {
    std::vector<ad::Var> levels;  // encoder taps, one per level
    ad::Var mid;                  // tap after the middle block

    std::vector<int64_t> level_map_shape(int64_t level, int64_t channels_l, int64_t img_h,
                                         int64_t img_w) const;
};

/// Tap identifiers handed to the conditioning hook.
struct TapId {
    int64_t level;  // 0..L-1, or -1 for the mid tap
    bool is_mid() const { return level < 0; }
};

/// The hook transforms a tap's latent in place before downstream layers
/// consume it. Latent layout is [N, C] tokens; spatial extents are those of
/// the tap's pyramid level.
using ConditioningHook = std::function<ad::Var(TapId, const ad::Var&)>;

struct DenoiserConfig {
    int64_t img_channels = 1;
    int64_t img_size = 32;  // H = W, divisible by 2^(levels-1)
    int64_t levels = 3;
    std::vector<int64_t> channels = {8, 16, 32};
    int64_t temb_dim = 32;
    int64_t ff_mult = 4;
    int64_t head_hidden = 32;
    int64_t mixer_hidden = 2;
    int64_t max_timestep = 1000;

    void validate() const;
};

/// Named parameter set of the token-pyramid denoiser plus the EP mixer
/// parameters. Values are leaf autodiff Vars so one parameter set serves
/// both inference and training.
class DenoiserParams {
public:
    DenoiserParams() = default;
    DenoiserParams(const DenoiserConfig& cfg, SeededRng& rng);

    const DenoiserConfig& config() const { return cfg_; }
    const std::vector<std::string>& names() const { return names_; }
    ad::Var& at(const std::string& name);
    const ad::Var& at(const std::string& name) const;
    bool has(const std::string& name) const;

    int64_t total_count() const;
    int64_t mixer_count() const;  // all omega parameters combined

    void zero_grad();

    /// Little-endian checkpoint: 8-byte magic, version byte, iteration
    /// counter, then (name-length, name, rank, extents, raw f32) records.
    /// Round trips are bit-exact.
    void save(const std::string& path, uint64_t iteration = 0) const;
    static DenoiserParams load(const std::string& path, uint64_t* iteration = nullptr);

    /// Extra optimizer-state grids saved alongside the model (same record
    /// format, "opt." name prefix). Empty when not training.
    std::vector<std::pair<std::string, Grid>> opt_state;

private:
    void add_param(const std::string& name, Grid value);

    DenoiserConfig cfg_;
    std::vector<std::string> names_;
    std::vector<ad::Var> values_;
};

struct DenoiseOutput {
    Grid mean;            // predicted posterior mean, [C,H,W]
    ad::Var mean_var;     // same, as a graph node (for training)
    TokenPyramid pyramid;
};

/// Sinusoidal timestep embedding, deterministic in (t, dim).
std::vector<double> embed_timestep(int64_t t, int64_t dim, int64_t max_timestep);

/// Self-attention + residual + 2-layer feedforward + residual over one
/// level's tokens [N, C]. Weights are looked up by prefix in params.
ad::Var attention_block(const ad::Var& tokens, const DenoiserParams& params,
                        const std::string& prefix);

/// Full forward pass: predicts the reverse-step mean and exposes the tap
/// latents. The hook (when given) rewrites each tap before downstream use.
DenoiseOutput denoise_forward(const Grid& xt, int64_t t, const DenoiserParams& params,
                              const ConditioningHook& hook = nullptr);

}  // namespace kao
