#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kao/denoiser.hpp"
#include "kao/kernel.hpp"
#include "kao/sampler.hpp"
#include "kao/scenegen.hpp"
#include "kao/schedule.hpp"
#include "kao/trainer.hpp"

namespace kao {

/// Flat `key = value` run configuration. Every knob of every module appears as
/// a dotted key with a default; unknown keys are rejected at parse time.
/// Values are kept as the verbatim strings they were given as, so the emitted
/// resolved-config file echoes the run's inputs exactly.
class RunConfig {
public:
    RunConfig();

    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_text(const std::string& text, const std::string& origin = "<memory>");

    void set(const std::string& key, const std::string& value);  // rejects unknown keys
    bool was_set(const std::string& key) const;

    const std::string& get(const std::string& key) const;
    int64_t get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    /// All keys in registry order with their resolved values.
    std::string render() const;
    void write_resolved(const std::string& path) const;

    // Typed views over the flat keys.
    NoiseSchedule schedule() const;
    DenoiserConfig denoiser() const;
    KernelConfig kernel() const;
    TrainConfig trainer() const;
    SamplerConfig sampler() const;  // "full" configuration
    SceneSpec scene(uint64_t seed) const;

    uint64_t seed() const { return static_cast<uint64_t>(get_int("seed")); }

    /// Serializes the schedule's alpha / alpha_bar / posterior_var arrays into
    /// the config. parse-time values, if present, are cross-checked against
    /// the rebuilt schedule.
    void embed_schedule(const NoiseSchedule& sched);

private:
    std::vector<std::string> order_;
    std::map<std::string, std::string> values_;
    std::map<std::string, bool> set_;

    void declare(const std::string& key, const std::string& def);
    void check_schedule_arrays() const;
};

}  // namespace kao
