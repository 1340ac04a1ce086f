#include "kao/config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kao/errors.hpp"

namespace kao {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<double> parse_double_list(const std::string& s, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        size_t pos = 0;
        double v;
        try {
            v = std::stod(item, &pos);
        } catch (...) {
            throw ConfigError("config: bad number '" + item + "' in " + key);
        }
        if (pos != item.size()) throw ConfigError("config: bad number '" + item + "' in " + key);
        out.push_back(v);
    }
    return out;
}

std::string format_double_list(const std::vector<double>& v) {
    std::string out;
    char buf[32];
    for (size_t i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
        if (i) out += ",";
        out += buf;
    }
    return out;
}

}  // namespace

void RunConfig::declare(const std::string& key, const std::string& def) {
    order_.push_back(key);
    values_[key] = def;
    set_[key] = false;
}

RunConfig::RunConfig() {
    declare("seed", "0");
    declare("paths.out", "out");
    declare("paths.data", "data");
    declare("paths.checkpoint", "out/checkpoint.bin");

    declare("schedule.T", "100");
    declare("schedule.beta_start", "0.001");
    declare("schedule.beta_end", "0.2");
    declare("schedule.alpha", "");
    declare("schedule.alpha_bar", "");
    declare("schedule.posterior_var", "");

    declare("model.img_size", "32");
    declare("model.img_channels", "1");
    declare("model.levels", "3");
    declare("model.channels", "8,16,32");
    declare("model.temb_dim", "32");
    declare("model.ff_mult", "4");
    declare("model.head_hidden", "32");
    declare("model.mixer_hidden", "2");
    declare("model.max_timestep", "1000");

    declare("kernel.bandwidth", "median");
    declare("kernel.sigma", "1.0");
    declare("kernel.sigma_floor", "0.001");
    declare("kernel.hsv_window", "5");
    declare("kernel.hsv_epsilon", "0");
    declare("kernel.hsv_modulate", "false");

    declare("sampler.resample_jumps", "1");
    declare("sampler.lsc", "true");
    declare("sampler.ep_modules", "2");
    declare("sampler.kernel_blend", "true");

    declare("train.batch_size", "16");
    declare("train.total_iters", "2000");
    declare("train.lr_peak", "5e-5");
    declare("train.warmup_fraction", "0.1");
    declare("train.weight_decay", "0.01");
    declare("train.mask_ratio_lo", "0.30");
    declare("train.mask_ratio_hi", "0.50");
    declare("train.flip_h", "true");
    declare("train.flip_v", "true");
    declare("train.rot90", "true");
    declare("train.resume", "false");

    declare("data.kind", "mixed");
    declare("data.count", "200");
    declare("data.size", "32");
    declare("data.channels", "1");
    declare("data.road_width", "2");
    declare("data.road_count", "3");
    declare("data.plot_count", "8");
    declare("data.noise_amplitude", "0.3");

    declare("eval.count", "32");
    declare("eval.mask_ratio", "0.4");
    declare("eval.threads", "1");
    declare("eval.write_images", "true");

    declare("figures.rows", "4");
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second = value;
    set_[key] = true;
}

bool RunConfig::was_set(const std::string& key) const {
    auto it = set_.find(key);
    return it != set_.end() && it->second;
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
    return it->second;
}

int64_t RunConfig::get_int(const std::string& key) const {
    const std::string& s = get(key);
    size_t pos = 0;
    int64_t v;
    try {
        v = std::stoll(s, &pos);
    } catch (...) {
        throw ConfigError("config: '" + key + "' wants an integer, got '" + s + "'");
    }
    if (pos != s.size())
        throw ConfigError("config: '" + key + "' wants an integer, got '" + s + "'");
    return v;
}

double RunConfig::get_double(const std::string& key) const {
    const std::string& s = get(key);
    size_t pos = 0;
    double v;
    try {
        v = std::stod(s, &pos);
    } catch (...) {
        throw ConfigError("config: '" + key + "' wants a number, got '" + s + "'");
    }
    if (pos != s.size())
        throw ConfigError("config: '" + key + "' wants a number, got '" + s + "'");
    return v;
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("config: '" + key + "' wants a boolean, got '" + s + "'");
}

RunConfig RunConfig::parse_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int64_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + origin + ":" + std::to_string(lineno) +
                              ": expected 'key = value'");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.check_schedule_arrays();
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("config: cannot open " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_text(buf.str(), path);
}

std::string RunConfig::render() const {
    std::string out;
    for (const auto& key : order_) {
        out += key;
        out += " = ";
        out += values_.at(key);
        out += "\n";
    }
    return out;
}

void RunConfig::write_resolved(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw DataError("config: cannot write " + tmp);
    f << render();
    f.close();
    std::filesystem::rename(tmp, path);
}

void RunConfig::embed_schedule(const NoiseSchedule& sched) {
    set("schedule.alpha", format_double_list(sched.alphas()));
    set("schedule.alpha_bar", format_double_list(sched.alpha_bars()));
    set("schedule.posterior_var", format_double_list(sched.posterior_vars()));
}

void RunConfig::check_schedule_arrays() const {
    if (get("schedule.alpha").empty() && get("schedule.alpha_bar").empty() &&
        get("schedule.posterior_var").empty())
        return;
    const NoiseSchedule sched =
        build_schedule(get_int("schedule.T"), get_double("schedule.beta_start"),
                       get_double("schedule.beta_end"));
    const struct {
        const char* key;
        const std::vector<double>* want;
    } checks[] = {{"schedule.alpha", &sched.alphas()},
                  {"schedule.alpha_bar", &sched.alpha_bars()},
                  {"schedule.posterior_var", &sched.posterior_vars()}};
    for (const auto& c : checks) {
        const auto got = parse_double_list(get(c.key), c.key);
        if (got.size() != c.want->size())
            throw ConfigError(std::string("config: ") + c.key +
                              " length disagrees with schedule.T");
        for (size_t i = 0; i < got.size(); ++i) {
            const double want = (*c.want)[i];
            if (std::fabs(got[i] - want) > 1e-12 * std::max(1.0, std::fabs(want)))
                throw ConfigError(std::string("config: ") + c.key +
                                  " disagrees with the rebuilt schedule at index " +
                                  std::to_string(i));
        }
    }
}

NoiseSchedule RunConfig::schedule() const {
    return build_schedule(get_int("schedule.T"), get_double("schedule.beta_start"),
                          get_double("schedule.beta_end"));
}

DenoiserConfig RunConfig::denoiser() const {
    DenoiserConfig d;
    d.img_channels = get_int("model.img_channels");
    d.img_size = get_int("model.img_size");
    d.levels = get_int("model.levels");
    d.channels.clear();
    for (double v : parse_double_list(get("model.channels"), "model.channels"))
        d.channels.push_back(static_cast<int64_t>(v));
    d.temb_dim = get_int("model.temb_dim");
    d.ff_mult = get_int("model.ff_mult");
    d.head_hidden = get_int("model.head_hidden");
    d.mixer_hidden = get_int("model.mixer_hidden");
    d.max_timestep = get_int("model.max_timestep");
    d.validate();
    return d;
}

KernelConfig RunConfig::kernel() const {
    KernelConfig k;
    const std::string& policy = get("kernel.bandwidth");
    if (policy == "fixed")
        k.bandwidth_policy = KernelConfig::Bandwidth::kFixed;
    else if (policy == "median")
        k.bandwidth_policy = KernelConfig::Bandwidth::kMedian;
    else
        throw ConfigError("config: kernel.bandwidth must be 'fixed' or 'median'");
    k.sigma = get_double("kernel.sigma");
    k.sigma_floor = get_double("kernel.sigma_floor");
    k.hsv_window = get_int("kernel.hsv_window");
    k.hsv_epsilon = get_double("kernel.hsv_epsilon");
    k.hsv_modulate = get_bool("kernel.hsv_modulate");
    k.validate();
    return k;
}

TrainConfig RunConfig::trainer() const {
    TrainConfig t;
    t.batch_size = get_int("train.batch_size");
    t.total_iters = get_int("train.total_iters");
    t.lr_peak = get_double("train.lr_peak");
    t.warmup_fraction = get_double("train.warmup_fraction");
    t.weight_decay = get_double("train.weight_decay");
    t.mask_ratio_lo = get_double("train.mask_ratio_lo");
    t.mask_ratio_hi = get_double("train.mask_ratio_hi");
    t.flip_h = get_bool("train.flip_h");
    t.flip_v = get_bool("train.flip_v");
    t.rot90 = get_bool("train.rot90");
    t.seed = seed();
    t.kernel = kernel();
    t.validate();
    return t;
}

SamplerConfig RunConfig::sampler() const {
    SamplerConfig s;
    s.resample_jumps = get_int("sampler.resample_jumps");
    s.flags.lsc = get_bool("sampler.lsc");
    s.flags.ep_modules = static_cast<int>(get_int("sampler.ep_modules"));
    s.flags.kernel_blend = get_bool("sampler.kernel_blend");
    s.kernel = kernel();
    s.validate();
    return s;
}

SceneSpec RunConfig::scene(uint64_t seed) const {
    SceneSpec spec;
    const std::string& kind = get("data.kind");
    // "mixed" callers pick per index; default the spec to roads here
    spec.kind = kind == "mixed" ? SceneSpec::Kind::kRoads : kind_from_name(kind);
    spec.size = get_int("data.size");
    spec.channels = get_int("data.channels");
    spec.seed = seed;
    spec.road_width = get_int("data.road_width");
    spec.road_count = get_int("data.road_count");
    spec.plot_count = get_int("data.plot_count");
    spec.noise_amplitude = get_double("data.noise_amplitude");
    spec.validate();
    return spec;
}

}  // namespace kao
