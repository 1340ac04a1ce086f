#include "kao/denoiser.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <stdexcept>

#include "kao/errors.hpp"

namespace kao {

namespace ad = kao::ad;

void DenoiserConfig::validate() const {
    if (levels < 1 || static_cast<int64_t>(channels.size()) != levels)
        throw ConfigError("denoiser: channels list must have one entry per level");
    const int64_t div = int64_t{1} << (levels - 1);
    if (img_size % div != 0)
        throw ConfigError("denoiser: img_size must be divisible by 2^(levels-1)");
    if (temb_dim % 2 != 0) throw ConfigError("denoiser: temb_dim must be even");
    if (img_channels < 1 || ff_mult < 1 || head_hidden < 1 || mixer_hidden < 1 ||
        max_timestep < 1)
        throw ConfigError("denoiser: invalid size field");
}

std::vector<int64_t> TokenPyramid::level_map_shape(int64_t level, int64_t channels_l,
                                                   int64_t img_h, int64_t img_w) const {
    const int64_t s = int64_t{1} << level;
    return {channels_l, img_h / s, img_w / s};
}

namespace {

float trunc_normal(SeededRng& rng, double std_dev) {
    double z = rng.next_normal();
    while (std::fabs(z) > 2.0) z = rng.next_normal();
    return static_cast<float>(z * std_dev);
}

Grid init_matrix(SeededRng& rng, std::vector<int64_t> shape) {
    Grid g(std::move(shape));
    for (int64_t i = 0; i < g.numel(); ++i) g[i] = trunc_normal(rng, 0.02);
    return g;
}

}  // namespace

void DenoiserParams::add_param(const std::string& name, Grid value) {
    names_.push_back(name);
    values_.push_back(ad::param(std::move(value)));
}

DenoiserParams::DenoiserParams(const DenoiserConfig& cfg, SeededRng& rng) : cfg_(cfg) {
    cfg.validate();
    const int64_t H = cfg.img_size;
    for (int64_t l = 0; l < cfg.levels; ++l) {
        const int64_t s = int64_t{1} << l;
        const int64_t n = (H / s) * (H / s);
        const int64_t pd = cfg.img_channels * s * s;
        const int64_t c = cfg.channels[static_cast<size_t>(l)];
        const std::string L = std::to_string(l);
        add_param("embed" + L + ".w", init_matrix(rng, {pd, c}));
        add_param("embed" + L + ".b", Grid({c}));
        add_param("pos" + L, init_matrix(rng, {n, c}));
        add_param("temb" + L + ".w", init_matrix(rng, {cfg.temb_dim, c}));
        add_param("temb" + L + ".b", Grid({c}));
    }
    auto add_block = [&](const std::string& prefix, int64_t c) {
        for (const char* w : {"wq", "wk", "wv", "wo"})
            add_param(prefix + "." + w, init_matrix(rng, {c, c}));
        for (const char* b : {"bq", "bk", "bv", "bo"}) add_param(prefix + "." + b, Grid({c}));
        const int64_t hid = cfg.ff_mult * c;
        add_param(prefix + ".ff.w1", init_matrix(rng, {c, hid}));
        add_param(prefix + ".ff.b1", Grid({hid}));
        add_param(prefix + ".ff.w2", init_matrix(rng, {hid, c}));
        add_param(prefix + ".ff.b2", Grid({c}));
    };
    for (int64_t l = 0; l < cfg.levels; ++l)
        add_block("attn" + std::to_string(l), cfg.channels[static_cast<size_t>(l)]);
    add_block("mid", cfg.channels.back());

    int64_t fused = cfg.channels.back();
    for (int64_t l = 0; l + 1 < cfg.levels; ++l) fused += cfg.channels[static_cast<size_t>(l)];
    add_param("head.w1", init_matrix(rng, {fused, cfg.head_hidden}));
    add_param("head.b1", Grid({cfg.head_hidden}));
    add_param("head.w2", Grid({cfg.head_hidden, cfg.img_channels}));  // zero: mean 0 at init
    add_param("head.b2", Grid({cfg.img_channels}));

    // EP mixers at the input tap and the mid tap; last layer zero so the
    // residual mixer is the identity at init
    auto add_mixer = [&](const std::string& prefix, int64_t c) {
        add_param(prefix + ".w1", init_matrix(rng, {2 * c, cfg.mixer_hidden}));
        add_param(prefix + ".w2", Grid({cfg.mixer_hidden, 2 * c}));
    };
    add_mixer("mixer.enc0", cfg.channels.front());
    add_mixer("mixer.mid", cfg.channels.back());

    const double ratio =
        static_cast<double>(mixer_count()) / static_cast<double>(total_count());
    if (ratio >= 0.01)
        throw ConfigError("denoiser: EP mixer parameter share " + std::to_string(ratio) +
                          " violates the <1% budget");
}

ad::Var& DenoiserParams::at(const std::string& name) {
    for (size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return values_[i];
    throw DomainError("DenoiserParams: unknown parameter " + name);
}

const ad::Var& DenoiserParams::at(const std::string& name) const {
    for (size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return values_[i];
    throw DomainError("DenoiserParams: unknown parameter " + name);
}

bool DenoiserParams::has(const std::string& name) const {
    for (auto& n : names_)
        if (n == name) return true;
    return false;
}

int64_t DenoiserParams::total_count() const {
    int64_t n = 0;
    for (auto& v : values_) n += v->value.numel();
    return n;
}

int64_t DenoiserParams::mixer_count() const {
    int64_t n = 0;
    for (size_t i = 0; i < names_.size(); ++i)
        if (names_[i].rfind("mixer.", 0) == 0) n += values_[i]->value.numel();
    return n;
}

void DenoiserParams::zero_grad() {
    for (auto& v : values_) v->zero_grad();
}

// ---- checkpoint ----

namespace {

constexpr char kMagic[8] = {'K', 'A', 'O', 'C', 'K', 'P', 'T', '\0'};
constexpr uint8_t kVersion = 1;

void write_bytes(std::FILE* f, const void* p, size_t n) {
    if (std::fwrite(p, 1, n, f) != n) throw DataError("checkpoint: short write");
}

void read_bytes(std::FILE* f, void* p, size_t n) {
    if (std::fread(p, 1, n, f) != n) throw DataError("checkpoint: short read");
}

void write_record(std::FILE* f, const std::string& name, const Grid& g) {
    const uint32_t len = static_cast<uint32_t>(name.size());
    write_bytes(f, &len, 4);
    write_bytes(f, name.data(), name.size());
    const uint32_t rank = static_cast<uint32_t>(g.rank());
    write_bytes(f, &rank, 4);
    for (int64_t e : g.shape()) {
        const uint64_t ext = static_cast<uint64_t>(e);
        write_bytes(f, &ext, 8);
    }
    write_bytes(f, g.data(), static_cast<size_t>(g.numel()) * 4);
}

bool read_record(std::FILE* f, std::string& name, Grid& g) {
    uint32_t len = 0;
    if (std::fread(&len, 1, 4, f) != 4) return false;  // clean EOF
    name.resize(len);
    read_bytes(f, name.data(), len);
    uint32_t rank = 0;
    read_bytes(f, &rank, 4);
    std::vector<int64_t> shape(rank);
    for (auto& e : shape) {
        uint64_t ext = 0;
        read_bytes(f, &ext, 8);
        e = static_cast<int64_t>(ext);
    }
    Grid out(shape);
    read_bytes(f, out.data(), static_cast<size_t>(out.numel()) * 4);
    g = std::move(out);
    return true;
}

}  // namespace

void DenoiserParams::save(const std::string& path, uint64_t iteration) const {
    const std::string tmp = path + ".tmp";
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw DataError("checkpoint: cannot open " + tmp);
    try {
        write_bytes(f, kMagic, 8);
        write_bytes(f, &kVersion, 1);
        write_bytes(f, &iteration, 8);

        std::vector<float> meta = {
            static_cast<float>(cfg_.img_channels), static_cast<float>(cfg_.img_size),
            static_cast<float>(cfg_.levels)};
        for (int64_t c : cfg_.channels) meta.push_back(static_cast<float>(c));
        meta.push_back(static_cast<float>(cfg_.temb_dim));
        meta.push_back(static_cast<float>(cfg_.ff_mult));
        meta.push_back(static_cast<float>(cfg_.head_hidden));
        meta.push_back(static_cast<float>(cfg_.mixer_hidden));
        meta.push_back(static_cast<float>(cfg_.max_timestep));
        write_record(f, "__config", Grid({static_cast<int64_t>(meta.size())}, meta));

        for (size_t i = 0; i < names_.size(); ++i) write_record(f, names_[i], values_[i]->value);
        for (auto& [name, g] : opt_state) write_record(f, "opt." + name, g);
    } catch (...) {
        std::fclose(f);
        std::remove(tmp.c_str());
        throw;
    }
    std::fclose(f);
    std::filesystem::rename(tmp, path);
}

DenoiserParams DenoiserParams::load(const std::string& path, uint64_t* iteration) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError("checkpoint: cannot open " + path);
    DenoiserParams out;
    try {
        char magic[8];
        read_bytes(f, magic, 8);
        if (std::memcmp(magic, kMagic, 8) != 0) throw DataError("checkpoint: bad magic");
        uint8_t version = 0;
        read_bytes(f, &version, 1);
        if (version != kVersion) throw DataError("checkpoint: unsupported version");
        uint64_t iter = 0;
        read_bytes(f, &iter, 8);
        if (iteration) *iteration = iter;

        std::string name;
        Grid g;
        if (!read_record(f, name, g) || name != "__config")
            throw DataError("checkpoint: missing config record");
        DenoiserConfig cfg;
        size_t k = 0;
        cfg.img_channels = static_cast<int64_t>(g[static_cast<int64_t>(k++)]);
        cfg.img_size = static_cast<int64_t>(g[static_cast<int64_t>(k++)]);
        cfg.levels = static_cast<int64_t>(g[static_cast<int64_t>(k++)]);
        cfg.channels.clear();
        for (int64_t l = 0; l < cfg.levels; ++l)
            cfg.channels.push_back(static_cast<int64_t>(g[static_cast<int64_t>(k++)]));
        cfg.temb_dim = static_cast<int64_t>(g[static_cast<int64_t>(k++)]);
        cfg.ff_mult = static_cast<int64_t>(g[static_cast<int64_t>(k++)]);
        cfg.head_hidden = static_cast<int64_t>(g[static_cast<int64_t>(k++)]);
        cfg.mixer_hidden = static_cast<int64_t>(g[static_cast<int64_t>(k++)]);
        cfg.max_timestep = static_cast<int64_t>(g[static_cast<int64_t>(k++)]);
        out.cfg_ = cfg;

        while (read_record(f, name, g)) {
            if (name.rfind("opt.", 0) == 0)
                out.opt_state.emplace_back(name.substr(4), std::move(g));
            else
                out.add_param(name, std::move(g));
        }
    } catch (...) {
        std::fclose(f);
        throw;
    }
    std::fclose(f);
    return out;
}

// ---- forward ----

std::vector<double> embed_timestep(int64_t t, int64_t dim, int64_t max_timestep) {
    if (t < 1 || t > max_timestep)
        throw DomainError("embed_timestep: step " + std::to_string(t) + " out of range");
    std::vector<double> e(static_cast<size_t>(dim));
    for (int64_t k = 0; 2 * k < dim; ++k) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(2 * k) / static_cast<double>(dim));
        e[static_cast<size_t>(2 * k)] = std::sin(static_cast<double>(t) * freq);
        e[static_cast<size_t>(2 * k + 1)] = std::cos(static_cast<double>(t) * freq);
    }
    return e;
}

ad::Var attention_block(const ad::Var& tokens, const DenoiserParams& params,
                        const std::string& prefix) {
    const int64_t c = tokens->value.extent(1);
    auto proj = [&](const char* w, const char* b) {
        return ad::add_broadcast_rows(ad::matmul(tokens, params.at(prefix + "." + w)),
                                      params.at(prefix + "." + b));
    };
    auto q = proj("wq", "bq");
    auto k = proj("wk", "bk");
    auto v = proj("wv", "bv");
    // softmax(QK^T / sqrt(d)) V
    auto kt = ad::gather_elems(k, [&] {
        std::vector<int64_t> idx;
        const int64_t n = k->value.extent(0);
        idx.reserve(static_cast<size_t>(n * c));
        for (int64_t j = 0; j < c; ++j)
            for (int64_t i = 0; i < n; ++i) idx.push_back(i * c + j);
        return idx;
    }(), {c, k->value.extent(0)});
    auto scores = ad::scale(ad::matmul(q, kt), 1.0 / std::sqrt(static_cast<double>(c)));
    auto attn = ad::matmul(ad::softmax_rows(scores), v);
    auto o = ad::add_broadcast_rows(ad::matmul(attn, params.at(prefix + ".wo")),
                                    params.at(prefix + ".bo"));
    auto y = ad::add(tokens, o);
    auto h1 = ad::relu(ad::add_broadcast_rows(ad::matmul(y, params.at(prefix + ".ff.w1")),
                                              params.at(prefix + ".ff.b1")));
    auto h2 = ad::add_broadcast_rows(ad::matmul(h1, params.at(prefix + ".ff.w2")),
                                     params.at(prefix + ".ff.b2"));
    return ad::add(y, h2);
}

DenoiseOutput denoise_forward(const Grid& xt, int64_t t, const DenoiserParams& params,
                              const ConditioningHook& hook) {
    const DenoiserConfig& cfg = params.config();
    const int64_t H = cfg.img_size;
    if (xt.rank() != 3 || xt.extent(0) != cfg.img_channels || xt.extent(1) != H ||
        xt.extent(2) != H)
        throw DomainError("denoise_forward: input shape mismatch");
    if (t < 1 || t > cfg.max_timestep) throw DomainError("denoise_forward: t out of range");

    auto x = ad::constant(xt);
    const auto temb = embed_timestep(t, cfg.temb_dim, cfg.max_timestep);
    Grid temb_grid({1, cfg.temb_dim});
    for (int64_t i = 0; i < cfg.temb_dim; ++i) temb_grid[i] = static_cast<float>(temb[static_cast<size_t>(i)]);
    auto temb_var = ad::constant(temb_grid);

    TokenPyramid pyr;
    for (int64_t l = 0; l < cfg.levels; ++l) {
        const int64_t s = int64_t{1} << l;
        const int64_t hl = H / s, wl = H / s;
        const int64_t n = hl * wl;
        const int64_t cl = cfg.channels[static_cast<size_t>(l)];
        const std::string L = std::to_string(l);

        // non-overlapping s x s patches, (c, dy, dx) minor order
        std::vector<int64_t> idx;
        idx.reserve(static_cast<size_t>(n * cfg.img_channels * s * s));
        for (int64_t py = 0; py < hl; ++py)
            for (int64_t px = 0; px < wl; ++px)
                for (int64_t c = 0; c < cfg.img_channels; ++c)
                    for (int64_t dy = 0; dy < s; ++dy)
                        for (int64_t dx = 0; dx < s; ++dx)
                            idx.push_back((c * H + py * s + dy) * H + px * s + dx);
        auto patches = ad::gather_elems(x, std::move(idx), {n, cfg.img_channels * s * s});
        auto tokens = ad::add_broadcast_rows(ad::matmul(patches, params.at("embed" + L + ".w")),
                                             params.at("embed" + L + ".b"));
        tokens = ad::add(tokens, params.at("pos" + L));
        auto tvec = ad::add_broadcast_rows(ad::matmul(temb_var, params.at("temb" + L + ".w")),
                                           params.at("temb" + L + ".b"));
        tokens = ad::add_broadcast_rows(tokens, ad::reshape(tvec, {cl}));

        auto h = attention_block(tokens, params, "attn" + L);
        if (hook) h = hook(TapId{l}, h);
        pyr.levels.push_back(h);
    }

    auto mid = attention_block(pyr.levels.back(), params, "mid");
    if (hook) mid = hook(TapId{-1}, mid);
    pyr.mid = mid;

    // fuse: nearest upsample of every tap to full resolution (mid stands in
    // for the coarsest level), channel concat, 2-layer head
    const int64_t n0 = H * H;
    std::vector<ad::Var> fused_parts;
    for (int64_t l = 0; l + 1 < cfg.levels; ++l) {
        const int64_t s = int64_t{1} << l;
        std::vector<int64_t> rows(static_cast<size_t>(n0));
        for (int64_t y = 0; y < H; ++y)
            for (int64_t xx = 0; xx < H; ++xx)
                rows[static_cast<size_t>(y * H + xx)] = (y / s) * (H / s) + xx / s;
        fused_parts.push_back(l == 0 ? pyr.levels[0] : ad::gather_rows(pyr.levels[static_cast<size_t>(l)], rows));
    }
    {
        const int64_t s = int64_t{1} << (cfg.levels - 1);
        std::vector<int64_t> rows(static_cast<size_t>(n0));
        for (int64_t y = 0; y < H; ++y)
            for (int64_t xx = 0; xx < H; ++xx)
                rows[static_cast<size_t>(y * H + xx)] = (y / s) * (H / s) + xx / s;
        fused_parts.push_back(ad::gather_rows(mid, rows));
    }
    auto fused = ad::concat_cols(fused_parts);
    auto hh = ad::relu(ad::add_broadcast_rows(ad::matmul(fused, params.at("head.w1")),
                                              params.at("head.b1")));
    auto head = ad::add_broadcast_rows(ad::matmul(hh, params.at("head.w2")),
                                       params.at("head.b2"));
    // [N, Cimg] -> [Cimg, H, W]
    std::vector<int64_t> tr(static_cast<size_t>(n0 * cfg.img_channels));
    for (int64_t c = 0; c < cfg.img_channels; ++c)
        for (int64_t p = 0; p < n0; ++p)
            tr[static_cast<size_t>(c * n0 + p)] = p * cfg.img_channels + c;
    auto mean_var = ad::gather_elems(head, std::move(tr), {cfg.img_channels, H, H});

    DenoiseOutput out;
    out.mean = mean_var->value;
    out.mean.require_finite("denoise_forward");
    out.mean_var = mean_var;
    out.pyramid = std::move(pyr);
    return out;
}

}  // namespace kao
