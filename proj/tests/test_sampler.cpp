#include <vector>

#include "doctest.h"
#include "kao/errors.hpp"
#include "kao/rng.hpp"
#include "kao/sampler.hpp"

using namespace kao;

namespace {

DenoiserParams tiny_model(uint64_t seed) {
    DenoiserConfig cfg;
    cfg.img_size = 4;
    SeededRng rng(seed);
    DenoiserParams params(cfg, rng);
    // a zero head would predict a constant mean; give the trajectory a say
    auto& head = params.at("head.w2");
    for (int64_t i = 0; i < head->value.numel(); ++i)
        head->value[i] = static_cast<float>(0.05 * ((i % 5) - 2));
    return params;
}

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("blend_pixels selects per pixel and broadcasts over channels") {
    Grid a({2, 1, 2}, {1, 2, 3, 4});
    Grid b({2, 1, 2}, {10, 20, 30, 40});
    Grid m({1, 1, 2}, {0.0f, 1.0f});
    const Grid out = blend_pixels(a, b, m);
    CHECK(out[0] == 1.0f);
    CHECK(out[1] == 20.0f);
    CHECK(out[2] == 3.0f);
    CHECK(out[3] == 40.0f);
    CHECK_THROWS_AS(blend_pixels(a, b, Grid({1, 1, 3})), DomainError);
}

TEST_CASE("fully known mask reproduces the reference image exactly") {
    const auto params = tiny_model(1);
    const auto sched = build_schedule(6, 0.05, 0.3);
    SeededRng rng(2);
    Grid x0 = gaussian_sample(rng, {1, 4, 4}, 0.f, 0.6f);
    Grid m({1, 4, 4}, 1.0f);
    SamplerConfig cfg;
    const auto res = inpaint(x0, m, params, sched, cfg, rng);
    for (int64_t i = 0; i < x0.numel(); ++i) CHECK(res.x0[i] == x0[i]);
}

TEST_CASE("forward pass counter matches the closed form") {
    const auto params = tiny_model(3);
    const auto sched = build_schedule(5, 0.05, 0.3);
    Grid x0({1, 4, 4});
    x0.at(0, 1, 1) = 0.5f;
    Grid m({1, 4, 4});
    m.at(0, 1, 1) = 1.0f;

    struct Case {
        int64_t jumps;
        bool any_flag;
        int64_t want;
    };
    // T * (1 + conditional_pass) * (1 + resample_jumps) with T = 5
    const Case cases[] = {{0, true, 10}, {1, true, 20}, {2, true, 30}, {0, false, 5}, {1, false, 10}};
    for (const auto& c : cases) {
        SamplerConfig cfg;
        cfg.resample_jumps = c.jumps;
        if (!c.any_flag) cfg.flags = {false, 0, false};
        SeededRng rng(4);
        CHECK(inpaint(x0, m, params, sched, cfg, rng).forward_passes == c.want);
    }
    // an all-zero mask never takes the conditional pass, flags or not
    SamplerConfig cfg;
    cfg.resample_jumps = 1;
    SeededRng rng(5);
    CHECK(inpaint(x0, Grid({1, 4, 4}), params, sched, cfg, rng).forward_passes == 10);
}

TEST_CASE("sampling is deterministic in the seed") {
    const auto params = tiny_model(6);
    const auto sched = build_schedule(4, 0.05, 0.3);
    SeededRng rng(7);
    Grid x0 = gaussian_sample(rng, {1, 4, 4}, 0.f, 0.5f);
    Grid m({1, 4, 4});
    m.at(0, 0, 0) = 1.0f;
    m.at(0, 3, 3) = 1.0f;
    SamplerConfig cfg;
    SeededRng r1(11), r2(11), r3(12);
    const Grid a = inpaint(x0, m, params, sched, cfg, r1).x0;
    const Grid b = inpaint(x0, m, params, sched, cfg, r2).x0;
    const Grid c = inpaint(x0, m, params, sched, cfg, r3).x0;
    bool differs = false;
    for (int64_t i = 0; i < a.numel(); ++i) {
        CHECK(a[i] == b[i]);
        differs = differs || a[i] != c[i];
    }
    CHECK(differs);
}

TEST_CASE("empty mask with conditioning enabled equals unconditional sampling") {
    const auto params = tiny_model(8);
    const auto sched = build_schedule(6, 0.05, 0.3);
    SamplerConfig cfg;
    cfg.resample_jumps = 0;  // unconditional path never resamples
    SeededRng r1(21), r2(21);
    const Grid via_mask = inpaint(Grid({1, 4, 4}), Grid({1, 4, 4}), params, sched, cfg, r1).x0;
    const Grid uncond = sample_unconditional(params, sched, r2).x0;
    for (int64_t i = 0; i < via_mask.numel(); ++i) CHECK(via_mask[i] == uncond[i]);
}

TEST_CASE("trace fires once per timestep in descending order") {
    const auto params = tiny_model(9);
    const auto sched = build_schedule(5, 0.05, 0.3);
    SamplerConfig cfg;
    cfg.resample_jumps = 1;
    SeededRng rng(10);
    std::vector<int64_t> seen;
    inpaint(Grid({1, 4, 4}), Grid({1, 4, 4}), params, sched, cfg, rng,
            [&](int64_t t, const Grid& x) {
                seen.push_back(t);
                CHECK(x.numel() == 16);
            });
    CHECK(seen == std::vector<int64_t>{5, 4, 3, 2, 1});
}

TEST_CASE("input validation") {
    const auto params = tiny_model(12);
    const auto sched = build_schedule(4, 0.05, 0.3);
    SeededRng rng(13);
    SamplerConfig cfg;
    CHECK_THROWS_AS(inpaint(Grid({1, 8, 8}), Grid({1, 8, 8}), params, sched, cfg, rng),
                    DomainError);
    Grid soft({1, 4, 4});
    soft[0] = 0.5f;  // masks must be exactly binary
    CHECK_THROWS_AS(inpaint(Grid({1, 4, 4}), soft, params, sched, cfg, rng), DomainError);
    SamplerConfig bad;
    bad.resample_jumps = -1;
    CHECK_THROWS_AS(inpaint(Grid({1, 4, 4}), Grid({1, 4, 4}), params, sched, bad, rng),
                    ConfigError);
}

}  // TEST_SUITE
