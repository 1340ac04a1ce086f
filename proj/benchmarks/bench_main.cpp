#include <benchmark/benchmark.h>

#include "kao/denoiser.hpp"
#include "kao/kernel.hpp"
#include "kao/rng.hpp"
#include "kao/sampler.hpp"
#include "kao/scenegen.hpp"
#include "kao/schedule.hpp"

namespace {

kao::DenoiserParams make_params(int64_t img_size) {
    kao::DenoiserConfig cfg;
    cfg.img_size = img_size;
    kao::SeededRng rng(11);
    return kao::DenoiserParams(cfg, rng);
}

void BM_DenoiseForward(benchmark::State& state) {
    const auto params = make_params(state.range(0));
    kao::SeededRng rng(3);
    const kao::Grid xt = kao::gaussian_sample(rng, {1, state.range(0), state.range(0)}, 0.f, 1.f);
    for (auto _ : state) {
        auto out = kao::denoise_forward(xt, 50, params);
        benchmark::DoNotOptimize(out.mean.data());
    }
}
BENCHMARK(BM_DenoiseForward)->Arg(16)->Arg(32);

void BM_AttentionBlock(benchmark::State& state) {
    const auto params = make_params(32);
    kao::SeededRng rng(4);
    kao::ad::Var tokens = kao::ad::constant(kao::gaussian_sample(rng, {256, 8}, 0.f, 1.f));
    for (auto _ : state) {
        auto out = kao::attention_block(tokens, params, "attn0");
        benchmark::DoNotOptimize(out->value.data());
    }
}
BENCHMARK(BM_AttentionBlock);

void BM_RbfKernel(benchmark::State& state) {
    kao::SeededRng rng(5);
    const kao::Grid a = kao::gaussian_sample(rng, {1, 64, 64}, 0.f, 1.f);
    const kao::Grid b = kao::gaussian_sample(rng, {1, 64, 64}, 0.f, 1.f);
    for (auto _ : state) benchmark::DoNotOptimize(kao::rbf_kernel(a, b, 2.0));
}
BENCHMARK(BM_RbfKernel);

void BM_HsvMap(benchmark::State& state) {
    kao::SeededRng rng(6);
    const kao::Grid img = kao::gaussian_sample(rng, {1, 64, 64}, 0.f, 0.5f);
    for (auto _ : state) {
        auto m = kao::hsv_map(img, 5, 0.0);
        benchmark::DoNotOptimize(m.data());
    }
}
BENCHMARK(BM_HsvMap);

void BM_SceneGen(benchmark::State& state) {
    kao::SceneSpec spec;
    spec.kind = state.range(0) == 0 ? kao::SceneSpec::Kind::kRoads : kao::SceneSpec::Kind::kFields;
    spec.seed = 17;
    for (auto _ : state) {
        auto g = kao::generate_scene(spec);
        benchmark::DoNotOptimize(g.data());
    }
}
BENCHMARK(BM_SceneGen)->Arg(0)->Arg(1);

void BM_InpaintStepBudget(benchmark::State& state) {
    // full conditioned pipeline on a short schedule
    const auto params = make_params(16);
    const auto sched = kao::build_schedule(4, 1e-3, 0.2);
    kao::SceneSpec spec;
    spec.size = 16;
    spec.seed = 8;
    const kao::Grid x0 = kao::generate_scene(spec);
    kao::Grid m({1, 16, 16});
    for (int64_t i = 0; i < 128; ++i) m[i] = 1.0f;
    kao::SamplerConfig cfg;
    for (auto _ : state) {
        kao::SeededRng rng(21);
        auto res = kao::inpaint(x0, m, params, sched, cfg, rng);
        benchmark::DoNotOptimize(res.x0.data());
    }
}
BENCHMARK(BM_InpaintStepBudget);

}  // namespace

BENCHMARK_MAIN();
