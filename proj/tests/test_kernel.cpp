#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "kao/denoiser.hpp"
#include "kao/errors.hpp"
#include "kao/gradcheck.hpp"
#include "kao/kernel.hpp"
#include "kao/rng.hpp"
#include "kao/schedule.hpp"

using namespace kao;

namespace {

DenoiserParams small_model(uint64_t seed, int64_t img = 16) {
    DenoiserConfig cfg;
    cfg.img_size = img;
    SeededRng rng(seed);
    return DenoiserParams(cfg, rng);
}

std::vector<LossSample> random_batch(const NoiseSchedule& sched, int64_t n, int64_t img,
                                     uint64_t seed) {
    SeededRng rng(seed);
    std::vector<LossSample> batch;
    for (int64_t i = 0; i < n; ++i) {
        Grid x0 = gaussian_sample(rng, {1, img, img}, 0.f, 0.5f);
        const int64_t t = rng.next_range(2, sched.T());
        Grid xt = marginal_sample(x0, t, sched, rng);
        batch.push_back({std::move(x0), std::move(xt), t});
    }
    return batch;
}

}  // namespace

TEST_SUITE("kernel") {

TEST_CASE("rbf analytic cases") {
    Grid a({2}, {1.0f, 2.0f});
    CHECK(rbf_kernel(a, a, 3.0) == 1.0);

    // distance^2 = 2 sigma^2 -> exp(-1)
    Grid b({2}, {1.0f, 4.0f});  // d2 = 4
    CHECK(rbf_kernel(a, b, std::sqrt(2.0)) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

    Grid p({2}, {0.0f, 0.0f});
    Grid q({2}, {3.0f, 4.0f});
    CHECK(rbf_kernel(p, q, 5.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("rbf symmetry, range and errors") {
    SeededRng rng(2);
    Grid a = gaussian_sample(rng, {8}, 0.f, 1.f);
    Grid b = gaussian_sample(rng, {8}, 0.f, 1.f);
    const double k = rbf_kernel(a, b, 1.5);
    CHECK(k == rbf_kernel(b, a, 1.5));
    CHECK(k > 0.0);
    CHECK(k <= 1.0);
    CHECK_THROWS_AS(rbf_kernel(a, Grid({4}), 1.0), DomainError);
    CHECK_THROWS_AS(rbf_kernel(a, b, 0.0), DomainError);

    // shared permutation leaves the weight unchanged
    Grid ap({8}), bp({8});
    for (int64_t i = 0; i < 8; ++i) {
        ap[i] = a[7 - i];
        bp[i] = b[7 - i];
    }
    CHECK(rbf_kernel(ap, bp, 1.5) == doctest::Approx(k).epsilon(1e-12));
}

TEST_CASE("resolve_bandwidth policies") {
    KernelConfig cfg;
    cfg.bandwidth_policy = KernelConfig::Bandwidth::kMedian;
    cfg.sigma_floor = 1e-3;

    Grid a({2}, {0.0f, 0.0f});
    Grid b({2}, {2.0f, 2.0f});  // d2 = 8
    CHECK(resolve_bandwidth({{&a, &b}}, cfg) == doctest::Approx(2.0).epsilon(1e-12));

    CHECK(resolve_bandwidth({{&a, &a}, {&b, &b}}, cfg) == cfg.sigma_floor);

    cfg.bandwidth_policy = KernelConfig::Bandwidth::kFixed;
    cfg.sigma = 0.7;
    CHECK(resolve_bandwidth({{&a, &b}}, cfg) == 0.7);
    CHECK_THROWS_AS(resolve_bandwidth({}, cfg), DomainError);
}

TEST_CASE("median bandwidth reproduces a sort oracle on five pairs") {
    SeededRng rng(6);
    std::vector<Grid> left, right;
    for (int i = 0; i < 5; ++i) {
        left.push_back(gaussian_sample(rng, {6}, 0.f, 1.f));
        right.push_back(gaussian_sample(rng, {6}, 0.f, 1.f));
    }
    std::vector<std::pair<const Grid*, const Grid*>> pairs;
    std::vector<double> d2;
    for (int i = 0; i < 5; ++i) {
        pairs.emplace_back(&left[static_cast<size_t>(i)], &right[static_cast<size_t>(i)]);
        d2.push_back(left[static_cast<size_t>(i)].sq_dist(right[static_cast<size_t>(i)]));
    }
    std::sort(d2.begin(), d2.end());
    KernelConfig cfg;
    CHECK(resolve_bandwidth(pairs, cfg) ==
          doctest::Approx(std::max(cfg.sigma_floor, std::sqrt(d2[2] / 2.0))).epsilon(1e-12));
}

TEST_CASE("hsv of a constant image is minus epsilon everywhere") {
    Grid img({1, 8, 8}, 0.3f);
    Grid m = hsv_map(img, 3, 0.25);
    for (int64_t i = 0; i < m.numel(); ++i) CHECK(m[i] == doctest::Approx(-0.25).epsilon(1e-12));
    CHECK_THROWS_AS(hsv_map(img, 4, 0.0), ConfigError);
}

namespace {
// independent window-variance oracle mirroring the replicate padding rule
Grid hsv_oracle(const Grid& img, int64_t window, double eps) {
    const int64_t h = img.extent(1), w = img.extent(2);
    auto cl = [](int64_t v, int64_t hi) { return std::min(std::max(v, int64_t{0}), hi - 1); };
    Grid gm({1, h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const double gx = 0.5 * (img.at(0, y, cl(x + 1, w)) - img.at(0, y, cl(x - 1, w)));
            const double gy = 0.5 * (img.at(0, cl(y + 1, h), x) - img.at(0, cl(y - 1, h), x));
            gm.at(0, y, x) = static_cast<float>(std::sqrt(gx * gx + gy * gy));
        }
    const int64_t r = window / 2;
    Grid out({1, h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            double s = 0, s2 = 0;
            for (int64_t dy = -r; dy <= r; ++dy)
                for (int64_t dx = -r; dx <= r; ++dx) {
                    const double v = gm.at(0, cl(y + dy, h), cl(x + dx, w));
                    s += v;
                    s2 += v * v;
                }
            const double n = static_cast<double>(window * window);
            out.at(0, y, x) = static_cast<float>(s2 / n - (s / n) * (s / n) - eps);
        }
    return out;
}
}  // namespace

TEST_CASE("hsv single bright pixel matches the brute-force oracle exactly") {
    Grid img({1, 8, 8});
    img.at(0, 4, 4) = 1.0f;
    Grid got = hsv_map(img, 3, 0.0);
    Grid want = hsv_oracle(img, 3, 0.0);
    for (int64_t i = 0; i < got.numel(); ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("hsv vertical step edge lights up a band") {
    Grid img({1, 8, 8});
    for (int64_t y = 0; y < 8; ++y)
        for (int64_t x = 4; x < 8; ++x) img.at(0, y, x) = 1.0f;
    Grid m = hsv_map(img, 3, 0.0);
    // interior pixels adjacent to the edge column see nonzero variance
    for (int64_t y = 2; y < 6; ++y) CHECK(m.at(0, y, 3) > 0.0f);
    // far from the edge the gradient is uniformly zero
    CHECK(m.at(0, 4, 0) == doctest::Approx(0.0));
}

TEST_CASE("hsv translation equivariance in the interior") {
    SeededRng rng(12);
    Grid img = gaussian_sample(rng, {1, 12, 12}, 0.f, 1.f);
    Grid shifted({1, 12, 12});
    for (int64_t y = 0; y < 12; ++y)
        for (int64_t x = 0; x < 12; ++x)
            shifted.at(0, y, x) = img.at(0, (y + 11) % 12, x);  // shift down by 1
    Grid a = hsv_map(img, 3, 0.0);
    Grid b = hsv_map(shifted, 3, 0.0);
    for (int64_t y = 3; y < 9; ++y)
        for (int64_t x = 3; x < 9; ++x)
            CHECK(b.at(0, y + 1, x) == doctest::Approx(a.at(0, y + 1 - 1, x + 0)).epsilon(1e-5));
}

TEST_CASE("sigma to infinity reduces to the unweighted loss") {
    const auto sched = build_schedule(10, 0.05, 0.3);
    const auto params = small_model(50);
    auto batch = random_batch(sched, 3, 16, 51);

    KernelConfig wide;
    wide.bandwidth_policy = KernelConfig::Bandwidth::kFixed;
    wide.sigma = 1e9;
    const auto res = kernel_weighted_loss(batch, params, sched, wide);

    double want = 0.0;
    for (auto& s : batch) {
        const auto post = posterior_params(s.x0, s.xt, s.t, sched);
        const auto fwd = denoise_forward(s.xt, s.t, params);
        want += fwd.mean.sq_dist(post.mean) / (2.0 * post.var);
    }
    want /= static_cast<double>(batch.size());
    CHECK(res.value == doctest::Approx(want).epsilon(1e-6));
    for (double w : res.weights) CHECK(w == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("single sample at zero distance has weight exactly one") {
    const auto sched = build_schedule(10, 0.05, 0.3);
    const auto params = small_model(52);
    // x0 = xt = 0 makes the posterior mean equal x_t, so K(x_t, mu_q) = 1
    std::vector<LossSample> batch{{Grid({1, 16, 16}), Grid({1, 16, 16}), 5}};
    KernelConfig cfg;
    const auto res = kernel_weighted_loss(batch, params, sched, cfg);
    CHECK(res.weights[0] == 1.0);
    const auto fwd = denoise_forward(batch[0].xt, 5, params);
    const double want = fwd.mean.sq_dist(Grid({1, 16, 16})) / (2.0 * sched.posterior_var(5));
    CHECK(res.value == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("four-sample batch matches the per-sample hand oracle") {
    const auto sched = build_schedule(10, 0.05, 0.3);
    const auto params = small_model(53);
    auto batch = random_batch(sched, 4, 16, 54);
    KernelConfig cfg;  // median policy
    const auto res = kernel_weighted_loss(batch, params, sched, cfg);

    std::vector<double> d2;
    for (auto& s : batch) d2.push_back(s.xt.sq_dist(posterior_params(s.x0, s.xt, s.t, sched).mean));
    std::sort(d2.begin(), d2.end());
    const double sigma = std::max(cfg.sigma_floor, std::sqrt(0.5 * (d2[1] + d2[2]) / 2.0));
    CHECK(res.sigma == doctest::Approx(sigma).epsilon(1e-12));

    double want = 0.0;
    for (auto& s : batch) {
        const auto post = posterior_params(s.x0, s.xt, s.t, sched);
        const double k = std::exp(-s.xt.sq_dist(post.mean) / (2.0 * sigma * sigma));
        const auto fwd = denoise_forward(s.xt, s.t, params);
        want += k * fwd.mean.sq_dist(post.mean) / (2.0 * post.var);
    }
    want /= 4.0;
    CHECK(res.value == doctest::Approx(want).epsilon(1e-6));
    CHECK(res.value >= 0.0);
}

TEST_CASE("loss surfaces non-finite samples with their index") {
    const auto sched = build_schedule(10, 0.05, 0.3);
    const auto params = small_model(55);
    std::vector<LossSample> batch{{Grid({1, 16, 16}), Grid({1, 16, 16}), 3}};
    batch[0].x0[7] = std::numeric_limits<float>::infinity();
    KernelConfig cfg;
    cfg.bandwidth_policy = KernelConfig::Bandwidth::kFixed;
    cfg.sigma = 1.0;
    CHECK_THROWS(kernel_weighted_loss(batch, params, sched, cfg));
    CHECK_THROWS_AS(kernel_weighted_loss({}, params, sched, cfg), DomainError);
    std::vector<LossSample> bad_t{{Grid({1, 16, 16}), Grid({1, 16, 16}), 1}};
    CHECK_THROWS_AS(kernel_weighted_loss(bad_t, params, sched, cfg), DomainError);
}

TEST_CASE("loss gradient on a one-level model passes check_gradient") {
    DenoiserConfig dcfg;
    dcfg.img_size = 8;
    dcfg.levels = 1;
    dcfg.channels = {32};
    dcfg.mixer_hidden = 1;  // smaller model, tighter omega budget
    SeededRng rng(61);
    DenoiserParams params(dcfg, rng);
    auto& head = params.at("head.w2");
    for (int64_t i = 0; i < head->value.numel(); ++i)
        head->value[i] = static_cast<float>(0.05 * ((i % 5) - 2));
    const auto sched = build_schedule(12, 0.02, 0.25);
    const auto batch = random_batch(sched, 2, 8, 62);
    KernelConfig cfg;
    cfg.hsv_window = 3;

    // f is evaluated through the double-precision forward replica: at the
    // pinned 1e-3 step a float32 evaluation leaves round-off noise above the
    // tolerance. Probed weights sit on ReLU-free paths so no kink falls
    // inside the central-difference window.
    fdo::DoubleParams dparams(params);
    for (const char* name : {"attn0.wq", "attn0.wv", "attn0.wo", "head.w2"}) {
        auto& p = params.at(name);
        params.zero_grad();
        const auto loss = kernel_weighted_loss(batch, params, sched, cfg);
        ad::backward(loss.loss_var);
        const Grid analytic = p->grad;
        const Grid x0 = p->value;
        auto f = [&](const Grid& v) {
            auto& vec = dparams.flat.at(name);
            for (int64_t i = 0; i < v.numel(); ++i) vec[static_cast<size_t>(i)] = v[i];
            const double out = fdo::kernel_loss(batch, dparams, dcfg, sched, cfg);
            for (int64_t i = 0; i < v.numel(); ++i) vec[static_cast<size_t>(i)] = x0[i];
            return out;
        };
        std::vector<int64_t> coords(static_cast<size_t>(x0.numel()));
        std::iota(coords.begin(), coords.end(), 0);
        std::partial_sort(coords.begin(), coords.begin() + 4, coords.end(),
                          [&](int64_t a, int64_t b) {
                              return std::fabs(analytic[a]) > std::fabs(analytic[b]);
                          });
        coords.resize(4);
        const auto rep = check_gradient(f, x0, analytic, coords);
        CHECK_MESSAGE(rep.passed(1e-3), name << " max rel " << rep.max_rel_error);
    }
}

}  // TEST_SUITE
