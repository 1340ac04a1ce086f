#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "kao/errors.hpp"
#include "kao/gradcheck.hpp"
#include "kao/grid.hpp"
#include "kao/rng.hpp"

using namespace kao;

TEST_SUITE("grid-rng") {

TEST_CASE("grid shape bookkeeping") {
    Grid g({2, 3, 4});
    CHECK(g.numel() == 24);
    CHECK(g.rank() == 3);
    CHECK_THROWS_AS(Grid({2, 2}, std::vector<float>{1.f}), DomainError);
    g.at(1, 2, 3) = 5.0f;
    CHECK(g[23] == 5.0f);
    CHECK(g.reshaped({4, 6}).extent(1) == 6);
    CHECK_THROWS_AS(g.reshaped({5, 5}), DomainError);
}

TEST_CASE("finite checks and reductions use wide accumulators") {
    Grid g({3}, {1.0f, 2.0f, 3.0f});
    CHECK(g.all_finite());
    CHECK(g.sum() == doctest::Approx(6.0));
    CHECK(g.mean() == doctest::Approx(2.0));
    Grid h({3}, {1.0f, 2.0f, 4.0f});
    CHECK(g.sq_dist(h) == doctest::Approx(1.0));
    g[1] = std::numeric_limits<float>::infinity();
    CHECK_FALSE(g.all_finite());
    CHECK_THROWS(g.require_finite("test"));
}

TEST_CASE("elementwise ops commute with index permutation") {
    SeededRng rng(31);
    const int64_t n = 64;
    Grid a = gaussian_sample(rng, {n}, 0.f, 1.f);
    Grid b = gaussian_sample(rng, {n}, 0.f, 1.f);
    std::vector<int64_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int64_t i = n - 1; i > 0; --i)
        std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(rng.next_range(0, i))]);

    auto permute = [&](const Grid& g) {
        Grid out({n});
        for (int64_t i = 0; i < n; ++i) out[i] = g[perm[static_cast<size_t>(i)]];
        return out;
    };
    const Grid sum_then = permute(a + b);
    const Grid then_sum = permute(a) + permute(b);
    const Grid mul_then = permute(a * b);
    const Grid then_mul = permute(a) * permute(b);
    for (int64_t i = 0; i < n; ++i) {
        CHECK(sum_then[i] == then_sum[i]);
        CHECK(mul_then[i] == then_mul[i]);
    }
}

TEST_CASE("gaussian_sample degenerate std returns the mean") {
    SeededRng rng(7);
    Grid mean({2, 2}, {1.f, -2.f, 3.f, 0.5f});
    Grid out = gaussian_sample(rng, {2, 2}, mean, Grid::scalar(0.0f));
    for (int64_t i = 0; i < 4; ++i) CHECK(out[i] == mean[i]);
}

TEST_CASE("gaussian_sample rejects negative std") {
    SeededRng rng(7);
    CHECK_THROWS_AS(gaussian_sample(rng, {4}, 0.0f, -1.0f), DomainError);
}

TEST_CASE("gaussian_sample moments over 1e5 draws") {
    SeededRng rng(123);
    const int64_t n = 100000;
    Grid z = gaussian_sample(rng, {n}, 0.0f, 1.0f);
    const double mean = z.mean();
    double var = 0.0;
    for (int64_t i = 0; i < n; ++i) var += (z[i] - mean) * (z[i] - mean);
    var /= static_cast<double>(n - 1);
    CHECK(std::fabs(mean) < 0.02);
    CHECK(std::fabs(var - 1.0) < 0.02);
}

TEST_CASE("seeded determinism is bit exact") {
    SeededRng a(42), b(42);
    Grid ga = gaussian_sample(a, {128}, 0.5f, 2.0f);
    Grid gb = gaussian_sample(b, {128}, 0.5f, 2.0f);
    for (int64_t i = 0; i < 128; ++i) CHECK(ga[i] == gb[i]);
    // split streams are distinct from the parent and from each other
    SeededRng s1 = SeededRng(42).split(1), s2 = SeededRng(42).split(2);
    CHECK(s1.next_u64() != s2.next_u64());
}

TEST_CASE("check_gradient on sum of squares") {
    Grid x({2}, {1.0f, 2.0f});
    Grid grad({2}, {2.0f, 4.0f});
    auto f = [](const Grid& v) {
        double acc = 0.0;
        for (int64_t i = 0; i < v.numel(); ++i) acc += static_cast<double>(v[i]) * v[i];
        return acc;
    };
    const auto rep = check_gradient(f, x, grad);
    CHECK(rep.passed(1e-4));
}

TEST_CASE("check_gradient on a constant function") {
    Grid x({3}, {1.0f, -1.0f, 0.5f});
    Grid zeros({3});
    auto f = [](const Grid&) { return 3.5; };
    const auto rep = check_gradient(f, x, zeros);
    CHECK(rep.passed(1e-6));
}

TEST_CASE("check_gradient flags non-finite evaluations") {
    Grid x({1}, {0.0f});
    Grid grad({1});
    auto f = [](const Grid&) { return std::numeric_limits<double>::quiet_NaN(); };
    CHECK_THROWS_AS(check_gradient(f, x, grad), NumericError);
}

}  // TEST_SUITE
