#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "noisemix/schedule.hpp"
#include "test_helpers.hpp"

using namespace noisemix;

namespace {

// Direct long-double evaluation of the normalized cosine formula.
long double cosine_alpha_bar(int t, int T) {
    const long double s = 0.008L;
    const long double half_pi = 1.5707963267948966192313216916397514L;
    const long double c = std::cos((static_cast<long double>(t) / T + s) / (1.0L + s) * half_pi);
    const long double c0 = std::cos(s / (1.0L + s) * half_pi);
    return (c * c) / (c0 * c0);
}

}  // namespace

TEST_CASE("cosine schedule starts at one and strictly decreases") {
    const Schedule s = make_cosine_schedule(10);
    CHECK(s.num_steps() == 10);
    CHECK(s.alpha_bar(0) == 1.0);
    for (int t = 1; t <= 10; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK(s.alpha_bar(10) > 0.0);
    CHECK(s.alpha_bar(10) <= 0.01);
}

TEST_CASE("cosine schedule matches a high-precision re-evaluation") {
    const Schedule s = make_cosine_schedule(1000);
    // Terminal value sits on the floor.
    const long double raw_T = cosine_alpha_bar(1000, 1000);
    CHECK(raw_T < 1e-5L);
    CHECK(std::abs(s.alpha_bar(1000) - 1e-5) <= 1e-12);
    for (int t : {1, 10, 250, 500, 750, 900, 990, 997}) {
        CAPTURE(t);
        CHECK(std::abs(s.alpha_bar(t) - static_cast<double>(cosine_alpha_bar(t, 1000))) <= 1e-12);
    }
    for (int t = 1; t <= 1000; ++t) {
        CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
        CHECK(s.alpha_bar(t) >= 1e-5);
    }
}

TEST_CASE("schedule signal and noise scales are complementary") {
    for (int T : {2, 10, 1000}) {
        const Schedule s = make_cosine_schedule(T);
        for (int t = 0; t <= T; ++t) {
            const double a = s.signal(t), sg = s.noise(t);
            CHECK(std::abs(a * a + sg * sg - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("cosine schedule rejects fewer than two steps") {
    CHECK_THROWS_AS(make_cosine_schedule(1), std::invalid_argument);
    CHECK_THROWS_AS(make_cosine_schedule(0), std::invalid_argument);
    CHECK_THROWS_AS(Schedule({1.0, 0.5, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(Schedule({0.9, 0.5}), std::invalid_argument);
}

TEST_CASE("forward_noise examples") {
    const Schedule s = make_cosine_schedule(10);
    const ImageGrid zeros(4, 3, 0.0);
    for (int t = 0; t <= 10; ++t) CHECK(forward_noise(zeros, zeros, t, s) == zeros);

    Rng rng(7);
    const ImageGrid x0 = testing::random_grid(4, 3, rng);
    const ImageGrid eps = testing::random_grid(4, 3, rng);
    CHECK(forward_noise(x0, eps, 0, s) == x0);

    const Schedule quarter({1.0, 0.25, 0.01});
    const ImageGrid ones(5, 5, 1.0);
    const ImageGrid xt = forward_noise(ones, ones, 1, quarter);
    for (double v : xt.values) CHECK(v == doctest::Approx(0.5 + std::sqrt(0.75)).epsilon(1e-15));
    CHECK(xt[0] == doctest::Approx(1.36603).epsilon(1e-5));

    CHECK_THROWS_AS(forward_noise(ImageGrid(4, 4), ImageGrid(4, 3), 1, s), std::invalid_argument);
    CHECK_THROWS_AS(forward_noise(ones, ones, 11, s), std::invalid_argument);
}

TEST_CASE("forward_noise has the prescribed per-pixel moments") {
    const Schedule s = make_cosine_schedule(100);
    Rng rng(11);
    const ImageGrid x0(2, 2, std::vector<double>{1.0, -0.5, 0.0, 2.0});
    const int n = 20000;
    for (int t : {1, 30, 70, 100}) {
        std::vector<std::vector<double>> draws(4);
        for (int k = 0; k < n; ++k) {
            const ImageGrid xt = forward_noise(x0, testing::random_grid(2, 2, rng), t, s);
            for (int i = 0; i < 4; ++i) draws[i].push_back(xt[i]);
        }
        const double var = 1.0 - s.alpha_bar(t);
        for (int i = 0; i < 4; ++i) {
            const auto m = testing::moments(draws[i]);
            CAPTURE(t);
            CHECK(std::abs(m.mean - s.signal(t) * x0[i]) <= 3.0 * std::sqrt(var / n));
            CHECK(std::abs(m.var - var) <= 3.0 * var * std::sqrt(2.0 / (n - 1)));
        }
    }
}

TEST_CASE("cfg_combine examples") {
    Rng rng(3);
    const ImageGrid c = testing::random_grid(6, 6, rng);
    const ImageGrid u = testing::random_grid(6, 6, rng);
    CHECK(cfg_combine(c, u, 1.0) == c);
    CHECK(cfg_combine(c, u, 0.0) == u);

    const ImageGrid out = cfg_combine(ImageGrid(3, 3, 2.0), ImageGrid(3, 3, 1.0), 7.5);
    for (double v : out.values) CHECK(v == 8.5);

    CHECK_THROWS_AS(cfg_combine(ImageGrid(3, 3), ImageGrid(3, 4), 1.0), std::invalid_argument);
}

TEST_CASE("cfg_combine is affine in its inputs") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const ImageGrid a = testing::random_grid(5, 4, rng), b = testing::random_grid(5, 4, rng);
        const ImageGrid a2 = testing::random_grid(5, 4, rng), b2 = testing::random_grid(5, 4, rng);
        const double scale = 10.0 * rng.uniform();
        ImageGrid sa = a, sb = b;
        for (std::size_t i = 0; i < sa.size(); ++i) {
            sa[i] += a2[i];
            sb[i] += b2[i];
        }
        const ImageGrid lhs1 = cfg_combine(a, b, scale), lhs2 = cfg_combine(a2, b2, scale);
        const ImageGrid rhs = cfg_combine(sa, sb, scale);
        for (std::size_t i = 0; i < rhs.size(); ++i) CHECK(std::abs(lhs1[i] + lhs2[i] - rhs[i]) <= 1e-12);
    }
}
