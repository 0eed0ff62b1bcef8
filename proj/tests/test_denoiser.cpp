#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "noisemix/denoiser.hpp"
#include "test_helpers.hpp"

using namespace noisemix;

namespace {

// Closed-form log density of x_t under the (weighted) Gaussian mixture,
// evaluated in long double independently of predict_noise.
long double log_mixture_density(const std::vector<long double>& x, const ModelRegistry& models, long double ab,
                                std::optional<int> only_class = std::nullopt) {
    const long double a = std::sqrt(ab);
    long double total_w = 0.0L;
    for (const auto& m : models.models()) total_w += m.weight;
    long double acc = 0.0L;
    for (const auto& m : models.models()) {
        if (only_class && m.class_id != *only_class) continue;
        long double lp = 0.0L;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const long double v = ab * m.var[i] + (1.0L - ab);
            const long double d = x[i] - a * m.mean[i];
            lp += -0.5L * (std::log(2.0L * std::numbers::pi_v<long double> * v) + d * d / v);
        }
        const long double w = only_class ? 1.0L : m.weight / total_w;
        acc += w * std::exp(lp);
    }
    return std::log(acc);
}

// -sigma_t * central finite-difference gradient of the log density.
std::vector<double> fd_noise(const ImageGrid& x_t, const ModelRegistry& models, const Schedule& s, int t,
                             std::optional<int> only_class, double h) {
    std::vector<long double> x(x_t.values.begin(), x_t.values.end());
    std::vector<double> out(x.size());
    const long double ab = s.alpha_bar(t);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const long double keep = x[i];
        x[i] = keep + h;
        const long double up = log_mixture_density(x, models, ab, only_class);
        x[i] = keep - h;
        const long double down = log_mixture_density(x, models, ab, only_class);
        x[i] = keep;
        out[i] = static_cast<double>(-std::sqrt(1.0L - ab) * (up - down) / (2.0L * h));
    }
    return out;
}

ModelRegistry standard_normal_model(int w, int h) {
    ClassModel m;
    m.class_id = 0;
    m.mean = ImageGrid(w, h, 0.0);
    m.var.assign(m.mean.size(), 1.0);
    return ModelRegistry({m});
}

}  // namespace

TEST_CASE("bump dataset: distinct centers with equal mass") {
    const BumpDatasetSpec spec{2, 8, 8, 1.5, 0.1};
    const ModelRegistry models = make_bump_models(spec);
    REQUIRE(models.num_classes() == 2);
    const auto& m0 = models.model(0).mean;
    const auto& m1 = models.model(1).mean;
    CHECK(m0 != m1);
    double mass0 = 0.0, mass1 = 0.0;
    for (std::size_t i = 0; i < m0.size(); ++i) {
        mass0 += m0[i];
        mass1 += m1[i];
    }
    CHECK(std::abs(mass0 - mass1) <= 1e-9);
    // Two classes sit side by side at mid-height.
    CHECK(bump_center(spec, 0) == std::pair<double, double>{2.0, 4.0});
    CHECK(bump_center(spec, 1) == std::pair<double, double>{6.0, 4.0});

    const ModelRegistry four = make_bump_models({4, 8, 8, 1.5, 0.1});
    double ref = 0.0;
    for (double v : four.model(0).mean.values) ref += v;
    for (int c = 1; c < 4; ++c) {
        double mass = 0.0;
        for (double v : four.model(c).mean.values) mass += v;
        CHECK(std::abs(mass - ref) <= 1e-9);
    }
}

TEST_CASE("bump dataset argument checks") {
    CHECK_THROWS_AS(make_bump_models({2, 8, 8, 1.5, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(make_bump_models({2, 8, 8, 1.5, 1e-7}), std::invalid_argument);
    CHECK_THROWS_AS(make_bump_models({17, 8, 8, 1.5, 0.1}), std::invalid_argument);  // 16 lattice points
    CHECK_THROWS_AS(make_bump_models({5, 4, 4, 1.5, 0.1}), std::invalid_argument);
    CHECK_THROWS_AS(make_bump_models({1, 8, 8, 1.5, 0.1}), std::invalid_argument);
    CHECK_THROWS_AS(make_bump_models({2, 3, 8, 1.5, 0.1}), std::invalid_argument);
    CHECK_NOTHROW(make_bump_models({9, 12, 12, 1.5, 0.1}));
    CHECK_THROWS_AS(ModelRegistry({}), std::invalid_argument);
}

TEST_CASE("bump dataset samples are exact class draws") {
    const double nv = 0.2;
    const int n = 100000;
    const BumpDataset ds = make_bump_dataset({2, 4, 4, 1.0, nv}, 99, n);
    REQUIRE(ds.samples.size() == 2u * n);
    std::vector<double> sum(16, 0.0);
    for (int k = 0; k < n; ++k) {
        REQUIRE(ds.samples[k].class_id == 0);
        for (int i = 0; i < 16; ++i) sum[i] += ds.samples[k].image[i];
    }
    const auto& mu = ds.models.model(0).mean;
    for (int i = 0; i < 16; ++i) CHECK(std::abs(sum[i] / n - mu[i]) <= 3.0 * std::sqrt(nv / n));

    const BumpDataset again = make_bump_dataset({2, 4, 4, 1.0, nv}, 99, 3);
    const BumpDataset same = make_bump_dataset({2, 4, 4, 1.0, nv}, 99, 3);
    for (std::size_t i = 0; i < again.samples.size(); ++i) CHECK(again.samples[i].image == same.samples[i].image);
}

TEST_CASE("predict_noise on the standard normal model is sigma_t * x") {
    const Schedule s = make_cosine_schedule(100);
    const ModelRegistry models = standard_normal_model(3, 3);
    Rng rng(1);
    for (int t : {1, 50, 100}) {
        const ImageGrid x = testing::random_grid(3, 3, rng);
        const ImageGrid eps = predict_noise(x, Condition::of_class(0), t, s, models);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(eps[i] == doctest::Approx(s.noise(t) * x[i]).epsilon(1e-14));
    }
}

TEST_CASE("predict_noise vanishes at the scaled class mean") {
    const Schedule s = make_cosine_schedule(100);
    const ModelRegistry models = make_bump_models({2, 8, 8, 1.5, 0.1});
    for (int t : {1, 40, 100}) {
        ImageGrid x = models.model(1).mean;
        for (auto& v : x.values) v *= s.signal(t);
        const ImageGrid eps = predict_noise(x, Condition::of_class(1), t, s, models);
        for (double v : eps.values) CHECK(v == 0.0);
    }
}

TEST_CASE("mixture prediction matches the finite-difference score") {
    const Schedule s = make_cosine_schedule(1000);
    const ModelRegistry models = make_bump_models({2, 4, 4, 1.0, 0.3});
    Rng rng(2024);
    // A point between both class means at moderate noise, where both
    // responsibilities matter.
    const int t = 300;
    ImageGrid x(4, 4);
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = s.signal(t) * 0.5 * (models.model(0).mean[i] + models.model(1).mean[i]) + 0.3 * rng.normal();
    const ImageGrid eps = predict_noise(x, Condition::unconditional(), t, s, models);
    const auto fd = fd_noise(x, models, s, t, std::nullopt, 1e-4);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (std::abs(eps[i]) <= 1e-3) continue;
        CHECK(std::abs(eps[i] - fd[i]) / std::abs(eps[i]) <= 1e-5);
    }
}

TEST_CASE("score identity over random points, steps and conditions") {
    const Schedule s = make_cosine_schedule(1000);
    const ModelRegistry models = make_bump_models({4, 8, 8, 1.5, 0.2});
    Rng rng(77);
    int checked = 0;
    for (int trial = 0; trial < 30; ++trial) {
        const int t = 1 + static_cast<int>(rng.uniform_index(1000));
        const int pick = static_cast<int>(rng.uniform_index(5));  // 4 = unconditional
        const Condition cond = pick == 4 ? Condition::unconditional() : Condition::of_class(pick);
        const ImageGrid x = testing::random_grid(8, 8, rng);
        const ImageGrid eps = predict_noise(x, cond, t, s, models);
        const auto fd = fd_noise(x, models, s, t, pick == 4 ? std::nullopt : std::optional<int>(pick), 1e-4);
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (std::abs(eps[i]) <= 1e-3) continue;
            ++checked;
            CHECK(std::abs(eps[i] - fd[i]) / std::abs(eps[i]) <= 1e-4);
        }
    }
    CHECK(checked > 1000);
}

TEST_CASE("Tweedie estimate equals the closed-form posterior mean") {
    const Schedule s = make_cosine_schedule(1000);
    const ModelRegistry models = make_bump_models({2, 6, 4, 1.2, 0.05});
    Rng rng(8);
    for (int t : {1, 5, 100, 500, 999}) {
        const ImageGrid x = testing::random_grid(6, 4, rng);
        const ImageGrid eps = predict_noise(x, Condition::of_class(0), t, s, models);
        const auto& m = models.model(0);
        const double a = s.signal(t), sigma = s.noise(t);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double tweedie = (x[i] - sigma * eps[i]) / a;
            // x0 | x_t ~ Gaussian; E = mu + Sigma a / (a^2 Sigma + sigma^2) (x_t - a mu)
            const double post = m.mean[i] + m.var[i] * a / (a * a * m.var[i] + sigma * sigma) * (x[i] - a * m.mean[i]);
            CHECK(std::abs(tweedie - post) <= 1e-9);
        }
    }
}

TEST_CASE("unconditional prediction with one class equals the class prediction") {
    const Schedule s = make_cosine_schedule(50);
    ClassModel m = make_bump_models({2, 8, 8, 1.5, 0.1}).model(1);
    m.class_id = 0;
    const ModelRegistry single({m});
    Rng rng(4);
    for (int t = 1; t <= 50; t += 7) {
        const ImageGrid x = testing::random_grid(8, 8, rng);
        CHECK(predict_noise(x, Condition::unconditional(), t, s, single) ==
              predict_noise(x, Condition::of_class(0), t, s, single));
    }
}

TEST_CASE("predict_noise stays finite where responsibilities underflow") {
    const Schedule s = make_cosine_schedule(1000);
    const ModelRegistry models = make_bump_models({4, 8, 8, 1.0, 1e-4});
    Rng rng(6);
    const ImageGrid x = testing::random_grid(8, 8, rng, 5.0);
    CHECK(predict_noise(x, Condition::unconditional(), 1, s, models).all_finite());
}

TEST_CASE("predict_noise argument checks") {
    const Schedule s = make_cosine_schedule(10);
    const ModelRegistry models = make_bump_models({2, 8, 8, 1.5, 0.1});
    const ImageGrid x(8, 8);
    CHECK_THROWS_AS(predict_noise(x, Condition::of_class(2), 1, s, models), std::invalid_argument);
    CHECK_THROWS_AS(predict_noise(x, Condition::of_class(0), 0, s, models), std::invalid_argument);
    CHECK_THROWS_AS(predict_noise(x, Condition::of_class(0), 11, s, models), std::invalid_argument);
    CHECK_THROWS_AS(predict_noise(ImageGrid(4, 8), Condition::of_class(0), 1, s, models), std::invalid_argument);
}
