#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "noisemix/sampler.hpp"
#include "test_helpers.hpp"

using namespace noisemix;

namespace {

ModelRegistry single_class(const ImageGrid& mean, double var) {
    ClassModel m;
    m.class_id = 0;
    m.mean = mean;
    m.var.assign(mean.size(), var);
    return ModelRegistry({m});
}

struct PixelStats {
    std::vector<double> mean;
    std::vector<double> var;
};

PixelStats terminal_stats(const SamplerConfig& cfg, const Schedule& sched, const ModelRegistry& models, int n,
                          std::uint64_t seed) {
    const std::size_t P = models.model(0).mean.size();
    std::vector<std::vector<double>> draws(P);
    for (int k = 0; k < n; ++k) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
        const GenRecord rec = generate_single(Condition::of_class(0), cfg, sched, models, rng);
        for (std::size_t i = 0; i < P; ++i) draws[i].push_back(rec.image[i]);
    }
    PixelStats s;
    for (const auto& d : draws) {
        const auto m = testing::moments(d);
        s.mean.push_back(m.mean);
        s.var.push_back(m.var);
    }
    return s;
}

struct RecordingObserver : MixObserver {
    int steps = 0;
    bool selection_only = true;
    const MaskSpec* mask = nullptr;
    void on_step(int, const ImageGrid& a, const ImageGrid& b, const ImageGrid& mixed) override {
        ++steps;
        for (std::size_t i = 0; i < mixed.size(); ++i) {
            const double want = mask->mask[i] ? a[i] : b[i];
            if (mixed[i] != want) selection_only = false;
        }
    }
};

}  // namespace

TEST_CASE("inference timesteps are evenly spaced and strictly decreasing") {
    for (int T : {2, 10, 1000}) {
        for (int n : {1, 2, 3, 7, 25, T - 1, T}) {
            if (n < 1 || n > T) continue;
            const auto ts = inference_timesteps(T, n);
            REQUIRE(ts.size() == static_cast<std::size_t>(n) + 1);
            CHECK(ts.front() == T);
            CHECK(ts.back() == 0);
            for (int i = 0; i <= n; ++i) {
                CHECK(std::abs(ts[i] - static_cast<double>(T) * (n - i) / n) <= 0.5);
                if (i > 0) CHECK(ts[i] < ts[i - 1]);
            }
        }
    }
    CHECK_THROWS_AS(inference_timesteps(10, 0), std::invalid_argument);
    CHECK_THROWS_AS(inference_timesteps(10, 11), std::invalid_argument);
}

TEST_CASE("ancestral step inverts the forward map at t = 0") {
    const Schedule s = make_cosine_schedule(1000);
    Rng rng(3);
    for (int t : {1, 10, 500, 1000}) {
        const ImageGrid x0 = testing::random_grid(5, 5, rng);
        const ImageGrid eps = testing::random_grid(5, 5, rng);
        const ImageGrid xt = forward_noise(x0, eps, t, s);
        const ImageGrid rec = step_ancestral(xt, eps, t, 0, s, rng);
        for (std::size_t i = 0; i < x0.size(); ++i) CHECK(std::abs(rec[i] - x0[i]) <= 1e-9);
    }
    const ImageGrid zero(4, 4, 0.0);
    CHECK(step_ancestral(zero, zero, 37, 0, s, rng) == zero);
    CHECK_THROWS_AS(step_ancestral(zero, zero, 5, 5, s, rng), std::invalid_argument);
    CHECK_THROWS_AS(step_ancestral(zero, zero, 5, 9, s, rng), std::invalid_argument);
}

TEST_CASE("DPM-Solver++ correction vanishes for equal data predictions") {
    const Schedule s = make_cosine_schedule(1000);
    Rng rng(4);
    const ImageGrid x = testing::random_grid(4, 4, rng);
    const ImageGrid c(4, 4, 0.7);
    const ImageGrid second = step_dpm_pp_2m(x, c, &c, {900, 860, 820}, s);
    const ImageGrid first = step_dpm_pp_2m(x, c, nullptr, {std::nullopt, 860, 820}, s);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(second[i] == doctest::Approx(first[i]).epsilon(1e-14));

    // First order is the DDIM update: a_to * x0 + sigma_to * eps.
    const double a_from = s.signal(860), sg_from = s.noise(860);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double eps = (x[i] - a_from * c[i]) / sg_from;
        CHECK(first[i] == doctest::Approx(s.signal(820) * c[i] + s.noise(820) * eps).epsilon(1e-12));
    }
    // Reaching t = 0 returns the data prediction.
    CHECK(step_dpm_pp_2m(x, c, &c, {80, 40, 0}, s) == c);

    CHECK_THROWS_AS(step_dpm_pp_2m(x, c, nullptr, {std::nullopt, 40, 40}, s), std::invalid_argument);
    CHECK_THROWS_AS(step_dpm_pp_2m(x, c, &c, {30, 40, 20}, s), std::invalid_argument);
}

TEST_CASE("DPM-Solver++ second order is exact on data predictions linear in log-SNR") {
    // For x0_hat(l) = p + q * l the exact solution of the data-prediction ODE
    // can be integrated in closed form; 2M with the true previous value must
    // track it much better than first order.
    const Schedule s = make_cosine_schedule(1000);
    auto lam = [&](int t) { return std::log(s.signal(t) / s.noise(t)); };
    const double p = 0.3, q = 0.2;
    auto data = [&](int t) { return p + q * lam(t); };
    const int t_prev = 600, t_from = 560, t_to = 520;
    const double x = 0.9;
    // x_to = (sigma_to/sigma_from) x + sigma_to * int_{l_from}^{l_to} e^{l} x0(l) dl
    const double l0 = lam(t_from), l1 = lam(t_to);
    auto prim = [&](double l) { return std::exp(l) * (p + q * (l - 1.0)); };
    const double exact = s.noise(t_to) / s.noise(t_from) * x + s.noise(t_to) * (prim(l1) - prim(l0));
    const ImageGrid xg(1, 1, x), cur(1, 1, data(t_from)), prev(1, 1, data(t_prev));
    const double second = step_dpm_pp_2m(xg, cur, &prev, {t_prev, t_from, t_to}, s)[0];
    const double first = step_dpm_pp_2m(xg, cur, nullptr, {std::nullopt, t_from, t_to}, s)[0];
    CHECK(std::abs(second - exact) < 0.1 * std::abs(first - exact));
}

TEST_CASE("one-step cross-check between the solver and the noiseless ancestral step") {
    // With T - 1 inference steps, both updates write x_to = a_to * x0_hat + c * eps_hat.
    // The x0_hat coefficient is a_to for both; the eps coefficients differ by O(beta_t).
    const Schedule s = make_cosine_schedule(1000);
    const auto ts = inference_timesteps(1000, 999);
    Rng rng(12);
    for (std::size_t k = 1; k + 1 < ts.size(); k += 97) {
        const int t_from = ts[k], t_to = ts[k + 1];
        const ImageGrid x0 = testing::random_grid(3, 3, rng);
        // Pure-signal state: eps_hat = 0.
        const ImageGrid xt = forward_noise(x0, ImageGrid(3, 3, 0.0), t_from, s);
        const ImageGrid dpm = step_dpm_pp_2m(xt, x0, nullptr, {std::nullopt, t_from, t_to}, s);
        // Posterior mean of the ancestral step (its noise term left out).
        const ImageGrid anc_mean = [&] {
            const double ab_t = s.alpha_bar(t_from), ab_s = s.alpha_bar(t_to);
            const double beta = 1.0 - ab_t / ab_s;
            ImageGrid m = xt;
            for (std::size_t i = 0; i < m.size(); ++i)
                m[i] = std::sqrt(ab_s) * beta / (1 - ab_t) * x0[i] +
                       std::sqrt(ab_t / ab_s) * (1 - ab_s) / (1 - ab_t) * xt[i];
            return m;
        }();
        for (std::size_t i = 0; i < dpm.size(); ++i) CHECK(std::abs(dpm[i] - anc_mean[i]) <= 1e-6);

        // General state: difference bounded by the step's beta.
        const ImageGrid eps = testing::random_grid(3, 3, rng);
        const ImageGrid xt2 = forward_noise(x0, eps, t_from, s);
        const ImageGrid dpm2 = step_dpm_pp_2m(xt2, x0, nullptr, {std::nullopt, t_from, t_to}, s);
        const double beta = 1.0 - s.alpha_bar(t_from) / s.alpha_bar(t_to);
        for (std::size_t i = 0; i < dpm2.size(); ++i) {
            const double ab_t = s.alpha_bar(t_from), ab_s = s.alpha_bar(t_to);
            const double mean = std::sqrt(ab_s) * beta / (1 - ab_t) * x0[i] +
                                std::sqrt(ab_t / ab_s) * (1 - ab_s) / (1 - ab_t) * xt2[i];
            CHECK(std::abs(dpm2[i] - mean) <= beta / (1 - ab_t) * std::abs(eps[i]) + 1e-12);
        }
    }
}

TEST_CASE("generate_single is bit-reproducible") {
    const Schedule s = make_cosine_schedule(200);
    const ModelRegistry models = make_bump_models({2, 8, 8, 1.5, 0.1});
    for (auto kind : {SamplerKind::ancestral, SamplerKind::dpm_solver_pp_2m}) {
        const SamplerConfig cfg{kind, 20, 7.5};
        Rng a(42), b(42);
        const GenRecord ra = generate_single(Condition::of_class(1), cfg, s, models, a);
        const GenRecord rb = generate_single(Condition::of_class(1), cfg, s, models, b);
        CHECK(ra.image == rb.image);
        CHECK(ra.label == SoftLabel::one_hot(1, 2));
        CHECK(ra.image.all_finite());
    }
}

TEST_CASE("sampler configuration checks") {
    const Schedule s = make_cosine_schedule(50);
    const ModelRegistry models = make_bump_models({2, 8, 8, 1.5, 0.1});
    Rng rng(0);
    CHECK_THROWS_AS(generate_single(Condition::of_class(0), {SamplerKind::ancestral, 0, 1.0}, s, models, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_single(Condition::of_class(0), {SamplerKind::ancestral, 51, 1.0}, s, models, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_single(Condition::of_class(0), {SamplerKind::ancestral, 10, -1.0}, s, models, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_noisecutmix(0, 2, {}, s, models, 1.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(parse_sampler_kind("euler"), std::invalid_argument);
}

TEST_CASE("ancestral chain reproduces a single Gaussian class") {
    const Schedule s = make_cosine_schedule(1000);
    const BumpDatasetSpec spec{2, 4, 4, 1.0, 0.1};
    const ModelRegistry models = single_class(make_bump_models(spec).model(0).mean, spec.noise_var);
    const int n = 10000;
    const auto st = terminal_stats({SamplerKind::ancestral, 1000, 1.0}, s, models, n, 1);
    const auto& mu = models.model(0).mean;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        CHECK(std::abs(st.mean[i] - mu[i]) <= 3.0 * std::sqrt(st.var[i] / n));
        CHECK(std::abs(st.var[i] - spec.noise_var) <= 0.10 * spec.noise_var);
    }
}

TEST_CASE("25-step DPM-Solver++ agrees with the 1000-step ancestral chain") {
    const Schedule s = make_cosine_schedule(1000);
    const BumpDatasetSpec spec{2, 4, 4, 1.0, 0.1};
    const ModelRegistry models = single_class(make_bump_models(spec).model(0).mean, spec.noise_var);
    const auto dpm = terminal_stats({SamplerKind::dpm_solver_pp_2m, 25, 1.0}, s, models, 4000, 2);
    const auto anc = terminal_stats({SamplerKind::ancestral, 1000, 1.0}, s, models, 4000, 3);
    for (std::size_t i = 0; i < dpm.mean.size(); ++i) CHECK(std::abs(dpm.mean[i] - anc.mean[i]) <= 0.02);
}

TEST_CASE("mask-gated generation collapses to single-class generation") {
    const Schedule s = make_cosine_schedule(300);
    const ModelRegistry models = make_bump_models({4, 8, 8, 1.5, 0.1});
    for (auto kind : {SamplerKind::ancestral, SamplerKind::dpm_solver_pp_2m}) {
        const SamplerConfig cfg{kind, 25, 7.5};
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            Rng r1(seed), r2(seed), r3(seed), r4(seed);
            const GenRecord ones = generate_with_mask(0, 3, full_mask(8, 8), cfg, s, models, r1);
            const GenRecord a = generate_single(Condition::of_class(0), cfg, s, models, r2);
            CHECK(ones.image == a.image);
            CHECK(ones.label == a.label);

            const GenRecord zeros = generate_with_mask(0, 3, mask_from_cells(8, 8, 0, 8, 0, 8), cfg, s, models, r3);
            const GenRecord b = generate_single(Condition::of_class(3), cfg, s, models, r4);
            CHECK(zeros.image == b.image);
            CHECK(zeros.label == SoftLabel::one_hot(3, 4));
        }
    }
}

TEST_CASE("mixed noise is a per-pixel selection at every step") {
    const Schedule s = make_cosine_schedule(300);
    const ModelRegistry models = make_bump_models({2, 8, 8, 1.5, 0.1});
    Rng mrng(5);
    const MaskSpec mask = sample_mask(8, 8, 0.6, mrng);
    for (auto kind : {SamplerKind::ancestral, SamplerKind::dpm_solver_pp_2m}) {
        RecordingObserver obs;
        obs.mask = &mask;
        Rng rng(6);
        const SamplerConfig cfg{kind, 25, 7.5};
        const GenRecord rec = generate_with_mask(0, 1, mask, cfg, s, models, rng, &obs);
        CHECK(obs.steps == 25);
        CHECK(obs.selection_only);
        CHECK(rec.label == mix_labels(0, 1, mask.lambda_real, 2));
    }
}

TEST_CASE("noisecutmix records carry enough provenance to regenerate them") {
    const Schedule s = make_cosine_schedule(300);
    const ModelRegistry models = make_bump_models({4, 8, 8, 1.5, 0.1});
    for (auto kind : {SamplerKind::ancestral, SamplerKind::dpm_solver_pp_2m}) {
        Rng rng(91);
        const GenRecord rec = generate_noisecutmix(1, 2, {kind, 20, 7.5}, s, models, 1.0, rng);
        CHECK(rec.label.on_simplex());
        CHECK(rec.label.probs[1] == rec.provenance.lambda_real);
        REQUIRE(rec.mask.has_value());
        CHECK(rec.mask->lambda_real == rec.provenance.lambda_real);
        const GenRecord again = regenerate(rec.provenance, s, models);
        CHECK(again.image == rec.image);
        CHECK(again.label == rec.label);

        Rng single_rng(92);
        const GenRecord single = generate_single(Condition::of_class(3), {kind, 20, 7.5}, s, models, single_rng);
        CHECK(regenerate(single.provenance, s, models).image == single.image);
    }
}
