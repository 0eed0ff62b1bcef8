#include "noisemix/sampler.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "noisemix/errors.hpp"

namespace noisemix {

std::string_view to_string(SamplerKind kind) noexcept {
    switch (kind) {
        case SamplerKind::ancestral: return "ancestral";
        case SamplerKind::dpm_solver_pp_2m: return "dpm_solver_pp_2m";
    }
    return "unknown";
}

SamplerKind parse_sampler_kind(std::string_view name) {
    if (name == "ancestral") return SamplerKind::ancestral;
    if (name == "dpm_solver_pp_2m") return SamplerKind::dpm_solver_pp_2m;
    throw std::invalid_argument("unknown sampler '" + std::string(name) + "'");
}

void SamplerConfig::validate(const Schedule& sched) const {
    if (num_inference_steps < 1 || num_inference_steps > sched.num_steps())
        throw std::invalid_argument("SamplerConfig: num_inference_steps must lie in [1, T]");
    if (!(guidance_scale >= 0.0) || !std::isfinite(guidance_scale))
        throw std::invalid_argument("SamplerConfig: guidance_scale must be finite and >= 0");
}

std::vector<int> inference_timesteps(int num_steps, int num_inference_steps) {
    if (num_inference_steps < 1 || num_inference_steps > num_steps)
        throw std::invalid_argument("inference_timesteps: need 1 <= n <= T");
    const long long T = num_steps;
    const long long n = num_inference_steps;
    std::vector<int> ts;
    ts.reserve(static_cast<std::size_t>(n) + 1);
    for (long long i = 0; i <= n; ++i) ts.push_back(static_cast<int>((T * (n - i) * 2 + n) / (2 * n)));
    return ts;
}

ImageGrid predict_x0(const ImageGrid& x_t, const ImageGrid& eps, int t, const Schedule& sched) {
    require_same_shape(x_t, eps, "predict_x0");
    const double a = sched.signal(t);
    const double sigma = sched.noise(t);
    ImageGrid out = x_t;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - sigma * eps[i]) / a;
    return out;
}

ImageGrid step_ancestral(const ImageGrid& x_t, const ImageGrid& eps_hat, int t_from, int t_to,
                         const Schedule& sched, Rng& rng) {
    if (!(t_from > t_to && t_to >= 0 && t_from <= sched.num_steps()))
        throw std::invalid_argument("step_ancestral: need T >= t_from > t_to >= 0");
    const ImageGrid x0 = predict_x0(x_t, eps_hat, t_from, sched);

    const double ab_t = sched.alpha_bar(t_from);
    const double ab_s = sched.alpha_bar(t_to);
    const double alpha_ts = ab_t / ab_s;
    const double beta_ts = 1.0 - alpha_ts;
    const double coef_x0 = std::sqrt(ab_s) * beta_ts / (1.0 - ab_t);
    const double coef_xt = std::sqrt(alpha_ts) * (1.0 - ab_s) / (1.0 - ab_t);
    const double stddev = std::sqrt((1.0 - ab_s) * beta_ts / (1.0 - ab_t));

    ImageGrid out = x_t;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = coef_x0 * x0[i] + coef_xt * x_t[i];
    if (t_to > 0)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += stddev * rng.normal();
    return out;
}

namespace {

double log_snr(const Schedule& sched, int t) { return std::log(sched.signal(t) / sched.noise(t)); }

}  // namespace

ImageGrid step_dpm_pp_2m(const ImageGrid& x, const ImageGrid& datapred_curr, const ImageGrid* datapred_prev,
                         const StepTriple& steps, const Schedule& sched) {
    require_same_shape(x, datapred_curr, "step_dpm_pp_2m");
    if (!(steps.t_from > steps.t_to && steps.t_to >= 0 && steps.t_from <= sched.num_steps()))
        throw std::invalid_argument("step_dpm_pp_2m: timesteps must strictly decrease");
    if (steps.t_prev && !(*steps.t_prev > steps.t_from && *steps.t_prev <= sched.num_steps()))
        throw std::invalid_argument("step_dpm_pp_2m: timesteps must strictly decrease");
    if (datapred_prev) require_same_shape(x, *datapred_prev, "step_dpm_pp_2m");

    if (steps.t_to == 0) return datapred_curr;

    const double sigma_from = sched.noise(steps.t_from);
    const double sigma_to = sched.noise(steps.t_to);
    const double a_to = sched.signal(steps.t_to);
    const double h = log_snr(sched, steps.t_to) - log_snr(sched, steps.t_from);
    const double ratio = sigma_to / sigma_from;
    const double phi = a_to * std::expm1(-h);  // a_to * (e^{-h} - 1)

    ImageGrid out = x;
    if (datapred_prev && steps.t_prev) {
        const double h_prev = log_snr(sched, steps.t_from) - log_snr(sched, *steps.t_prev);
        const double r = h_prev / h;
        const double c_prev = 1.0 / (2.0 * r);
        const double c_curr = 1.0 + c_prev;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = c_curr * datapred_curr[i] - c_prev * (*datapred_prev)[i];
            out[i] = ratio * x[i] - phi * d;
        }
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = ratio * x[i] - phi * datapred_curr[i];
    }
    return out;
}

namespace {

using NoiseFn = std::function<ImageGrid(const ImageGrid&, int)>;

ImageGrid run_reverse(const NoiseFn& noise_at, int width, int height, const SamplerConfig& cfg,
                      const Schedule& sched, Rng& rng) {
    const auto ts = inference_timesteps(sched.num_steps(), cfg.num_inference_steps);
    ImageGrid x(width, height);
    for (auto& v : x.values) v = rng.normal();

    std::optional<ImageGrid> prev_x0;
    std::optional<int> prev_t;
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        const int t_from = ts[i];
        const int t_to = ts[i + 1];
        const ImageGrid eps = noise_at(x, t_from);
        if (cfg.kind == SamplerKind::ancestral) {
            x = step_ancestral(x, eps, t_from, t_to, sched, rng);
        } else {
            ImageGrid x0 = predict_x0(x, eps, t_from, sched);
            x = step_dpm_pp_2m(x, x0, prev_x0 ? &*prev_x0 : nullptr, StepTriple{prev_t, t_from, t_to}, sched);
            prev_x0 = std::move(x0);
            prev_t = t_from;
        }
    }
    if (!x.all_finite()) throw numerical_error("reverse process produced non-finite values");
    return x;
}

Provenance base_provenance(const SamplerConfig& cfg, const Rng& rng) {
    Provenance p;
    p.seed = rng.seed();
    p.sampler = cfg.kind;
    p.steps = cfg.num_inference_steps;
    p.guidance_scale = cfg.guidance_scale;
    return p;
}

}  // namespace

GenRecord generate_single(const Condition& cond, const SamplerConfig& cfg, const Schedule& sched,
                          const ModelRegistry& models, Rng& rng) {
    cfg.validate(sched);
    models.validate(cond);
    const Condition uncond = Condition::unconditional();
    auto noise_at = [&](const ImageGrid& x, int t) {
        ImageGrid eps_u = predict_noise(x, uncond, t, sched, models);
        if (cond.is_unconditional()) return eps_u;
        return cfg_combine(predict_noise(x, cond, t, sched, models), eps_u, cfg.guidance_scale);
    };

    GenRecord rec;
    rec.provenance = base_provenance(cfg, rng);
    rec.image = run_reverse(noise_at, models.width(), models.height(), cfg, sched, rng);
    rec.provenance.method = "single";
    if (cond.is_unconditional()) {
        rec.provenance.class_a = -1;
        rec.label = SoftLabel{std::vector<double>(static_cast<std::size_t>(models.num_classes()),
                                                  1.0 / models.num_classes())};
    } else {
        rec.provenance.class_a = cond.class_id();
        rec.label = SoftLabel::one_hot(cond.class_id(), models.num_classes());
    }
    return rec;
}

GenRecord generate_with_mask(int class_a, int class_b, const MaskSpec& mask, const SamplerConfig& cfg,
                             const Schedule& sched, const ModelRegistry& models, Rng& rng,
                             MixObserver* observer) {
    cfg.validate(sched);
    const Condition cond_a = Condition::of_class(class_a);
    const Condition cond_b = Condition::of_class(class_b);
    models.validate(cond_a);
    models.validate(cond_b);
    if (mask.width != models.width() || mask.height != models.height() ||
        mask.mask.size() != static_cast<std::size_t>(mask.width) * mask.height)
        throw std::invalid_argument("generate_with_mask: mask shape does not match the class models");

    const Condition uncond = Condition::unconditional();
    auto noise_at = [&](const ImageGrid& x, int t) {
        const ImageGrid eps_u = predict_noise(x, uncond, t, sched, models);
        const ImageGrid eps_a = cfg_combine(predict_noise(x, cond_a, t, sched, models), eps_u, cfg.guidance_scale);
        const ImageGrid eps_b = cfg_combine(predict_noise(x, cond_b, t, sched, models), eps_u, cfg.guidance_scale);
        ImageGrid mixed = eps_a;
        for (std::size_t i = 0; i < mixed.size(); ++i)
            if (mask.mask[i] == 0) mixed[i] = eps_b[i];
        if (observer) observer->on_step(t, eps_a, eps_b, mixed);
        return mixed;
    };

    GenRecord rec;
    rec.provenance = base_provenance(cfg, rng);
    rec.image = run_reverse(noise_at, models.width(), models.height(), cfg, sched, rng);
    rec.label = mix_labels(class_a, class_b, mask.lambda_real, models.num_classes());
    rec.provenance.method = "masked";
    rec.provenance.class_a = class_a;
    rec.provenance.class_b = class_b;
    rec.provenance.lambda_sampled = mask.lambda_sampled;
    rec.provenance.lambda_real = mask.lambda_real;
    rec.provenance.rect = mask.rect;
    rec.mask = mask;
    return rec;
}

GenRecord generate_with_mask(int class_a, int class_b, const MaskSpec& mask, const SamplerConfig& cfg,
                             const Schedule& sched, const ModelRegistry& models, Rng& rng) {
    return generate_with_mask(class_a, class_b, mask, cfg, sched, models, rng, nullptr);
}

GenRecord generate_noisecutmix(int class_a, int class_b, const SamplerConfig& cfg, const Schedule& sched,
                               const ModelRegistry& models, double alpha, Rng& rng) {
    cfg.validate(sched);
    models.validate(Condition::of_class(class_a));
    models.validate(Condition::of_class(class_b));
    const std::uint64_t seed = rng.seed();
    const double lambda = sample_lambda(alpha, rng);
    const MaskSpec mask = sample_mask(models.width(), models.height(), lambda, rng);
    GenRecord rec = generate_with_mask(class_a, class_b, mask, cfg, sched, models, rng);
    rec.provenance.method = "noisecutmix";
    rec.provenance.alpha = alpha;
    rec.provenance.seed = seed;
    return rec;
}

GenRecord regenerate(const Provenance& prov, const Schedule& sched, const ModelRegistry& models) {
    SamplerConfig cfg{prov.sampler, prov.steps, prov.guidance_scale};
    Rng rng(prov.seed);
    if (prov.method == "noisecutmix") {
        if (!prov.class_b) throw std::invalid_argument("regenerate: mixed record without second class");
        return generate_noisecutmix(prov.class_a, *prov.class_b, cfg, sched, models, prov.alpha, rng);
    }
    if (prov.method == "masked") {
        if (!prov.class_b) throw std::invalid_argument("regenerate: mixed record without second class");
        const CutRect& r = prov.rect;
        const MaskSpec mask = mask_from_cells(models.width(), models.height(), r.col_begin, r.col_end, r.row_begin,
                                              r.row_end, prov.lambda_sampled);
        GenRecord rec = generate_with_mask(prov.class_a, *prov.class_b, mask, cfg, sched, models, rng);
        rec.provenance.rect = r;
        return rec;
    }
    const Condition cond = prov.class_a < 0 ? Condition::unconditional() : Condition::of_class(prov.class_a);
    GenRecord rec = generate_single(cond, cfg, sched, models, rng);
    rec.provenance.method = prov.method;
    return rec;
}

}  // namespace noisemix
