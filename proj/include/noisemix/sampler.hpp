#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "noisemix/denoiser.hpp"
#include "noisemix/mask.hpp"
#include "noisemix/rng.hpp"
#include "noisemix/schedule.hpp"

namespace noisemix {

enum class SamplerKind { ancestral, dpm_solver_pp_2m };

std::string_view to_string(SamplerKind kind) noexcept;
SamplerKind parse_sampler_kind(std::string_view name);

struct SamplerConfig {
    SamplerKind kind = SamplerKind::dpm_solver_pp_2m;
    int num_inference_steps = 25;
    double guidance_scale = 7.5;

    /// Throws std::invalid_argument unless 1 <= steps <= T and scale >= 0.
    void validate(const Schedule& sched) const;
};

/// n + 1 timesteps from T down to 0, evenly spaced in t and rounded to the
/// nearest index. Strictly decreasing for 1 <= n <= T.
std::vector<int> inference_timesteps(int num_steps, int num_inference_steps);

/// One DDPM ancestral step: forms x0_hat from eps_hat, takes the Gaussian
/// posterior mean toward t_to and adds posterior noise unless t_to == 0.
ImageGrid step_ancestral(const ImageGrid& x_t, const ImageGrid& eps_hat, int t_from, int t_to,
                         const Schedule& sched, Rng& rng);

/// Timesteps feeding one multistep update: the previous step (if any), the
/// current step and the target.
struct StepTriple {
    std::optional<int> t_prev;
    int t_from = 0;
    int t_to = 0;
};

/// DPM-Solver++(2M) update in the data-prediction parametrization. Falls back
/// to first order when no previous data prediction is available and when the
/// target is t = 0 (where log-SNR is infinite and the update reduces to x0_hat).
ImageGrid step_dpm_pp_2m(const ImageGrid& x, const ImageGrid& datapred_curr, const ImageGrid* datapred_prev,
                         const StepTriple& steps, const Schedule& sched);

/// x0_hat = (x_t - sigma_t * eps) / a_t.
ImageGrid predict_x0(const ImageGrid& x_t, const ImageGrid& eps, int t, const Schedule& sched);

/// Regeneration record of one synthetic sample.
struct Provenance {
    std::string method;
    int class_a = 0;
    std::optional<int> class_b;
    double alpha = 0.0;
    double lambda_sampled = 1.0;
    double lambda_real = 1.0;
    CutRect rect;
    std::uint64_t seed = 0;
    SamplerKind sampler = SamplerKind::dpm_solver_pp_2m;
    int steps = 0;
    double guidance_scale = 0.0;
};

struct GenRecord {
    ImageGrid image;
    SoftLabel label;
    std::optional<MaskSpec> mask;  // only for mask-mixed generations
    Provenance provenance;
};

/// Generates one sample of the given condition from standard-normal x_T,
/// applying guidance against the unconditional prediction at every step.
GenRecord generate_single(const Condition& cond, const SamplerConfig& cfg, const Schedule& sched,
                          const ModelRegistry& models, Rng& rng);

/// Mask-gated generation with a caller-supplied mask: at every step the noise
/// is eps_A where mask = 1 and eps_B where mask = 0, each guided against one
/// shared unconditional prediction. The label comes from the mask's realized
/// area.
GenRecord generate_with_mask(int class_a, int class_b, const MaskSpec& mask, const SamplerConfig& cfg,
                             const Schedule& sched, const ModelRegistry& models, Rng& rng);

/// Samples lambda ~ Beta(alpha, alpha) and one mask, then runs
/// generate_with_mask on the same generator.
GenRecord generate_noisecutmix(int class_a, int class_b, const SamplerConfig& cfg, const Schedule& sched,
                               const ModelRegistry& models, double alpha, Rng& rng);

/// Rebuilds a record from its provenance alone.
GenRecord regenerate(const Provenance& prov, const Schedule& sched, const ModelRegistry& models);

/// Observer hook for tests: receives eps_A, eps_B and the mixed noise at
/// every step of generate_with_mask.
struct MixObserver {
    virtual ~MixObserver() = default;
    virtual void on_step(int t, const ImageGrid& eps_a, const ImageGrid& eps_b, const ImageGrid& mixed) = 0;
};

GenRecord generate_with_mask(int class_a, int class_b, const MaskSpec& mask, const SamplerConfig& cfg,
                             const Schedule& sched, const ModelRegistry& models, Rng& rng,
                             MixObserver* observer);

}  // namespace noisemix
