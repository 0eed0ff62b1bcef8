#pragma once

#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "noisemix/mask.hpp"
#include "noisemix/rng.hpp"
#include "noisemix/schedule.hpp"

namespace noisemix {

struct Sample {
    ImageGrid image;
    SoftLabel label;
};

enum class AugmentKind { none, cutmix, mixup };

std::string_view to_string(AugmentKind kind) noexcept;
AugmentKind parse_augment_kind(std::string_view name);

struct AugmentPolicy {
    AugmentKind kind = AugmentKind::none;
    double alpha = 1.0;
    double probability = 0.5;

    void validate() const;

    static AugmentPolicy none() { return {AugmentKind::none, 1.0, 0.0}; }
    static AugmentPolicy cutmix(double alpha = 1.0, double probability = 0.5) {
        return {AugmentKind::cutmix, alpha, probability};
    }
    static AugmentPolicy mixup(double alpha = 0.2, double probability = 0.5) {
        return {AugmentKind::mixup, alpha, probability};
    }
};

/// Pastes the masked-out region of b onto a: pixel = a where mask = 1, b where
/// mask = 0. The label weight follows the realized mask area.
Sample cutmix_with_mask(const Sample& a, const Sample& b, const MaskSpec& mask);

/// lambda * a + (1 - lambda) * b for both pixels and labels.
Sample mixup_with_lambda(const Sample& a, const Sample& b, double lambda);

Sample cutmix_pair(const Sample& a, const Sample& b, double alpha, Rng& rng);
Sample mixup_pair(const Sample& a, const Sample& b, double alpha, Rng& rng);

/// What apply_policy did to a batch, enough to replay it.
struct AugmentTrace {
    bool applied = false;
    std::vector<std::size_t> partner;
    std::vector<double> lambda;  // realized lambda per element
    std::vector<MaskSpec> masks;  // cutmix only
};

/// Batch-level CutMix/MixUp: with the policy's probability (one draw per
/// batch) every element is mixed with its partner under a random permutation.
std::vector<Sample> apply_policy(const std::vector<Sample>& batch, const AugmentPolicy& policy, Rng& rng,
                                 AugmentTrace* trace = nullptr);

}  // namespace noisemix
