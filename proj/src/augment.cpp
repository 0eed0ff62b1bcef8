#include "noisemix/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace noisemix {

std::string_view to_string(AugmentKind kind) noexcept {
    switch (kind) {
        case AugmentKind::none: return "none";
        case AugmentKind::cutmix: return "cutmix";
        case AugmentKind::mixup: return "mixup";
    }
    return "unknown";
}

AugmentKind parse_augment_kind(std::string_view name) {
    if (name == "none") return AugmentKind::none;
    if (name == "cutmix") return AugmentKind::cutmix;
    if (name == "mixup") return AugmentKind::mixup;
    throw std::invalid_argument("unknown augmentation '" + std::string(name) + "'");
}

void AugmentPolicy::validate() const {
    if (!(probability >= 0.0 && probability <= 1.0))
        throw std::invalid_argument("AugmentPolicy: probability must lie in [0, 1]");
    if (kind != AugmentKind::none && !(alpha > 0.0))
        throw std::invalid_argument("AugmentPolicy: alpha must be positive");
}

namespace {

void check_pair(const Sample& a, const Sample& b, const char* what) {
    require_same_shape(a.image, b.image, what);
    if (a.label.probs.size() != b.label.probs.size())
        throw std::invalid_argument(std::string(what) + ": label sizes differ");
}

}  // namespace

Sample cutmix_with_mask(const Sample& a, const Sample& b, const MaskSpec& mask) {
    check_pair(a, b, "cutmix");
    if (mask.width != a.image.width || mask.height != a.image.height)
        throw std::invalid_argument("cutmix: mask shape differs from the images");
    Sample out{a.image, blend_labels(a.label, b.label, mask.lambda_real)};
    for (std::size_t i = 0; i < out.image.size(); ++i)
        if (mask.mask[i] == 0) out.image[i] = b.image[i];
    return out;
}

Sample mixup_with_lambda(const Sample& a, const Sample& b, double lambda) {
    check_pair(a, b, "mixup");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("mixup: lambda outside [0, 1]");
    Sample out{a.image, blend_labels(a.label, b.label, lambda)};
    const double rest = 1.0 - lambda;
    for (std::size_t i = 0; i < out.image.size(); ++i) out.image[i] = lambda * a.image[i] + rest * b.image[i];
    return out;
}

Sample cutmix_pair(const Sample& a, const Sample& b, double alpha, Rng& rng) {
    check_pair(a, b, "cutmix");
    const double lambda = sample_lambda(alpha, rng);
    return cutmix_with_mask(a, b, sample_mask(a.image.width, a.image.height, lambda, rng));
}

Sample mixup_pair(const Sample& a, const Sample& b, double alpha, Rng& rng) {
    check_pair(a, b, "mixup");
    return mixup_with_lambda(a, b, sample_lambda(alpha, rng));
}

std::vector<Sample> apply_policy(const std::vector<Sample>& batch, const AugmentPolicy& policy, Rng& rng,
                                 AugmentTrace* trace) {
    policy.validate();
    if (trace) *trace = AugmentTrace{};
    if (policy.kind == AugmentKind::none) return batch;
    if (batch.size() < 2) throw std::invalid_argument("apply_policy: mixing needs a batch of at least 2");
    if (!(rng.uniform() < policy.probability)) return batch;

    std::vector<std::size_t> perm(batch.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_index(i + 1)]);

    std::vector<Sample> out;
    out.reserve(batch.size());
    if (trace) {
        trace->applied = true;
        trace->partner = perm;
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Sample& a = batch[i];
        const Sample& b = batch[perm[i]];
        const double lambda = sample_lambda(policy.alpha, rng);
        if (policy.kind == AugmentKind::cutmix) {
            MaskSpec mask = sample_mask(a.image.width, a.image.height, lambda, rng);
            out.push_back(cutmix_with_mask(a, b, mask));
            if (trace) {
                trace->lambda.push_back(mask.lambda_real);
                trace->masks.push_back(std::move(mask));
            }
        } else {
            out.push_back(mixup_with_lambda(a, b, lambda));
            if (trace) trace->lambda.push_back(lambda);
        }
    }
    return out;
}

}  // namespace noisemix
