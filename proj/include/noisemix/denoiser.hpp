#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "noisemix/schedule.hpp"

namespace noisemix {

inline constexpr double kMinVariance = 1e-6;

/// Gaussian image model for one class: mean grid and diagonal covariance.
struct ClassModel {
    int class_id = 0;
    ImageGrid mean;
    std::vector<double> var;
    double weight = 1.0;  // mixture weight of the unconditional branch (normalized on use)

    void validate() const;
};

/// The conditioning signal handed to the noise predictor: one class, or the
/// pooled all-class model that plays the role of the empty prompt.
class Condition {
public:
    static Condition unconditional() { return Condition{}; }
    static Condition of_class(int class_id) { return Condition{class_id}; }

    bool is_unconditional() const noexcept { return !class_id_.has_value(); }
    int class_id() const { return class_id_.value(); }

private:
    Condition() = default;
    explicit Condition(int id) : class_id_(id) {}
    std::optional<int> class_id_;
};

/// Immutable collection of class models indexed by class id (ids are 0..K-1).
class ModelRegistry {
public:
    explicit ModelRegistry(std::vector<ClassModel> models);

    int num_classes() const noexcept { return static_cast<int>(models_.size()); }
    int width() const noexcept { return models_.front().mean.width; }
    int height() const noexcept { return models_.front().mean.height; }
    const ClassModel& model(int class_id) const;
    std::span<const ClassModel> models() const noexcept { return models_; }
    bool contains(int class_id) const noexcept { return class_id >= 0 && class_id < num_classes(); }

    /// Throws std::invalid_argument when a class condition names an unknown class.
    void validate(const Condition& cond) const;

private:
    std::vector<ClassModel> models_;
};

struct LabeledImage {
    ImageGrid image;
    int class_id = 0;
};

struct BumpDatasetSpec {
    int num_classes = 2;
    int width = 8;
    int height = 8;
    double bump_sigma = 1.5;
    double noise_var = 0.1;
};

/// Center of class `class_id`'s bump on the fixed lattice (continuous pixel
/// coordinates; cell (x, y) has its center at (x + 0.5, y + 0.5)).
std::pair<double, double> bump_center(const BumpDatasetSpec& spec, int class_id);

/// Class models whose means are unit-amplitude Gaussian bumps on a lattice.
ModelRegistry make_bump_models(const BumpDatasetSpec& spec);

/// Exact draws from each class model, n_per_class per class, grouped by class.
std::vector<LabeledImage> sample_class_images(const ModelRegistry& models, int n_per_class, std::uint64_t seed);

struct BumpDataset {
    ModelRegistry models;
    std::vector<LabeledImage> samples;
};

BumpDataset make_bump_dataset(const BumpDatasetSpec& spec, std::uint64_t seed, int n_per_class);

/// Optimal noise prediction for the Gaussian class models under the forward
/// process. For a class condition, x_t ~ N(a_t mu, a_t^2 Sigma + sigma_t^2) and
/// eps* = sigma_t (x_t - a_t mu) / v_t. The unconditional branch mixes the
/// per-class predictions by their posterior responsibilities.
ImageGrid predict_noise(const ImageGrid& x_t, const Condition& cond, int t, const Schedule& sched,
                        const ModelRegistry& models);

}  // namespace noisemix
