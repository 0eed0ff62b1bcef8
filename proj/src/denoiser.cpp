#include "noisemix/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "noisemix/rng.hpp"

namespace noisemix {

void ClassModel::validate() const {
    if (var.size() != mean.size()) throw std::invalid_argument("ClassModel: variance grid size mismatch");
    for (double v : var)
        if (!(v >= kMinVariance) || !std::isfinite(v))
            throw std::invalid_argument("ClassModel: variances must be finite and >= 1e-6");
    if (!mean.all_finite()) throw std::invalid_argument("ClassModel: mean must be finite");
    if (!(weight > 0.0 && weight <= 1.0)) throw std::invalid_argument("ClassModel: weight must lie in (0, 1]");
}

ModelRegistry::ModelRegistry(std::vector<ClassModel> models) : models_(std::move(models)) {
    if (models_.empty()) throw std::invalid_argument("ModelRegistry: no class models");
    for (std::size_t i = 0; i < models_.size(); ++i) {
        models_[i].validate();
        if (models_[i].class_id != static_cast<int>(i))
            throw std::invalid_argument("ModelRegistry: class ids must be 0..K-1 in order");
        if (!models_[i].mean.same_shape(models_.front().mean))
            throw std::invalid_argument("ModelRegistry: class grids differ in shape");
    }
}

const ClassModel& ModelRegistry::model(int class_id) const {
    if (!contains(class_id)) throw std::invalid_argument("unknown class " + std::to_string(class_id));
    return models_[static_cast<std::size_t>(class_id)];
}

void ModelRegistry::validate(const Condition& cond) const {
    if (!cond.is_unconditional()) (void)model(cond.class_id());
}

namespace {

struct LatticeShape {
    int cols;
    int rows;
};

LatticeShape lattice_shape(const BumpDatasetSpec& spec) {
    // Lattice points sit at least 2 cells apart.
    const int max_cols = spec.width / 2;
    const int max_rows = spec.height / 2;
    const int capacity = max_cols * max_rows;
    if (spec.num_classes > capacity)
        throw std::invalid_argument("make_bump_dataset: " + std::to_string(spec.num_classes) +
                                    " classes exceed the " + std::to_string(capacity) + " lattice points of a " +
                                    std::to_string(spec.width) + "x" + std::to_string(spec.height) + " grid");
    int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.num_classes))));
    cols = std::min(cols, max_cols);
    const int rows = (spec.num_classes + cols - 1) / cols;
    if (rows > max_rows) throw std::invalid_argument("make_bump_dataset: lattice does not fit the grid");
    return {cols, rows};
}

void validate_spec(const BumpDatasetSpec& spec) {
    if (spec.num_classes < 2) throw std::invalid_argument("make_bump_dataset: need at least 2 classes");
    if (spec.width < 4 || spec.height < 4) throw std::invalid_argument("make_bump_dataset: grid must be at least 4x4");
    if (!(spec.bump_sigma > 0.0)) throw std::invalid_argument("make_bump_dataset: bump_sigma must be positive");
    if (!(spec.noise_var >= kMinVariance))
        throw std::invalid_argument("make_bump_dataset: noise_var must be >= 1e-6");
}

}  // namespace

std::pair<double, double> bump_center(const BumpDatasetSpec& spec, int class_id) {
    validate_spec(spec);
    const auto [cols, rows] = lattice_shape(spec);
    if (class_id < 0 || class_id >= spec.num_classes) throw std::invalid_argument("bump_center: unknown class");
    const int cx = class_id % cols;
    const int cy = class_id / cols;
    return {spec.width * (2.0 * cx + 1.0) / (2.0 * cols), spec.height * (2.0 * cy + 1.0) / (2.0 * rows)};
}

ModelRegistry make_bump_models(const BumpDatasetSpec& spec) {
    validate_spec(spec);
    std::vector<ClassModel> models;
    const double inv2s2 = 1.0 / (2.0 * spec.bump_sigma * spec.bump_sigma);
    for (int c = 0; c < spec.num_classes; ++c) {
        const auto [cx, cy] = bump_center(spec, c);
        ClassModel m;
        m.class_id = c;
        m.mean = ImageGrid(spec.width, spec.height);
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x) {
                const double dx = x + 0.5 - cx;
                const double dy = y + 0.5 - cy;
                m.mean.at(x, y) = std::exp(-(dx * dx + dy * dy) * inv2s2);
            }
        m.var.assign(m.mean.size(), spec.noise_var);
        m.weight = 1.0 / spec.num_classes;
        models.push_back(std::move(m));
    }
    return ModelRegistry(std::move(models));
}

std::vector<LabeledImage> sample_class_images(const ModelRegistry& models, int n_per_class, std::uint64_t seed) {
    if (n_per_class < 0) throw std::invalid_argument("sample_class_images: negative sample count");
    Rng rng(seed);
    std::vector<LabeledImage> out;
    out.reserve(static_cast<std::size_t>(n_per_class) * models.num_classes());
    for (const ClassModel& m : models.models()) {
        for (int n = 0; n < n_per_class; ++n) {
            LabeledImage li{m.mean, m.class_id};
            for (std::size_t i = 0; i < li.image.size(); ++i) li.image[i] += std::sqrt(m.var[i]) * rng.normal();
            out.push_back(std::move(li));
        }
    }
    return out;
}

BumpDataset make_bump_dataset(const BumpDatasetSpec& spec, std::uint64_t seed, int n_per_class) {
    ModelRegistry models = make_bump_models(spec);
    auto samples = sample_class_images(models, n_per_class, seed);
    return {std::move(models), std::move(samples)};
}

namespace {

void class_noise(const ImageGrid& x_t, const ClassModel& m, double ab, double a, double sigma, ImageGrid& out) {
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        const double v = ab * m.var[i] + (1.0 - ab);
        out[i] = sigma * (x_t[i] - a * m.mean[i]) / v;
    }
}

double class_log_density(const ImageGrid& x_t, const ClassModel& m, double ab, double a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        const double v = ab * m.var[i] + (1.0 - ab);
        const double d = x_t[i] - a * m.mean[i];
        acc += std::log(2.0 * std::numbers::pi * v) + d * d / v;
    }
    return -0.5 * acc;
}

}  // namespace

ImageGrid predict_noise(const ImageGrid& x_t, const Condition& cond, int t, const Schedule& sched,
                        const ModelRegistry& models) {
    if (t < 1 || t > sched.num_steps()) throw std::invalid_argument("predict_noise: step out of range");
    if (x_t.width != models.width() || x_t.height != models.height())
        throw std::invalid_argument("predict_noise: grid shape does not match the class models");
    models.validate(cond);

    const double ab = sched.alpha_bar(t);
    const double a = sched.signal(t);
    const double sigma = sched.noise(t);
    ImageGrid out(x_t.width, x_t.height);

    if (!cond.is_unconditional()) {
        class_noise(x_t, models.model(cond.class_id()), ab, a, sigma, out);
        return out;
    }
    const auto ms = models.models();
    if (ms.size() == 1) {
        class_noise(x_t, ms.front(), ab, a, sigma, out);
        return out;
    }

    // Responsibilities in log space, shifted by the max before exponentiating.
    std::vector<double> logw(ms.size());
    double total_weight = 0.0;
    for (const auto& m : ms) total_weight += m.weight;
    for (std::size_t c = 0; c < ms.size(); ++c)
        logw[c] = std::log(ms[c].weight / total_weight) + class_log_density(x_t, ms[c], ab, a);
    const double peak = *std::max_element(logw.begin(), logw.end());
    double z = 0.0;
    for (double& lw : logw) {
        lw = std::exp(lw - peak);
        z += lw;
    }

    ImageGrid tmp(x_t.width, x_t.height);
    for (std::size_t c = 0; c < ms.size(); ++c) {
        const double r = logw[c] / z;
        if (r == 0.0) continue;
        class_noise(x_t, ms[c], ab, a, sigma, tmp);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += r * tmp[i];
    }
    return out;
}

}  // namespace noisemix
