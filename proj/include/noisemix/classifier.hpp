#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "noisemix/augment.hpp"
#include "noisemix/schedule.hpp"

namespace noisemix {

/// Two-layer perceptron: input -> hidden (ReLU) -> K logits. All parameters
/// live in one flat vector laid out as [W1 (hidden x input), b1, W2 (K x hidden), b2].
class MlpClassifier {
public:
    MlpClassifier() = default;
    MlpClassifier(int input, int hidden, int classes);

    /// He-style fan-in scaled normal weights, zero biases.
    static MlpClassifier initialized(int input, int hidden, int classes, std::uint64_t seed);

    int input_size() const noexcept { return input_; }
    int hidden_size() const noexcept { return hidden_; }
    int num_classes() const noexcept { return classes_; }

    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }

    double& w1(int h, int i) { return params_[static_cast<std::size_t>(h) * input_ + i]; }
    double w1(int h, int i) const { return params_[static_cast<std::size_t>(h) * input_ + i]; }
    double& b1(int h) { return params_[b1_offset() + h]; }
    double b1(int h) const { return params_[b1_offset() + h]; }
    double& w2(int k, int h) { return params_[w2_offset() + static_cast<std::size_t>(k) * hidden_ + h]; }
    double w2(int k, int h) const { return params_[w2_offset() + static_cast<std::size_t>(k) * hidden_ + h]; }
    double& b2(int k) { return params_[b2_offset() + k]; }
    double b2(int k) const { return params_[b2_offset() + k]; }

    std::size_t b1_offset() const noexcept { return static_cast<std::size_t>(hidden_) * input_; }
    std::size_t w2_offset() const noexcept { return b1_offset() + hidden_; }
    std::size_t b2_offset() const noexcept { return w2_offset() + static_cast<std::size_t>(classes_) * hidden_; }

    std::vector<double> logits(std::span<const double> x) const;
    int predict(std::span<const double> x) const;

    bool all_finite() const noexcept;

    friend bool operator==(const MlpClassifier&, const MlpClassifier&) = default;

private:
    int input_ = 0;
    int hidden_ = 0;
    int classes_ = 0;
    std::vector<double> params_;
};

/// -sum_k target_k * log softmax(logits)_k, stabilized with log-sum-exp.
double soft_ce_loss(std::span<const double> logits, std::span<const double> target);

struct Gradient {
    std::vector<double> grad;  // same layout as MlpClassifier::params()
    double loss = 0.0;         // mean loss over the batch
};

/// Exact gradient of the mean soft cross-entropy over the batch.
Gradient gradient(const MlpClassifier& model, std::span<const Sample> batch);

/// Mean soft cross-entropy over the batch without the backward pass.
double batch_loss(const MlpClassifier& model, std::span<const Sample> batch);

struct LabeledSample {
    ImageGrid image;
    int class_id = 0;
};

/// Top-1 accuracy; argmax ties go to the lowest class index.
double evaluate(const MlpClassifier& model, std::span<const LabeledSample> testset);

struct TrainConfig {
    int batch_size = 64;
    double learning_rate = 0.001;
    int epochs = 30;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double val_fraction = 0.2;
    int hidden = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

class Adam {
public:
    Adam(std::size_t num_params, double lr, double beta1, double beta2, double eps);
    void step(std::span<double> params, std::span<const double> grad);

private:
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    long long t_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

/// Training example; synthetic samples never enter the validation split.
struct TrainSample {
    Sample sample;
    bool synthetic = false;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    MlpClassifier model;
    std::vector<EpochStats> history;
    int best_epoch = -1;  // -1 when no epoch ran
    double best_val_accuracy = 0.0;
    std::size_t train_size = 0;
    std::size_t val_size = 0;
};

/// Splits the real samples into train/validation (stratified by hard label),
/// trains with Adam on mini-batches transformed by the policy and returns the
/// snapshot of the epoch with the highest validation accuracy (earliest on ties).
TrainResult train(const std::vector<TrainSample>& dataset, const TrainConfig& cfg, const AugmentPolicy& policy);

/// Indices of the validation split chosen by `train` for this dataset/config.
std::vector<std::size_t> validation_indices(const std::vector<TrainSample>& dataset, const TrainConfig& cfg);

}  // namespace noisemix
