#include "noisemix/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "noisemix/errors.hpp"
#include "noisemix/rng.hpp"

namespace noisemix {

MlpClassifier::MlpClassifier(int input, int hidden, int classes)
    : input_(input), hidden_(hidden), classes_(classes) {
    if (input < 1 || hidden < 1 || classes < 2) throw std::invalid_argument("MlpClassifier: invalid layer sizes");
    params_.assign(b2_offset() + static_cast<std::size_t>(classes), 0.0);
}

MlpClassifier MlpClassifier::initialized(int input, int hidden, int classes, std::uint64_t seed) {
    MlpClassifier m(input, hidden, classes);
    Rng rng(derive_seed(seed, "init"));
    const double s1 = std::sqrt(2.0 / input);
    const double s2 = std::sqrt(2.0 / hidden);
    for (int h = 0; h < hidden; ++h)
        for (int i = 0; i < input; ++i) m.w1(h, i) = s1 * rng.normal();
    for (int k = 0; k < classes; ++k)
        for (int h = 0; h < hidden; ++h) m.w2(k, h) = s2 * rng.normal();
    return m;
}

namespace {

void hidden_preactivation(const MlpClassifier& m, std::span<const double> x, std::vector<double>& pre) {
    pre.resize(static_cast<std::size_t>(m.hidden_size()));
    const auto p = m.params();
    const std::size_t in = static_cast<std::size_t>(m.input_size());
    for (int h = 0; h < m.hidden_size(); ++h) {
        const double* row = p.data() + static_cast<std::size_t>(h) * in;
        double acc = m.b1(h);
        for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
        pre[static_cast<std::size_t>(h)] = acc;
    }
}

void output_logits(const MlpClassifier& m, const std::vector<double>& hidden, std::vector<double>& z) {
    z.resize(static_cast<std::size_t>(m.num_classes()));
    for (int k = 0; k < m.num_classes(); ++k) {
        double acc = m.b2(k);
        for (int h = 0; h < m.hidden_size(); ++h) acc += m.w2(k, h) * hidden[static_cast<std::size_t>(h)];
        z[static_cast<std::size_t>(k)] = acc;
    }
}

void check_input(const MlpClassifier& m, std::size_t n) {
    if (n != static_cast<std::size_t>(m.input_size()))
        throw std::invalid_argument("classifier: input size " + std::to_string(n) + " does not match model input " +
                                    std::to_string(m.input_size()));
}

}  // namespace

std::vector<double> MlpClassifier::logits(std::span<const double> x) const {
    check_input(*this, x.size());
    std::vector<double> h;
    hidden_preactivation(*this, x, h);
    for (double& v : h) v = std::max(v, 0.0);
    std::vector<double> z;
    output_logits(*this, h, z);
    return z;
}

int MlpClassifier::predict(std::span<const double> x) const {
    const auto z = logits(x);
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

bool MlpClassifier::all_finite() const noexcept {
    return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

double soft_ce_loss(std::span<const double> logits, std::span<const double> target) {
    if (logits.size() != target.size() || logits.empty())
        throw std::invalid_argument("soft_ce_loss: logits and target sizes differ");
    const double peak = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - peak);
    const double lse = peak + std::log(sum);
    double loss = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k)
        if (target[k] != 0.0) loss += target[k] * (lse - logits[k]);
    return loss;
}

Gradient gradient(const MlpClassifier& model, std::span<const Sample> batch) {
    if (batch.empty()) throw std::invalid_argument("gradient: empty batch");
    Gradient g;
    g.grad.assign(model.params().size(), 0.0);
    const std::size_t in = static_cast<std::size_t>(model.input_size());
    const std::size_t H = static_cast<std::size_t>(model.hidden_size());
    const std::size_t K = static_cast<std::size_t>(model.num_classes());
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    std::vector<double> pre, hid, z, dz(K), dh(H);
    for (const Sample& s : batch) {
        check_input(model, s.image.size());
        if (s.label.probs.size() != K) throw std::invalid_argument("gradient: label size does not match classes");
        const std::span<const double> x = s.image.values;
        hidden_preactivation(model, x, pre);
        hid = pre;
        for (double& v : hid) v = std::max(v, 0.0);
        output_logits(model, hid, z);
        g.loss += soft_ce_loss(z, s.label.probs) * inv_b;

        const double peak = *std::max_element(z.begin(), z.end());
        double zsum = 0.0;
        for (std::size_t k = 0; k < K; ++k) zsum += std::exp(z[k] - peak);
        double tsum = 0.0;
        for (double t : s.label.probs) tsum += t;
        for (std::size_t k = 0; k < K; ++k)
            dz[k] = (std::exp(z[k] - peak) / zsum * tsum - s.label.probs[k]) * inv_b;

        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            double* gw2 = g.grad.data() + model.w2_offset() + k * H;
            for (std::size_t h = 0; h < H; ++h) {
                gw2[h] += dz[k] * hid[h];
                dh[h] += model.w2(static_cast<int>(k), static_cast<int>(h)) * dz[k];
            }
            g.grad[model.b2_offset() + k] += dz[k];
        }
        for (std::size_t h = 0; h < H; ++h) {
            if (!(pre[h] > 0.0)) continue;
            double* gw1 = g.grad.data() + h * in;
            for (std::size_t i = 0; i < in; ++i) gw1[i] += dh[h] * x[i];
            g.grad[model.b1_offset() + h] += dh[h];
        }
    }
    return g;
}

double batch_loss(const MlpClassifier& model, std::span<const Sample> batch) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    double loss = 0.0;
    for (const Sample& s : batch) loss += soft_ce_loss(model.logits(s.image.values), s.label.probs);
    return loss / static_cast<double>(batch.size());
}

double evaluate(const MlpClassifier& model, std::span<const LabeledSample> testset) {
    if (testset.empty()) throw std::invalid_argument("evaluate: empty test set");
    std::size_t correct = 0;
    for (const auto& s : testset)
        if (model.predict(s.image.values) == s.class_id) ++correct;
    return static_cast<double>(correct) / static_cast<double>(testset.size());
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("TrainConfig: val_fraction must lie in (0, 1)");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    if (hidden < 1) throw std::invalid_argument("TrainConfig: hidden must be >= 1");
}

Adam::Adam(std::size_t num_params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(num_params, 0.0), v_(num_params, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
        throw std::invalid_argument("Adam::step: parameter count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
}

namespace {

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
}

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

Split split_dataset(const std::vector<TrainSample>& dataset, const TrainConfig& cfg) {
    if (dataset.size() < 10) throw std::invalid_argument("train: need at least 10 samples");
    const int K = dataset.front().sample.label.num_classes();
    for (const auto& s : dataset) {
        if (s.sample.label.num_classes() != K) throw std::invalid_argument("train: inconsistent label sizes");
        if (!s.sample.image.same_shape(dataset.front().sample.image))
            throw std::invalid_argument("train: inconsistent image sizes");
    }

    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(K));
    Split split;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (dataset[i].synthetic)
            split.train.push_back(i);
        else
            by_class[static_cast<std::size_t>(dataset[i].sample.label.argmax())].push_back(i);
    }

    Rng rng(derive_seed(cfg.seed, "split"));
    std::vector<int> train_count(static_cast<std::size_t>(K), 0);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& members = by_class[c];
        if (members.empty()) continue;
        shuffle_indices(members, rng);
        const auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * members.size()));
        if (n_val >= members.size())
            throw dataset_error("train: class " + std::to_string(c) + " has no training samples after the split");
        split.val.insert(split.val.end(), members.begin(), members.begin() + static_cast<long>(n_val));
        split.train.insert(split.train.end(), members.begin() + static_cast<long>(n_val), members.end());
    }
    for (std::size_t i : split.train) ++train_count[static_cast<std::size_t>(dataset[i].sample.label.argmax())];
    const auto present = std::count_if(train_count.begin(), train_count.end(), [](int n) { return n > 0; });
    if (present < 2) throw dataset_error("train: fewer than 2 classes in the training split");
    if (split.val.empty()) throw dataset_error("train: validation split is empty");
    for (std::size_t i : split.val)
        if (dataset[i].synthetic) throw dataset_error("train: synthetic sample in the validation split");
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.train.begin(), split.train.end());
    return split;
}

}  // namespace

std::vector<std::size_t> validation_indices(const std::vector<TrainSample>& dataset, const TrainConfig& cfg) {
    cfg.validate();
    return split_dataset(dataset, cfg).val;
}

TrainResult train(const std::vector<TrainSample>& dataset, const TrainConfig& cfg, const AugmentPolicy& policy) {
    cfg.validate();
    policy.validate();
    const Split split = split_dataset(dataset, cfg);
    const auto& first = dataset.front().sample;

    TrainResult result;
    result.train_size = split.train.size();
    result.val_size = split.val.size();
    result.model = MlpClassifier::initialized(static_cast<int>(first.image.size()), cfg.hidden,
                                              first.label.num_classes(), cfg.seed);

    std::vector<LabeledSample> val;
    val.reserve(split.val.size());
    for (std::size_t i : split.val) val.push_back({dataset[i].sample.image, dataset[i].sample.label.argmax()});

    MlpClassifier model = result.model;
    Adam adam(model.params().size(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
    Rng rng(derive_seed(cfg.seed, "epochs"));
    std::vector<std::size_t> order = split.train;
    std::vector<Sample> batch;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_indices(order, rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.clear();
            for (std::size_t j = start; j < end; ++j) batch.push_back(dataset[order[j]].sample);
            if (batch.size() >= 2) batch = apply_policy(batch, policy, rng);
            const Gradient g = gradient(model, batch);
            if (!std::isfinite(g.loss))
                throw numerical_error("train: non-finite loss at epoch " + std::to_string(epoch));
            adam.step(model.params(), g.grad);
            loss_sum += g.loss * static_cast<double>(batch.size());
        }
        if (!model.all_finite()) throw numerical_error("train: non-finite parameters at epoch " + std::to_string(epoch));

        EpochStats stats{epoch, loss_sum / static_cast<double>(order.size()), evaluate(model, val)};
        result.history.push_back(stats);
        if (result.best_epoch < 0 || stats.val_accuracy > result.best_val_accuracy) {
            result.best_epoch = epoch;
            result.best_val_accuracy = stats.val_accuracy;
            result.model = model;
        }
    }
    return result;
}

}  // namespace noisemix
