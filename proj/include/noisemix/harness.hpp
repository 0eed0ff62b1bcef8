#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "noisemix/augment.hpp"
#include "noisemix/classifier.hpp"
#include "noisemix/denoiser.hpp"
#include "noisemix/sampler.hpp"

namespace noisemix {

/// The seven rows of the comparison table, in table order.
inline constexpr std::array<std::string_view, 7> kMethods = {
    "original", "cutmix", "mixup", "gen_random", "gen_random+cutmix", "gen_random+mixup", "noisecutmix",
};

bool is_known_method(std::string_view method) noexcept;

struct ExperimentConfig {
    BumpDatasetSpec dataset{4, 8, 8, 1.5, 0.5};
    int n_train_per_class = 10;
    int n_test_per_class = 100;

    int schedule_steps = 1000;
    SamplerConfig sampler{};
    double augmentation_ratio = 1.0;
    double noisecutmix_alpha = 1.0;
    double cutmix_alpha = 1.0;
    double mixup_alpha = 0.2;
    double augment_probability = 0.5;

    int epochs = 30;
    int batch_size = 64;
    double learning_rate = 0.001;
    int hidden = 64;
    double val_fraction = 0.2;

    std::vector<std::string> methods{kMethods.begin(), kMethods.end()};
    int trials = 5;
    std::uint64_t master_seed = 0;
    std::string output_dir = "noisemix_out";
    int threads = 1;

    /// Throws config_error on any violated invariant.
    void validate() const;

    /// Strict parse: unknown keys and wrongly typed values are config_error.
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    TrainConfig train_config(std::uint64_t seed) const;
    AugmentPolicy policy_for(std::string_view method) const;
};

struct MethodRun {
    std::string method;
    double accuracy = 0.0;
    std::size_t real_count = 0;
    std::vector<GenRecord> records;
    TrainResult training;
};

/// Real training/test samples for one trial. Shared by every method in the trial.
struct TrialData {
    ModelRegistry models;
    std::vector<LabeledImage> train;
    std::vector<LabeledImage> test;
};

TrialData make_trial_data(const ExperimentConfig& cfg, std::uint64_t trial_seed);

/// Synthetic records a method adds to the training set (empty for the
/// pixel-only methods). Record i is generated from its own derived seed, so
/// the result does not depend on `threads`.
std::vector<GenRecord> generate_for_method(std::string_view method, const ExperimentConfig& cfg,
                                           const Schedule& sched, const ModelRegistry& models, std::size_t count,
                                           std::uint64_t trial_seed, int threads);

/// Number of synthetic samples for a real training set of the given size.
std::size_t augmentation_count(double ratio, std::size_t real_count);

/// Builds the method's training set, trains and scores on the real test set.
MethodRun run_method(std::string_view method, const ExperimentConfig& cfg, std::uint64_t trial_seed);

/// Per-trial training set (real + synthetic) in the order handed to train().
std::vector<TrainSample> build_training_set(const TrialData& data, std::span<const GenRecord> records);

struct ResultRow {
    std::string method;
    std::vector<double> accuracies;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation; 0 for a single trial
};

struct ResultTable {
    std::vector<ResultRow> rows;

    const ResultRow* find(std::string_view method) const;
};

ResultRow summarize(std::string method, std::vector<double> accuracies);

std::uint64_t trial_seed(std::uint64_t master_seed, int trial);

/// Runs every configured method for every trial, then writes results.tsv,
/// provenance.tsv, histories.tsv, config.json, synthetic sample files and
/// montages into cfg.output_dir. The directory is checked before any compute.
ResultTable run_experiment(const ExperimentConfig& cfg);

void write_result_table(const std::filesystem::path& path, const ResultTable& table, int trials);
ResultTable read_result_table(const std::filesystem::path& path);

/// Human-readable rendering (accuracies in percent, mean (+- std)).
std::string render_result_table(const ResultTable& table);

}  // namespace noisemix
