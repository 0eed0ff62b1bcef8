// Command-line front end: dataset/sample generation, offline augmentation,
// training, evaluation, full experiments and report rendering.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "noisemix/errors.hpp"
#include "noisemix/harness.hpp"
#include "noisemix/io.hpp"

namespace fs = std::filesystem;
using namespace noisemix;

namespace {

constexpr int kExitInvalidConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;
constexpr const char* kOutputDirEnv = "NOISEMIX_OUTPUT_DIR";

ExperimentConfig load_config(const std::string& path) {
    if (path.empty()) {
        ExperimentConfig cfg;
        if (const char* env = std::getenv(kOutputDirEnv)) cfg.output_dir = env;
        return cfg;
    }
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw config_error(std::string("config: ") + e.what());
    }
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    if (!j.contains("output_dir"))
        if (const char* env = std::getenv(kOutputDirEnv)) cfg.output_dir = env;
    return cfg;
}

std::vector<Sample> to_samples(const std::vector<LabeledImage>& images, int num_classes) {
    std::vector<Sample> out;
    out.reserve(images.size());
    for (const auto& li : images) out.push_back({li.image, SoftLabel::one_hot(li.class_id, num_classes)});
    return out;
}

struct GenerateArgs {
    std::string config;
    std::string method = "noisecutmix";
    std::string split = "train";
    std::string out;
    long long count = -1;
    std::uint64_t seed = 0;
    int threads = 1;
};

int cmd_generate(const GenerateArgs& a) {
    const ExperimentConfig cfg = load_config(a.config);
    if (!is_known_method(a.method)) throw config_error("unknown method '" + a.method + "'");
    const TrialData data = make_trial_data(cfg, a.seed);
    const int K = data.models.num_classes();

    if (a.method == "original") {
        if (a.split != "train" && a.split != "test") throw config_error("--split must be train or test");
        const auto samples = to_samples(a.split == "train" ? data.train : data.test, K);
        write_samples(a.out + ".bin", samples);
        std::cout << "wrote " << samples.size() << " real " << a.split << " samples to " << a.out << ".bin\n";
        return 0;
    }
    if (a.method != "gen_random" && a.method != "noisecutmix")
        throw config_error("generate: '" + a.method + "' is a pixel-space policy; use `augment`");

    const Schedule sched = make_cosine_schedule(cfg.schedule_steps);
    const std::size_t count = a.count >= 0 ? static_cast<std::size_t>(a.count)
                                           : augmentation_count(cfg.augmentation_ratio, data.train.size());
    if (count == 0) throw config_error("generate: nothing to generate (count is 0)");
    const auto records = generate_for_method(a.method, cfg, sched, data.models, count, a.seed, a.threads);
    std::vector<Sample> samples;
    for (const auto& r : records) samples.push_back({r.image, r.label});
    write_samples(a.out + ".bin", samples);
    write_provenance(a.out + ".prov.tsv", records);
    export_grid(records, a.out + ".pgm");
    std::cout << "wrote " << records.size() << " " << a.method << " records to " << a.out
              << ".{bin,prov.tsv,pgm}\n";
    return 0;
}

struct AugmentArgs {
    std::string in;
    std::string out;
    std::string policy = "cutmix";
    double alpha = 1.0;
    double probability = 0.5;
    int batch = 64;
    std::uint64_t seed = 0;
};

int cmd_augment(const AugmentArgs& a) {
    const AugmentPolicy policy{parse_augment_kind(a.policy), a.alpha, a.probability};
    policy.validate();
    if (a.batch < 2) throw config_error("--batch must be >= 2");
    const SampleFile file = read_samples(a.in);
    Rng rng(a.seed);
    std::vector<Sample> out;
    out.reserve(file.samples.size());
    for (std::size_t start = 0; start < file.samples.size(); start += static_cast<std::size_t>(a.batch)) {
        const std::size_t end = std::min(file.samples.size(), start + static_cast<std::size_t>(a.batch));
        std::vector<Sample> batch(file.samples.begin() + static_cast<long>(start),
                                  file.samples.begin() + static_cast<long>(end));
        if (batch.size() >= 2) batch = apply_policy(batch, policy, rng);
        out.insert(out.end(), batch.begin(), batch.end());
    }
    write_samples(a.out, out);
    std::cout << "wrote " << out.size() << " samples to " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string config;
    std::string real;
    std::vector<std::string> synthetic;
    std::string out;
    std::string history;
    std::string policy = "none";
    std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a) {
    const ExperimentConfig cfg = load_config(a.config);
    std::vector<TrainSample> set;
    const SampleFile real = read_samples(a.real);
    for (const auto& s : real.samples) set.push_back({s, false});
    for (const auto& path : a.synthetic) {
        const SampleFile f = read_samples(path);
        if (f.width != real.width || f.height != real.height || f.num_classes != real.num_classes)
            throw config_error("train: '" + path + "' does not match the real samples' shape");
        for (const auto& s : f.samples) set.push_back({s, true});
    }
    AugmentPolicy policy = AugmentPolicy::none();
    if (a.policy == "cutmix") policy = AugmentPolicy::cutmix(cfg.cutmix_alpha, cfg.augment_probability);
    else if (a.policy == "mixup") policy = AugmentPolicy::mixup(cfg.mixup_alpha, cfg.augment_probability);
    else if (a.policy != "none") throw config_error("unknown policy '" + a.policy + "'");

    const TrainResult result = train(set, cfg.train_config(a.seed), policy);
    write_model(a.out, result.model, a.seed);
    if (!a.history.empty()) write_history(a.history, result.history);
    std::cout << "trained on " << result.train_size << " samples (" << result.val_size << " validation); best epoch "
              << result.best_epoch << " val accuracy " << format_double(result.best_val_accuracy) << "\n";
    return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_path) {
    const MlpClassifier model = read_model(model_path);
    const SampleFile data = read_samples(data_path);
    std::vector<LabeledSample> test;
    for (const auto& s : data.samples) test.push_back({s.image, s.label.argmax()});
    std::cout << "accuracy " << format_double(evaluate(model, test)) << "\n";
    return 0;
}

int cmd_experiment(const std::string& config, const std::string& out, int threads) {
    ExperimentConfig cfg = load_config(config);
    if (!out.empty()) cfg.output_dir = out;
    if (threads > 0) cfg.threads = threads;
    const ResultTable table = run_experiment(cfg);
    std::cout << render_result_table(table);
    if (cfg.trials == 1) std::cout << "(single trial: std reported as 0)\n";
    std::cout << "outputs in " << cfg.output_dir << "\n";
    return 0;
}

int cmd_report(const std::string& dir_arg, std::size_t montage_rows) {
    const fs::path dir = dir_arg;
    const ResultTable table = read_result_table(dir / "results.tsv");
    const std::string text = render_result_table(table);
    std::cout << text;
    {
        std::ofstream rep(dir / "report.txt", std::ios::trunc);
        rep << text;
        if (!rep) throw io_error("cannot write report.txt");
    }

    // Montages are rebuilt from provenance alone, which also checks that the
    // stored records regenerate.
    if (!fs::exists(dir / "provenance.tsv") || !fs::exists(dir / "config.json")) return 0;
    ExperimentConfig cfg = ExperimentConfig::load(dir / "config.json");
    const Schedule sched = make_cosine_schedule(cfg.schedule_steps);
    const ModelRegistry models = make_bump_models(cfg.dataset);

    std::ifstream prov(dir / "provenance.tsv");
    std::string line;
    std::getline(prov, line);
    std::map<std::string, std::vector<GenRecord>> by_method;
    while (std::getline(prov, line)) {
        const auto t1 = line.find('\t');
        const auto t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos) throw io_error("malformed provenance.tsv");
        if (line.substr(t1 + 1, t2 - t1 - 1) != "0") continue;
        auto& recs = by_method[line.substr(0, t1)];
        if (recs.size() < montage_rows) recs.push_back(regenerate(parse_provenance_line(line.substr(t2 + 1)), sched, models));
    }
    for (const auto& [method, recs] : by_method) {
        if (recs.empty()) continue;
        const fs::path path = dir / ("report_" + method + ".pgm");
        export_grid(recs, path);
        std::cout << "montage " << path.string() << " (" << recs.size() << " records)\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mask-gated noise mixing for diffusion-based data augmentation"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Emit real samples or synthetic records for a method");
    g->add_option("--config", gen.config, "Experiment config (JSON)");
    g->add_option("--method", gen.method, "original | gen_random | noisecutmix");
    g->add_option("--split", gen.split, "train | test (method original only)");
    g->add_option("--count", gen.count, "Number of synthetic records (default: augmentation ratio x train size)");
    g->add_option("--seed", gen.seed, "Trial seed");
    g->add_option("--threads", gen.threads, "Generation threads")->check(CLI::PositiveNumber);
    g->add_option("--out", gen.out, "Output path prefix")->required();

    AugmentArgs aug;
    auto* au = app.add_subcommand("augment", "Apply CutMix/MixUp offline to a sample file");
    au->add_option("--in", aug.in, "Input sample file")->required();
    au->add_option("--out", aug.out, "Output sample file")->required();
    au->add_option("--policy", aug.policy, "cutmix | mixup | none");
    au->add_option("--alpha", aug.alpha, "Beta(alpha, alpha) parameter");
    au->add_option("--probability", aug.probability, "Per-batch augmentation probability");
    au->add_option("--batch", aug.batch, "Batch size for pairing");
    au->add_option("--seed", aug.seed, "Seed");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train the classifier on sample files");
    t->add_option("--config", tr.config, "Experiment config (JSON) for training knobs");
    t->add_option("--real", tr.real, "Real samples (validation is drawn from these)")->required();
    t->add_option("--synthetic", tr.synthetic, "Synthetic sample files (training only)");
    t->add_option("--policy", tr.policy, "Online augmentation: none | cutmix | mixup");
    t->add_option("--seed", tr.seed, "Training seed");
    t->add_option("--out", tr.out, "Model output file")->required();
    t->add_option("--history", tr.history, "Per-epoch history (TSV)");

    std::string model_path, data_path;
    auto* ev = app.add_subcommand("evaluate", "Score a trained model on a sample file");
    ev->add_option("--model", model_path, "Model file")->required();
    ev->add_option("--data", data_path, "Sample file (argmax labels)")->required();

    std::string exp_config, exp_out;
    int exp_threads = 0;
    auto* ex = app.add_subcommand("experiment", "Run every method over all trials and write the result table");
    ex->add_option("--config", exp_config, "Experiment config (JSON)");
    ex->add_option("--out", exp_out, "Output directory (overrides config and " + std::string(kOutputDirEnv) + ")");
    ex->add_option("--threads", exp_threads, "Generation threads");

    std::string report_dir;
    std::size_t montage_rows = 8;
    auto* rp = app.add_subcommand("report", "Re-render tables and montages from an experiment directory");
    rp->add_option("--dir", report_dir, "Experiment output directory")->required();
    rp->add_option("--rows", montage_rows, "Records per montage");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInvalidConfig;
    }

    try {
        if (*g) return cmd_generate(gen);
        if (*au) return cmd_augment(aug);
        if (*t) return cmd_train(tr);
        if (*ev) return cmd_evaluate(model_path, data_path);
        if (*ex) return cmd_experiment(exp_config, exp_out, exp_threads);
        if (*rp) return cmd_report(report_dir, montage_rows);
    } catch (const io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const numerical_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalidConfig;
    }
    return 0;
}
