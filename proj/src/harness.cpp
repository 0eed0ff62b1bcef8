#include "noisemix/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "noisemix/errors.hpp"
#include "noisemix/io.hpp"

namespace noisemix {

using nlohmann::json;

bool is_known_method(std::string_view method) noexcept {
    return std::find(kMethods.begin(), kMethods.end(), method) != kMethods.end();
}

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw config_error(msg);
}

int get_int(const json& v, const std::string& key) {
    require(v.is_number_integer(), "config: '" + key + "' must be an integer");
    const auto x = v.get<long long>();
    require(x >= std::numeric_limits<int>::min() && x <= std::numeric_limits<int>::max(),
            "config: '" + key + "' out of range");
    return static_cast<int>(x);
}

double get_real(const json& v, const std::string& key) {
    require(v.is_number(), "config: '" + key + "' must be a number");
    return v.get<double>();
}

std::string get_string(const json& v, const std::string& key) {
    require(v.is_string(), "config: '" + key + "' must be a string");
    return v.get<std::string>();
}

bool uses_generator(std::string_view method) {
    return method == "gen_random" || method == "gen_random+cutmix" || method == "gen_random+mixup" ||
           method == "noisecutmix";
}

std::string_view generator_family(std::string_view method) {
    return method == "noisecutmix" ? std::string_view("noisecutmix") : std::string_view("gen_random");
}

}  // namespace

void ExperimentConfig::validate() const {
    require(dataset.num_classes >= 2, "config: num_classes must be >= 2");
    require(dataset.width >= 4 && dataset.height >= 4, "config: width and height must be >= 4");
    require(dataset.bump_sigma > 0.0, "config: bump_sigma must be positive");
    require(dataset.noise_var >= kMinVariance, "config: noise_var must be >= 1e-6");
    require(n_train_per_class >= 1, "config: n_train_per_class must be >= 1");
    require(n_test_per_class >= 1, "config: n_test_per_class must be >= 1");
    require(schedule_steps >= 2, "config: schedule_steps must be >= 2");
    require(sampler.num_inference_steps >= 1 && sampler.num_inference_steps <= schedule_steps,
            "config: num_inference_steps must lie in [1, schedule_steps]");
    require(sampler.guidance_scale >= 0.0 && std::isfinite(sampler.guidance_scale),
            "config: guidance_scale must be >= 0");
    require(augmentation_ratio >= 0.0 && std::isfinite(augmentation_ratio), "config: augmentation_ratio must be >= 0");
    require(noisecutmix_alpha > 0.0 && cutmix_alpha > 0.0 && mixup_alpha > 0.0, "config: alphas must be positive");
    require(augment_probability >= 0.0 && augment_probability <= 1.0,
            "config: augment_probability must lie in [0, 1]");
    require(epochs >= 0, "config: epochs must be >= 0");
    require(batch_size >= 1, "config: batch_size must be >= 1");
    require(learning_rate > 0.0, "config: learning_rate must be positive");
    require(hidden >= 1, "config: hidden must be >= 1");
    require(val_fraction > 0.0 && val_fraction < 1.0, "config: val_fraction must lie in (0, 1)");
    require(trials >= 1, "config: trials must be >= 1");
    require(threads >= 1, "config: threads must be >= 1");
    require(!methods.empty(), "config: methods must not be empty");
    for (const auto& m : methods) require(is_known_method(m), "config: unknown method '" + m + "'");
    try {
        (void)make_bump_models(dataset);
    } catch (const std::invalid_argument& e) {
        throw config_error(std::string("config: ") + e.what());
    }
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    require(j.is_object(), "config: top level must be a JSON object");
    ExperimentConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "num_classes") c.dataset.num_classes = get_int(v, key);
        else if (key == "width") c.dataset.width = get_int(v, key);
        else if (key == "height") c.dataset.height = get_int(v, key);
        else if (key == "bump_sigma") c.dataset.bump_sigma = get_real(v, key);
        else if (key == "noise_var") c.dataset.noise_var = get_real(v, key);
        else if (key == "n_train_per_class") c.n_train_per_class = get_int(v, key);
        else if (key == "n_test_per_class") c.n_test_per_class = get_int(v, key);
        else if (key == "schedule_steps") c.schedule_steps = get_int(v, key);
        else if (key == "sampler") {
            try {
                c.sampler.kind = parse_sampler_kind(get_string(v, key));
            } catch (const config_error&) {
                throw;
            } catch (const std::invalid_argument& e) {
                throw config_error(std::string("config: ") + e.what());
            }
        }
        else if (key == "num_inference_steps") c.sampler.num_inference_steps = get_int(v, key);
        else if (key == "guidance_scale") c.sampler.guidance_scale = get_real(v, key);
        else if (key == "augmentation_ratio") c.augmentation_ratio = get_real(v, key);
        else if (key == "noisecutmix_alpha") c.noisecutmix_alpha = get_real(v, key);
        else if (key == "cutmix_alpha") c.cutmix_alpha = get_real(v, key);
        else if (key == "mixup_alpha") c.mixup_alpha = get_real(v, key);
        else if (key == "augment_probability") c.augment_probability = get_real(v, key);
        else if (key == "epochs") c.epochs = get_int(v, key);
        else if (key == "batch_size") c.batch_size = get_int(v, key);
        else if (key == "learning_rate") c.learning_rate = get_real(v, key);
        else if (key == "hidden") c.hidden = get_int(v, key);
        else if (key == "val_fraction") c.val_fraction = get_real(v, key);
        else if (key == "trials") c.trials = get_int(v, key);
        else if (key == "threads") c.threads = get_int(v, key);
        else if (key == "output_dir") c.output_dir = get_string(v, key);
        else if (key == "master_seed") {
            require(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0),
                    "config: 'master_seed' must be a non-negative integer");
            c.master_seed = v.get<std::uint64_t>();
        } else if (key == "methods") {
            require(v.is_array(), "config: 'methods' must be an array of strings");
            c.methods.clear();
            for (const auto& m : v) c.methods.push_back(get_string(m, key));
        } else {
            throw config_error("config: unknown key '" + key + "'");
        }
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw config_error("config: " + std::string(e.what()));
    }
    return from_json(j);
}

json ExperimentConfig::to_json() const {
    return json{
        {"num_classes", dataset.num_classes},
        {"width", dataset.width},
        {"height", dataset.height},
        {"bump_sigma", dataset.bump_sigma},
        {"noise_var", dataset.noise_var},
        {"n_train_per_class", n_train_per_class},
        {"n_test_per_class", n_test_per_class},
        {"schedule_steps", schedule_steps},
        {"sampler", std::string(to_string(sampler.kind))},
        {"num_inference_steps", sampler.num_inference_steps},
        {"guidance_scale", sampler.guidance_scale},
        {"augmentation_ratio", augmentation_ratio},
        {"noisecutmix_alpha", noisecutmix_alpha},
        {"cutmix_alpha", cutmix_alpha},
        {"mixup_alpha", mixup_alpha},
        {"augment_probability", augment_probability},
        {"epochs", epochs},
        {"batch_size", batch_size},
        {"learning_rate", learning_rate},
        {"hidden", hidden},
        {"val_fraction", val_fraction},
        {"methods", methods},
        {"trials", trials},
        {"master_seed", master_seed},
        {"output_dir", output_dir},
        {"threads", threads},
    };
}

TrainConfig ExperimentConfig::train_config(std::uint64_t seed) const {
    TrainConfig t;
    t.batch_size = batch_size;
    t.learning_rate = learning_rate;
    t.epochs = epochs;
    t.val_fraction = val_fraction;
    t.hidden = hidden;
    t.seed = seed;
    return t;
}

AugmentPolicy ExperimentConfig::policy_for(std::string_view method) const {
    if (method == "cutmix" || method == "gen_random+cutmix") return AugmentPolicy::cutmix(cutmix_alpha, augment_probability);
    if (method == "mixup" || method == "gen_random+mixup") return AugmentPolicy::mixup(mixup_alpha, augment_probability);
    return AugmentPolicy::none();
}

TrialData make_trial_data(const ExperimentConfig& cfg, std::uint64_t trial_seed) {
    ModelRegistry models = make_bump_models(cfg.dataset);
    auto train = sample_class_images(models, cfg.n_train_per_class, derive_seed(trial_seed, "train-data"));
    auto test = sample_class_images(models, cfg.n_test_per_class, derive_seed(trial_seed, "test-data"));
    return {std::move(models), std::move(train), std::move(test)};
}

std::size_t augmentation_count(double ratio, std::size_t real_count) {
    if (!(ratio >= 0.0)) throw std::invalid_argument("augmentation_count: ratio must be >= 0");
    return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(real_count)));
}

std::vector<GenRecord> generate_for_method(std::string_view method, const ExperimentConfig& cfg,
                                           const Schedule& sched, const ModelRegistry& models, std::size_t count,
                                           std::uint64_t trial_seed, int threads) {
    if (!is_known_method(method)) throw std::invalid_argument("unknown method '" + std::string(method) + "'");
    if (!uses_generator(method) || count == 0) return {};

    const std::string_view family = generator_family(method);
    const std::uint64_t base = derive_seed(trial_seed, family);
    const bool mixed = family == "noisecutmix";
    const auto K = static_cast<std::uint64_t>(models.num_classes());

    // Class choices come from their own stream so that every record is
    // reproducible from its generation seed alone.
    struct Job {
        int class_a;
        int class_b;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    jobs.reserve(count);
    Rng picker(derive_seed(base, "classes"));
    for (std::size_t i = 0; i < count; ++i) {
        Job job{};
        job.class_a = static_cast<int>(picker.uniform_index(K));
        if (mixed) {
            const auto other = static_cast<int>(picker.uniform_index(K - 1));
            job.class_b = other >= job.class_a ? other + 1 : other;
        } else {
            job.class_b = job.class_a;
        }
        job.seed = derive_seed(base, static_cast<std::uint64_t>(i));
        jobs.push_back(job);
    }

    std::vector<GenRecord> out(count);
    auto run_one = [&](std::size_t i) {
        Rng rng(jobs[i].seed);
        if (mixed) {
            out[i] = generate_noisecutmix(jobs[i].class_a, jobs[i].class_b, cfg.sampler, sched, models,
                                          cfg.noisecutmix_alpha, rng);
        } else {
            out[i] = generate_single(Condition::of_class(jobs[i].class_a), cfg.sampler, sched, models, rng);
            out[i].provenance.method = "gen_random";
        }
    };

    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || count == 1) {
        for (std::size_t i = 0; i < count; ++i) run_one(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, count); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    run_one(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

std::vector<TrainSample> build_training_set(const TrialData& data, std::span<const GenRecord> records) {
    std::vector<TrainSample> set;
    set.reserve(data.train.size() + records.size());
    const int K = data.models.num_classes();
    for (const auto& li : data.train) set.push_back({{li.image, SoftLabel::one_hot(li.class_id, K)}, false});
    for (const auto& r : records) set.push_back({{r.image, r.label}, true});
    return set;
}

MethodRun run_method(std::string_view method, const ExperimentConfig& cfg, std::uint64_t trial_seed) {
    if (!is_known_method(method)) throw std::invalid_argument("unknown method '" + std::string(method) + "'");
    cfg.validate();

    const TrialData data = make_trial_data(cfg, trial_seed);
    const Schedule sched = make_cosine_schedule(cfg.schedule_steps);
    MethodRun run;
    run.method = std::string(method);
    run.real_count = data.train.size();
    run.records = generate_for_method(method, cfg, sched, data.models,
                                      augmentation_count(cfg.augmentation_ratio, data.train.size()), trial_seed,
                                      cfg.threads);

    const auto set = build_training_set(data, run.records);
    const TrainConfig tcfg = cfg.train_config(derive_seed(trial_seed, "train"));
    for (std::size_t i : validation_indices(set, tcfg))
        if (set[i].synthetic) throw dataset_error("validation split contains a synthetic sample");
    run.training = train(set, tcfg, cfg.policy_for(method));

    std::vector<LabeledSample> test;
    test.reserve(data.test.size());
    for (const auto& li : data.test) test.push_back({li.image, li.class_id});
    run.accuracy = evaluate(run.training.model, test);
    return run;
}

const ResultRow* ResultTable::find(std::string_view method) const {
    for (const auto& r : rows)
        if (r.method == method) return &r;
    return nullptr;
}

ResultRow summarize(std::string method, std::vector<double> accuracies) {
    ResultRow row{std::move(method), std::move(accuracies), 0.0, 0.0};
    const auto n = row.accuracies.size();
    if (n == 0) return row;
    double sum = 0.0;
    for (double a : row.accuracies) sum += a;
    row.mean = sum / static_cast<double>(n);
    if (n > 1) {
        double ss = 0.0;
        for (double a : row.accuracies) ss += (a - row.mean) * (a - row.mean);
        row.stddev = std::sqrt(ss / static_cast<double>(n - 1));
    }
    return row;
}

std::uint64_t trial_seed(std::uint64_t master_seed, int trial) {
    return derive_seed(master_seed, static_cast<std::uint64_t>(trial));
}

void write_result_table(const std::filesystem::path& path, const ResultTable& table, int trials) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
    out << "method";
    for (int i = 1; i <= trials; ++i) out << "\ttrial_" << i;
    out << "\tmean\tstd\n";
    for (const auto& r : table.rows) {
        out << r.method;
        for (double a : r.accuracies) out << '\t' << format_double(a);
        out << '\t' << format_double(r.mean) << '\t' << format_double(r.stddev) << '\n';
    }
    if (trials == 1) out << "# std reported as 0: a single trial has no sample standard deviation\n";
    out.flush();
    if (!out) throw io_error("write to '" + path.string() + "' failed");
}

ResultTable read_result_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line.rfind("method\t", 0) != 0)
        throw io_error("'" + path.string() + "' is not a result table");
    const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), '\t')) + 1;
    if (columns < 4) throw io_error("'" + path.string() + "': result table needs at least one trial column");
    const std::size_t trials = columns - 3;
    ResultTable table;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::vector<std::string> f;
        std::string field;
        while (std::getline(ss, field, '\t')) f.push_back(field);
        if (f.size() != columns) throw io_error("'" + path.string() + "': malformed row");
        ResultRow row;
        row.method = f[0];
        try {
            for (std::size_t i = 0; i < trials; ++i) row.accuracies.push_back(std::stod(f[1 + i]));
            row.mean = std::stod(f[1 + trials]);
            row.stddev = std::stod(f[2 + trials]);
        } catch (const std::logic_error&) {
            throw io_error("'" + path.string() + "': malformed number");
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string render_result_table(const ResultTable& table) {
    std::size_t name_width = 6;
    for (const auto& r : table.rows) name_width = std::max(name_width, r.method.size());
    std::ostringstream out;
    char buf[64];
    out << "Method" << std::string(name_width - 6 + 2, ' ') << "Accuracy [%]\n";
    for (const auto& r : table.rows) {
        std::snprintf(buf, sizeof(buf), "%.2f (± %.2f)", 100.0 * r.mean, 100.0 * r.stddev);
        out << r.method << std::string(name_width - r.method.size() + 2, ' ') << buf << '\n';
    }
    return out.str();
}

ResultTable run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::filesystem::path dir = cfg.output_dir;
    ensure_writable_directory(dir);

    std::ofstream prov(dir / "provenance.tsv", std::ios::trunc);
    std::ofstream hist(dir / "histories.tsv", std::ios::trunc);
    if (!prov || !hist) throw io_error("cannot create outputs in '" + dir.string() + "'");
    prov << "run_method\ttrial\t" << provenance_header() << '\n';
    hist << "method\ttrial\tepoch\ttrain_loss\tval_accuracy\tselected\n";

    ResultTable table;
    for (const auto& method : cfg.methods) {
        std::vector<double> accs;
        for (int trial = 0; trial < cfg.trials; ++trial) {
            MethodRun run = run_method(method, cfg, trial_seed(cfg.master_seed, trial));
            accs.push_back(run.accuracy);
            for (std::size_t i = 0; i < run.records.size(); ++i)
                prov << method << '\t' << trial << '\t' << provenance_line(i, run.records[i].provenance) << '\n';
            for (const auto& e : run.training.history)
                hist << method << '\t' << trial << '\t' << e.epoch << '\t' << format_double(e.train_loss) << '\t'
                     << format_double(e.val_accuracy) << '\t' << (e.epoch == run.training.best_epoch ? 1 : 0)
                     << '\n';
            if (!run.records.empty()) {
                std::vector<Sample> samples;
                samples.reserve(run.records.size());
                for (const auto& r : run.records) samples.push_back({r.image, r.label});
                const std::string stem = method + "_trial" + std::to_string(trial);
                write_samples(dir / ("samples_" + stem + ".bin"), samples);
                if (trial == 0) {
                    const std::size_t shown = std::min<std::size_t>(run.records.size(), 8);
                    export_grid(std::span(run.records).first(shown), dir / ("montage_" + method + ".pgm"));
                }
            }
        }
        table.rows.push_back(summarize(method, std::move(accs)));
    }
    prov.flush();
    hist.flush();
    if (!prov || !hist) throw io_error("write to '" + dir.string() + "' failed");

    write_result_table(dir / "results.tsv", table, cfg.trials);
    std::ofstream conf(dir / "config.json", std::ios::trunc);
    // Output location and thread count are left out so identical runs in different directories match byte for byte.
    auto echoed = cfg.to_json();
    echoed.erase("output_dir");
    echoed.erase("threads");
    conf << echoed.dump(2) << '\n';
    if (!conf) throw io_error("write to '" + (dir / "config.json").string() + "' failed");
    return table;
}

}  // namespace noisemix
