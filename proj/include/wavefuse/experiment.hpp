#pragma once

// Run configuration, experiment matrices (methods x seeds x folds) and the
// CSV / JSON artifacts written by the command-line tool.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "wavefuse/controller.hpp"
#include "wavefuse/dataset.hpp"
#include "wavefuse/error.hpp"
#include "wavefuse/harness.hpp"
#include "wavefuse/stats.hpp"

namespace wavefuse {

inline constexpr const char* version = "0.1.0";
inline constexpr const char* output_dir_env = "WAVEFUSE_OUT_DIR";

using json = nlohmann::ordered_json;

namespace config_detail {

inline void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) throw Error(ErrorKind::config, path + ": expected an object");
    for (const auto& item : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
            throw Error(ErrorKind::config, "unknown key '" + item.key() + "' in " + path);
        }
    }
}

inline std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

inline double number(const json& obj, const std::string& path, const std::string& key, double fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number()) throw Error(ErrorKind::config, join(path, key) + ": expected a number");
    return v.get<double>();
}

inline std::uint64_t unsigned_int(const json& obj, const std::string& path, const std::string& key,
                                  std::uint64_t fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw Error(ErrorKind::config, join(path, key) + ": expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

inline std::string text(const json& obj, const std::string& path, const std::string& key,
                          const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_string()) throw Error(ErrorKind::config, join(path, key) + ": expected a string");
    return v.get<std::string>();
}

inline std::vector<double> number_list(const json& v, const std::string& path) {
    if (!v.is_array()) throw Error(ErrorKind::config, path + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number()) throw Error(ErrorKind::config, path + ": expected an array of numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

}  // namespace config_detail

// A synthetic dataset recipe: explicit blob classes or an imbalanced preset.
struct GeneratorSpec {
    std::uint64_t seed = 0;
    BlobSpec blobs;

    static GeneratorSpec from_json(const json& j, const std::string& path) {
        using namespace config_detail;
        check_keys(j, path, {"seed", "classes", "imbalanced"});
        GeneratorSpec spec;
        spec.seed = unsigned_int(j, path, "seed", 0);
        const bool has_classes = j.contains("classes");
        const bool has_preset = j.contains("imbalanced");
        if (has_classes == has_preset) {
            throw Error(ErrorKind::config, path + ": give exactly one of 'classes' or 'imbalanced'");
        }
        if (has_classes) {
            const auto& classes = j.at("classes");
            if (!classes.is_array()) throw Error(ErrorKind::config, join(path, "classes") + ": expected an array");
            for (std::size_t c = 0; c < classes.size(); ++c) {
                const std::string cpath = join(path, "classes[" + std::to_string(c) + "]");
                check_keys(classes[c], cpath, {"center", "stdev", "count"});
                if (!classes[c].contains("center")) throw Error(ErrorKind::config, cpath + ": missing 'center'");
                BlobClass cls;
                cls.center = number_list(classes[c].at("center"), join(cpath, "center"));
                cls.stdev = number(classes[c], cpath, "stdev", 1.0);
                cls.count = unsigned_int(classes[c], cpath, "count", 1);
                spec.blobs.classes.push_back(std::move(cls));
            }
        } else {
            const std::string ppath = join(path, "imbalanced");
            const auto& p = j.at("imbalanced");
            check_keys(p, ppath, {"proportions", "total", "dim", "center_spread", "stdev", "center_seed"});
            if (!p.contains("proportions")) throw Error(ErrorKind::config, ppath + ": missing 'proportions'");
            const auto props = number_list(p.at("proportions"), join(ppath, "proportions"));
            for (double v : props) {
                if (!(v > 0.0)) throw Error(ErrorKind::config, join(ppath, "proportions") + ": entries must be > 0");
            }
            spec.blobs = imbalanced_blob_spec(props, unsigned_int(p, ppath, "total", 1000),
                                              unsigned_int(p, ppath, "dim", 2), number(p, ppath, "center_spread", 1.0),
                                              number(p, ppath, "stdev", 1.0), unsigned_int(p, ppath, "center_seed", 0));
        }
        try {
            spec.blobs.validate();
        } catch (const Error& e) {
            throw Error(ErrorKind::config, path + ": " + e.what());
        }
        return spec;
    }

    json to_json() const {
        json classes = json::array();
        for (const auto& c : blobs.classes) {
            classes.push_back({{"center", c.center}, {"stdev", c.stdev}, {"count", c.count}});
        }
        return {{"seed", seed}, {"classes", classes}};
    }

    Dataset generate() const { return generate_blobs(blobs, seed); }
};

struct DatasetConfig {
    std::optional<GeneratorSpec> generator;
    std::string csv_path;  // resolved against the config file directory
    double test_fraction = 0.2;
    std::uint64_t split_seed = 0;
};

struct RunConfig {
    DatasetConfig dataset;
    ExperimentSettings settings;
    std::vector<std::uint64_t> seeds{0};
    std::size_t folds = 1;  // 1 = single stratified holdout, k >= 2 = k-fold
    std::vector<Method> methods;
    std::string output_dir;

    void validate() const {
        settings.train.validate();
        settings.loop.validate();
        settings.controller.validate();
        if (methods.empty()) throw Error(ErrorKind::config, "methods: at least one method required");
        if (seeds.empty()) throw Error(ErrorKind::config, "loop.seeds: at least one seed required");
        if (folds < 1) throw Error(ErrorKind::config, "loop.folds must be >= 1");
        if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0)) {
            throw Error(ErrorKind::config, "dataset.test_fraction must lie in (0, 1)");
        }
        std::set<std::string> seen;
        for (const auto& m : methods) {
            if (!seen.insert(m.id()).second) throw Error(ErrorKind::config, "methods: duplicate '" + m.id() + "'");
        }
    }
};

inline ControllerConfig controller_from_json(const json& j, const std::string& path = "controller") {
    using namespace config_detail;
    check_keys(j, path, {"alpha0", "alpha_min", "beta", "tau0", "tau_min", "eps0", "eps_min", "weight_floor",
                         "weight_cap", "dominance", "strategy_order"});
    ControllerConfig c;
    c.alpha0 = number(j, path, "alpha0", c.alpha0);
    c.alpha_min = number(j, path, "alpha_min", c.alpha_min);
    c.beta = number(j, path, "beta", c.beta);
    c.tau0 = number(j, path, "tau0", c.tau0);
    c.tau_min = number(j, path, "tau_min", c.tau_min);
    c.eps0 = number(j, path, "eps0", c.eps0);
    c.eps_min = number(j, path, "eps_min", c.eps_min);
    c.weight_floor = number(j, path, "weight_floor", c.weight_floor);
    c.weight_cap = number(j, path, "weight_cap", c.weight_cap);
    c.dominance = number(j, path, "dominance", c.dominance);
    if (j.contains("strategy_order")) {
        const auto& order = j.at("strategy_order");
        if (!order.is_array()) throw Error(ErrorKind::config, path + ".strategy_order: expected an array");
        c.strategy_order.clear();
        for (const auto& name : order) {
            const auto s = name.is_string() ? parse_strategy(name.get<std::string>()) : std::nullopt;
            if (!s) throw Error(ErrorKind::config, path + ".strategy_order: unknown strategy " + name.dump());
            c.strategy_order.push_back(*s);
        }
    }
    c.validate();
    return c;
}

inline json controller_to_json(const ControllerConfig& c) {
    json order = json::array();
    for (auto s : c.strategy_order) order.push_back(std::string(to_string(s)));
    return {{"alpha0", c.alpha0},         {"alpha_min", c.alpha_min},   {"beta", c.beta},
            {"tau0", c.tau0},             {"tau_min", c.tau_min},       {"eps0", c.eps0},
            {"eps_min", c.eps_min},       {"weight_floor", c.weight_floor}, {"weight_cap", c.weight_cap},
            {"dominance", c.dominance},   {"strategy_order", order}};
}

inline RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir = {}) {
    using namespace config_detail;
    check_keys(j, "config", {"dataset", "model", "controller", "loop", "methods", "metric", "output_dir"});
    RunConfig cfg;

    if (!j.contains("dataset")) throw Error(ErrorKind::config, "config: missing 'dataset' block");
    const auto& d = j.at("dataset");
    check_keys(d, "dataset", {"generator", "csv", "test_fraction", "split_seed"});
    if (d.contains("generator") == d.contains("csv")) {
        throw Error(ErrorKind::config, "dataset: give exactly one of 'generator' or 'csv'");
    }
    if (d.contains("generator")) cfg.dataset.generator = GeneratorSpec::from_json(d.at("generator"), "dataset.generator");
    if (d.contains("csv")) {
        std::filesystem::path p = text(d, "dataset", "csv", "");
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        cfg.dataset.csv_path = p.string();
    }
    cfg.dataset.test_fraction = number(d, "dataset", "test_fraction", 0.2);
    cfg.dataset.split_seed = unsigned_int(d, "dataset", "split_seed", 0);

    auto& train = cfg.settings.train;
    auto& loop = cfg.settings.loop;
    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, "model", {"hidden_dim", "dropout_p", "learning_rate", "epochs", "minibatch", "l2", "mc_passes",
                                "standardize"});
        train.hidden_dim = unsigned_int(m, "model", "hidden_dim", train.hidden_dim);
        train.dropout_p = number(m, "model", "dropout_p", train.dropout_p);
        train.learning_rate = number(m, "model", "learning_rate", train.learning_rate);
        train.epochs = unsigned_int(m, "model", "epochs", train.epochs);
        train.minibatch = unsigned_int(m, "model", "minibatch", train.minibatch);
        train.l2 = number(m, "model", "l2", train.l2);
        loop.mc_passes = unsigned_int(m, "model", "mc_passes", loop.mc_passes);
        if (m.contains("standardize")) {
            if (!m.at("standardize").is_boolean()) throw Error(ErrorKind::config, "model.standardize: expected a boolean");
            loop.standardize = m.at("standardize").get<bool>();
        }
    }
    if (j.contains("controller")) cfg.settings.controller = controller_from_json(j.at("controller"));
    if (j.contains("loop")) {
        const auto& l = j.at("loop");
        check_keys(l, "loop", {"rounds", "budget", "init_size", "seeds", "folds"});
        loop.rounds = unsigned_int(l, "loop", "rounds", loop.rounds);
        loop.budget = unsigned_int(l, "loop", "budget", loop.budget);
        loop.init_size = unsigned_int(l, "loop", "init_size", loop.init_size);
        cfg.folds = unsigned_int(l, "loop", "folds", 1);
        if (l.contains("seeds")) {
            const auto& s = l.at("seeds");
            if (!s.is_array()) throw Error(ErrorKind::config, "loop.seeds: expected an array");
            cfg.seeds.clear();
            for (const auto& v : s) {
                if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
                    throw Error(ErrorKind::config, "loop.seeds: expected non-negative integers");
                }
                cfg.seeds.push_back(v.get<std::uint64_t>());
            }
        }
    }
    if (!j.contains("methods")) throw Error(ErrorKind::config, "config: missing 'methods' list");
    const auto& methods = j.at("methods");
    if (!methods.is_array()) throw Error(ErrorKind::config, "methods: expected an array");
    for (const auto& m : methods) {
        if (!m.is_string()) throw Error(ErrorKind::config, "methods: expected strings");
        cfg.methods.push_back(Method::parse(m.get<std::string>()));
    }
    loop.metric = parse_metric(text(j, "", "metric", "accuracy"));
    cfg.output_dir = text(j, "", "output_dir", "");
    cfg.validate();
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::config, "cannot read config file " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, path + ": invalid JSON: " + e.what());
    }
    return parse_run_config(j, std::filesystem::path(path).parent_path());
}

// Full echo of the effective configuration, defaults included.
inline json run_config_to_json(const RunConfig& cfg) {
    json dataset;
    if (cfg.dataset.generator) dataset["generator"] = cfg.dataset.generator->to_json();
    if (!cfg.dataset.csv_path.empty()) dataset["csv"] = cfg.dataset.csv_path;
    dataset["test_fraction"] = cfg.dataset.test_fraction;
    dataset["split_seed"] = cfg.dataset.split_seed;
    const auto& t = cfg.settings.train;
    const auto& l = cfg.settings.loop;
    json methods = json::array();
    for (const auto& m : cfg.methods) methods.push_back(m.id());
    return {{"dataset", dataset},
            {"model",
             {{"hidden_dim", t.hidden_dim},
              {"dropout_p", t.dropout_p},
              {"learning_rate", t.learning_rate},
              {"epochs", t.epochs},
              {"minibatch", t.minibatch},
              {"l2", t.l2},
              {"mc_passes", l.mc_passes},
              {"standardize", l.standardize}}},
            {"controller", controller_to_json(cfg.settings.controller)},
            {"loop",
             {{"rounds", l.rounds},
              {"budget", l.budget},
              {"init_size", l.init_size},
              {"seeds", cfg.seeds},
              {"folds", cfg.folds}}},
            {"methods", methods},
            {"metric", std::string(to_string(l.metric))},
            {"output_dir", cfg.output_dir}};
}

struct ResolvedData {
    Dataset dataset;
    std::vector<long long> original_labels;  // empty for generated data
};

inline ResolvedData resolve_dataset(const DatasetConfig& cfg) {
    if (cfg.generator) return {cfg.generator->generate(), {}};
    auto loaded = load_csv(cfg.csv_path);
    return {std::move(loaded.dataset), std::move(loaded.original_labels)};
}

inline std::vector<Split> make_splits(const Dataset& data, const DatasetConfig& cfg, std::size_t folds) {
    if (folds <= 1) return {stratified_split(data, cfg.test_fraction, cfg.split_seed)};
    return stratified_folds(data, folds, cfg.split_seed);
}

struct Experiment {
    std::vector<RunResult> runs;  // ordered by (method, seed, fold)
};

// Runs every (method, seed, fold) job; results land in a fixed order
// regardless of worker count.
inline Experiment run_experiment(const RunConfig& cfg, const Dataset& data, std::size_t workers = 1) {
    const auto splits = make_splits(data, cfg.dataset, cfg.folds);
    struct Job {
        std::size_t method, seed, fold;
    };
    std::vector<Job> jobs;
    for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
            for (std::size_t f = 0; f < splits.size(); ++f) jobs.push_back({m, s, f});
        }
    }
    Experiment out;
    out.runs.resize(jobs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                const auto& job = jobs[i];
                out.runs[i] = run_active_learning(data, splits[job.fold], cfg.methods[job.method], cfg.settings,
                                                  cfg.seeds[job.seed], job.fold);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = jobs.size();
            }
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, jobs.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

inline std::string fmt9(double v) {
    if (std::isnan(v)) return "";
    return format_double(v, 9);
}

inline std::string curves_csv(const Experiment& exp) {
    std::ostringstream out;
    out << "method,seed,fold,round,n_labeled,metric,value\n";
    for (const auto& run : exp.runs) {
        for (const auto& r : run.rounds) {
            for (auto metric : {MetricKind::accuracy, MetricKind::f1}) {
                out << run.method << ',' << run.seed << ',' << run.fold << ',' << r.round << ',' << r.n_labeled << ','
                    << to_string(metric) << ',' << fmt9(r.metrics.get(metric)) << '\n';
            }
        }
    }
    return out.str();
}

inline std::string weights_csv(const Experiment& exp) {
    std::ostringstream out;
    out << "method,seed,fold,round,strategy,psi,omega,weight,quota\n";
    for (const auto& run : exp.runs) {
        for (const auto& r : run.rounds) {
            for (std::size_t s = 0; s < r.strategies.size(); ++s) {
                out << run.method << ',' << run.seed << ',' << run.fold << ',' << r.round << ','
                    << to_string(r.strategies[s]) << ',' << (r.psi.empty() ? "" : fmt9(r.psi[s])) << ','
                    << (r.omega_used.empty() ? "" : fmt9(r.omega_used[s])) << ',' << fmt9(r.weights[s]) << ','
                    << r.quotas[s] << '\n';
            }
            if (r.exploration > 0 || !r.psi.empty()) {
                out << run.method << ',' << run.seed << ',' << run.fold << ',' << r.round << ",exploration,,,,"
                    << r.exploration << '\n';
            }
        }
    }
    return out.str();
}

inline std::string summary_csv(const Experiment& exp) {
    std::ostringstream out;
    out << "method,round,metric,mean,std,n_runs\n";
    for (const auto& row : aggregate_runs(exp.runs)) {
        out << row.method << ',' << row.round << ',' << to_string(row.metric) << ',' << fmt9(row.mean) << ','
            << fmt9(row.std) << ',' << row.n_runs << '\n';
    }
    return out.str();
}

inline json manifest_json(const RunConfig& cfg, const ResolvedData& data) {
    json mapping = nullptr;
    if (!data.original_labels.empty()) {
        mapping = json::array();
        for (std::size_t k = 0; k < data.original_labels.size(); ++k) {
            mapping.push_back({{"original", data.original_labels[k]}, {"index", k}});
        }
    }
    std::vector<std::size_t> counts(static_cast<std::size_t>(data.dataset.num_classes), 0);
    for (int y : data.dataset.labels) ++counts[static_cast<std::size_t>(y)];
    return {{"tool", "wavefuse"},
            {"version", version},
            {"config", run_config_to_json(cfg)},
            {"seeds", cfg.seeds},
            {"dataset",
             {{"n", data.dataset.size()},
              {"dim", data.dataset.dim()},
              {"classes", data.dataset.num_classes},
              {"class_counts", counts}}},
            {"label_mapping", mapping},
            {"files", {"curves.csv", "weights.csv", "summary.csv", "manifest.json"}}};
}

struct RunOptions {
    std::size_t workers = 1;
    std::string out_dir;                        // overrides config and environment
    std::optional<std::uint64_t> seed_override;  // replaces the seed list
};

inline std::string resolve_output_dir(const RunConfig& cfg, const RunOptions& options) {
    if (!options.out_dir.empty()) return options.out_dir;
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    if (const char* env = std::getenv(output_dir_env); env != nullptr && *env != '\0') return env;
    return "wavefuse-out";
}

// Writes all files or none: on any failure the files created so far are removed.
inline void write_outputs(const std::filesystem::path& dir, const std::vector<std::pair<std::string, std::string>>& files) {
    std::vector<std::filesystem::path> written;
    try {
        std::filesystem::create_directories(dir);
        for (const auto& [name, content] : files) {
            const auto path = dir / name;
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
            written.push_back(path);
            out << content;
            out.close();
            if (!out) throw Error(ErrorKind::io, "failed writing " + path.string());
        }
    } catch (...) {
        std::error_code ec;
        for (const auto& p : written) std::filesystem::remove(p, ec);
        throw;
    }
}

struct RunOutcome {
    std::filesystem::path output_dir;
    Experiment experiment;
};

inline RunOutcome execute_run(RunConfig cfg, const RunOptions& options) {
    if (options.seed_override) cfg.seeds = {*options.seed_override};
    cfg.validate();
    const auto data = resolve_dataset(cfg.dataset);
    RunOutcome outcome;
    outcome.output_dir = resolve_output_dir(cfg, options);
    outcome.experiment = run_experiment(cfg, data.dataset, options.workers);
    write_outputs(outcome.output_dir, {{"curves.csv", curves_csv(outcome.experiment)},
                                       {"weights.csv", weights_csv(outcome.experiment)},
                                       {"summary.csv", summary_csv(outcome.experiment)},
                                       {"manifest.json", manifest_json(cfg, data).dump(2) + "\n"}});
    return outcome;
}

// ---------------------------------------------------------------------------
// Curve comparison

struct CurvePoint {
    std::string method;
    std::uint64_t seed = 0;
    std::size_t fold = 0;
    std::size_t round = 0;
    std::size_t n_labeled = 0;
    std::string metric;
    double value = 0.0;
};

inline std::vector<CurvePoint> parse_curves(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::parse, source + ": empty curves file");
    if (detail::trim(line) != "method,seed,fold,round,n_labeled,metric,value") {
        throw Error(ErrorKind::parse, source + ": unexpected curves header");
    }
    std::vector<CurvePoint> points;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto view = detail::trim(line);
        if (view.empty()) continue;
        const auto cells = detail::split_commas(view);
        const std::string where = source + ": row " + std::to_string(line_no);
        if (cells.size() != 7) throw Error(ErrorKind::parse, where + ": expected 7 cells");
        CurvePoint p;
        p.method = std::string(cells[0]);
        p.metric = std::string(cells[5]);
        if (!detail::parse_number(cells[1], p.seed) || !detail::parse_number(cells[2], p.fold) ||
            !detail::parse_number(cells[3], p.round) || !detail::parse_number(cells[4], p.n_labeled) ||
            !detail::parse_number(cells[6], p.value)) {
            throw Error(ErrorKind::parse, where + ": malformed number");
        }
        points.push_back(std::move(p));
    }
    return points;
}

inline std::vector<CurvePoint> load_curves(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path);
    return parse_curves(in, path);
}

struct ComparisonRow {
    std::size_t round = 0;
    std::size_t n = 0;
    double mean_a = 0.0;
    double mean_b = 0.0;
    TTestResult test;
    bool degenerate = false;  // zero-variance, nonzero-mean differences

    bool significant(double level = 0.05) const noexcept { return degenerate || test.p < level; }
};

struct ComparisonReport {
    std::string method_a, method_b, metric;
    std::vector<ComparisonRow> rounds;  // ascending; the last one is the final round
};

namespace detail {

inline std::string pick_method(const std::vector<CurvePoint>& points, const std::string& requested,
                               const std::string& label) {
    std::set<std::string> methods;
    for (const auto& p : points) methods.insert(p.method);
    if (!requested.empty()) {
        if (!methods.contains(requested)) {
            throw Error(ErrorKind::comparison, label + " has no method '" + requested + "'");
        }
        return requested;
    }
    if (methods.size() != 1) {
        throw Error(ErrorKind::comparison, label + " holds " + std::to_string(methods.size()) +
                                               " methods; choose one explicitly");
    }
    return *methods.begin();
}

using RunKey = std::pair<std::uint64_t, std::size_t>;  // seed, fold

inline std::map<std::size_t, std::map<RunKey, double>> by_round(const std::vector<CurvePoint>& points,
                                                                const std::string& method, const std::string& metric) {
    std::map<std::size_t, std::map<RunKey, double>> out;
    for (const auto& p : points) {
        if (p.method == method && p.metric == metric) out[p.round][{p.seed, p.fold}] = p.value;
    }
    return out;
}

}  // namespace detail

// Paired t-test per round across matching (seed, fold) runs.
inline ComparisonReport compare_curves(const std::vector<CurvePoint>& a, const std::vector<CurvePoint>& b,
                                       const std::string& metric, const std::string& method_a = {},
                                       const std::string& method_b = {}) {
    ComparisonReport report;
    report.metric = metric;
    report.method_a = detail::pick_method(a, method_a, "first curves file");
    report.method_b = detail::pick_method(b, method_b, "second curves file");
    const auto ra = detail::by_round(a, report.method_a, metric);
    const auto rb = detail::by_round(b, report.method_b, metric);
    if (ra.empty() || rb.empty()) throw Error(ErrorKind::comparison, "no rows for metric '" + metric + "'");
    if (ra.size() != rb.size()) throw Error(ErrorKind::comparison, "curves cover different rounds");
    for (auto ia = ra.begin(), ib = rb.begin(); ia != ra.end(); ++ia, ++ib) {
        if (ia->first != ib->first) throw Error(ErrorKind::comparison, "curves cover different rounds");
        std::vector<detail::RunKey> keys_a, keys_b;
        for (const auto& kv : ia->second) keys_a.push_back(kv.first);
        for (const auto& kv : ib->second) keys_b.push_back(kv.first);
        if (keys_a != keys_b) {
            throw Error(ErrorKind::comparison, "seed/fold sets differ at round " + std::to_string(ia->first));
        }
        std::vector<double> va, vb;
        for (const auto& kv : ia->second) va.push_back(kv.second);
        for (const auto& kv : ib->second) vb.push_back(kv.second);
        ComparisonRow row;
        row.round = ia->first;
        row.n = va.size();
        row.mean_a = mean_std(va).mean;
        row.mean_b = mean_std(vb).mean;
        try {
            row.test = paired_t_test(va, vb);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::degenerate_test) throw;
            row.degenerate = true;
            row.test.df = va.size() - 1;
            row.test.mean_difference = row.mean_a - row.mean_b;
            row.test.t = row.test.mean_difference > 0 ? std::numeric_limits<double>::infinity()
                                                      : -std::numeric_limits<double>::infinity();
            row.test.p = 0.0;
        }
        report.rounds.push_back(row);
    }
    return report;
}

inline std::string format_report(const ComparisonReport& report) {
    std::ostringstream out;
    out << "# " << report.method_a << " vs " << report.method_b << " on " << report.metric
        << " (paired t-test, * = p < 0.05)\n";
    out << "round,n,mean_a,mean_b,mean_diff,t,p,significant\n";
    auto line = [&](const std::string& label, const ComparisonRow& r) {
        out << label << ',' << r.n << ',' << fmt9(r.mean_a) << ',' << fmt9(r.mean_b) << ','
            << fmt9(r.test.mean_difference) << ',' << fmt9(r.test.t) << ',' << fmt9(r.test.p) << ','
            << (r.significant() ? "*" : "") << '\n';
    };
    for (const auto& r : report.rounds) line(std::to_string(r.round), r);
    if (!report.rounds.empty()) line("final", report.rounds.back());
    return out.str();
}

// ---------------------------------------------------------------------------
// Dataset generation

inline GeneratorSpec load_generator_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::config, "cannot read dataset spec " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, path + ": invalid JSON: " + e.what());
    }
    return GeneratorSpec::from_json(j, "spec");
}

inline void generate_dataset_file(const GeneratorSpec& spec, const std::string& out_path) {
    std::ostringstream csv;
    write_csv(spec.generate(), csv);
    const std::filesystem::path p(out_path);
    write_outputs(p.parent_path().empty() ? std::filesystem::path(".") : p.parent_path(),
                  {{p.filename().string(), csv.str()}});
}

}  // namespace wavefuse
