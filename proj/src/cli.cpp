#include "sembayes/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "sembayes/evaluation.hpp"
#include "sembayes/http_generator.hpp"
#include "sembayes/nli_client.hpp"
#include "sembayes/oracle.hpp"
#include "sembayes/similarity.hpp"
#include "sembayes/simulated_lm.hpp"

namespace sembayes {

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config_path;
    std::string dataset;
    std::string out;
    std::string backend;
    std::string oracle;
    std::string scenario;
    std::string results;
    double gamma = 0.0;
    std::size_t n_max = 0;
    std::size_t n0 = 0;
    std::size_t top_k = 0;
    std::size_t snis_draws = 0;
    double target_n = 0.0;
    std::vector<double> budgets;
    std::uint64_t seed = 0;
    std::size_t workers = 0;
    std::size_t prompts = 200;
    std::size_t max_meanings = 5;
    std::size_t subsample = 0;
};

// Flags and config file merged.
struct Settings {
    EstimatorConfig estimator;
    std::string backend = "simulated";
    std::string oracle;
    std::string scenario;
    std::size_t workers = 1;
    nlohmann::json http = nlohmann::json::object();
    nlohmann::json nli = nlohmann::json::object();
    CalibrationOptions calibration;
};

template <typename T>
void read_key(const nlohmann::json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw UsageError(std::string("config: bad value for '") + key + "'");
    }
}

void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> known, const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
            throw UsageError("config: unknown key '" + key + "' in " + where);
        }
    }
}

nlohmann::json read_json_file(const std::string& path) {
    if (!std::filesystem::is_regular_file(path)) throw UsageError("no such file: " + path);
    std::ifstream in(path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw UsageError("config '" + path + "' is not valid JSON: " + e.what());
    }
}

Settings load_settings(const Options& o, const CLI::App& cmd) {
    Settings s;
    if (!o.config_path.empty()) {
        const auto doc = read_json_file(o.config_path);
        if (!doc.is_object()) throw UsageError("config: expected an object");
        reject_unknown(doc, {"estimator", "backend", "oracle", "scenario", "workers", "http", "nli", "calibration"},
                       "config");
        if (doc.contains("estimator")) {
            const auto& e = doc["estimator"];
            reject_unknown(e, {"gamma", "n0", "top_k", "alpha0", "n_max", "snis_draws", "seed",
                               "marginal_prior_only", "guided"},
                           "estimator");
            read_key(e, "gamma", s.estimator.gamma);
            read_key(e, "n0", s.estimator.n0);
            read_key(e, "top_k", s.estimator.top_k);
            read_key(e, "alpha0", s.estimator.alpha0);
            read_key(e, "n_max", s.estimator.n_max);
            read_key(e, "snis_draws", s.estimator.snis_draws);
            read_key(e, "seed", s.estimator.seed);
            read_key(e, "marginal_prior_only", s.estimator.marginal_prior_only);
            read_key(e, "guided", s.estimator.guided);
        }
        if (doc.contains("calibration")) {
            const auto& c = doc["calibration"];
            reject_unknown(c, {"gamma_lo", "gamma_hi", "tolerance", "max_steps", "subsample"}, "calibration");
            read_key(c, "gamma_lo", s.calibration.gamma_lo);
            read_key(c, "gamma_hi", s.calibration.gamma_hi);
            read_key(c, "tolerance", s.calibration.tolerance);
            read_key(c, "max_steps", s.calibration.max_steps);
            read_key(c, "subsample", s.calibration.subsample);
        }
        read_key(doc, "backend", s.backend);
        read_key(doc, "oracle", s.oracle);
        read_key(doc, "scenario", s.scenario);
        read_key(doc, "workers", s.workers);
        if (doc.contains("http")) s.http = doc["http"];
        if (doc.contains("nli")) s.nli = doc["nli"];
    }
    auto given = [&](const char* flag) {
        const auto* opt = cmd.get_option_no_throw(flag);
        return opt && opt->count() > 0;
    };
    if (given("--backend")) s.backend = o.backend;
    if (given("--oracle")) s.oracle = o.oracle;
    if (given("--scenario")) s.scenario = o.scenario;
    if (given("--workers")) s.workers = o.workers;
    if (given("--gamma")) s.estimator.gamma = o.gamma;
    if (given("--n-max")) s.estimator.n_max = o.n_max;
    if (given("--n0")) s.estimator.n0 = o.n0;
    if (given("--top-k")) s.estimator.top_k = o.top_k;
    if (given("--snis-draws")) s.estimator.snis_draws = o.snis_draws;
    if (given("--seed")) s.estimator.seed = o.seed;
    if (given("--subsample")) s.calibration.subsample = o.subsample;

    if (s.backend != "simulated" && s.backend != "http") throw UsageError("unknown backend '" + s.backend + "'");
    if (s.oracle.empty()) s.oracle = s.backend == "simulated" ? "ground-truth" : "exact";
    if (s.oracle != "exact" && s.oracle != "ground-truth" && s.oracle != "nli") {
        throw UsageError("unknown oracle '" + s.oracle + "'");
    }
    if (s.oracle == "ground-truth" && s.backend != "simulated") {
        throw UsageError("the ground-truth oracle needs the simulated backend");
    }
    if (s.backend == "simulated" && s.scenario.empty()) throw UsageError("the simulated backend needs --scenario");
    if (s.workers == 0) throw UsageError("--workers must be at least 1");
    try {
        s.estimator.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return s;
}

// Owns whatever backend objects the settings call for.
struct Backend {
    std::optional<SimulatedLM> lm;
    std::unique_ptr<HttpGenerator> http;
    std::unique_ptr<NliClient> nli_client;
    std::unique_ptr<EquivalenceOracle> oracle;
    TfCosineSimilarity similarity;
    Workload workload;

    explicit Backend(const Settings& s) {
        if (s.backend == "simulated") {
            if (!std::filesystem::is_regular_file(s.scenario)) throw UsageError("no such file: " + s.scenario);
            lm = SimulatedLM::load(s.scenario);
            workload.generator = &*lm;
        } else {
            try {
                http = std::make_unique<HttpGenerator>(HttpGeneratorConfig::from_json(s.http));
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            workload.generator = http.get();
        }
        if (s.oracle == "ground-truth") {
            oracle = std::make_unique<GroundTruthOracle>(*lm);
        } else if (s.oracle == "nli") {
            try {
                nli_client = std::make_unique<NliClient>(NliClientConfig::from_json(s.nli));
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            oracle = std::make_unique<NliOracle>(*nli_client);
        } else {
            oracle = std::make_unique<ExactMatchOracle>();
        }
        workload.oracle = oracle.get();
        workload.similarity = &similarity;
        // Ground-truth entropies only mean something under the scenario's own labels.
        if (lm && s.oracle == "ground-truth") {
            const SimulatedLM* model = &*lm;
            workload.exact_entropy = [model](const std::string& p) { return simulated_exact_entropy(*model, p); };
        }
    }

    void check_prompts(std::span<const QueryRecord> queries) const {
        if (!lm) return;
        for (const auto& q : queries) {
            if (!lm->has_prompt(q.prompt)) {
                throw DatasetError("record '" + q.id + "': prompt is not in the scenario file", 0);
            }
        }
    }
};

std::vector<QueryRecord> read_dataset(const std::string& path) {
    if (path.empty()) throw UsageError("--dataset is required");
    if (!std::filesystem::is_regular_file(path)) throw UsageError("no such file: " + path);
    auto queries = load_dataset(path);
    if (queries.empty()) throw DatasetError("dataset '" + path + "' has no records", 0);
    return queries;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw UsageError("cannot write " + path);
    return f;
}

std::string sibling_path(const std::string& path, const std::string& suffix) {
    std::filesystem::path p(path);
    return (p.parent_path() / (p.stem().string() + suffix)).string();
}

int cmd_estimate(const Options& o, const CLI::App& cmd, std::ostream& out, std::ostream& err) {
    const Settings s = load_settings(o, cmd);
    const auto queries = read_dataset(o.dataset);
    Backend b(s);
    b.check_prompts(queries);
    const auto ests = run_adaptive(queries, b.workload, s.estimator, s.workers);
    std::vector<ResultRecord> results;
    for (std::size_t i = 0; i < queries.size(); ++i) results.push_back(make_result(queries[i].id, ests[i]));
    std::sort(results.begin(), results.end(), [](const auto& a, const auto& c) { return a.id < c.id; });
    if (o.out.empty() || o.out == "-") {
        for (const auto& r : results) out << to_json(r).dump() << '\n';
    } else {
        write_results(o.out, results);
        err << "wrote " << results.size() << " results to " << o.out << '\n';
    }
    return kExitOk;
}

int cmd_benchmark(const Options& o, const CLI::App& cmd, std::ostream& out, std::ostream& err) {
    const Settings s = load_settings(o, cmd);
    const auto queries = read_dataset(o.dataset);
    if (o.out.empty()) throw UsageError("--out is required");
    Backend b(s);
    b.check_prompts(queries);
    BenchmarkOptions opts;
    if (!o.budgets.empty()) opts.budgets = o.budgets;
    opts.workers = s.workers;
    opts.calibration = s.calibration;
    const auto report = run_benchmark(queries, b.workload, s.estimator, opts);

    open_output(o.out) << report.to_json().dump(2) << '\n';
    const auto rows_path = sibling_path(o.out, ".csv");
    const auto hist_path = sibling_path(o.out, "_hist.csv");
    open_output(rows_path) << report.rows_csv();
    open_output(hist_path) << report.histogram_csv();
    out << report.table();
    err << "wrote " << o.out << ", " << rows_path << ", " << hist_path << '\n';
    return kExitOk;
}

int cmd_calibrate(const Options& o, const CLI::App& cmd, std::ostream& out, std::ostream&) {
    const Settings s = load_settings(o, cmd);
    const auto queries = read_dataset(o.dataset);
    Backend b(s);
    b.check_prompts(queries);
    CalibrationOptions opts = s.calibration;
    opts.workers = s.workers;
    const auto cal = calibrate_gamma(queries, b.workload, s.estimator, o.target_n, opts);
    out << "gamma " << cal.gamma << '\n' << "achieved_mean " << cal.achieved_mean << '\n'
        << "steps " << cal.steps << '\n';
    return kExitOk;
}

int cmd_auroc(const Options& o, std::ostream& out) {
    const auto queries = read_dataset(o.dataset);
    if (o.results.empty()) throw UsageError("--results is required");
    if (!std::filesystem::is_regular_file(o.results)) throw UsageError("no such file: " + o.results);
    std::map<std::string, double> by_id;
    for (const auto& r : load_results(o.results)) by_id[r.id] = r.entropy;
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& q : queries) {
        if (!q.label) continue;
        const auto it = by_id.find(q.id);
        if (it == by_id.end()) throw DatasetError("no result for record '" + q.id + "'", 0);
        scores.push_back(it->second);
        labels.push_back(*q.label);
    }
    if (labels.empty()) throw DatasetError("dataset has no labels", 0);
    out << "auroc " << auroc(scores, labels) << '\n' << "scored " << labels.size() << '\n';
    return kExitOk;
}

int cmd_simulate(const Options& o, std::ostream& err) {
    if (o.out.empty()) throw UsageError("--out is required");
    if (o.scenario.empty()) throw UsageError("--scenario is required");
    const auto w = synthesize_workload({o.prompts, o.max_meanings, o.seed});
    w.lm.save(o.scenario);
    write_dataset(o.out, w.queries);
    err << "wrote " << w.queries.size() << " prompts to " << o.out << " and " << o.scenario << '\n';
    return kExitOk;
}

void add_run_options(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config_path, "JSON config file");
    cmd->add_option("--dataset", o.dataset, "Line-delimited dataset");
    cmd->add_option("--backend", o.backend, "simulated or http")->check(CLI::IsMember({"simulated", "http"}));
    cmd->add_option("--oracle", o.oracle, "exact, ground-truth or nli")
        ->check(CLI::IsMember({"exact", "ground-truth", "nli"}));
    cmd->add_option("--scenario", o.scenario, "Scenario file for the simulated backend");
    cmd->add_option("--gamma", o.gamma, "Variance threshold");
    cmd->add_option("--n-max", o.n_max, "Sample cap");
    cmd->add_option("--n0", o.n0, "Initial direct samples");
    cmd->add_option("--top-k", o.top_k, "Alternatives per perturbed position");
    cmd->add_option("--snis-draws", o.snis_draws, "Importance draws per posterior evaluation");
    cmd->add_option("--seed", o.seed, "Global seed");
    cmd->add_option("--workers", o.workers, "Prompts processed in parallel");
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Adaptive Bayesian semantic entropy", "sembayes"};
    app.require_subcommand(1);
    Options o;

    auto* estimate = app.add_subcommand("estimate", "Estimate semantic entropy for every prompt in a dataset");
    add_run_options(estimate, o);
    estimate->add_option("--out", o.out, "Results file (default: stdout)");

    auto* benchmark = app.add_subcommand("benchmark", "Compare adaptive and fixed-budget estimation");
    add_run_options(benchmark, o);
    benchmark->add_option("--out", o.out, "Report file; CSVs are written next to it");
    benchmark->add_option("--budgets", o.budgets, "Comma-separated mean sample budgets")->delimiter(',');
    benchmark->add_option("--subsample", o.subsample, "Prompts used for calibration");

    auto* calibrate = app.add_subcommand("calibrate", "Find the threshold reaching a target mean sample count");
    add_run_options(calibrate, o);
    calibrate->add_option("--target-n", o.target_n, "Target mean samples")->required();
    calibrate->add_option("--subsample", o.subsample, "Prompts used for calibration");

    auto* auroc_cmd = app.add_subcommand("auroc", "Score a results file against dataset labels");
    auroc_cmd->add_option("--dataset", o.dataset, "Labeled dataset")->required();
    auroc_cmd->add_option("--results", o.results, "Results file")->required();

    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic workload");
    simulate->add_option("--out", o.out, "Dataset file to write")->required();
    simulate->add_option("--scenario", o.scenario, "Scenario file to write")->required();
    simulate->add_option("--prompts", o.prompts, "Number of prompts")->check(CLI::PositiveNumber);
    simulate->add_option("--max-meanings", o.max_meanings, "Meanings per prompt, at most")->check(CLI::Range(1, 10));
    simulate->add_option("--seed", o.seed, "Seed");

    if (argc > 1 && argv[1][0] != '-' && !app.get_subcommand_no_throw(argv[1])) {
        err << "error: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
        return kExitUsage;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kExitOk;
        }
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (estimate->parsed()) return cmd_estimate(o, *estimate, out, err);
        if (benchmark->parsed()) return cmd_benchmark(o, *benchmark, out, err);
        if (calibrate->parsed()) return cmd_calibrate(o, *calibrate, out, err);
        if (auroc_cmd->parsed()) return cmd_auroc(o, out);
        if (simulate->parsed()) return cmd_simulate(o, err);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const BackendError& e) {
        err << "backend error" << (e.retriable() ? " (retriable)" : "") << ": " << e.what() << '\n';
        return kExitBackend;
    } catch (const DatasetError& e) {
        err << "dataset error: " << e.what() << '\n';
        return kExitFailure;
    } catch (const CalibrationError& e) {
        err << "calibration error: " << e.what() << '\n';
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace sembayes
