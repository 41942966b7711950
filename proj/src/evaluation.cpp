#include "sembayes/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "sembayes/core.hpp"

namespace sembayes {

namespace {

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

std::string format_budget(double b) {
    if (b == std::floor(b)) return std::to_string(static_cast<long long>(b));
    std::ostringstream os;
    os << b;
    return os.str();
}

// Runs fn(i) for every index on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mu);
                    if (!failure) failure = std::current_exception();
                    next = n;
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

void require_workload(const Workload& w) {
    if (!w.generator || !w.oracle || !w.similarity) {
        throw std::invalid_argument("workload needs a generator, an oracle and a similarity");
    }
}

double mean_samples(std::span<const EntropyEstimate> ests) {
    if (ests.empty()) return 0.0;
    double s = 0.0;
    for (const auto& e : ests) s += static_cast<double>(e.samples_used);
    return s / static_cast<double>(ests.size());
}

std::vector<QueryRecord> calibration_subset(std::span<const QueryRecord> queries, std::size_t m,
                                            std::uint64_t seed) {
    std::vector<std::size_t> idx(queries.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (m < idx.size()) {
        Rng rng(derive_seed(seed, hash_string("calibration")));
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(m);
        std::sort(idx.begin(), idx.end());
    }
    std::vector<QueryRecord> out;
    for (std::size_t i : idx) out.push_back(queries[i]);
    return out;
}

std::optional<double> score_auroc(std::span<const QueryRecord> queries, std::span<const double> scores) {
    std::vector<double> s;
    std::vector<int> l;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (!queries[i].label) continue;
        s.push_back(scores[i]);
        l.push_back(*queries[i].label);
    }
    const auto positives = std::count(l.begin(), l.end(), 1);
    if (positives == 0 || positives == static_cast<long>(l.size())) return std::nullopt;
    return auroc(s, l);
}

std::optional<double> score_rmse(std::span<const double> truth, std::span<const double> scores) {
    if (truth.empty()) return std::nullopt;
    double se = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) se += (scores[i] - truth[i]) * (scores[i] - truth[i]);
    return std::sqrt(se / static_cast<double>(truth.size()));
}

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string optional_csv(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

}  // namespace

std::vector<QueryRecord> parse_dataset(std::istream& in) {
    std::vector<QueryRecord> out;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DatasetError("line " + std::to_string(lineno) + ": invalid JSON: " + e.what(), lineno);
        }
        if (!doc.is_object()) throw DatasetError("line " + std::to_string(lineno) + ": expected an object", lineno);
        QueryRecord r;
        try {
            r.id = doc.at("id").get<std::string>();
            r.prompt = doc.at("prompt").get<std::string>();
            if (doc.contains("label") && !doc["label"].is_null()) {
                const auto& lab = doc["label"];
                if (lab.is_boolean()) {
                    r.label = lab.get<bool>() ? 1 : 0;
                } else {
                    r.label = lab.get<int>();
                }
                if (*r.label != 0 && *r.label != 1) {
                    throw DatasetError("line " + std::to_string(lineno) + ": label must be 0 or 1", lineno);
                }
            }
            if (doc.contains("reference") && !doc["reference"].is_null()) {
                r.reference = doc["reference"].get<std::string>();
            }
        } catch (const nlohmann::json::exception& e) {
            throw DatasetError("line " + std::to_string(lineno) + ": " + e.what(), lineno);
        }
        if (r.id.empty()) throw DatasetError("line " + std::to_string(lineno) + ": empty id", lineno);
        if (!seen.insert(r.id).second) {
            throw DatasetError("line " + std::to_string(lineno) + ": duplicate id '" + r.id + "'", lineno);
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<QueryRecord> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open dataset '" + path + "'", 0);
    return parse_dataset(in);
}

void write_dataset(const std::string& path, std::span<const QueryRecord> records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    for (const auto& r : records) {
        nlohmann::json j = {{"id", r.id}, {"prompt", r.prompt}};
        if (r.label) j["label"] = *r.label;
        if (r.reference) j["reference"] = *r.reference;
        out << j.dump() << '\n';
    }
}

ResultRecord make_result(const std::string& id, const EntropyEstimate& est) {
    ResultRecord r;
    r.id = id;
    r.entropy = est.mean;
    r.variance = est.variance;
    r.samples_used = est.samples_used;
    r.k_map = est.k_posterior.probs.empty() ? 0 : est.k_posterior.map_k();
    r.terminated_by = est.terminated_by;
    r.lambda_hat = est.lambda_hat;
    return r;
}

nlohmann::json to_json(const ResultRecord& r) {
    return {{"id", r.id},
            {"entropy", r.entropy},
            {"variance", r.variance},
            {"samples_used", r.samples_used},
            {"k_map", r.k_map},
            {"terminated_by", to_string(r.terminated_by)},
            {"lambda_hat", r.lambda_hat}};
}

ResultRecord result_from_json(const nlohmann::json& j) {
    ResultRecord r;
    try {
        r.id = j.at("id").get<std::string>();
        r.entropy = j.at("entropy").get<double>();
        r.variance = j.at("variance").get<double>();
        r.samples_used = j.at("samples_used").get<std::size_t>();
        r.k_map = j.value("k_map", std::size_t{0});
        const std::string t = j.value("terminated_by", std::string("threshold"));
        if (t == "threshold") {
            r.terminated_by = Termination::threshold;
        } else if (t == "budget") {
            r.terminated_by = Termination::budget;
        } else {
            throw std::invalid_argument("unknown termination '" + t + "'");
        }
        r.lambda_hat = j.value("lambda_hat", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("result record: ") + e.what());
    }
    return r;
}

std::vector<ResultRecord> load_results(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open results '" + path + "'", 0);
    std::vector<ResultRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(result_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw DatasetError("line " + std::to_string(lineno) + ": " + e.what(), lineno);
        }
    }
    return out;
}

void write_results(const std::string& path, std::span<const ResultRecord> results) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    for (const auto& r : results) out << to_json(r).dump() << '\n';
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auroc: scores and labels differ in length");
    std::size_t pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw std::invalid_argument("auroc: labels must be 0 or 1");
        pos += static_cast<std::size_t>(l);
    }
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw std::invalid_argument("auroc: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Midranks, 1-based.
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) {
            if (labels[order[t]] == 1) rank_sum += midrank;
        }
        i = j + 1;
    }
    const double p = static_cast<double>(pos);
    const double u = rank_sum - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(neg));
}

std::uint64_t prompt_seed(std::uint64_t seed, const std::string& id) { return derive_seed(seed, hash_string(id)); }

std::vector<EntropyEstimate> run_adaptive(std::span<const QueryRecord> queries, const Workload& workload,
                                          const EstimatorConfig& config, std::size_t workers) {
    require_workload(workload);
    config.validate();
    std::vector<EntropyEstimate> out(queries.size());
    parallel_for(queries.size(), workers, [&](std::size_t i) {
        EstimatorConfig c = config;
        c.seed = prompt_seed(config.seed, queries[i].id);
        out[i] = estimate_semantic_entropy(queries[i].prompt, *workload.generator, *workload.oracle,
                                           *workload.similarity, c);
    });
    return out;
}

std::vector<double> run_fixed(std::span<const QueryRecord> queries, const Workload& workload, std::size_t n,
                              std::uint64_t seed, std::size_t workers) {
    require_workload(workload);
    if (n == 0) throw std::invalid_argument("run_fixed: n must be positive");
    std::vector<double> out(queries.size());
    parallel_for(queries.size(), workers, [&](std::size_t i) {
        Rng rng(derive_seed(prompt_seed(seed, queries[i].id), hash_string("fixed"), n));
        out[i] = baseline_semantic_entropy(queries[i].prompt, *workload.generator, *workload.oracle, n, rng);
    });
    return out;
}

CalibrationResult calibrate_gamma(std::span<const QueryRecord> queries, const Workload& workload,
                                  const EstimatorConfig& config, double target_mean_n,
                                  const CalibrationOptions& options) {
    if (queries.empty()) throw std::invalid_argument("calibrate_gamma: empty dataset");
    if (!(options.gamma_lo > 0.0) || !(options.gamma_hi > options.gamma_lo)) {
        throw std::invalid_argument("calibrate_gamma: need 0 < gamma_lo < gamma_hi");
    }
    if (options.subsample == 0) throw std::invalid_argument("calibrate_gamma: subsample must be positive");
    const auto n0 = static_cast<double>(config.n0);
    const auto n_max = static_cast<double>(config.n_max);
    if (!(target_mean_n > n0) || target_mean_n > n_max) {
        std::ostringstream os;
        os << "target mean of " << target_mean_n << " samples must lie in (" << n0 << ", " << n_max << "]";
        throw CalibrationError(os.str(), n0, n_max);
    }
    const auto subset = calibration_subset(queries, options.subsample, config.seed);

    std::size_t steps = 0;
    auto mean_at = [&](double gamma) {
        EstimatorConfig c = config;
        c.gamma = gamma;
        ++steps;
        return mean_samples(run_adaptive(subset, workload, c, options.workers));
    };

    // Smaller gamma means more samples.
    const double most = mean_at(options.gamma_lo);
    const double least = mean_at(options.gamma_hi);
    auto range_error = [&] {
        std::ostringstream os;
        os << "target mean of " << target_mean_n << " samples is unreachable; achievable range is [" << least
           << ", " << most << "]";
        return CalibrationError(os.str(), least, most);
    };
    if (target_mean_n > most + options.tolerance || target_mean_n < least - options.tolerance) throw range_error();

    CalibrationResult best{options.gamma_lo, most, steps};
    auto consider = [&](double gamma, double mean) {
        if (std::abs(mean - target_mean_n) < std::abs(best.achieved_mean - target_mean_n)) {
            best.gamma = gamma;
            best.achieved_mean = mean;
        }
    };
    consider(options.gamma_hi, least);

    double lo = std::log(options.gamma_lo);
    double hi = std::log(options.gamma_hi);
    while (std::abs(best.achieved_mean - target_mean_n) > options.tolerance && steps < options.max_steps) {
        const double mid = 0.5 * (lo + hi);
        const double gamma = std::exp(mid);
        const double mean = mean_at(gamma);
        consider(gamma, mean);
        if (mean > target_mean_n) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best.steps = steps;
    return best;
}

nlohmann::json BenchmarkReport::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) {
        rows_json.push_back({{"method", r.method},
                             {"budget", r.budget},
                             {"mean_samples", r.mean_samples},
                             {"auroc", optional_json(r.auroc)},
                             {"rmse", optional_json(r.rmse)},
                             {"gamma", optional_json(r.gamma)},
                             {"generator_calls", r.generator_calls}});
    }
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [method, counts] : histograms) {
        nlohmann::json h = nlohmann::json::object();
        for (const auto& [n, c] : counts) h[std::to_string(n)] = c;
        hist[method] = h;
    }
    return {{"rows", rows_json}, {"histograms", hist}};
}

std::string BenchmarkReport::rows_csv() const {
    std::ostringstream os;
    os << "method,budget,mean_samples,auroc,rmse,gamma,generator_calls\n";
    for (const auto& r : rows) {
        os << r.method << ',' << format_double(r.budget) << ',' << format_double(r.mean_samples) << ','
           << optional_csv(r.auroc) << ',' << optional_csv(r.rmse) << ',' << optional_csv(r.gamma) << ','
           << r.generator_calls << '\n';
    }
    return os.str();
}

std::string BenchmarkReport::histogram_csv() const {
    std::ostringstream os;
    os << "method,samples_used,prompts\n";
    for (const auto& [method, counts] : histograms) {
        for (const auto& [n, c] : counts) os << method << ',' << n << ',' << c << '\n';
    }
    return os.str();
}

std::string BenchmarkReport::table() const {
    std::ostringstream os;
    os << std::left << std::setw(16) << "method" << std::right << std::setw(10) << "mean_n" << std::setw(10)
       << "auroc" << std::setw(10) << "rmse" << std::setw(12) << "gamma" << std::setw(12) << "calls"
       << std::setw(10) << "seconds" << '\n';
    auto cell = [&](const std::optional<double>& v, int width) {
        if (v) {
            os << std::setw(width) << std::setprecision(4) << *v;
        } else {
            os << std::setw(width) << "-";
        }
    };
    for (const auto& r : rows) {
        os << std::left << std::setw(16) << r.method << std::right << std::fixed << std::setprecision(2)
           << std::setw(10) << r.mean_samples;
        os.unsetf(std::ios::floatfield);
        cell(r.auroc, 10);
        cell(r.rmse, 10);
        cell(r.gamma, 12);
        os << std::setw(12) << r.generator_calls << std::fixed << std::setprecision(2) << std::setw(10)
           << r.runtime_seconds << '\n';
        os.unsetf(std::ios::floatfield);
    }
    return os.str();
}

BenchmarkReport run_benchmark(std::span<const QueryRecord> queries, const Workload& workload,
                              const EstimatorConfig& config, const BenchmarkOptions& options) {
    require_workload(workload);
    if (queries.empty()) throw DatasetError("benchmark: empty dataset", 0);
    if (options.budgets.empty()) throw std::invalid_argument("benchmark: no budgets");
    const bool labeled = std::any_of(queries.begin(), queries.end(), [](const auto& q) { return q.label; });
    if (!labeled && !workload.exact_entropy) {
        throw DatasetError("benchmark: dataset has no labels and the backend has no exact entropies", 0);
    }
    std::vector<double> truth;
    if (workload.exact_entropy) {
        for (const auto& q : queries) truth.push_back(workload.exact_entropy(q.prompt));
    }

    CountingGenerator counting(*workload.generator);
    Workload counted = workload;
    counted.generator = &counting;
    using clock = std::chrono::steady_clock;

    BenchmarkReport report;
    for (double budget : options.budgets) {
        if (!(budget >= 1.0)) throw std::invalid_argument("benchmark: budgets must be at least 1");
        if (budget == std::floor(budget)) {
            const auto n = static_cast<std::size_t>(budget);
            counting.reset();
            const auto t0 = clock::now();
            const auto scores = run_fixed(queries, counted, n, config.seed, options.workers);
            BenchmarkRow row;
            row.method = "fixed-se@" + format_budget(budget);
            row.budget = budget;
            row.mean_samples = budget;
            row.auroc = score_auroc(queries, scores);
            row.rmse = score_rmse(truth, scores);
            row.generator_calls = counting.calls();
            row.runtime_seconds = std::chrono::duration<double>(clock::now() - t0).count();
            report.rows.push_back(std::move(row));
        }

        const auto t0 = clock::now();
        CalibrationOptions cal = options.calibration;
        cal.workers = options.workers;
        const CalibrationResult calibrated = calibrate_gamma(queries, workload, config, budget, cal);
        EstimatorConfig c = config;
        c.gamma = calibrated.gamma;
        counting.reset();
        const auto ests = run_adaptive(queries, counted, c, options.workers);
        std::vector<double> scores;
        std::map<std::size_t, std::size_t> hist;
        for (const auto& e : ests) {
            scores.push_back(e.mean);
            ++hist[e.samples_used];
        }
        BenchmarkRow row;
        row.method = "adaptive@" + format_budget(budget);
        row.budget = budget;
        row.mean_samples = mean_samples(ests);
        row.auroc = score_auroc(queries, scores);
        row.rmse = score_rmse(truth, scores);
        row.gamma = calibrated.gamma;
        row.generator_calls = counting.calls();
        row.runtime_seconds = std::chrono::duration<double>(clock::now() - t0).count();
        report.histograms[row.method] = std::move(hist);
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::optional<int> simulated_label(const SimulatedLM& lm, const std::string& prompt) {
    const auto& sc = lm.scenario(prompt);
    if (!sc.correct_meaning) return std::nullopt;
    const auto dist = lm.meaning_distribution(prompt);
    const auto it = dist.find(*sc.correct_meaning);
    const double p = it == dist.end() ? 0.0 : it->second;
    return p < 0.5 ? 1 : 0;
}

SimulatedWorkload synthesize_workload(const WorkloadOptions& options) {
    static const std::vector<std::string> kAnswers = {
        "Paris", "Rome",  "Oslo",  "Bern",   "Lima",  "Cairo", "Delhi", "Tokyo", "Quito", "Dakar",
        "Hanoi", "Accra", "Sofia", "Minsk",  "Riga",  "Kyiv",  "Doha",  "Baku",  "Male",  "Suva",
        "Apia",  "Nuuk",  "Vaduz", "Monaco", "Dili",  "Praia", "Bamako", "Niamey", "Lome", "Juba"};
    static const std::vector<double> kConcentrations = {0.2, 0.5, 1.0, 3.0};
    if (options.max_meanings < 1 || options.max_meanings > 10) {
        throw std::invalid_argument("workload: max_meanings must be in [1, 10]");
    }

    SimulatedWorkload w;
    Rng rng(derive_seed(options.seed, hash_string("workload")));
    for (std::size_t q = 0; q < options.prompts; ++q) {
        const std::string id = "q" + std::to_string(q);
        const std::string prompt = "question " + std::to_string(q) + "?";
        const std::size_t m = std::uniform_int_distribution<std::size_t>(1, options.max_meanings)(rng);
        const double conc = kConcentrations[std::uniform_int_distribution<std::size_t>(0, 3)(rng)];
        std::gamma_distribution<double> g(conc, 1.0);
        std::vector<double> p(m);
        for (auto& v : p) v = std::max(g(rng), 1e-300);
        const double total = std::accumulate(p.begin(), p.end(), 0.0);
        for (auto& v : p) v /= total;
        // Keep every meaning reachable with non-negligible mass.
        for (auto& v : p) v = 0.98 * v + 0.02 / static_cast<double>(m);

        std::vector<std::string> answers = kAnswers;
        std::shuffle(answers.begin(), answers.end(), rng);
        const double short_share = std::uniform_real_distribution<double>(0.5, 0.9)(rng);
        std::vector<ScenarioSequence> seqs;
        for (std::size_t j = 0; j < m; ++j) {
            const int meaning = static_cast<int>(j);
            seqs.push_back({{answers[j], "</s>"}, p[j] * short_share, meaning});
            seqs.push_back({{"it", " is", " " + answers[j], "</s>"}, p[j] * (1.0 - short_share), meaning});
        }
        const std::size_t argmax = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        const bool confident = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.8;
        const int correct = static_cast<int>(
            confident ? argmax : std::uniform_int_distribution<std::size_t>(0, m - 1)(rng));
        w.lm.add_scenario(PromptScenario::from_sequences(prompt, seqs, correct));
        w.queries.push_back({id, prompt, p[static_cast<std::size_t>(correct)] < 0.5 ? 1 : 0, answers[correct]});
    }
    return w;
}

Response CountingGenerator::sample_response(std::string_view prompt, Rng& rng) const {
    ++calls_;
    return inner_->sample_response(prompt, rng);
}

std::vector<TokenProb> CountingGenerator::next_token_distribution(std::string_view prompt,
                                                                  std::span<const std::string> prefix) const {
    ++calls_;
    return inner_->next_token_distribution(prompt, prefix);
}

Response CountingGenerator::continue_with(std::string_view prompt, const TokenPrefix& prefix,
                                          const TokenProb& forced, Rng& rng) const {
    ++calls_;
    return inner_->continue_with(prompt, prefix, forced, rng);
}

}  // namespace sembayes
