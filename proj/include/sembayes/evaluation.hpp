#pragma once

// Datasets, AUROC, threshold calibration and the adaptive-vs-fixed benchmark.

#include <atomic>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sembayes/errors.hpp"
#include "sembayes/estimator.hpp"
#include "sembayes/simulated_lm.hpp"

namespace sembayes {

struct QueryRecord {
    std::string id;
    std::string prompt;
    std::optional<int> label;  // 1 = hallucination
    std::optional<std::string> reference;
};

// Line-delimited JSON records. Blank lines are skipped. Throws DatasetError
// carrying the 1-based line number for malformed lines and for duplicate ids.
std::vector<QueryRecord> parse_dataset(std::istream& in);
std::vector<QueryRecord> load_dataset(const std::string& path);
void write_dataset(const std::string& path, std::span<const QueryRecord> records);

struct ResultRecord {
    std::string id;
    double entropy = 0.0;
    double variance = 0.0;
    std::size_t samples_used = 0;
    std::size_t k_map = 0;
    Termination terminated_by = Termination::threshold;
    double lambda_hat = 0.0;
};

ResultRecord make_result(const std::string& id, const EntropyEstimate& est);
nlohmann::json to_json(const ResultRecord& r);
ResultRecord result_from_json(const nlohmann::json& j);
std::vector<ResultRecord> load_results(const std::string& path);
void write_results(const std::string& path, std::span<const ResultRecord> results);

// Mann-Whitney AUROC with ties counted one half. Throws std::invalid_argument
// on mismatched lengths, labels outside {0,1} or a single class.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Everything an estimation run over a dataset needs. `exact_entropy`, when
// set, returns the ground-truth semantic entropy for a prompt.
struct Workload {
    const Generator* generator = nullptr;
    const EquivalenceOracle* oracle = nullptr;
    const Similarity* similarity = nullptr;
    std::function<double(const std::string&)> exact_entropy;
};

// Per-prompt seeds come from (config.seed, id), and results keep dataset
// order, so the worker count never changes the output.
std::vector<EntropyEstimate> run_adaptive(std::span<const QueryRecord> queries, const Workload& workload,
                                          const EstimatorConfig& config, std::size_t workers);
std::vector<double> run_fixed(std::span<const QueryRecord> queries, const Workload& workload, std::size_t n,
                              std::uint64_t seed, std::size_t workers);

std::uint64_t prompt_seed(std::uint64_t seed, const std::string& id);

struct CalibrationOptions {
    double gamma_lo = 1e-6;
    double gamma_hi = 10.0;
    double tolerance = 0.25;
    std::size_t max_steps = 12;
    std::size_t subsample = 200;
    std::size_t workers = 1;
};

struct CalibrationResult {
    double gamma = 0.0;
    double achieved_mean = 0.0;
    std::size_t steps = 0;
};

class CalibrationError : public Error {
public:
    CalibrationError(const std::string& what, double min_mean, double max_mean)
        : Error(what), min_mean_(min_mean), max_mean_(max_mean) {}
    double min_mean() const noexcept { return min_mean_; }
    double max_mean() const noexcept { return max_mean_; }

private:
    double min_mean_;
    double max_mean_;
};

// Bisection on log gamma until the mean samples_used over the (sub)sampled
// dataset is within tolerance of the target. The returned result is the best
// candidate seen when the step budget runs out.
CalibrationResult calibrate_gamma(std::span<const QueryRecord> queries, const Workload& workload,
                                  const EstimatorConfig& config, double target_mean_n,
                                  const CalibrationOptions& options = {});

struct BenchmarkRow {
    std::string method;  // "fixed-se@N" or "adaptive@N"
    double budget = 0.0;
    double mean_samples = 0.0;
    std::optional<double> auroc;
    std::optional<double> rmse;
    std::optional<double> gamma;
    std::uint64_t generator_calls = 0;
    double runtime_seconds = 0.0;  // not serialized; reports stay reproducible
};

struct BenchmarkReport {
    std::vector<BenchmarkRow> rows;
    // method -> samples_used -> number of prompts, adaptive methods only
    std::map<std::string, std::map<std::size_t, std::size_t>> histograms;

    nlohmann::json to_json() const;
    std::string rows_csv() const;
    std::string histogram_csv() const;
    std::string table() const;
};

struct BenchmarkOptions {
    std::vector<double> budgets{2.0, 5.0};
    std::size_t workers = 1;
    CalibrationOptions calibration;
};

// Throws DatasetError when there are neither labels nor ground-truth
// entropies to score against.
BenchmarkReport run_benchmark(std::span<const QueryRecord> queries, const Workload& workload,
                              const EstimatorConfig& config, const BenchmarkOptions& options);

// Synthetic workload over the simulated backend. A prompt is labeled a
// hallucination when its designated correct meaning has probability < 0.5.
struct SimulatedWorkload {
    SimulatedLM lm;
    std::vector<QueryRecord> queries;
};

struct WorkloadOptions {
    std::size_t prompts = 200;
    std::size_t max_meanings = 5;
    std::uint64_t seed = 0;
};

SimulatedWorkload synthesize_workload(const WorkloadOptions& options);

// Labels prompts of `lm` from their scenarios' correct meanings; prompts
// without one stay unlabeled.
std::optional<int> simulated_label(const SimulatedLM& lm, const std::string& prompt);

// Wraps a generator and counts calls; safe to share across workers.
class CountingGenerator final : public Generator {
public:
    explicit CountingGenerator(const Generator& inner) : inner_(&inner) {}

    Response sample_response(std::string_view prompt, Rng& rng) const override;
    std::vector<TokenProb> next_token_distribution(std::string_view prompt,
                                                   std::span<const std::string> prefix) const override;
    Response continue_with(std::string_view prompt, const TokenPrefix& prefix, const TokenProb& forced,
                           Rng& rng) const override;

    std::uint64_t calls() const noexcept { return calls_.load(); }
    void reset() noexcept { calls_ = 0; }

private:
    const Generator* inner_;
    mutable std::atomic<std::uint64_t> calls_{0};
};

}  // namespace sembayes
