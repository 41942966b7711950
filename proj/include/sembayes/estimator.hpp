#pragma once

// Adaptive semantic-entropy estimation.
//
// The belief h about the semantic entropy is marginalized over the unknown
// number of meanings K:
//
//     E[h|D]   = sum_K p(K|D) E[h|K,D]
//     Var[h|D] = sum_K p(K|D) Var[h|K,D]  +  sum_K p(K|D) (E[h|K,D] - E[h|D])^2
//
// Sampling continues, one guided sample at a time, until Var[h|D] drops to
// the threshold gamma or the sample cap n_max is reached.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sembayes/core.hpp"
#include "sembayes/errors.hpp"
#include "sembayes/generator.hpp"
#include "sembayes/k_inference.hpp"
#include "sembayes/oracle.hpp"
#include "sembayes/similarity.hpp"
#include "sembayes/truncated_posterior.hpp"

namespace sembayes {

struct EstimatorConfig {
    double gamma = 1e-2;          // variance threshold, nats^2
    std::size_t n0 = 1;           // initial direct samples
    std::size_t top_k = 3;        // alternatives per perturbed position
    double alpha0 = 1.0;          // symmetric Dirichlet prior
    std::size_t n_max = 10;       // hard sample cap
    std::size_t snis_draws = kDefaultSnisDraws;
    std::uint64_t seed = 0;
    bool marginal_prior_only = false;
    bool guided = true;           // false: every extra sample is a direct draw

    // Throws std::invalid_argument on an inconsistent configuration.
    void validate() const;
};

enum class Termination { threshold, budget };

const char* to_string(Termination t) noexcept;

struct PerKStats {
    std::size_t k = 0;
    double mean = 0.0;
    double variance = 0.0;
    double log_evidence = 0.0;
};

struct TotalMoments {
    double mean = 0.0;
    double variance = 0.0;
    double within = 0.0;   // E_K[Var[h|K,D]]
    double between = 0.0;  // Var_K[E[h|K,D]]
};

struct EntropyEstimate {
    double mean = 0.0;
    double variance = 0.0;
    double within_variance = 0.0;
    double between_variance = 0.0;
    std::size_t samples_used = 0;
    std::size_t guided_samples = 0;
    KPosterior k_posterior;
    std::vector<PerKStats> per_k_stats;
    double lambda_hat = 1.0;
    Termination terminated_by = Termination::threshold;
};

// A backend failed mid-run. Carries the estimate as of the last completed
// update, when one exists.
class EstimationInterrupted : public BackendError {
public:
    EstimationInterrupted(const std::string& what, bool retriable, std::optional<EntropyEstimate> partial)
        : BackendError(what, retriable), partial_(std::move(partial)) {}

    const std::optional<EntropyEstimate>& partial() const noexcept { return partial_; }

private:
    std::optional<EntropyEstimate> partial_;
};

// per_k must be aligned with kpost's support. Throws std::invalid_argument
// otherwise.
TotalMoments total_moments(const KPosterior& kpost, std::span<const PerKStats> per_k);

// alpha_j = alpha0 + n_j rescaled so the total equals K * alpha0 + N, with N
// the raw sample count. Counts beyond the observed categories are zero.
std::vector<double> scaled_alphas(std::span<const double> observed_counts, std::size_t k, double alpha0,
                                  std::size_t raw_count);

// Adds the sample (effective count += weight) and returns the scaled
// Dirichlet parameters for a K-category hypothesis.
std::vector<double> update_with_weighted_sample(EstimationDataset& dataset, SemanticSample sample,
                                                std::size_t k, double alpha0);

// Posterior over K plus per-K conditional moments for the current dataset.
struct PosteriorSnapshot {
    KPosterior k_posterior;
    std::vector<PerKStats> per_k;
    TotalMoments totals;
};

// Every K hypothesis gets its own seed stream derived from (seed, tag, K).
PosteriorSnapshot posterior_snapshot(const EstimationDataset& dataset, const KPrior& prior,
                                     const PosteriorOptions& options, std::uint64_t seed, std::uint64_t tag);

EntropyEstimate estimate_semantic_entropy(std::string_view prompt, const Generator& generator,
                                          const EquivalenceOracle& oracle, const Similarity& sim,
                                          const EstimatorConfig& config);

// Plug-in semantic entropy of n direct samples.
double baseline_semantic_entropy(std::string_view prompt, const Generator& generator,
                                 const EquivalenceOracle& oracle, std::size_t n, Rng& rng);

}  // namespace sembayes
