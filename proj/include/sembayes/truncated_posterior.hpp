#pragma once

// Truncated Dirichlet posterior over category probabilities.
//
// Observed sequences give hard lower bounds p_j >= b_j on each category's
// probability. The posterior Dir(alpha) restricted to that constraint set is
// integrated by self-normalized importance sampling with the affine proposal
//
//     p = b + (1 - B) u,   u ~ Dir(alpha),   B = sum_j b_j,
//
// which lands inside the constraint set on every draw. The proposal density
// is Dir_alpha(u) / (1 - B)^(K-1), so the importance weight reduces to
//
//     w(p) = (1 - B)^(K-1) * prod_j (p_j / u_j)^(alpha_j - 1)
//
// and its mean over the proposal estimates the constrained mass Z_C.

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "sembayes/core.hpp"

namespace sembayes {

class ConstraintSet {
public:
    // Throws std::invalid_argument when a bound leaves [0, 1] or the total
    // exceeds 1 + 1e-6.
    explicit ConstraintSet(std::vector<double> bounds);

    // No constraints on K categories.
    static ConstraintSet unconstrained(std::size_t k);

    const std::vector<double>& bounds() const noexcept { return bounds_; }
    double total_mass() const noexcept { return total_mass_; }
    std::size_t size() const noexcept { return bounds_.size(); }
    bool degenerate() const noexcept;

private:
    std::vector<double> bounds_;
    double total_mass_ = 0.0;
};

inline constexpr double kDegenerateMassThreshold = 1.0 - 1e-6;
inline constexpr double kMinReliableEss = 10.0;
inline constexpr std::size_t kMinSnisDraws = 100;
inline constexpr std::size_t kDefaultSnisDraws = 4096;

struct SnisResult {
    double mean = 0.0;
    double second_moment = 0.0;
    double variance = 0.0;
    double effective_sample_size = 0.0;
    std::size_t draws_used = 0;
    // ln of the mean importance weight, i.e. an estimate of ln Z_C.
    double log_normalizer = 0.0;
    // Constraint mass reached 1; p is pinned to b / B.
    bool degenerate = false;
    // Effective sample size fell below kMinReliableEss.
    bool unreliable = false;
};

// Weighted multinomial likelihood terms: ln Gamma(N) - sum ln Gamma(n_j) +
// sum n_j ln p_j over categories with n_j > 0. N is the raw sample count.
struct LikelihoodTerms {
    std::vector<double> counts;
    std::size_t raw_count = 0;

    double log_coefficient() const;
    double log_likelihood(std::span<const double> p) const;
};

// Per-category lower bounds: summed probability of the distinct observed
// sequences in each meaning, zero-padded to K. Throws std::invalid_argument
// when K < K_obs.
ConstraintSet lower_bounds(const EstimationDataset& dataset, std::size_t k);

SnisResult snis_entropy_moments(std::span<const double> alpha, const ConstraintSet& constraints,
                                std::size_t draws, Rng& rng);

// ln of the likelihood integrated against the truncated Dir(alpha); draws are
// shared with the entropy moments.
struct SnisEvaluation {
    SnisResult moments;
    double log_evidence = 0.0;
};

SnisEvaluation snis_evaluate(std::span<const double> alpha, const ConstraintSet& constraints,
                             const LikelihoodTerms& likelihood, std::size_t draws, Rng& rng);

struct PosteriorOptions {
    double alpha0 = 1.0;
    std::size_t draws = kDefaultSnisDraws;
    // Integrate the likelihood against the truncated prior Dir(alpha0) rather
    // than the data-informed posterior.
    bool marginal_prior_only = false;
};

// Statistics for one hypothesis about the number of categories K.
struct HypothesisStats {
    std::size_t k = 0;
    double mean = 0.0;
    double variance = 0.0;
    double log_evidence = 0.0;
    SnisResult snis;
};

HypothesisStats evaluate_hypothesis(std::size_t k, const EstimationDataset& dataset,
                                    const PosteriorOptions& options, Rng& rng);

struct EntropyMoments {
    double mean = 0.0;
    double variance = 0.0;
};

EntropyMoments conditional_entropy_stats(std::size_t k, const EstimationDataset& dataset,
                                         double alpha0, std::size_t draws, Rng& rng);

// Returns -infinity when K < K_obs, and 0 for an empty dataset.
double log_marginal_likelihood(std::size_t k, const EstimationDataset& dataset,
                               const PosteriorOptions& options, Rng& rng);
double log_marginal_likelihood(std::size_t k, const EstimationDataset& dataset, double alpha0,
                               std::size_t draws, Rng& rng);

}  // namespace sembayes
