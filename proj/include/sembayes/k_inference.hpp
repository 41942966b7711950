#pragma once

// Prior and posterior over the number of semantic categories K.
//
// The prior is Poisson(lambda) on K >= 1, truncated at
// k_max = max(K_obs, ceil(3 lambda)) and renormalized. lambda is the mean
// weighted perplexity of the initial responses, where each token's weight
// is how much removing it changes the response (1 - similarity).

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "sembayes/core.hpp"
#include "sembayes/similarity.hpp"

namespace sembayes {

struct TokenImportanceProfile {
    std::vector<double> weights;
};

struct KPrior {
    double lambda = 1.0;
    std::size_t k_max = 1;
    // probs[i] is the mass of K = i + 1.
    std::vector<double> probs;

    double prob(std::size_t k) const { return k >= 1 && k <= k_max ? probs[k - 1] : 0.0; }
};

struct KPosterior {
    std::size_t k_obs = 1;
    std::size_t k_max = 1;
    // probs[i] and log_evidence[i] refer to K = k_obs + i.
    std::vector<double> probs;
    std::vector<double> log_evidence;

    std::vector<std::size_t> support() const;
    double prob(std::size_t k) const;
    std::size_t map_k() const;
};

TokenImportanceProfile token_importance_weights(const Response& resp, const Similarity& sim);

// Falls back to uniform weights when the profile sums to zero.
double weighted_perplexity(const Response& resp, const TokenImportanceProfile& profile);

// Throws std::invalid_argument on an empty list.
double estimate_lambda(std::span<const Response> initial, const Similarity& sim);

std::size_t truncation_k_max(double lambda, std::size_t k_obs);

// Throws std::invalid_argument for nonpositive lambda or k_obs == 0.
KPrior k_prior(double lambda, std::size_t k_obs);

// log_evidence must hold every K in {k_obs, ..., prior.k_max}. Throws
// std::invalid_argument when an entry is missing or every evidence is -inf.
KPosterior k_posterior(const KPrior& prior, const std::map<std::size_t, double>& log_evidence,
                       std::size_t k_obs);

}  // namespace sembayes
