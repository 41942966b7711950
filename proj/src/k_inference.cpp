#include "sembayes/k_inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sembayes {

TokenImportanceProfile token_importance_weights(const Response& resp, const Similarity& sim) {
    TokenImportanceProfile profile;
    profile.weights.resize(resp.size(), 1.0);
    if (resp.size() == 1) return profile;

    const std::string full = render_tokens(resp.tokens());
    for (std::size_t j = 0; j < resp.size(); ++j) {
        const std::string reduced = render_tokens(resp.tokens(), j);
        const double s = std::clamp(sim.similarity(full, reduced), 0.0, 1.0);
        profile.weights[j] = 1.0 - s;
    }
    return profile;
}

double weighted_perplexity(const Response& resp, const TokenImportanceProfile& profile) {
    const auto& lp = resp.token_logprobs();
    if (profile.weights.size() != lp.size()) {
        throw std::invalid_argument("weighted_perplexity: profile does not match the response");
    }
    double wsum = 0.0;
    for (double w : profile.weights) wsum += w;

    double acc = 0.0;
    if (wsum > 0.0) {
        for (std::size_t j = 0; j < lp.size(); ++j) acc += profile.weights[j] * lp[j];
        acc /= wsum;
    } else {
        for (double v : lp) acc += v;
        acc /= static_cast<double>(lp.size());
    }
    return std::max(1.0, std::exp(-acc));
}

double estimate_lambda(std::span<const Response> initial, const Similarity& sim) {
    if (initial.empty()) throw std::invalid_argument("estimate_lambda: no initial responses");
    double total = 0.0;
    for (const auto& r : initial) total += weighted_perplexity(r, token_importance_weights(r, sim));
    return total / static_cast<double>(initial.size());
}

std::size_t truncation_k_max(double lambda, std::size_t k_obs) {
    const auto scaled = static_cast<std::size_t>(std::ceil(3.0 * lambda));
    return std::max(k_obs, scaled);
}

KPrior k_prior(double lambda, std::size_t k_obs) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw std::invalid_argument("k_prior: lambda must be positive");
    }
    if (k_obs == 0) throw std::invalid_argument("k_prior: k_obs must be at least 1");

    KPrior prior;
    prior.lambda = lambda;
    prior.k_max = truncation_k_max(lambda, k_obs);

    std::vector<double> logs(prior.k_max);
    for (std::size_t k = 1; k <= prior.k_max; ++k) {
        const double kd = static_cast<double>(k);
        logs[k - 1] = kd * std::log(lambda) - lambda - std::lgamma(kd + 1.0);
    }
    const double lse = log_sum_exp(logs);
    prior.probs.resize(prior.k_max);
    for (std::size_t i = 0; i < logs.size(); ++i) prior.probs[i] = std::exp(logs[i] - lse);
    return prior;
}

std::vector<std::size_t> KPosterior::support() const {
    std::vector<std::size_t> out;
    for (std::size_t k = k_obs; k <= k_max; ++k) out.push_back(k);
    return out;
}

double KPosterior::prob(std::size_t k) const {
    if (k < k_obs || k > k_max) return 0.0;
    return probs[k - k_obs];
}

std::size_t KPosterior::map_k() const {
    const auto it = std::max_element(probs.begin(), probs.end());
    return k_obs + static_cast<std::size_t>(std::distance(probs.begin(), it));
}

KPosterior k_posterior(const KPrior& prior, const std::map<std::size_t, double>& log_evidence,
                       std::size_t k_obs) {
    if (k_obs == 0 || k_obs > prior.k_max) {
        throw std::invalid_argument("k_posterior: k_obs outside the prior support");
    }
    KPosterior post;
    post.k_obs = k_obs;
    post.k_max = prior.k_max;

    std::vector<double> logs;
    for (std::size_t k = k_obs; k <= prior.k_max; ++k) {
        const auto it = log_evidence.find(k);
        if (it == log_evidence.end()) {
            throw std::invalid_argument("k_posterior: missing evidence for K=" + std::to_string(k));
        }
        post.log_evidence.push_back(it->second);
        const double lp = prior.prob(k);
        logs.push_back(lp > 0.0 ? it->second + std::log(lp)
                                : -std::numeric_limits<double>::infinity());
    }
    const double lse = log_sum_exp(logs);
    if (!std::isfinite(lse)) throw std::invalid_argument("k_posterior: every hypothesis has zero evidence");

    post.probs.resize(logs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logs.size(); ++i) {
        post.probs[i] = std::exp(logs[i] - lse);
        total += post.probs[i];
    }
    for (double& p : post.probs) p /= total;
    return post;
}

}  // namespace sembayes
