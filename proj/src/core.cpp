#include "sembayes/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include <boost/math/special_functions/digamma.hpp>

namespace sembayes {

namespace {

constexpr double kSimplexTolerance = 1e-9;
constexpr double kLogProbTolerance = 1e-9;

void require_positive(std::span<const double> alpha) {
    if (alpha.empty()) throw std::invalid_argument("dirichlet: empty parameter vector");
    for (double a : alpha) {
        if (!(a > 0.0) || !std::isfinite(a)) {
            throw std::invalid_argument("dirichlet: parameters must be positive and finite");
        }
    }
}

}  // namespace

bool is_end_marker(std::string_view token) noexcept {
    return token == "</s>" || token == "<eos>" || token == "<|endoftext|>" ||
           token == "<|eot_id|>" || token == "<|end|>";
}

std::string render_tokens(std::span<const std::string> tokens, std::optional<std::size_t> skip) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (skip && *skip == i) continue;
        if (is_end_marker(tokens[i])) continue;
        out += tokens[i];
    }
    return out;
}

Response::Response(std::vector<std::string> tokens, std::vector<double> token_logprobs,
                   std::string text)
    : tokens_(std::move(tokens)), token_logprobs_(std::move(token_logprobs)), text_(std::move(text)) {
    if (tokens_.empty()) throw std::invalid_argument("Response: at least one token required");
    if (tokens_.size() != token_logprobs_.size()) {
        throw std::invalid_argument("Response: tokens and token_logprobs differ in length");
    }
    for (double lp : token_logprobs_) {
        if (std::isnan(lp) || lp > kLogProbTolerance) {
            throw std::invalid_argument("Response: token log-probabilities must be <= 0");
        }
    }
    log_prob_ = std::accumulate(token_logprobs_.begin(), token_logprobs_.end(), 0.0);
}

Response::Response(std::vector<std::string> tokens, std::vector<double> token_logprobs)
    : Response(tokens, std::move(token_logprobs), render_tokens(tokens)) {}

std::string Response::sequence_key() const {
    std::string key;
    for (const auto& t : tokens_) {
        key += t;
        key += '\x1f';
    }
    return key;
}

double sequence_log_prob(const Response& resp) noexcept { return resp.log_prob(); }

void EstimationDataset::add(SemanticSample sample) {
    const double w = sample.importance_weight;
    if (!(w > 0.0) || w > 1.0) {
        throw std::invalid_argument("EstimationDataset: importance weight must lie in (0, 1]");
    }
    if (sample.source == SampleSource::direct && w != 1.0) {
        throw std::invalid_argument("EstimationDataset: direct samples carry weight 1");
    }
    if (sample.meaning_id < 0) throw std::invalid_argument("EstimationDataset: negative meaning id");

    effective_counts_[sample.meaning_id] += w;
    distinct_sequences_.try_emplace({sample.meaning_id, sample.response.sequence_key()},
                                    std::exp(sample.response.log_prob()));
    samples_.push_back(std::move(sample));
}

std::vector<double> EstimationDataset::observed_counts() const {
    std::vector<double> out;
    out.reserve(effective_counts_.size());
    for (const auto& [id, n] : effective_counts_) out.push_back(n);
    return out;
}

std::vector<double> EstimationDataset::observed_sequence_mass() const {
    std::vector<double> out;
    out.reserve(effective_counts_.size());
    auto it = distinct_sequences_.begin();
    for (const auto& [id, n] : effective_counts_) {
        double mass = 0.0;
        for (; it != distinct_sequences_.end() && it->first.first == id; ++it) mass += it->second;
        out.push_back(mass);
    }
    return out;
}

ProbabilityVector::ProbabilityVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw std::invalid_argument("ProbabilityVector: empty");
    double sum = 0.0;
    for (double v : values_) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument("ProbabilityVector: components must be nonnegative");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
        throw std::invalid_argument("ProbabilityVector: components must sum to 1");
    }
}

double entropy_of(std::span<const double> p) noexcept {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

double shannon_entropy(const ProbabilityVector& p) {
    // Rounding can push the sum a hair past ln K for near-uniform inputs.
    const double cap = std::log(static_cast<double>(p.size()));
    return std::clamp(entropy_of(p.values()), 0.0, cap);
}

double log_sum_exp(std::span<const double> values) noexcept {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : values) m = std::max(m, v);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : values) s += std::exp(v - m);
    return m + std::log(s);
}

void dirichlet_sample_log(std::span<const double> alpha, Rng& rng, std::span<double> log_out) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t j = 0; j < alpha.size(); ++j) {
        const double a = alpha[j];
        if (a >= 1.0) {
            std::gamma_distribution<double> g(a, 1.0);
            log_out[j] = std::log(g(rng));
        } else {
            // G(a) = G(a + 1) * U^(1/a), kept in log space.
            std::gamma_distribution<double> g(a + 1.0, 1.0);
            const double lg = std::log(g(rng));
            double u = unif(rng);
            while (u <= 0.0) u = unif(rng);
            log_out[j] = lg + std::log(u) / a;
        }
    }
    const double lse = log_sum_exp(log_out);
    for (double& v : log_out) v -= lse;
}

ProbabilityVector dirichlet_sample(std::span<const double> alpha, Rng& rng) {
    require_positive(alpha);
    std::vector<double> logs(alpha.size());
    dirichlet_sample_log(alpha, rng, logs);
    std::vector<double> p(alpha.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        p[j] = std::exp(logs[j]);
        sum += p[j];
    }
    for (double& v : p) v /= sum;
    return ProbabilityVector(std::move(p));
}

double dirichlet_log_density(const ProbabilityVector& p, std::span<const double> alpha) {
    require_positive(alpha);
    if (p.size() != alpha.size()) {
        throw std::invalid_argument("dirichlet_log_density: dimension mismatch");
    }
    double a_sum = 0.0;
    double log_norm = 0.0;
    double log_kernel = 0.0;
    for (std::size_t j = 0; j < alpha.size(); ++j) {
        a_sum += alpha[j];
        log_norm -= std::lgamma(alpha[j]);
        if (alpha[j] == 1.0) continue;
        if (p[j] == 0.0) {
            if (alpha[j] < 1.0) {
                throw std::domain_error("dirichlet_log_density: infinite density on the boundary");
            }
            return -std::numeric_limits<double>::infinity();
        }
        log_kernel += (alpha[j] - 1.0) * std::log(p[j]);
    }
    return log_norm + std::lgamma(a_sum) + log_kernel;
}

double dirichlet_entropy_mean_closed_form(std::span<const double> alpha) {
    require_positive(alpha);
    const double a_sum = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    double h = boost::math::digamma(a_sum + 1.0);
    for (double a : alpha) h -= (a / a_sum) * boost::math::digamma(a + 1.0);
    return h;
}

}  // namespace sembayes
