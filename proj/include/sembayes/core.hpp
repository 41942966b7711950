#pragma once

// Shared domain types plus entropy and Dirichlet primitives.
// All logarithms are natural; entropies are in nats.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sembayes/random.hpp"

namespace sembayes {

// Tokens that terminate generation and render as nothing.
bool is_end_marker(std::string_view token) noexcept;

// Concatenates tokens into display text, dropping end markers. When `skip`
// is set, that token index is omitted.
std::string render_tokens(std::span<const std::string> tokens,
                          std::optional<std::size_t> skip = std::nullopt);

// A generated token sequence with per-token conditional log-probabilities.
class Response {
public:
    Response(std::vector<std::string> tokens, std::vector<double> token_logprobs,
             std::string text);
    // Text rendered from the tokens.
    Response(std::vector<std::string> tokens, std::vector<double> token_logprobs);

    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    const std::vector<double>& token_logprobs() const noexcept { return token_logprobs_; }
    const std::string& text() const noexcept { return text_; }
    double log_prob() const noexcept { return log_prob_; }
    std::size_t size() const noexcept { return tokens_.size(); }

    // Identity of the token sequence, independent of detokenization.
    std::string sequence_key() const;

private:
    std::vector<std::string> tokens_;
    std::vector<double> token_logprobs_;
    std::string text_;
    double log_prob_ = 0.0;
};

double sequence_log_prob(const Response& resp) noexcept;

enum class SampleSource { direct, guided };

struct SemanticSample {
    Response response;
    int meaning_id = 0;
    double importance_weight = 1.0;
    SampleSource source = SampleSource::direct;
};

// The estimation dataset: samples with meaning labels, importance-weighted
// per-meaning counts, and the registry of distinct observed sequences.
class EstimationDataset {
public:
    // Throws std::invalid_argument on a weight outside (0, 1], a direct
    // sample with weight != 1, or a negative meaning id.
    void add(SemanticSample sample);

    const std::vector<SemanticSample>& samples() const noexcept { return samples_; }
    std::size_t raw_count() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }

    // Number of distinct meanings observed.
    std::size_t k_obs() const noexcept { return effective_counts_.size(); }

    const std::map<int, double>& effective_counts() const noexcept { return effective_counts_; }

    // Effective counts in ascending meaning-id order; category j of every
    // K-hypothesis refers to the j-th entry.
    std::vector<double> observed_counts() const;

    // Summed probability of distinct observed sequences per observed meaning,
    // aligned with observed_counts().
    std::vector<double> observed_sequence_mass() const;

    // Keyed by (meaning id, sequence key); value is P(sequence | prompt).
    const std::map<std::pair<int, std::string>, double>& distinct_sequences() const noexcept {
        return distinct_sequences_;
    }

private:
    std::vector<SemanticSample> samples_;
    std::map<int, double> effective_counts_;
    std::map<std::pair<int, std::string>, double> distinct_sequences_;
};

// A point on the probability simplex.
class ProbabilityVector {
public:
    // Throws std::invalid_argument unless all values are >= 0 and they sum to
    // 1 within 1e-9.
    explicit ProbabilityVector(std::vector<double> values);

    const std::vector<double>& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }

private:
    std::vector<double> values_;
};

double shannon_entropy(const ProbabilityVector& p);

// Unchecked variant for inner loops; 0 ln 0 = 0.
double entropy_of(std::span<const double> p) noexcept;

double log_sum_exp(std::span<const double> values) noexcept;

// Draw from Dir(alpha) by normalized gamma variates.
ProbabilityVector dirichlet_sample(std::span<const double> alpha, Rng& rng);

// Fills `log_out` with ln u_j for u ~ Dir(alpha). Sampling happens in log
// space so components with small alpha never underflow to an exact zero.
// No validation.
void dirichlet_sample_log(std::span<const double> alpha, Rng& rng, std::span<double> log_out);

// Throws std::domain_error when the density is not finite (a boundary point
// with some alpha_j < 1).
double dirichlet_log_density(const ProbabilityVector& p, std::span<const double> alpha);

// E[H(p)] for p ~ Dir(alpha): psi(A+1) - sum_j (alpha_j/A) psi(alpha_j+1).
double dirichlet_entropy_mean_closed_form(std::span<const double> alpha);

}  // namespace sembayes
