#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sembayes/core.hpp"

namespace sembayes {

struct TokenProb {
    std::string token;
    double prob = 0.0;
};

// A generated prefix together with its per-token log-probabilities.
struct TokenPrefix {
    std::span<const std::string> tokens;
    std::span<const double> logprobs;
};

// A language model seen through the three calls the estimator needs. All
// sampling uses temperature 1. Implementations must be callable from
// concurrent estimation runs.
class Generator {
public:
    virtual ~Generator() = default;

    virtual Response sample_response(std::string_view prompt, Rng& rng) const = 0;

    // Conditional next-token distribution after `prefix`, over the support the
    // backend reports. Probabilities are positive and sum to at most 1.
    virtual std::vector<TokenProb> next_token_distribution(
        std::string_view prompt, std::span<const std::string> prefix) const = 0;

    // Response starting with prefix + forced token; the continuation is
    // sampled conditioned on both. The forced token's log-probability is
    // ln(forced.prob).
    virtual Response continue_with(std::string_view prompt, const TokenPrefix& prefix,
                                   const TokenProb& forced, Rng& rng) const = 0;
};

}  // namespace sembayes
