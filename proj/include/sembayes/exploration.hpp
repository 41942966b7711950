#pragma once

// Guided semantic exploration: replace a high-importance token of an
// existing response with one of its top-k alternatives and let the
// generator continue from there. A sample produced this way carries the
// importance weight P(t' | prefix), the conditional probability of the
// substituted token.

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sembayes/generator.hpp"
#include "sembayes/k_inference.hpp"

namespace sembayes {

// Indices by descending weight; ties keep the smaller index first.
std::vector<std::size_t> rank_positions(const TokenImportanceProfile& profile);

// The k most probable tokens at the position after `prefix`, excluding
// `original`. Shorter when the reported support is smaller.
std::vector<TokenProb> top_k_alternatives(const Generator& generator, std::string_view prompt,
                                          std::span<const std::string> prefix, std::string_view original,
                                          std::size_t k);

struct GuidedSample {
    Response response;
    std::size_t perturbed_position = 0;
    std::string perturbed_token;
    double importance_weight = 1.0;
    std::size_t base_sample_index = 0;
};

// Perturbation state for one base response. Pairs are consumed in order:
// most important position first, then most probable alternative.
class PerturbationPlan {
public:
    PerturbationPlan(std::size_t base_sample_index, const TokenImportanceProfile& profile);

    std::size_t base_sample_index() const noexcept { return base_; }
    const std::vector<std::size_t>& position_order() const noexcept { return order_; }
    const std::set<std::pair<std::size_t, std::string>>& used() const noexcept { return used_; }
    bool exhausted() const noexcept { return cursor_ >= order_.size(); }

private:
    friend std::optional<GuidedSample> guided_generate(const Generator&, std::string_view, const Response&,
                                                       PerturbationPlan&, std::size_t, Rng&);

    std::size_t base_;
    std::vector<std::size_t> order_;
    std::set<std::pair<std::size_t, std::string>> used_;
    std::size_t cursor_ = 0;
    std::optional<std::vector<TokenProb>> alternatives_;
    std::size_t next_alternative_ = 0;
};

// Returns std::nullopt when the plan has no unused pair left.
std::optional<GuidedSample> guided_generate(const Generator& generator, std::string_view prompt,
                                            const Response& base, PerturbationPlan& plan, std::size_t k,
                                            Rng& rng);

}  // namespace sembayes
