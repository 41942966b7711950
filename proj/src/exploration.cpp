#include "sembayes/exploration.hpp"

#include <algorithm>
#include <numeric>

namespace sembayes {

std::vector<std::size_t> rank_positions(const TokenImportanceProfile& profile) {
    std::vector<std::size_t> order(profile.weights.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return profile.weights[a] > profile.weights[b];
    });
    return order;
}

std::vector<TokenProb> top_k_alternatives(const Generator& generator, std::string_view prompt,
                                          std::span<const std::string> prefix, std::string_view original,
                                          std::size_t k) {
    if (k == 0) return {};
    std::vector<TokenProb> dist = generator.next_token_distribution(prompt, prefix);
    std::erase_if(dist, [&](const TokenProb& t) { return t.token == original || !(t.prob > 0.0); });
    std::stable_sort(dist.begin(), dist.end(),
                     [](const TokenProb& a, const TokenProb& b) { return a.prob > b.prob; });
    if (dist.size() > k) dist.resize(k);
    return dist;
}

PerturbationPlan::PerturbationPlan(std::size_t base_sample_index, const TokenImportanceProfile& profile)
    : base_(base_sample_index), order_(rank_positions(profile)) {}

std::optional<GuidedSample> guided_generate(const Generator& generator, std::string_view prompt,
                                            const Response& base, PerturbationPlan& plan, std::size_t k,
                                            Rng& rng) {
    const auto& tokens = base.tokens();
    const auto& logprobs = base.token_logprobs();
    while (plan.cursor_ < plan.order_.size()) {
        const std::size_t pos = plan.order_[plan.cursor_];
        const std::span<const std::string> prefix(tokens.data(), pos);
        if (!plan.alternatives_) {
            plan.alternatives_ = top_k_alternatives(generator, prompt, prefix, tokens[pos], k);
            plan.next_alternative_ = 0;
        }
        while (plan.next_alternative_ < plan.alternatives_->size()) {
            const TokenProb alt = (*plan.alternatives_)[plan.next_alternative_++];
            if (!plan.used_.emplace(pos, alt.token).second) continue;

            const TokenPrefix tp{prefix, std::span<const double>(logprobs.data(), pos)};
            GuidedSample out{generator.continue_with(prompt, tp, alt, rng), pos, alt.token,
                             std::min(alt.prob, 1.0), plan.base_};
            return out;
        }
        plan.alternatives_.reset();
        ++plan.cursor_;
    }
    return std::nullopt;
}

}  // namespace sembayes
