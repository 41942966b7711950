#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sembayes/core.hpp"

namespace sembayes {

// Decides semantic equivalence of two responses to the same prompt.
// Implementations must be deterministic and reflexive.
class EquivalenceOracle {
public:
    virtual ~EquivalenceOracle() = default;
    virtual bool equivalent(std::string_view prompt, const Response& representative,
                            const Response& candidate) const = 0;
};

// Lowercase, trim, collapse internal whitespace, strip terminal punctuation.
std::string canonicalize_answer(std::string_view text);

class ExactMatchOracle final : public EquivalenceOracle {
public:
    bool equivalent(std::string_view prompt, const Response& representative,
                    const Response& candidate) const override;
};

// Meaning clusters for one prompt. Cluster ids are 0, 1, ... in order of
// discovery; the first member of a cluster is its representative.
class ClusterSet {
public:
    const std::vector<Response>& representatives() const noexcept { return reps_; }
    std::size_t size() const noexcept { return reps_.size(); }

    // Joins the first cluster (in insertion order) whose representative is
    // equivalent to the candidate, or opens a new one.
    int classify_incremental(const EquivalenceOracle& oracle, std::string_view prompt,
                             const Response& candidate);

private:
    std::vector<Response> reps_;
};

}  // namespace sembayes
