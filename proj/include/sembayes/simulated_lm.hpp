#pragma once

// A small, exactly enumerable language model. Each prompt owns a prefix tree
// of categorical next-token distributions and a meaning label for every
// terminal sequence, so semantic entropy is known in closed form.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sembayes/generator.hpp"
#include "sembayes/oracle.hpp"

namespace sembayes {

inline constexpr std::string_view kScenarioFormat = "sembayes-scenario/1";
inline constexpr std::size_t kMaxScenarioDepth = 6;
inline constexpr std::size_t kMaxScenarioVocabulary = 32;

struct ScenarioSequence {
    std::vector<std::string> tokens;
    double prob = 0.0;
    int meaning = 0;
};

struct PromptScenario {
    std::string prompt;
    // Next-token distributions keyed by prefix.
    std::map<std::vector<std::string>, std::vector<TokenProb>> transitions;
    // Meaning label for every terminal sequence.
    std::map<std::vector<std::string>, int> meanings;
    std::optional<int> correct_meaning;

    // Builds the prefix tree from leaf sequences. Sequences must be
    // prefix-free; probabilities are renormalized to sum to 1.
    static PromptScenario from_sequences(std::string prompt, const std::vector<ScenarioSequence>& seqs,
                                         std::optional<int> correct_meaning = std::nullopt);
};

struct Terminal {
    std::vector<std::string> tokens;
    double log_prob = 0.0;
    int meaning = 0;
};

class SimulatedLM final : public Generator {
public:
    SimulatedLM() = default;

    // Throws std::invalid_argument when the scenario is malformed: bad
    // distributions, unlabeled terminals, depth or vocabulary limits.
    void add_scenario(PromptScenario scenario);

    static SimulatedLM from_json(const nlohmann::json& doc);
    static SimulatedLM load(const std::string& path);
    nlohmann::json to_json() const;
    void save(const std::string& path) const;

    std::vector<std::string> prompts() const;
    bool has_prompt(std::string_view prompt) const;
    const PromptScenario& scenario(std::string_view prompt) const;

    std::vector<Terminal> enumerate(std::string_view prompt) const;
    // Exact meaning distribution by enumeration.
    std::map<int, double> meaning_distribution(std::string_view prompt) const;
    // Throws std::invalid_argument for sequences the scenario cannot emit.
    int meaning_of(std::string_view prompt, const std::vector<std::string>& tokens) const;

    Response sample_response(std::string_view prompt, Rng& rng) const override;
    std::vector<TokenProb> next_token_distribution(std::string_view prompt,
                                                   std::span<const std::string> prefix) const override;
    Response continue_with(std::string_view prompt, const TokenPrefix& prefix, const TokenProb& forced,
                           Rng& rng) const override;

private:
    struct Node {
        std::vector<TokenProb> dist;
        std::vector<std::size_t> children;  // aligned with dist
        int meaning = -1;                   // set on terminals
    };
    struct Tree {
        PromptScenario scenario;
        std::vector<Node> nodes;  // nodes[0] is the root
    };

    const Tree& tree(std::string_view prompt) const;
    static std::size_t walk(const Tree& t, std::span<const std::string> prefix);
    static void extend(const Tree& t, std::size_t node, std::vector<std::string>& tokens,
                       std::vector<double>& logprobs, Rng& rng);

    std::map<std::string, Tree, std::less<>> trees_;
};

Response simulated_sample(const SimulatedLM& lm, std::string_view prompt, Rng& rng);
double simulated_exact_entropy(const SimulatedLM& lm, std::string_view prompt);

// Equivalence from the scenario's own meaning labels.
class GroundTruthOracle final : public EquivalenceOracle {
public:
    explicit GroundTruthOracle(const SimulatedLM& lm) : lm_(&lm) {}
    bool equivalent(std::string_view prompt, const Response& representative,
                    const Response& candidate) const override;

private:
    const SimulatedLM* lm_;
};

}  // namespace sembayes
