#include "sembayes/simulated_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <stdexcept>

namespace sembayes {

namespace {

constexpr double kDistTolerance = 1e-9;

using TokenSeq = std::vector<std::string>;

}  // namespace

PromptScenario PromptScenario::from_sequences(std::string prompt, const std::vector<ScenarioSequence>& seqs,
                                              std::optional<int> correct_meaning) {
    if (seqs.empty()) throw std::invalid_argument("from_sequences: no sequences");
    double total = 0.0;
    for (const auto& s : seqs) {
        if (!(s.prob > 0.0) || s.tokens.empty()) {
            throw std::invalid_argument("from_sequences: sequences need tokens and positive mass");
        }
        total += s.prob;
    }

    // Mass reaching every prefix, and mass per (prefix, next token).
    std::map<TokenSeq, double> prefix_mass;
    std::map<TokenSeq, std::vector<TokenProb>> next_mass;
    PromptScenario sc;
    sc.prompt = std::move(prompt);
    sc.correct_meaning = correct_meaning;
    for (const auto& s : seqs) {
        const double m = s.prob / total;
        TokenSeq prefix;
        for (const auto& tok : s.tokens) {
            prefix_mass[prefix] += m;
            auto& next = next_mass[prefix];
            auto it = std::find_if(next.begin(), next.end(), [&](const TokenProb& t) { return t.token == tok; });
            if (it == next.end()) {
                next.push_back({tok, m});
            } else {
                it->prob += m;
            }
            prefix.push_back(tok);
        }
        if (!sc.meanings.emplace(s.tokens, s.meaning).second) {
            throw std::invalid_argument("from_sequences: duplicate sequence");
        }
    }
    for (const auto& [seq, meaning] : sc.meanings) {
        if (next_mass.count(seq)) throw std::invalid_argument("from_sequences: sequences are not prefix-free");
    }
    for (auto& [prefix, next] : next_mass) {
        const double pm = prefix_mass[prefix];
        for (auto& t : next) t.prob /= pm;
        sc.transitions.emplace(prefix, std::move(next));
    }
    return sc;
}

void SimulatedLM::add_scenario(PromptScenario scenario) {
    if (trees_.count(scenario.prompt)) {
        throw std::invalid_argument("SimulatedLM: duplicate prompt '" + scenario.prompt + "'");
    }
    Tree t;
    std::set<std::string> vocab;

    // Depth-first construction; every reachable node is validated.
    std::function<std::size_t(TokenSeq&)> build = [&](TokenSeq& prefix) -> std::size_t {
        const std::size_t idx = t.nodes.size();
        t.nodes.emplace_back();
        const bool ended = !prefix.empty() && is_end_marker(prefix.back());
        const auto it = ended ? scenario.transitions.end() : scenario.transitions.find(prefix);
        if (it == scenario.transitions.end()) {
            if (prefix.empty()) throw std::invalid_argument("SimulatedLM: no root distribution");
            const auto m = scenario.meanings.find(prefix);
            if (m == scenario.meanings.end()) {
                throw std::invalid_argument("SimulatedLM: terminal sequence '" + render_tokens(prefix) +
                                            "' has no meaning label");
            }
            t.nodes[idx].meaning = m->second;
            return idx;
        }
        if (prefix.size() >= kMaxScenarioDepth) {
            throw std::invalid_argument("SimulatedLM: sequences deeper than 6 tokens");
        }
        const auto& dist = it->second;
        double sum = 0.0;
        for (const auto& tp : dist) {
            if (!(tp.prob > 0.0)) throw std::invalid_argument("SimulatedLM: nonpositive probability");
            sum += tp.prob;
            vocab.insert(tp.token);
        }
        if (dist.empty() || std::abs(sum - 1.0) > kDistTolerance) {
            throw std::invalid_argument("SimulatedLM: distribution after '" + render_tokens(prefix) +
                                        "' does not sum to 1");
        }
        t.nodes[idx].dist = dist;
        for (const auto& tp : dist) {
            prefix.push_back(tp.token);
            const std::size_t child = build(prefix);
            prefix.pop_back();
            t.nodes[idx].children.push_back(child);
        }
        return idx;
    };
    TokenSeq root;
    build(root);
    if (vocab.size() > kMaxScenarioVocabulary) {
        throw std::invalid_argument("SimulatedLM: vocabulary exceeds 32 tokens");
    }
    std::string key = scenario.prompt;
    t.scenario = std::move(scenario);
    trees_.emplace(std::move(key), std::move(t));
}

SimulatedLM SimulatedLM::from_json(const nlohmann::json& doc) {
    if (doc.value("format", std::string{}) != kScenarioFormat) {
        throw std::invalid_argument("scenario: expected format '" + std::string(kScenarioFormat) + "'");
    }
    SimulatedLM lm;
    for (const auto& p : doc.at("prompts")) {
        PromptScenario sc;
        sc.prompt = p.at("prompt").get<std::string>();
        if (p.contains("correct_meaning") && !p["correct_meaning"].is_null()) {
            sc.correct_meaning = p["correct_meaning"].get<int>();
        }
        for (const auto& tr : p.at("transitions")) {
            std::vector<TokenProb> next;
            for (const auto& pair : tr.at("next")) {
                next.push_back({pair.at(0).get<std::string>(), pair.at(1).get<double>()});
            }
            sc.transitions.emplace(tr.at("prefix").get<TokenSeq>(), std::move(next));
        }
        for (const auto& m : p.at("meanings")) {
            sc.meanings.emplace(m.at("sequence").get<TokenSeq>(), m.at("meaning").get<int>());
        }
        lm.add_scenario(std::move(sc));
    }
    return lm;
}

SimulatedLM SimulatedLM::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("scenario: cannot open '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("scenario: " + std::string(e.what()));
    }
    try {
        return from_json(doc);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("scenario: " + std::string(e.what()));
    }
}

nlohmann::json SimulatedLM::to_json() const {
    nlohmann::json prompts = nlohmann::json::array();
    for (const auto& [key, t] : trees_) {
        const auto& sc = t.scenario;
        nlohmann::json p;
        p["prompt"] = sc.prompt;
        p["correct_meaning"] = sc.correct_meaning ? nlohmann::json(*sc.correct_meaning) : nlohmann::json();
        nlohmann::json transitions = nlohmann::json::array();
        for (const auto& [prefix, dist] : sc.transitions) {
            nlohmann::json next = nlohmann::json::array();
            for (const auto& tp : dist) next.push_back({tp.token, tp.prob});
            transitions.push_back({{"prefix", prefix}, {"next", next}});
        }
        p["transitions"] = std::move(transitions);
        nlohmann::json meanings = nlohmann::json::array();
        for (const auto& [seq, m] : sc.meanings) meanings.push_back({{"sequence", seq}, {"meaning", m}});
        p["meanings"] = std::move(meanings);
        prompts.push_back(std::move(p));
    }
    return {{"format", kScenarioFormat}, {"prompts", std::move(prompts)}};
}

void SimulatedLM::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("scenario: cannot write '" + path + "'");
    out << to_json().dump(1) << '\n';
}

std::vector<std::string> SimulatedLM::prompts() const {
    std::vector<std::string> out;
    for (const auto& [key, t] : trees_) out.push_back(key);
    return out;
}

bool SimulatedLM::has_prompt(std::string_view prompt) const { return trees_.find(prompt) != trees_.end(); }

const SimulatedLM::Tree& SimulatedLM::tree(std::string_view prompt) const {
    const auto it = trees_.find(prompt);
    if (it == trees_.end()) throw std::invalid_argument("SimulatedLM: unknown prompt '" + std::string(prompt) + "'");
    return it->second;
}

const PromptScenario& SimulatedLM::scenario(std::string_view prompt) const { return tree(prompt).scenario; }

std::size_t SimulatedLM::walk(const Tree& t, std::span<const std::string> prefix) {
    std::size_t node = 0;
    for (const auto& tok : prefix) {
        const Node& n = t.nodes[node];
        std::size_t next = t.nodes.size();
        for (std::size_t i = 0; i < n.dist.size(); ++i) {
            if (n.dist[i].token == tok) {
                next = n.children[i];
                break;
            }
        }
        if (next == t.nodes.size()) {
            throw std::invalid_argument("SimulatedLM: prefix leaves the scenario at token '" + tok + "'");
        }
        node = next;
    }
    return node;
}

void SimulatedLM::extend(const Tree& t, std::size_t node, std::vector<std::string>& tokens,
                         std::vector<double>& logprobs, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    while (t.nodes[node].meaning < 0) {
        const Node& n = t.nodes[node];
        const double u = unif(rng);
        double acc = 0.0;
        std::size_t pick = n.dist.size() - 1;
        for (std::size_t i = 0; i < n.dist.size(); ++i) {
            acc += n.dist[i].prob;
            if (u < acc) {
                pick = i;
                break;
            }
        }
        tokens.push_back(n.dist[pick].token);
        logprobs.push_back(std::log(n.dist[pick].prob));
        node = n.children[pick];
    }
}

Response SimulatedLM::sample_response(std::string_view prompt, Rng& rng) const {
    const Tree& t = tree(prompt);
    std::vector<std::string> tokens;
    std::vector<double> logprobs;
    extend(t, 0, tokens, logprobs, rng);
    return Response(std::move(tokens), std::move(logprobs));
}

std::vector<TokenProb> SimulatedLM::next_token_distribution(std::string_view prompt,
                                                            std::span<const std::string> prefix) const {
    const Tree& t = tree(prompt);
    return t.nodes[walk(t, prefix)].dist;
}

Response SimulatedLM::continue_with(std::string_view prompt, const TokenPrefix& prefix, const TokenProb& forced,
                                    Rng& rng) const {
    if (prefix.tokens.size() != prefix.logprobs.size()) {
        throw std::invalid_argument("continue_with: prefix tokens and log-probabilities differ in length");
    }
    if (!(forced.prob > 0.0) || forced.prob > 1.0) {
        throw std::invalid_argument("continue_with: forced token probability outside (0, 1]");
    }
    const Tree& t = tree(prompt);
    std::vector<std::string> tokens(prefix.tokens.begin(), prefix.tokens.end());
    tokens.push_back(forced.token);
    const std::size_t node = walk(t, tokens);

    std::vector<double> logprobs(prefix.logprobs.begin(), prefix.logprobs.end());
    logprobs.push_back(std::log(forced.prob));
    extend(t, node, tokens, logprobs, rng);
    return Response(std::move(tokens), std::move(logprobs));
}

std::vector<Terminal> SimulatedLM::enumerate(std::string_view prompt) const {
    const Tree& t = tree(prompt);
    std::vector<Terminal> out;
    TokenSeq tokens;
    std::function<void(std::size_t, double)> visit = [&](std::size_t node, double lp) {
        const Node& n = t.nodes[node];
        if (n.meaning >= 0) {
            out.push_back({tokens, lp, n.meaning});
            return;
        }
        for (std::size_t i = 0; i < n.dist.size(); ++i) {
            tokens.push_back(n.dist[i].token);
            visit(n.children[i], lp + std::log(n.dist[i].prob));
            tokens.pop_back();
        }
    };
    visit(0, 0.0);
    return out;
}

std::map<int, double> SimulatedLM::meaning_distribution(std::string_view prompt) const {
    std::map<int, double> out;
    for (const auto& term : enumerate(prompt)) out[term.meaning] += std::exp(term.log_prob);
    return out;
}

int SimulatedLM::meaning_of(std::string_view prompt, const std::vector<std::string>& tokens) const {
    const Tree& t = tree(prompt);
    const Node& n = t.nodes[walk(t, tokens)];
    if (n.meaning < 0) throw std::invalid_argument("SimulatedLM: sequence is not terminal");
    return n.meaning;
}

Response simulated_sample(const SimulatedLM& lm, std::string_view prompt, Rng& rng) {
    return lm.sample_response(prompt, rng);
}

double simulated_exact_entropy(const SimulatedLM& lm, std::string_view prompt) {
    std::vector<double> p;
    for (const auto& [m, mass] : lm.meaning_distribution(prompt)) p.push_back(mass);
    return entropy_of(p);
}

bool GroundTruthOracle::equivalent(std::string_view prompt, const Response& representative,
                                   const Response& candidate) const {
    return lm_->meaning_of(prompt, representative.tokens()) == lm_->meaning_of(prompt, candidate.tokens());
}

}  // namespace sembayes
