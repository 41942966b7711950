#include "sembayes/oracle.hpp"

#include <cctype>

namespace sembayes {

std::string canonicalize_answer(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    while (!out.empty() && (std::ispunct(static_cast<unsigned char>(out.back())) ||
                            std::isspace(static_cast<unsigned char>(out.back())))) {
        out.pop_back();
    }
    return out;
}

bool ExactMatchOracle::equivalent(std::string_view, const Response& representative,
                                  const Response& candidate) const {
    return canonicalize_answer(representative.text()) == canonicalize_answer(candidate.text());
}

int ClusterSet::classify_incremental(const EquivalenceOracle& oracle, std::string_view prompt,
                                     const Response& candidate) {
    for (std::size_t i = 0; i < reps_.size(); ++i) {
        if (oracle.equivalent(prompt, reps_[i], candidate)) return static_cast<int>(i);
    }
    reps_.push_back(candidate);
    return static_cast<int>(reps_.size() - 1);
}

}  // namespace sembayes
