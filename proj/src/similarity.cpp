#include "sembayes/similarity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <string>

namespace sembayes {

namespace {

bool is_term_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

std::map<std::string, double> term_frequencies(std::string_view text) {
    std::map<std::string, double> tf;
    std::string term;
    for (unsigned char c : text) {
        if (is_term_byte(c)) {
            term.push_back(static_cast<char>(std::tolower(c)));
        } else if (!term.empty()) {
            tf[term] += 1.0;
            term.clear();
        }
    }
    if (!term.empty()) tf[term] += 1.0;
    return tf;
}

}  // namespace

double tf_cosine_similarity(std::string_view a, std::string_view b) {
    const auto ta = term_frequencies(a);
    const auto tb = term_frequencies(b);
    if (ta.empty() && tb.empty()) return 1.0;
    if (ta.empty() || tb.empty()) return 0.0;

    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [term, f] : ta) {
        na += f * f;
        if (auto it = tb.find(term); it != tb.end()) dot += f * it->second;
    }
    for (const auto& [term, f] : tb) nb += f * f;
    return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

}  // namespace sembayes
