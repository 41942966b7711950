#pragma once

#include <string_view>

namespace sembayes {

// Sentence similarity on [0, 1], used to score how much a token matters to
// a response's meaning.
class Similarity {
public:
    virtual ~Similarity() = default;
    virtual double similarity(std::string_view a, std::string_view b) const = 0;
};

// Cosine of lowercased term-frequency vectors. Terms are maximal runs of
// alphanumeric (or non-ASCII) bytes. Empty vs nonempty scores 0, empty vs
// empty scores 1.
double tf_cosine_similarity(std::string_view a, std::string_view b);

class TfCosineSimilarity final : public Similarity {
public:
    double similarity(std::string_view a, std::string_view b) const override {
        return tf_cosine_similarity(a, b);
    }
};

}  // namespace sembayes
