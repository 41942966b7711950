#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>

#include "sembayes/k_inference.hpp"

using namespace sembayes;

namespace {

// Similarity that returns a fixed value for every reduced string.
class FixedSimilarity final : public Similarity {
public:
    explicit FixedSimilarity(double v) : v_(v) {}
    double similarity(std::string_view, std::string_view) const override { return v_; }

private:
    double v_;
};

Response from_probs(const std::vector<std::string>& toks, const std::vector<double>& probs) {
    std::vector<double> lps;
    for (double p : probs) lps.push_back(std::log(p));
    return Response(toks, lps);
}

}  // namespace

TEST_CASE("token_importance_weights") {
    const Response r = from_probs({"Paris", " is", " capital"}, {0.5, 0.5, 0.5});
    SUBCASE("similarity 1 gives weight 0") {
        const auto p = token_importance_weights(r, FixedSimilarity(1.0));
        for (double w : p.weights) CHECK(w == 0.0);
    }
    SUBCASE("similarity 0.2 gives weight 0.8") {
        const auto p = token_importance_weights(r, FixedSimilarity(0.2));
        for (double w : p.weights) CHECK(w == doctest::Approx(0.8));
    }
    SUBCASE("term-frequency cosine") {
        const auto p = token_importance_weights(r, TfCosineSimilarity());
        REQUIRE(p.weights.size() == 3);
        CHECK(p.weights[0] == doctest::Approx(1.0 - 2.0 / std::sqrt(6.0)).epsilon(1e-12));
    }
    SUBCASE("single token responses weigh 1") {
        const auto p = token_importance_weights(from_probs({"Paris"}, {0.9}), FixedSimilarity(1.0));
        CHECK(p.weights == std::vector<double>{1.0});
    }
    SUBCASE("end markers carry no meaning") {
        const auto p = token_importance_weights(from_probs({"Paris", "</s>"}, {0.9, 1.0}), TfCosineSimilarity());
        CHECK(p.weights[0] == doctest::Approx(1.0));
        CHECK(p.weights[1] == doctest::Approx(0.0));
    }
}

TEST_CASE("weighted_perplexity") {
    CHECK(weighted_perplexity(from_probs({"a", "b"}, {0.5, 0.5}), {{1.0, 1.0}}) == doctest::Approx(2.0));
    CHECK(weighted_perplexity(from_probs({"a", "b"}, {0.5, 0.01}), {{1.0, 0.0}}) == doctest::Approx(2.0));
    CHECK(weighted_perplexity(from_probs({"a"}, {1.0}), {{1.0}}) == 1.0);
    // All-zero profiles fall back to uniform weights.
    CHECK(weighted_perplexity(from_probs({"a", "b"}, {0.5, 0.5}), {{0.0, 0.0}}) == doctest::Approx(2.0));
    CHECK_THROWS_AS(weighted_perplexity(from_probs({"a", "b"}, {0.5, 0.5}), {{1.0}}), std::invalid_argument);
}

TEST_CASE("weighted_perplexity properties") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int t = 0; t < 200; ++t) {
        const std::size_t len = 1 + t % 6;
        std::vector<std::string> toks(len, "x");
        std::vector<double> probs(len), w(len);
        double ll = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
            probs[j] = u(rng);
            w[j] = u(rng);
            ll += std::log(probs[j]);
        }
        const Response r = from_probs(toks, probs);
        CHECK(weighted_perplexity(r, {w}) >= 1.0);
        // A constant profile gives the ordinary perplexity.
        const double c = u(rng);
        CHECK(weighted_perplexity(r, {std::vector<double>(len, c)}) ==
              doctest::Approx(std::exp(-ll / static_cast<double>(len))).epsilon(1e-12));
    }
}

TEST_CASE("estimate_lambda averages weighted perplexities") {
    const FixedSimilarity zero(0.0);
    std::vector<Response> one{from_probs({"a", "b"}, {0.5, 0.5})};
    CHECK(estimate_lambda(one, zero) == doctest::Approx(2.0));

    // WPL 1.5 and 2.5 via single tokens with p = 1/1.5 and 1/2.5.
    std::vector<Response> two{from_probs({"a"}, {1.0 / 1.5}), from_probs({"b"}, {1.0 / 2.5})};
    CHECK(estimate_lambda(two, zero) == doctest::Approx(2.0));

    std::vector<Response> certain{from_probs({"a"}, {1.0}), from_probs({"b"}, {1.0})};
    CHECK(estimate_lambda(certain, zero) == 1.0);

    CHECK_THROWS_AS(estimate_lambda(std::vector<Response>{}, zero), std::invalid_argument);
}

TEST_CASE("k_prior truncation and normalization") {
    SUBCASE("lambda = 1") {
        const auto p = k_prior(1.0, 1);
        CHECK(p.k_max == 3);
        // e^-1 * (1, 1/2, 1/6) renormalized.
        CHECK(p.probs[0] == doctest::Approx(0.6).epsilon(1e-12));
        CHECK(p.probs[1] == doctest::Approx(0.3).epsilon(1e-12));
        CHECK(p.probs[2] == doctest::Approx(0.1).epsilon(1e-12));
    }
    CHECK(k_prior(1.5, 2).k_max == 5);
    CHECK(k_prior(0.1, 4).k_max == 4);
    CHECK_THROWS_AS(k_prior(0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(k_prior(-1.0, 1), std::invalid_argument);

    for (double lambda : {0.3, 1.0, 2.7, 6.0, 15.0}) {
        for (std::size_t k_obs : {1u, 3u, 9u}) {
            const auto p = k_prior(lambda, k_obs);
            CHECK(p.k_max >= k_obs);
            double s = 0.0;
            for (double v : p.probs) {
                CHECK(v >= 0.0);
                s += v;
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("k_posterior") {
    KPrior uniform23{1.0, 3, {0.0, 0.5, 0.5}};
    SUBCASE("equal evidence under a uniform prior") {
        const auto post = k_posterior(uniform23, {{2, -1.0}, {3, -1.0}}, 2);
        CHECK(post.prob(2) == doctest::Approx(0.5));
        CHECK(post.prob(3) == doctest::Approx(0.5));
    }
    SUBCASE("evidence ratio 3") {
        const auto post = k_posterior(uniform23, {{2, std::log(3.0)}, {3, 0.0}}, 2);
        CHECK(post.prob(2) == doctest::Approx(0.75));
        CHECK(post.prob(3) == doctest::Approx(0.25));
        CHECK(post.map_k() == 2);
    }
    SUBCASE("support is clipped at k_obs") {
        KPrior prior{1.0, 5, {0.2, 0.2, 0.2, 0.2, 0.2}};
        const auto post = k_posterior(prior, {{3, 0.0}, {4, 0.0}, {5, 0.0}}, 3);
        CHECK(post.support() == std::vector<std::size_t>{3, 4, 5});
        CHECK(post.prob(1) == 0.0);
        CHECK(post.prob(2) == 0.0);
        CHECK(post.prob(3) == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("shift invariance") {
        const auto prior = k_prior(2.0, 1);
        std::map<std::size_t, double> ev, shifted;
        for (std::size_t k = 1; k <= prior.k_max; ++k) {
            ev[k] = -0.7 * static_cast<double>(k * k);
            shifted[k] = ev[k] + 1234.5;
        }
        const auto a = k_posterior(prior, ev, 1);
        const auto b = k_posterior(prior, shifted, 1);
        double s = 0.0;
        for (std::size_t i = 0; i < a.probs.size(); ++i) {
            CHECK(a.probs[i] == doctest::Approx(b.probs[i]).epsilon(1e-12));
            s += a.probs[i];
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("errors") {
        const double ninf = -std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(k_posterior(uniform23, {{2, ninf}, {3, ninf}}, 2), std::invalid_argument);
        CHECK_THROWS_AS(k_posterior(uniform23, {{2, 0.0}}, 2), std::invalid_argument);
    }
}
