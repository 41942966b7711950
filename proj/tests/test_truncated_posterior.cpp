#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "posterior_oracles.hpp"
#include "sembayes/estimator.hpp"
#include "sembayes/truncated_posterior.hpp"

using namespace sembayes;
using sembayes::testing::beta_quadrature;
using sembayes::testing::rejection_entropy_moments;

namespace {

// A response whose sequence probability is `prob`; `tag` keeps sequences distinct.
Response seq(const std::string& tag, double prob) {
    return Response({tag, "</s>"}, {std::log(prob), 0.0});
}

EstimationDataset dataset_from(const std::vector<std::tuple<std::string, double, int>>& rows) {
    EstimationDataset d;
    for (const auto& [tag, prob, meaning] : rows) d.add({seq(tag, prob), meaning, 1.0, SampleSource::direct});
    return d;
}

}  // namespace

TEST_CASE("lower_bounds sums distinct sequences per meaning") {
    SUBCASE("two distinct sequences in one category") {
        const auto d = dataset_from({{"a", 0.3, 0}, {"b", 0.2, 0}});
        const auto c = lower_bounds(d, 1);
        CHECK(c.bounds()[0] == doctest::Approx(0.5));
    }
    SUBCASE("duplicates contribute once") {
        const auto d = dataset_from({{"a", 0.3, 0}, {"a", 0.3, 0}});
        CHECK(lower_bounds(d, 1).bounds()[0] == doctest::Approx(0.3));
    }
    SUBCASE("unobserved categories are padded with zeros") {
        const auto d = dataset_from({{"a", 0.3, 0}, {"b", 0.1, 1}});
        const auto c = lower_bounds(d, 4);
        REQUIRE(c.size() == 4);
        CHECK(c.bounds()[0] == doctest::Approx(0.3));
        CHECK(c.bounds()[1] == doctest::Approx(0.1));
        CHECK(c.bounds()[2] == 0.0);
        CHECK(c.bounds()[3] == 0.0);
        CHECK(c.total_mass() == doctest::Approx(0.4));
    }
    SUBCASE("K below K_obs is impossible") {
        const auto d = dataset_from({{"a", 0.3, 0}, {"b", 0.1, 1}});
        CHECK_THROWS_AS(lower_bounds(d, 1), std::invalid_argument);
    }
}

TEST_CASE("ConstraintSet validation") {
    CHECK_THROWS_AS(ConstraintSet({0.7, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(ConstraintSet({-0.1, 0.5}), std::invalid_argument);
    CHECK(ConstraintSet({0.7, 0.3}).degenerate());
    CHECK_FALSE(ConstraintSet({0.7, 0.2}).degenerate());
}

TEST_CASE("SNIS with no constraints reproduces the closed-form Dirichlet mean") {
    Rng rng(11);
    const std::vector<double> alpha{1.0, 1.0};
    const auto r = snis_entropy_moments(alpha, ConstraintSet::unconstrained(2), 20000, rng);
    CHECK(std::abs(r.mean - 0.5) < 0.01);
    CHECK(r.effective_sample_size == doctest::Approx(20000.0));
    CHECK(r.log_normalizer == doctest::Approx(0.0));
    CHECK_FALSE(r.degenerate);
}

TEST_CASE("SNIS mean converges to the closed form within three standard errors") {
    Rng rng(5);
    for (const auto& alpha : {std::vector<double>{2, 3, 5}, std::vector<double>{0.5, 0.5, 0.5},
                              std::vector<double>{7, 1, 0.4, 2}}) {
        const std::size_t n = 40000;
        const auto r = snis_entropy_moments(alpha, ConstraintSet::unconstrained(alpha.size()), n, rng);
        const double se = std::sqrt(r.variance / r.effective_sample_size);
        CHECK(std::abs(r.mean - dirichlet_entropy_mean_closed_form(alpha)) < 3.0 * se);
    }
}

TEST_CASE("SNIS under constraints matches the rejection oracle") {
    const std::vector<double> alpha{4.0, 2.0, 1.0};
    const std::vector<double> b{0.2, 0.05, 0.0};
    Rng rng(3);
    const auto r = snis_entropy_moments(alpha, ConstraintSet(b), 100000, rng);
    const auto oracle = rejection_entropy_moments(alpha, b, 1'000'000, 77);
    REQUIRE(oracle.accepted > 10000);
    CHECK(std::abs(r.mean - oracle.mean) < 0.02);
    CHECK(std::abs(r.variance - oracle.variance) < 0.005);
    // The mean importance weight estimates the constrained Dirichlet mass.
    CHECK(std::exp(r.log_normalizer) == doctest::Approx(oracle.acceptance).epsilon(0.02));
}

TEST_CASE("SNIS degenerate constraint set pins p to b") {
    Rng rng(1);
    const auto r = snis_entropy_moments(std::vector<double>{2, 1}, ConstraintSet({0.7, 0.3}), 1000, rng);
    CHECK(r.degenerate);
    CHECK(r.mean == doctest::Approx(0.610864).epsilon(1e-6));
    CHECK(r.variance == 0.0);
}

TEST_CASE("SNIS argument checks") {
    Rng rng(1);
    CHECK_THROWS_AS(snis_entropy_moments(std::vector<double>{1, 1}, ConstraintSet::unconstrained(3), 1000, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(snis_entropy_moments(std::vector<double>{1, 1}, ConstraintSet::unconstrained(2), 99, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(snis_entropy_moments(std::vector<double>{1, 0}, ConstraintSet::unconstrained(2), 500, rng),
                    std::invalid_argument);
}

TEST_CASE("SNIS flags low effective sample size") {
    // Sharp posterior far from the feasible corner.
    Rng rng(2);
    const auto r = snis_entropy_moments(std::vector<double>{400, 400, 400}, ConstraintSet({0.6, 0.0, 0.0}), 200,
                                        rng);
    CHECK(r.unreliable);
    CHECK(r.effective_sample_size < kMinReliableEss);
    CHECK(r.effective_sample_size > 0.0);
}

TEST_CASE("SNIS mean stays within [0, ln K]") {
    Rng rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t k = 2 + trial % 4;
        std::vector<double> alpha(k), b(k);
        double budget = 0.9 * u(rng);
        for (std::size_t j = 0; j < k; ++j) {
            alpha[j] = 0.3 + 5.0 * u(rng);
            b[j] = budget * u(rng) / k;
        }
        const auto r = snis_entropy_moments(alpha, ConstraintSet(b), 500, rng);
        CHECK(r.mean >= 0.0);
        CHECK(r.mean <= std::log(static_cast<double>(k)) + 1e-12);
        CHECK(r.variance >= 0.0);
        CHECK(r.effective_sample_size <= 500.0 + 1e-9);
    }
}

TEST_CASE("raising a lower bound never increases the constrained mass") {
    const std::vector<double> alpha{3.0, 2.0, 1.5};
    double prev = 0.0;
    double prev_se = 0.0;
    for (double b1 : {0.0, 0.1, 0.2, 0.3, 0.4, 0.5}) {
        Rng rng(derive_seed(42, static_cast<std::uint64_t>(b1 * 100)));
        const std::size_t n = 40000;
        const auto r = snis_entropy_moments(alpha, ConstraintSet({b1, 0.05, 0.0}), n, rng);
        const double z = std::exp(r.log_normalizer);
        // Standard error of a mean weight, from the effective sample size.
        const double se = z * std::sqrt(std::max(0.0, 1.0 / r.effective_sample_size - 1.0 / n));
        if (b1 > 0.0) CHECK(z <= prev + 3.0 * std::hypot(se, prev_se));
        prev = z;
        prev_se = se;
    }
}

TEST_CASE("conditional_entropy_stats") {
    SUBCASE("empty dataset is the pure prior") {
        EstimationDataset d;
        Rng rng(4);
        const auto m = conditional_entropy_stats(2, d, 1.0, 20000, rng);
        CHECK(std::abs(m.mean - 0.5) < 0.01);
    }
    SUBCASE("label permutation leaves the moments unchanged") {
        const auto a = dataset_from({{"a", 0.01, 0}, {"b", 0.01, 0}, {"c", 0.01, 0}, {"d", 0.01, 0}, {"e", 0.01, 0}});
        const auto b = dataset_from({{"a", 0.01, 1}, {"b", 0.01, 1}, {"c", 0.01, 1}, {"d", 0.01, 1}, {"e", 0.01, 1}});
        Rng r1(9), r2(9);
        const auto ma = conditional_entropy_stats(2, a, 1.0, 4096, r1);
        const auto mb = conditional_entropy_stats(2, b, 1.0, 4096, r2);
        CHECK(ma.mean == mb.mean);
        CHECK(ma.variance == mb.variance);
    }
    SUBCASE("a single category has zero entropy") {
        const auto d = dataset_from({{"a", 0.4, 0}});
        Rng rng(1);
        const auto m = conditional_entropy_stats(1, d, 1.0, 4096, rng);
        CHECK(m.mean == 0.0);
        CHECK(m.variance == 0.0);
    }
}

TEST_CASE("log_marginal_likelihood edge cases") {
    Rng rng(1);
    const auto d = dataset_from({{"a", 0.2, 0}, {"b", 0.1, 1}});
    CHECK(log_marginal_likelihood(1, d, 1.0, 1000, rng) == -std::numeric_limits<double>::infinity());
    EstimationDataset empty;
    for (std::size_t k = 1; k <= 4; ++k) CHECK(log_marginal_likelihood(k, empty, 1.0, 1000, rng) == 0.0);
}

TEST_CASE("log_marginal_likelihood matches quadrature on the 1-simplex") {
    // Counts (2, 1) with negligible sequence mass, so the constraint set is
    // the whole simplex and alpha = (3, 2).
    const auto d = dataset_from({{"a", 1e-30, 0}, {"b", 1e-30, 0}, {"c", 1e-30, 1}});
    Rng rng(6);
    const double est = log_marginal_likelihood(2, d, 1.0, 40000, rng);
    const double oracle = beta_quadrature([](double x) { return 2.0 * x * x * (1.0 - x); }, 3.0, 2.0);
    CHECK(std::abs(std::exp(est) / oracle - 1.0) < 0.05);
}

TEST_CASE("prior-only marginal likelihood matches the Dirichlet-multinomial closed form") {
    // With no constraints, E_{Dir(a0)}[prod p_j^n_j] = B(a0 + n) / B(a0).
    const auto d = dataset_from({{"a", 1e-30, 0}, {"b", 1e-30, 0}, {"c", 1e-30, 1}, {"d", 1e-30, 2}});
    PosteriorOptions opts;
    opts.alpha0 = 1.0;
    opts.draws = 200000;
    opts.marginal_prior_only = true;
    Rng rng(10);
    const double est = log_marginal_likelihood(3, d, opts, rng);
    const std::vector<double> n{2, 1, 1};
    auto log_beta = [](const std::vector<double>& a) {
        double s = 0.0, t = 0.0;
        for (double v : a) {
            s += std::lgamma(v);
            t += v;
        }
        return s - std::lgamma(t);
    };
    const double coef = std::lgamma(4.0) - std::lgamma(2.0) - std::lgamma(1.0) - std::lgamma(1.0);
    const double exact = coef + log_beta({3, 2, 2}) - log_beta({1, 1, 1});
    CHECK(est == doctest::Approx(exact).epsilon(0.01));
}

TEST_CASE("log_marginal_likelihood is exchangeable in sample order") {
    std::vector<std::tuple<std::string, double, int>> rows{
        {"a", 0.2, 0}, {"b", 0.05, 1}, {"c", 0.1, 0}, {"d", 0.02, 2}, {"a", 0.2, 0}, {"e", 0.01, 1}};
    const auto d1 = dataset_from(rows);
    std::mt19937_64 shuffler(3);
    for (int t = 0; t < 5; ++t) {
        std::shuffle(rows.begin(), rows.end(), shuffler);
        const auto d2 = dataset_from(rows);
        for (std::size_t k = 3; k <= 5; ++k) {
            Rng r1(derive_seed(1, k)), r2(derive_seed(1, k));
            CHECK(log_marginal_likelihood(k, d1, 1.0, 2000, r1) ==
                  doctest::Approx(log_marginal_likelihood(k, d2, 1.0, 2000, r2)).epsilon(1e-9));
        }
    }
}

TEST_CASE("weighted likelihood terms skip empty categories") {
    LikelihoodTerms t{{2.0, 0.5, 0.0}, 3};
    const std::vector<double> p{0.5, 0.3, 0.2};
    const double expected = std::lgamma(3.0) - std::lgamma(2.0) - std::lgamma(0.5) + 2.0 * std::log(0.5) +
                            0.5 * std::log(0.3);
    CHECK(t.log_likelihood(p) == doctest::Approx(expected).epsilon(1e-12));
    LikelihoodTerms empty{{0.0, 0.0}, 0};
    CHECK(empty.log_likelihood(p) == 0.0);
}
