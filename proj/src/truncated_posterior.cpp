#include "sembayes/truncated_posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "sembayes/estimator.hpp"

namespace sembayes {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMassTolerance = 1e-6;

SnisEvaluation degenerate_evaluation(const ConstraintSet& constraints,
                                     const LikelihoodTerms* likelihood) {
    std::vector<double> p = constraints.bounds();
    const double total = constraints.total_mass();
    for (double& v : p) v /= total;

    SnisEvaluation out;
    out.moments.mean = entropy_of(p);
    out.moments.second_moment = out.moments.mean * out.moments.mean;
    out.moments.variance = 0.0;
    out.moments.effective_sample_size = 1.0;
    out.moments.draws_used = 1;
    // The constraint set has no volume left.
    out.moments.log_normalizer = kNegInf;
    out.moments.degenerate = true;
    if (likelihood) out.log_evidence = likelihood->log_likelihood(p);
    return out;
}

SnisEvaluation run_snis(std::span<const double> alpha, const ConstraintSet& constraints,
                        const LikelihoodTerms* likelihood, std::size_t draws, Rng& rng) {
    const std::size_t k = alpha.size();
    if (k == 0 || k != constraints.size()) {
        throw std::invalid_argument("snis: alpha and constraint dimensions differ");
    }
    for (double a : alpha) {
        if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("snis: alpha must be positive");
    }
    if (draws < kMinSnisDraws) throw std::invalid_argument("snis: at least 100 draws required");
    if (constraints.degenerate()) return degenerate_evaluation(constraints, likelihood);

    const auto& b = constraints.bounds();
    const double free_mass = 1.0 - constraints.total_mass();
    const double log_free = std::log(free_mass);
    const double base_log_weight = static_cast<double>(k - 1) * log_free;

    std::vector<double> log_w(draws);
    std::vector<double> ent(draws);
    std::vector<double> log_lik(likelihood ? draws : 0);
    std::vector<double> log_u(k);
    const double log_coef = likelihood ? likelihood->log_coefficient() : 0.0;
    const bool with_counts = likelihood && likelihood->raw_count > 0;

    for (std::size_t i = 0; i < draws; ++i) {
        dirichlet_sample_log(alpha, rng, log_u);
        double lw = base_log_weight;
        double h = 0.0;
        double ll = log_coef;
        for (std::size_t j = 0; j < k; ++j) {
            const double pj = b[j] + free_mass * std::exp(log_u[j]);
            const double log_p = b[j] == 0.0 ? log_free + log_u[j] : std::log(pj);
            if (pj > 0.0) h -= pj * log_p;
            if (alpha[j] != 1.0) lw += (alpha[j] - 1.0) * (log_p - log_u[j]);
            if (with_counts && j < likelihood->counts.size() && likelihood->counts[j] > 0.0) {
                ll += pj > 0.0 ? likelihood->counts[j] * log_p : kNegInf;
            }
        }
        log_w[i] = lw;
        ent[i] = h;
        if (likelihood) log_lik[i] = with_counts ? ll : 0.0;
    }

    const double max_lw = *std::max_element(log_w.begin(), log_w.end());
    double sum_w = 0.0;
    double sum_w2 = 0.0;
    double sum_wh = 0.0;
    double sum_wh2 = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        const double w = std::exp(log_w[i] - max_lw);
        sum_w += w;
        sum_w2 += w * w;
        sum_wh += w * ent[i];
        sum_wh2 += w * ent[i] * ent[i];
    }

    SnisEvaluation out;
    SnisResult& r = out.moments;
    r.draws_used = draws;
    r.mean = sum_wh / sum_w;
    r.second_moment = sum_wh2 / sum_w;
    r.variance = std::max(0.0, r.second_moment - r.mean * r.mean);
    r.effective_sample_size = sum_w * sum_w / sum_w2;
    r.log_normalizer = max_lw + std::log(sum_w) - std::log(static_cast<double>(draws));
    r.unreliable = r.effective_sample_size < kMinReliableEss;

    if (likelihood) {
        for (std::size_t i = 0; i < draws; ++i) log_lik[i] += log_w[i];
        out.log_evidence = log_sum_exp(log_lik) - (max_lw + std::log(sum_w));
    }
    return out;
}

LikelihoodTerms likelihood_terms(const EstimationDataset& dataset, std::size_t k) {
    LikelihoodTerms terms;
    terms.counts = dataset.observed_counts();
    terms.counts.resize(k, 0.0);
    terms.raw_count = dataset.raw_count();
    return terms;
}

}  // namespace

ConstraintSet::ConstraintSet(std::vector<double> bounds) : bounds_(std::move(bounds)) {
    if (bounds_.empty()) throw std::invalid_argument("ConstraintSet: empty");
    for (double v : bounds_) {
        if (!(v >= 0.0) || v > 1.0) throw std::invalid_argument("ConstraintSet: bounds must lie in [0, 1]");
    }
    total_mass_ = std::accumulate(bounds_.begin(), bounds_.end(), 0.0);
    if (total_mass_ > 1.0 + kMassTolerance) {
        throw std::invalid_argument("ConstraintSet: bounds sum past 1");
    }
}

ConstraintSet ConstraintSet::unconstrained(std::size_t k) {
    return ConstraintSet(std::vector<double>(k, 0.0));
}

bool ConstraintSet::degenerate() const noexcept { return total_mass_ >= kDegenerateMassThreshold; }

double LikelihoodTerms::log_coefficient() const {
    if (raw_count == 0) return 0.0;
    double c = std::lgamma(static_cast<double>(raw_count));
    for (double n : counts) {
        if (n > 0.0) c -= std::lgamma(n);
    }
    return c;
}

double LikelihoodTerms::log_likelihood(std::span<const double> p) const {
    if (raw_count == 0) return 0.0;
    double ll = log_coefficient();
    for (std::size_t j = 0; j < counts.size(); ++j) {
        if (counts[j] > 0.0) {
            if (p[j] <= 0.0) return kNegInf;
            ll += counts[j] * std::log(p[j]);
        }
    }
    return ll;
}

ConstraintSet lower_bounds(const EstimationDataset& dataset, std::size_t k) {
    if (k < dataset.k_obs()) {
        throw std::invalid_argument("lower_bounds: K is smaller than the number of observed meanings");
    }
    std::vector<double> b = dataset.observed_sequence_mass();
    // Inconsistent backend probabilities can overshoot the simplex; pin them.
    const double total = std::accumulate(b.begin(), b.end(), 0.0);
    if (total > 1.0) {
        for (double& v : b) v /= total;
    }
    for (double& v : b) v = std::min(v, 1.0);
    b.resize(k, 0.0);
    return ConstraintSet(std::move(b));
}

SnisResult snis_entropy_moments(std::span<const double> alpha, const ConstraintSet& constraints,
                                std::size_t draws, Rng& rng) {
    return run_snis(alpha, constraints, nullptr, draws, rng).moments;
}

SnisEvaluation snis_evaluate(std::span<const double> alpha, const ConstraintSet& constraints,
                             const LikelihoodTerms& likelihood, std::size_t draws, Rng& rng) {
    return run_snis(alpha, constraints, &likelihood, draws, rng);
}

HypothesisStats evaluate_hypothesis(std::size_t k, const EstimationDataset& dataset,
                                    const PosteriorOptions& options, Rng& rng) {
    if (!(options.alpha0 > 0.0)) throw std::invalid_argument("evaluate_hypothesis: alpha0 must be positive");
    if (k == 0) throw std::invalid_argument("evaluate_hypothesis: K must be at least 1");

    HypothesisStats stats;
    stats.k = k;
    const ConstraintSet constraints = lower_bounds(dataset, k);
    const LikelihoodTerms terms = likelihood_terms(dataset, k);
    const std::vector<double> observed = dataset.observed_counts();
    const std::vector<double> alpha =
        scaled_alphas(observed, k, options.alpha0, dataset.raw_count());

    if (k == 1) {
        // One category: p = (1) and the entropy is exactly zero.
        stats.snis.draws_used = 0;
        stats.snis.effective_sample_size = 0.0;
        stats.snis.degenerate = true;
        const double one = 1.0;
        stats.log_evidence = terms.log_likelihood(std::span<const double>(&one, 1));
        return stats;
    }

    SnisEvaluation eval = snis_evaluate(alpha, constraints, terms, options.draws, rng);
    stats.snis = eval.moments;
    stats.mean = eval.moments.mean;
    stats.variance = eval.moments.variance;
    stats.log_evidence = eval.log_evidence;

    if (options.marginal_prior_only && dataset.raw_count() > 0) {
        const std::vector<double> prior(k, options.alpha0);
        stats.log_evidence = snis_evaluate(prior, constraints, terms, options.draws, rng).log_evidence;
    }
    return stats;
}

EntropyMoments conditional_entropy_stats(std::size_t k, const EstimationDataset& dataset,
                                         double alpha0, std::size_t draws, Rng& rng) {
    PosteriorOptions options;
    options.alpha0 = alpha0;
    options.draws = draws;
    const HypothesisStats stats = evaluate_hypothesis(k, dataset, options, rng);
    return {stats.mean, stats.variance};
}

double log_marginal_likelihood(std::size_t k, const EstimationDataset& dataset,
                               const PosteriorOptions& options, Rng& rng) {
    if (k < dataset.k_obs() || k == 0) return kNegInf;
    if (dataset.empty()) return 0.0;
    return evaluate_hypothesis(k, dataset, options, rng).log_evidence;
}

double log_marginal_likelihood(std::size_t k, const EstimationDataset& dataset, double alpha0,
                               std::size_t draws, Rng& rng) {
    PosteriorOptions options;
    options.alpha0 = alpha0;
    options.draws = draws;
    return log_marginal_likelihood(k, dataset, options, rng);
}

}  // namespace sembayes
