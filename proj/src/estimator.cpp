#include "sembayes/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "sembayes/exploration.hpp"

namespace sembayes {

namespace {

constexpr std::uint64_t kSamplerStream = 0x53414d50;  // "SAMP"

}  // namespace

void EstimatorConfig::validate() const {
    if (!(gamma > 0.0)) throw std::invalid_argument("config: gamma must be positive");
    if (n0 < 1) throw std::invalid_argument("config: n0 must be at least 1");
    if (top_k < 1) throw std::invalid_argument("config: top_k must be at least 1");
    if (!(alpha0 > 0.0)) throw std::invalid_argument("config: alpha0 must be positive");
    if (n_max < n0) throw std::invalid_argument("config: n_max must be at least n0");
    if (snis_draws < kMinSnisDraws) throw std::invalid_argument("config: snis_draws must be at least 100");
}

const char* to_string(Termination t) noexcept {
    return t == Termination::threshold ? "threshold" : "budget";
}

TotalMoments total_moments(const KPosterior& kpost, std::span<const PerKStats> per_k) {
    if (per_k.size() != kpost.probs.size()) {
        throw std::invalid_argument("total_moments: per-K stats do not match the posterior support");
    }
    for (std::size_t i = 0; i < per_k.size(); ++i) {
        if (per_k[i].k != kpost.k_obs + i) {
            throw std::invalid_argument("total_moments: per-K stats out of order");
        }
    }
    TotalMoments t;
    for (std::size_t i = 0; i < per_k.size(); ++i) t.mean += kpost.probs[i] * per_k[i].mean;
    for (std::size_t i = 0; i < per_k.size(); ++i) {
        const double d = per_k[i].mean - t.mean;
        t.within += kpost.probs[i] * per_k[i].variance;
        t.between += kpost.probs[i] * d * d;
    }
    t.variance = t.within + t.between;
    return t;
}

std::vector<double> scaled_alphas(std::span<const double> observed_counts, std::size_t k, double alpha0,
                                  std::size_t raw_count) {
    if (k < observed_counts.size()) throw std::invalid_argument("scaled_alphas: K below observed categories");
    std::vector<double> alpha(k, alpha0);
    double total = alpha0 * static_cast<double>(k);
    for (std::size_t j = 0; j < observed_counts.size(); ++j) {
        alpha[j] += observed_counts[j];
        total += observed_counts[j];
    }
    const double target = alpha0 * static_cast<double>(k) + static_cast<double>(raw_count);
    const double scale = target / total;
    for (double& a : alpha) a *= scale;
    return alpha;
}

std::vector<double> update_with_weighted_sample(EstimationDataset& dataset, SemanticSample sample,
                                                std::size_t k, double alpha0) {
    dataset.add(std::move(sample));
    const auto counts = dataset.observed_counts();
    return scaled_alphas(counts, k, alpha0, dataset.raw_count());
}

PosteriorSnapshot posterior_snapshot(const EstimationDataset& dataset, const KPrior& prior,
                                     const PosteriorOptions& options, std::uint64_t seed, std::uint64_t tag) {
    const std::size_t k_obs = std::max<std::size_t>(1, dataset.k_obs());
    PosteriorSnapshot snap;
    std::map<std::size_t, double> evidence;
    for (std::size_t k = k_obs; k <= prior.k_max; ++k) {
        Rng rng(derive_seed(seed, tag, k));
        const HypothesisStats hs = evaluate_hypothesis(k, dataset, options, rng);
        snap.per_k.push_back({k, hs.mean, hs.variance, hs.log_evidence});
        evidence[k] = hs.log_evidence;
    }
    snap.k_posterior = k_posterior(prior, evidence, k_obs);
    snap.totals = total_moments(snap.k_posterior, snap.per_k);
    return snap;
}

EntropyEstimate estimate_semantic_entropy(std::string_view prompt, const Generator& generator,
                                          const EquivalenceOracle& oracle, const Similarity& sim,
                                          const EstimatorConfig& config) {
    config.validate();
    Rng sampler(derive_seed(config.seed, kSamplerStream));
    const PosteriorOptions options{config.alpha0, config.snis_draws, config.marginal_prior_only};

    EstimationDataset dataset;
    ClusterSet clusters;
    std::map<std::size_t, PerturbationPlan> plans;
    std::optional<EntropyEstimate> partial;
    EntropyEstimate est;

    auto classify = [&](const Response& r) { return clusters.classify_incremental(oracle, prompt, r); };

    auto refresh = [&](const KPrior& prior) {
        const PosteriorSnapshot snap =
            posterior_snapshot(dataset, prior, options, config.seed, dataset.raw_count());
        est.mean = snap.totals.mean;
        est.variance = snap.totals.variance;
        est.within_variance = snap.totals.within;
        est.between_variance = snap.totals.between;
        est.k_posterior = snap.k_posterior;
        est.per_k_stats = snap.per_k;
        est.samples_used = dataset.raw_count();
        partial = est;
    };

    try {
        std::vector<Response> initial;
        initial.reserve(config.n0);
        for (std::size_t i = 0; i < config.n0; ++i) initial.push_back(generator.sample_response(prompt, sampler));

        est.lambda_hat = estimate_lambda(initial, sim);
        for (auto& r : initial) {
            const int id = classify(r);
            dataset.add({std::move(r), id, 1.0, SampleSource::direct});
        }
        KPrior prior = k_prior(est.lambda_hat, dataset.k_obs());
        refresh(prior);

        while (est.variance > config.gamma && dataset.raw_count() < config.n_max) {
            std::uniform_int_distribution<std::size_t> pick(0, dataset.raw_count() - 1);
            const std::size_t base_idx = pick(sampler);
            const Response& base = dataset.samples()[base_idx].response;

            std::optional<GuidedSample> guided;
            if (config.guided) {
                auto plan_it = plans.find(base_idx);
                if (plan_it == plans.end()) {
                    plan_it =
                        plans.emplace(base_idx, PerturbationPlan(base_idx, token_importance_weights(base, sim))).first;
                }
                guided = guided_generate(generator, prompt, base, plan_it->second, config.top_k, sampler);
            }

            double weight = 1.0;
            SampleSource source = SampleSource::direct;
            Response resp = guided ? std::move(guided->response) : generator.sample_response(prompt, sampler);
            if (guided) {
                weight = guided->importance_weight;
                source = SampleSource::guided;
                ++est.guided_samples;
            }
            const int id = classify(resp);
            SemanticSample sample{std::move(resp), id, weight, source};
            dataset.add(std::move(sample));

            if (dataset.k_obs() > prior.k_max) prior = k_prior(est.lambda_hat, dataset.k_obs());
            refresh(prior);
        }
    } catch (const BackendError& e) {
        throw EstimationInterrupted(e.what(), e.retriable(), partial);
    }

    est.terminated_by = est.variance > config.gamma ? Termination::budget : Termination::threshold;
    return est;
}

double baseline_semantic_entropy(std::string_view prompt, const Generator& generator,
                                 const EquivalenceOracle& oracle, std::size_t n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("baseline_semantic_entropy: n must be at least 1");
    ClusterSet clusters;
    std::map<int, double> counts;
    for (std::size_t i = 0; i < n; ++i) {
        const Response r = generator.sample_response(prompt, rng);
        counts[clusters.classify_incremental(oracle, prompt, r)] += 1.0;
    }
    std::vector<double> p;
    for (const auto& [id, c] : counts) p.push_back(c / static_cast<double>(n));
    return entropy_of(p);
}

}  // namespace sembayes
