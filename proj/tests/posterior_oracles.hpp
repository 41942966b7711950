#pragma once

// Test-only oracles for the truncated Dirichlet posterior. These sample the
// untruncated Dirichlet with std::gamma_distribution directly and keep the
// draws that satisfy the lower bounds, so they share no code with the
// importance-sampling path under test.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

namespace sembayes::testing {

struct RejectionEstimate {
    double mean = 0.0;
    double variance = 0.0;
    double acceptance = 0.0;
    std::size_t accepted = 0;
};

inline RejectionEstimate rejection_entropy_moments(const std::vector<double>& alpha, const std::vector<double>& b,
                                                   std::size_t proposals, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::gamma_distribution<double>> gammas;
    for (double a : alpha) gammas.emplace_back(a, 1.0);
    std::vector<double> p(alpha.size());
    double s = 0.0, s2 = 0.0;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < proposals; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            p[j] = gammas[j](rng);
            total += p[j];
        }
        bool inside = true;
        double h = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            p[j] /= total;
            if (p[j] < b[j]) inside = false;
            if (p[j] > 0.0) h -= p[j] * std::log(p[j]);
        }
        if (!inside) continue;
        ++kept;
        s += h;
        s2 += h * h;
    }
    RejectionEstimate out;
    out.accepted = kept;
    out.acceptance = static_cast<double>(kept) / static_cast<double>(proposals);
    if (kept > 0) {
        out.mean = s / kept;
        out.variance = s2 / kept - out.mean * out.mean;
    }
    return out;
}

// Midpoint-rule integral of f(x) * Beta(x; a, b) over [0, 1], where x is the
// first coordinate on the two-category simplex.
template <typename F>
double beta_quadrature(F f, double a, double b, std::size_t n = 400000) {
    const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        const double dens = std::exp(log_norm + (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x));
        acc += f(x) * dens / static_cast<double>(n);
    }
    return acc;
}

}  // namespace sembayes::testing
