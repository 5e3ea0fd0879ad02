#pragma once

// Network-level inference for extracted subnetworks.
//
//   zeta(a, b) = [1/(a-b)^2 + 1/(3(a-b))]^-1
//   log T      = -zeta(g1,p1)|S_c||F_c|/4 - zeta(g2,p2)|V_c|^2/4
//
// Small T is rare under the null. The permutation test records, per shuffle of
// the predictor rows, the smallest T over everything extracted and reports
// q = (1 + #{T_l <= T_0}) / (L + 1).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "moat/analysis.hpp"
#include "moat/association.hpp"
#include "moat/core_graph.hpp"
#include "moat/errors.hpp"
#include "moat/parallel.hpp"

namespace moat {

inline double zeta(double a, double b) {
    if (!(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0)) throw DomainError("zeta: densities must lie in [0, 1]");
    if (!(a > b)) throw DomainError("zeta: needs a > b (block no denser than background)");
    const double gap = a - b;
    return 1.0 / (1.0 / (gap * gap) + 1.0 / (3.0 * gap));
}

struct TestStatistic {
    double log_value = 0.0;
    double gamma1 = 0.0, p1 = 0.0, gamma2 = 0.0, p2 = 0.0;
    std::size_t s_size = 0, f_size = 0, v_size = 0;

    /// exp(log_value); underflows to 0 for large blocks, which is why
    /// comparisons always use log_value.
    double value() const { return std::exp(log_value); }
};

inline double log_test_statistic(double gamma1, double p1, double gamma2, double p2, double s_size, double f_size,
                                 double v_size) {
    return -0.25 * zeta(gamma1, p1) * s_size * f_size - 0.25 * zeta(gamma2, p2) * v_size * v_size;
}

inline TestStatistic test_statistic(const Subnetwork& sub, double p1, double p2) {
    if (!(sub.gamma1 > p1) || !(sub.gamma2 > p2)) {
        throw NotTestableError("test_statistic: subnetwork is not denser than the background (gamma1 = " +
                               std::to_string(sub.gamma1) + ", p1 = " + std::to_string(p1) +
                               ", gamma2 = " + std::to_string(sub.gamma2) + ", p2 = " + std::to_string(p2) + ")");
    }
    TestStatistic t;
    t.gamma1 = sub.gamma1;
    t.p1 = p1;
    t.gamma2 = sub.gamma2;
    t.p2 = p2;
    t.s_size = sub.s_size();
    t.f_size = sub.f_size();
    t.v_size = sub.v_size();
    t.log_value = log_test_statistic(t.gamma1, p1, t.gamma2, p2, static_cast<double>(t.s_size),
                                     static_cast<double>(t.f_size), static_cast<double>(t.v_size));
    return t;
}

/// log T, with 0 (T = 1) for blocks that are not testable.
inline double log_test_statistic_or_one(const Subnetwork& sub, double p1, double p2) {
    if (!(sub.gamma1 > p1) || !(sub.gamma2 > p2)) return 0.0;
    return test_statistic(sub, p1, p2).log_value;
}

// ---------------------------------------------------------------------------
// Random-graph bound on dense blocks

/// log of 2 m n^2 (n-1) exp(-zeta1 m0 n0 (n0-1) / 8 - zeta2 n0^2 / 4), capped at 0.
inline double log_lemma1_bound(int m0, int n0, double gamma1, double p1, double gamma2, double p2, int m, int n) {
    if (m0 < 1 || n0 < 2 || m0 > m || n0 > n) throw DomainError("lemma1_bound: need 1 <= m0 <= m and 2 <= n0 <= n");
    const double z1 = zeta(gamma1, p1);
    const double z2 = zeta(gamma2, p2);
    const double md = m, nd = n, m0d = m0, n0d = n0;
    const double log_prefactor = std::log(2.0 * md) + 2.0 * std::log(nd) + std::log(nd - 1.0);
    const double value = log_prefactor - z1 * m0d * n0d * (n0d - 1.0) / 8.0 - z2 * n0d * n0d / 4.0;
    return std::min(0.0, value);
}

inline double lemma1_bound(int m0, int n0, double gamma1, double p1, double gamma2, double p2, int m, int n) {
    return std::exp(log_lemma1_bound(m0, n0, gamma1, p1, gamma2, p2, m, n));
}

struct Lemma1Check {
    std::int64_t trials = 0;
    std::int64_t hits = 0;
    double frequency() const { return trials ? static_cast<double>(hits) / static_cast<double>(trials) : 0.0; }
};

namespace detail {

/// Exhaustive dense-block test on one two-level graph. `adj` holds region
/// adjacency bitmasks, `h` the bipartite rows packed over edge ids. Every region
/// set V_c (|V_c| >= n0) is scanned with F_c = G[V_c]; for a fixed F_c the
/// densest S_c with |S_c| >= m0 is the top-m0 rows.
class DenseBlockScan {
public:
    DenseBlockScan(int m, int n, int m0, int n0, double gamma1, double gamma2)
        : m_(m), n_(n), m0_(m0), n0_(n0), gamma1_(gamma1), gamma2_(gamma2),
          words_((static_cast<int>(pair_count(n)) + 63) / 64),
          edges_in_(std::size_t{1} << n),
          fmask_(static_cast<std::size_t>(words_)),
          row_counts_(static_cast<std::size_t>(m)) {
        if (n < 2 || n > 20 || m < 1 || m0 < 1 || m0 > m || n0 < 2 || n0 > n) throw DomainError("dense block scan: bad sizes");
    }

    int words() const { return words_; }

    bool operator()(const std::vector<std::uint32_t>& adj, const std::vector<std::uint64_t>& h) {
        const std::uint32_t full = (std::uint32_t{1} << n_) - 1;
        const double min_edges = static_cast<double>(pair_count(n0_));
        // edges_in[mask] = edges_in[mask without lowest] + links from lowest into the rest
        edges_in_[0] = 0;
        for (std::uint32_t mask = 1; mask <= full; ++mask) {
            const int low = std::countr_zero(mask);
            const std::uint32_t rest = mask & (mask - 1);
            edges_in_[mask] = edges_in_[rest] + std::popcount(adj[low] & rest);
            const int size = std::popcount(mask);
            if (size < n0_) continue;
            const double e_count = edges_in_[mask];
            if (e_count < min_edges || e_count < gamma2_ * static_cast<double>(pair_count(size))) continue;
            std::fill(fmask_.begin(), fmask_.end(), 0ULL);
            for (int i = 0; i < n_; ++i) {
                if (!(mask >> i & 1U)) continue;
                for (int j = i + 1; j < n_; ++j)
                    if ((mask >> j & 1U) && (adj[i] >> j & 1U)) {
                        const auto e = edge_id(i, j, n_);
                        fmask_[e / 64] |= 1ULL << (e % 64);
                    }
            }
            for (int k = 0; k < m_; ++k) {
                int cnt = 0;
                for (int w = 0; w < words_; ++w) cnt += std::popcount(h[static_cast<std::size_t>(k) * words_ + w] & fmask_[w]);
                row_counts_[k] = cnt;
            }
            std::partial_sort(row_counts_.begin(), row_counts_.begin() + m0_, row_counts_.end(), std::greater<>());
            double top = 0.0;
            for (int k = 0; k < m0_; ++k) top += row_counts_[k];
            if (top >= gamma1_ * m0_ * e_count) return true;
        }
        return false;
    }

private:
    int m_, n_, m0_, n0_;
    double gamma1_, gamma2_;
    int words_;
    std::vector<int> edges_in_;
    std::vector<std::uint64_t> fmask_;
    std::vector<int> row_counts_;
};

}  // namespace detail

/// Monte-Carlo frequency of a dense block in random two-level graphs.
///
/// Each trial draws G ~ Erdos-Renyi(n, p2) and H ~ Bernoulli(p1) over m x C(n,2)
/// and asks whether some region set V_c (|V_c| >= n0) carries F_c = G[V_c] with
/// |F_c| >= C(n0,2) and density >= gamma2, and some S_c (|S_c| >= m0) with
/// H-density >= gamma1 on S_c x F_c. n <= 20.
inline Lemma1Check lemma1_monte_carlo(int m, int n, double p1, double p2, int m0, int n0, double gamma1, double gamma2,
                                      std::int64_t trials, std::uint64_t seed, int workers = 1) {
    if (n < 2 || n > 20 || m < 1 || m0 < 1 || m0 > m || n0 < 2 || n0 > n) throw DomainError("lemma1_monte_carlo: bad sizes");
    const int f = static_cast<int>(pair_count(n));

    // per-worker chunks keep the RNG streams independent of scheduling
    const std::int64_t chunk = 1000;
    const auto chunks = static_cast<std::size_t>((trials + chunk - 1) / chunk);
    std::vector<std::int64_t> hits(chunks, 0);
    parallel_for(chunks, workers, [&](std::size_t c) {
        std::mt19937_64 rng(stream_seed(seed, c, 0x1e44a));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        detail::DenseBlockScan scan(m, n, m0, n0, gamma1, gamma2);
        const int words = scan.words();
        std::vector<std::uint32_t> adj(static_cast<std::size_t>(n));
        std::vector<std::uint64_t> h(static_cast<std::size_t>(m) * words);
        const std::int64_t begin = static_cast<std::int64_t>(c) * chunk;
        const std::int64_t end = std::min(trials, begin + chunk);
        for (std::int64_t t = begin; t < end; ++t) {
            std::fill(adj.begin(), adj.end(), 0U);
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    if (unif(rng) < p2) {
                        adj[i] |= 1U << j;
                        adj[j] |= 1U << i;
                    }
            std::fill(h.begin(), h.end(), 0ULL);
            for (int k = 0; k < m; ++k)
                for (int e = 0; e < f; ++e)
                    if (unif(rng) < p1) h[static_cast<std::size_t>(k) * words + e / 64] |= 1ULL << (e % 64);
            if (scan(adj, h)) ++hits[c];
        }
    });
    Lemma1Check out;
    out.trials = trials;
    for (auto v : hits) out.hits += v;
    return out;
}

// ---------------------------------------------------------------------------
// Permutation FWER

struct PermutationReport {
    std::vector<TestStatistic> observed;  // one per observed subnetwork
    std::vector<bool> testable;           // false: density not above background, log T taken as 0
    std::vector<double> null_log_extremes;  // min log T per permutation
    std::vector<double> q_values;
    int permutations = 0;
    std::uint64_t seed = 0;
    LambdaPair lambdas{1.25, 1.5};
};

inline constexpr int kMinPermutations = 100;

/// q = (1 + #{l : log T_l <= log T_0}) / (L + 1).
inline double permutation_q(double observed_log_t, const std::vector<double>& null_log_extremes) {
    std::size_t count = 0;
    for (double v : null_log_extremes)
        if (v <= observed_log_t) ++count;
    return (1.0 + static_cast<double>(count)) / (static_cast<double>(null_log_extremes.size()) + 1.0);
}

/// Permutation test for the subnetworks of an existing analysis of `data`.
/// Each permutation reruns the pass with the analysis' lambdas held fixed.
inline PermutationReport permutation_test(const StudyData& data, const AnalysisConfig& cfg, const Analysis& observed,
                                          int permutations, std::uint64_t seed) {
    if (permutations < kMinPermutations) {
        throw ConfigError("permutation_test: L = " + std::to_string(permutations) + " is below the minimum of " +
                          std::to_string(kMinPermutations));
    }
    if (observed.extraction.subnetworks.empty()) throw DomainError("permutation_test: nothing was extracted from the observed data");
    cfg.validate();

    PermutationReport report;
    report.permutations = permutations;
    report.seed = seed;
    report.lambdas = observed.extraction.lambdas;
    for (const auto& sub : observed.extraction.subnetworks) {
        const bool ok = sub.gamma1 > observed.p1 && sub.gamma2 > observed.p2;
        report.testable.push_back(ok);
        if (ok) {
            report.observed.push_back(test_statistic(sub, observed.p1, observed.p2));
        } else {
            TestStatistic t;
            t.gamma1 = sub.gamma1;
            t.p1 = observed.p1;
            t.gamma2 = sub.gamma2;
            t.p2 = observed.p2;
            t.s_size = sub.s_size();
            t.f_size = sub.f_size();
            t.v_size = sub.v_size();
            report.observed.push_back(t);
        }
    }

    AnalysisConfig perm_cfg = cfg;
    perm_cfg.fixed_lambdas = observed.extraction.lambdas;
    perm_cfg.threshold = observed.epsilon;
    perm_cfg.cutoff = observed.cutoff;

    const AssociationScanner scanner(data);
    report.null_log_extremes.assign(static_cast<std::size_t>(permutations), 0.0);
    parallel_for(static_cast<std::size_t>(permutations), cfg.workers, [&](std::size_t l) {
        std::mt19937_64 rng(stream_seed(seed, l, 0x9e77));
        const auto perm = random_permutation(static_cast<std::size_t>(data.subjects()), rng);
        Eigen::MatrixXd x(data.x.rows(), data.x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) = data.x.row(perm[static_cast<std::size_t>(i)]);
        const Analysis a = analyze(scanner, x, perm_cfg, 1);
        double extreme = 0.0;
        for (const auto& sub : a.extraction.subnetworks) extreme = std::min(extreme, log_test_statistic_or_one(sub, a.p1, a.p2));
        report.null_log_extremes[l] = extreme;
    });

    for (const auto& t : report.observed) report.q_values.push_back(permutation_q(t.log_value, report.null_log_extremes));
    return report;
}

/// Runs the observed analysis first, then the permutations.
inline PermutationReport permutation_test(const StudyData& data, const AnalysisConfig& cfg, int permutations,
                                          std::uint64_t seed) {
    if (permutations < kMinPermutations) {
        throw ConfigError("permutation_test: L = " + std::to_string(permutations) + " is below the minimum of " +
                          std::to_string(kMinPermutations));
    }
    return permutation_test(data, cfg, analyze(data, cfg), permutations, seed);
}

}  // namespace moat
