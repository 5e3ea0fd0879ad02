#pragma once

// Planted-subnetwork generator and recovery scoring.
//
// Block c owns a contiguous run of predictors S_c and of regions V_c; its FC
// set F_c is every pair inside V_c. Two covariance constructions:
//
//  factor            x = sqrt(rho0) g + sqrt(rho_c - rho0) z_c + noise, same for y.
//                    Every pair of variables correlates at rho0, pairs inside
//                    one block (S_c u F_c) at rho_c. PSD by construction and
//                    sampled in O(m + |F|) per subject.
//  marginal_identity within-set blocks are identity, cross entries rho_c / rho0,
//                    repaired to PSD by eigenvalue clipping. Dense; small
//                    designs only.

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "moat/analysis.hpp"
#include "moat/association.hpp"
#include "moat/core_graph.hpp"
#include "moat/errors.hpp"
#include "moat/inference.hpp"
#include "moat/parallel.hpp"

namespace moat {

enum class CovarianceModel { factor, marginal_identity };

inline std::string to_string(CovarianceModel m) { return m == CovarianceModel::factor ? "factor" : "marginal_identity"; }

inline CovarianceModel covariance_model_from_string(const std::string& s) {
    if (s == "factor") return CovarianceModel::factor;
    if (s == "marginal_identity") return CovarianceModel::marginal_identity;
    throw ConfigError("unknown covariance model '" + s + "' (expected factor or marginal_identity)");
}

struct PlantedBlock {
    int s_size = 0;
    int v_size = 0;
    double rho = 0.0;
};

struct PlantedDesign {
    int m = 500;
    int n = 100;
    std::vector<PlantedBlock> blocks;
    double rho0 = 0.15;
    int subjects = 200;
    CovarianceModel model = CovarianceModel::factor;

    int f_count() const { return static_cast<int>(pair_count(n)); }

    void validate() const {
        if (m < 1 || n < 2) throw ConfigError("design: need m >= 1 and n >= 2");
        if (subjects < 3) throw ConfigError("design: need at least 3 subjects");
        if (!(rho0 > -1.0 && rho0 < 1.0)) throw ConfigError("design: rho0 must lie in (-1, 1)");
        int s_total = 0, v_total = 0;
        for (const auto& b : blocks) {
            if (b.s_size < 1 || b.v_size < 2) throw ConfigError("design: each block needs >= 1 predictor and >= 2 regions");
            if (!(b.rho > -1.0 && b.rho < 1.0)) throw ConfigError("design: block rho must lie in (-1, 1)");
            if (b.rho < rho0) throw ConfigError("design: block rho must be at least rho0");
            s_total += b.s_size;
            v_total += b.v_size;
        }
        if (s_total > m) throw ConfigError("design: planted predictor sets exceed m");
        if (v_total > n) throw ConfigError("design: planted region sets exceed n");
        if (model == CovarianceModel::factor && rho0 < 0.0) {
            throw InfeasibleDesignError("design: the factor construction needs rho0 >= 0");
        }
    }

    int s_offset(std::size_t c) const {
        int off = 0;
        for (std::size_t i = 0; i < c; ++i) off += blocks[i].s_size;
        return off;
    }
    int v_offset(std::size_t c) const {
        int off = 0;
        for (std::size_t i = 0; i < c; ++i) off += blocks[i].v_size;
        return off;
    }
    std::vector<int> s_nodes(std::size_t c) const {
        std::vector<int> out(static_cast<std::size_t>(blocks[c].s_size));
        std::iota(out.begin(), out.end(), s_offset(c));
        return out;
    }
    std::vector<int> v_nodes(std::size_t c) const {
        std::vector<int> out(static_cast<std::size_t>(blocks[c].v_size));
        std::iota(out.begin(), out.end(), v_offset(c));
        return out;
    }
    std::vector<int> f_nodes(std::size_t c) const {
        const auto v = v_nodes(c);
        std::vector<int> out;
        for (std::size_t i = 0; i < v.size(); ++i)
            for (std::size_t j = i + 1; j < v.size(); ++j) out.push_back(static_cast<int>(edge_id(v[i], v[j], n)));
        std::sort(out.begin(), out.end());
        return out;
    }

    /// block index per predictor / per FC edge, -1 for background
    std::vector<int> predictor_block() const {
        std::vector<int> out(static_cast<std::size_t>(m), -1);
        for (std::size_t c = 0; c < blocks.size(); ++c)
            for (int k : s_nodes(c)) out[k] = static_cast<int>(c);
        return out;
    }
    std::vector<int> edge_block() const {
        std::vector<int> out(static_cast<std::size_t>(f_count()), -1);
        for (std::size_t c = 0; c < blocks.size(); ++c)
            for (int f : f_nodes(c)) out[f] = static_cast<int>(c);
        return out;
    }
};

/// m = 500, n = 100 with blocks (40 SIs, 30 regions, rho1) and (60 SIs, 20 regions, rho2).
inline PlantedDesign standard_design(double rho0, double rho1, double rho2, int subjects) {
    PlantedDesign d;
    d.m = 500;
    d.n = 100;
    d.rho0 = rho0;
    d.subjects = subjects;
    d.blocks = {{40, 30, rho1}, {60, 20, rho2}};
    return d;
}

/// Same two-block layout at m = 100, n = 40: (8 SIs, 12 regions), (12 SIs, 8 regions).
inline PlantedDesign reduced_design(double rho0, double rho1, double rho2, int subjects) {
    PlantedDesign d;
    d.m = 100;
    d.n = 40;
    d.rho0 = rho0;
    d.subjects = subjects;
    d.blocks = {{8, 12, rho1}, {12, 8, rho2}};
    return d;
}

// ---------------------------------------------------------------------------
// Covariance

struct CovarianceResult {
    Eigen::VectorXd mean;
    Eigen::MatrixXd sigma;
    double max_shift = 0.0;  // largest |change| of a planted cross entry caused by repair
    double min_eigenvalue = 0.0;
};

namespace detail {

/// Correlation of two variables given their block ids (-1 = background).
inline double factor_correlation(const PlantedDesign& d, int block_a, int block_b) {
    if (block_a >= 0 && block_a == block_b) return d.blocks[static_cast<std::size_t>(block_a)].rho;
    return d.rho0;
}

}  // namespace detail

inline constexpr double kEigenClip = 1e-10;
inline constexpr double kMaxRepairShift = 0.05;

/// Dense (m + |F|)-square covariance of the design; variables are ordered
/// predictors first, then FC edges.
inline CovarianceResult build_covariance(const PlantedDesign& design) {
    design.validate();
    const int m = design.m;
    const int f = design.f_count();
    const Eigen::Index p = m + f;
    std::vector<int> block(static_cast<std::size_t>(p));
    const auto sb = design.predictor_block();
    const auto fb = design.edge_block();
    std::copy(sb.begin(), sb.end(), block.begin());
    std::copy(fb.begin(), fb.end(), block.begin() + m);

    CovarianceResult out;
    out.mean = Eigen::VectorXd::Zero(p);
    out.sigma.resize(p, p);
    if (design.model == CovarianceModel::factor) {
        for (Eigen::Index j = 0; j < p; ++j)
            for (Eigen::Index i = 0; i < p; ++i)
                out.sigma(i, j) = i == j ? 1.0 : detail::factor_correlation(design, block[i], block[j]);
        // eigenvalues: 1 - rho_c, 1 - rho0 and the block/global directions, all >= 0
        out.min_eigenvalue = std::min(1.0 - design.rho0, 1.0);
        for (const auto& b : design.blocks) out.min_eigenvalue = std::min(out.min_eigenvalue, 1.0 - b.rho);
        return out;
    }

    // marginal_identity: identity within sets, cross entries rho_c or rho0
    Eigen::MatrixXd target = Eigen::MatrixXd::Identity(p, p);
    for (Eigen::Index e = 0; e < f; ++e)
        for (Eigen::Index k = 0; k < m; ++k) {
            const double v = detail::factor_correlation(design, block[k], block[m + e]);
            target(k, m + e) = target(m + e, k) = v;
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(target);
    if (eig.info() != Eigen::Success) throw NumericError("build_covariance: eigendecomposition failed");
    Eigen::MatrixXd repaired = target;
    if (eig.eigenvalues().minCoeff() < kEigenClip) {
        const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(kEigenClip);
        repaired = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
        const Eigen::VectorXd s = repaired.diagonal().cwiseSqrt().cwiseInverse();
        repaired = s.asDiagonal() * repaired * s.asDiagonal();
        repaired = 0.5 * (repaired + repaired.transpose());
    }
    for (Eigen::Index e = 0; e < f; ++e)
        for (Eigen::Index k = 0; k < m; ++k)
            if (block[k] >= 0 && block[k] == block[m + e])
                out.max_shift = std::max(out.max_shift, std::abs(repaired(k, m + e) - target(k, m + e)));
    if (out.max_shift > kMaxRepairShift) {
        throw InfeasibleDesignError("build_covariance: PSD repair moves a planted cross-correlation by " +
                                    std::to_string(out.max_shift) + " (limit " + std::to_string(kMaxRepairShift) + ")");
    }
    out.min_eigenvalue = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(repaired, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    out.sigma = std::move(repaired);
    return out;
}

// ---------------------------------------------------------------------------
// Sampling

/// D draws from the design; X holds the first m variables, Y the C(n,2) edges.
/// No confounders.
inline StudyData generate(const PlantedDesign& design, std::uint64_t seed) {
    design.validate();
    const int m = design.m;
    const int f = design.f_count();
    const int d = design.subjects;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    StudyData data;
    data.n_regions = design.n;
    data.x.resize(d, m);
    data.y.resize(d, f);
    data.eta.resize(d, 0);

    if (design.model == CovarianceModel::factor) {
        const auto sb = design.predictor_block();
        const auto fb = design.edge_block();
        auto block_load = [&](int b) { return b < 0 ? 0.0 : std::sqrt(design.blocks[static_cast<std::size_t>(b)].rho - design.rho0); };
        auto noise_load = [&](int b) { return std::sqrt(1.0 - (b < 0 ? design.rho0 : design.blocks[static_cast<std::size_t>(b)].rho)); };
        const double global = std::sqrt(design.rho0);
        std::vector<double> z(design.blocks.size());
        // row-major fill keeps the draw order independent of Eigen's storage
        for (int i = 0; i < d; ++i) {
            const double g = normal(rng);
            for (auto& v : z) v = normal(rng);
            for (int k = 0; k < m; ++k) {
                const int b = sb[static_cast<std::size_t>(k)];
                data.x(i, k) = global * g + (b < 0 ? 0.0 : block_load(b) * z[static_cast<std::size_t>(b)]) + noise_load(b) * normal(rng);
            }
            for (int e = 0; e < f; ++e) {
                const int b = fb[static_cast<std::size_t>(e)];
                data.y(i, e) = global * g + (b < 0 ? 0.0 : block_load(b) * z[static_cast<std::size_t>(b)]) + noise_load(b) * normal(rng);
            }
        }
    } else {
        const auto cov = build_covariance(design);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov.sigma);
        const Eigen::MatrixXd root =
            eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();  // sigma = root root^T
        Eigen::VectorXd w(cov.sigma.rows());
        for (int i = 0; i < d; ++i) {
            for (Eigen::Index j = 0; j < w.size(); ++j) w(j) = normal(rng);
            const Eigen::VectorXd draw = root * w;
            data.x.row(i) = draw.head(m).transpose();
            data.y.row(i) = draw.tail(f).transpose();
        }
    }
    data.fill_default_names();
    return data;
}

// ---------------------------------------------------------------------------
// Recovery scoring

struct RecoveryScore {
    double tpr_si = 0.0, tnr_si = 1.0;
    double tpr_fc = 0.0, tnr_fc = 1.0;
    double tpr_edge = 0.0, tnr_edge = 1.0;

    static constexpr std::size_t kFields = 6;
    std::array<double, kFields> as_array() const { return {tpr_si, tnr_si, tpr_fc, tnr_fc, tpr_edge, tnr_edge}; }
    static std::array<const char*, kFields> field_names() {
        return {"tpr_si", "tnr_si", "tpr_fc", "tnr_fc", "tpr_edge", "tnr_edge"};
    }
    static RecoveryScore from_array(const std::array<double, kFields>& a) { return {a[0], a[1], a[2], a[3], a[4], a[5]}; }
};

/// A reported block, from MOAT or from an external method.
struct BlockCall {
    std::vector<int> s_nodes;  // 0-based
    std::vector<int> f_nodes;  // 0-based edge ids
    bool significant = true;
};

namespace detail {

inline double rate(std::int64_t hit, std::int64_t total) {
    return total == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace detail

/// Rates against the planted truth; only significant calls count as recovered.
/// A rate with an empty denominator (e.g. TPR when nothing is planted) is 1.
inline RecoveryScore score_recovery(const std::vector<BlockCall>& calls, const PlantedDesign& design) {
    const int m = design.m;
    const int f = design.f_count();
    const auto sb = design.predictor_block();
    const auto fb = design.edge_block();

    std::vector<std::uint8_t> s_found(static_cast<std::size_t>(m), 0), f_found(static_cast<std::size_t>(f), 0);
    std::vector<std::uint64_t> cells((static_cast<std::size_t>(m) * f + 63) / 64, 0);
    for (const auto& call : calls) {
        if (!call.significant) continue;
        for (int k : call.s_nodes) {
            if (k < 0 || k >= m) throw DataError("score_recovery: predictor index out of range");
            s_found[k] = 1;
        }
        for (int e : call.f_nodes) {
            if (e < 0 || e >= f) throw DataError("score_recovery: edge index out of range");
            f_found[e] = 1;
        }
        for (int k : call.s_nodes)
            for (int e : call.f_nodes) {
                const auto bit = static_cast<std::size_t>(k) * f + e;
                cells[bit / 64] |= 1ULL << (bit % 64);
            }
    }

    std::int64_t s_pos = 0, s_tp = 0, s_neg = 0, s_tn = 0;
    for (int k = 0; k < m; ++k) {
        if (sb[k] >= 0) {
            ++s_pos;
            s_tp += s_found[k];
        } else {
            ++s_neg;
            s_tn += 1 - s_found[k];
        }
    }
    std::int64_t f_pos = 0, f_tp = 0, f_neg = 0, f_tn = 0;
    for (int e = 0; e < f; ++e) {
        if (fb[e] >= 0) {
            ++f_pos;
            f_tp += f_found[e];
        } else {
            ++f_neg;
            f_tn += 1 - f_found[e];
        }
    }
    // cell (k, e) is planted iff both belong to the same block
    std::int64_t c_pos = 0, c_tp = 0, c_found = 0;
    for (const auto word : cells) c_found += std::popcount(word);
    for (std::size_t c = 0; c < design.blocks.size(); ++c) {
        const auto s = design.s_nodes(c);
        const auto fs = design.f_nodes(c);
        c_pos += static_cast<std::int64_t>(s.size() * fs.size());
        for (int k : s)
            for (int e : fs) {
                const auto bit = static_cast<std::size_t>(k) * f + e;
                c_tp += (cells[bit / 64] >> (bit % 64)) & 1U;
            }
    }
    const std::int64_t c_neg = static_cast<std::int64_t>(m) * f - c_pos;

    RecoveryScore r;
    r.tpr_si = detail::rate(s_tp, s_pos);
    r.tnr_si = detail::rate(s_tn, s_neg);
    r.tpr_fc = detail::rate(f_tp, f_pos);
    r.tnr_fc = detail::rate(f_tn, f_neg);
    r.tpr_edge = detail::rate(c_tp, c_pos);
    r.tnr_edge = detail::rate(c_neg - (c_found - c_tp), c_neg);
    return r;
}

inline RecoveryScore score_recovery(const std::vector<Subnetwork>& subs, const std::vector<bool>& significant,
                                    const PlantedDesign& design) {
    if (significant.size() != subs.size()) throw DomainError("score_recovery: one significance flag per subnetwork");
    std::vector<BlockCall> calls;
    for (std::size_t i = 0; i < subs.size(); ++i) calls.push_back({subs[i].s_nodes, subs[i].f_nodes, significant[i]});
    return score_recovery(calls, design);
}

/// Frobenius distance between planted and recovered (k, e) membership
/// matrices: sqrt of the size of their symmetric difference.
inline double membership_error(const std::vector<Subnetwork>& subs, const PlantedDesign& design) {
    const int f = design.f_count();
    std::vector<std::uint8_t> truth(static_cast<std::size_t>(design.m) * f, 0), found(truth.size(), 0);
    for (std::size_t c = 0; c < design.blocks.size(); ++c)
        for (int k : design.s_nodes(c))
            for (int e : design.f_nodes(c)) truth[static_cast<std::size_t>(k) * f + e] = 1;
    for (const auto& s : subs)
        for (int k : s.s_nodes)
            for (int e : s.f_nodes) found[static_cast<std::size_t>(k) * f + e] = 1;
    std::int64_t diff = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) diff += truth[i] != found[i];
    return std::sqrt(static_cast<double>(diff));
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchmarkConfig {
    double rho0 = 0.15;
    double rho1 = 0.55;
    double rho2 = 0.60;
    int subjects = 200;
};

/// The three configurations of the synthetic study.
inline std::vector<BenchmarkConfig> default_benchmark_configs() {
    return {{0.15, 0.55, 0.60, 200}, {0.15, 0.60, 0.45, 300}, {0.15, 0.70, 0.40, 400}};
}

/// Weaker-signal variant (rho1, rho2) = (0.40, 0.35); not run by default.
inline BenchmarkConfig weak_signal_config(double rho0 = 0.15, int subjects = 200) { return {rho0, 0.40, 0.35, subjects}; }

struct BenchmarkSettings {
    /// template for sizes and blocks; rho and subjects come from each config
    PlantedDesign design = standard_design(0.15, 0.55, 0.60, 200);
    int replicates = 25;
    int permutations = 100;
    double alpha = 0.05;
    /// Bonferroni threshold by default: a p < 0.001 cut passes whole rows of
    /// background predictors that happen to track a block factor
    AnalysisConfig analysis = [] {
        AnalysisConfig a;
        a.bonferroni = true;
        return a;
    }();
    std::uint64_t seed = 20240101;
    int workers = 1;

    void validate() const {
        if (replicates < 1) throw ConfigError("benchmark: replicates must be >= 1");
        if (permutations < kMinPermutations) throw ConfigError("benchmark: permutations must be >= " + std::to_string(kMinPermutations));
        if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("benchmark: alpha must lie in (0, 1)");
        analysis.validate();
    }
};

struct ReplicateOutcome {
    RecoveryScore score;
    std::size_t extracted = 0;
    std::size_t significant = 0;
    std::vector<double> q_values;
    LambdaPair lambdas{0.0, 0.0};
    double seconds = 0.0;
};

struct BenchmarkRow {
    BenchmarkConfig config;
    int replicates = 0;
    RecoveryScore mean;
    RecoveryScore sd;
    std::vector<ReplicateOutcome> raw;
};

inline PlantedDesign design_for(const BenchmarkSettings& s, const BenchmarkConfig& c) {
    PlantedDesign d = s.design;
    d.rho0 = c.rho0;
    d.subjects = c.subjects;
    const double rhos[] = {c.rho1, c.rho2};
    for (std::size_t i = 0; i < d.blocks.size(); ++i) d.blocks[i].rho = rhos[std::min<std::size_t>(i, 1)];
    return d;
}

/// generate -> analyze -> permutation test -> score, for one dataset.
inline ReplicateOutcome run_replicate(const PlantedDesign& design, const BenchmarkSettings& s, std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    const StudyData data = generate(design, seed);
    AnalysisConfig cfg = s.analysis;
    cfg.workers = 1;
    const Analysis a = analyze(data, cfg);
    ReplicateOutcome out;
    out.lambdas = a.extraction.lambdas;
    out.extracted = a.extraction.subnetworks.size();
    std::vector<bool> significant(a.extraction.subnetworks.size(), false);
    if (!a.extraction.subnetworks.empty()) {
        const auto report = permutation_test(data, cfg, a, s.permutations, mix_seed(seed));
        out.q_values = report.q_values;
        for (std::size_t i = 0; i < significant.size(); ++i) significant[i] = report.q_values[i] < s.alpha;
    }
    out.significant = static_cast<std::size_t>(std::count(significant.begin(), significant.end(), true));
    out.score = score_recovery(a.extraction.subnetworks, significant, design);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

/// R replicates per config; replicate r of config c uses stream (seed, r, c).
inline std::vector<BenchmarkRow> run_benchmark(const std::vector<BenchmarkConfig>& configs, const BenchmarkSettings& s) {
    s.validate();
    std::vector<BenchmarkRow> rows;
    for (std::size_t c = 0; c < configs.size(); ++c) {
        const PlantedDesign design = design_for(s, configs[c]);
        design.validate();
        BenchmarkRow row;
        row.config = configs[c];
        row.replicates = s.replicates;
        row.raw.resize(static_cast<std::size_t>(s.replicates));
        parallel_for(row.raw.size(), s.workers, [&](std::size_t r) {
            row.raw[r] = run_replicate(design, s, stream_seed(s.seed, r, c + 1));
        });
        std::array<double, RecoveryScore::kFields> sum{}, sq{};
        for (const auto& o : row.raw) {
            const auto v = o.score.as_array();
            for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
        }
        const double rn = static_cast<double>(row.raw.size());
        std::array<double, RecoveryScore::kFields> mean{}, sd{};
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = sum[i] / rn;
        for (const auto& o : row.raw) {
            const auto v = o.score.as_array();
            for (std::size_t i = 0; i < v.size(); ++i) sq[i] += (v[i] - mean[i]) * (v[i] - mean[i]);
        }
        for (std::size_t i = 0; i < sd.size(); ++i) sd[i] = row.raw.size() > 1 ? std::sqrt(sq[i] / (rn - 1.0)) : 0.0;
        row.mean = RecoveryScore::from_array(mean);
        row.sd = RecoveryScore::from_array(sd);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace moat
