#pragma once

// One pass of the pipeline on a dataset: association scan, hard threshold,
// optional lambda search, masked extraction. Permutation inference reruns
// this with shuffled predictors.

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "moat/association.hpp"
#include "moat/core_graph.hpp"
#include "moat/errors.hpp"
#include "moat/extraction.hpp"

namespace moat {

struct AnalysisConfig {
    ScoreKind score_kind = ScoreKind::neg_log_p;
    double log_base = std::numbers::e;
    /// epsilon; unset means the score of p = threshold_p (or of the
    /// Bonferroni level bonferroni_alpha / (|S||F|) when bonferroni is set)
    std::optional<double> threshold;
    double threshold_p = 1e-3;
    bool bonferroni = false;
    double bonferroni_alpha = 0.05;
    /// r for H = I(a > r); unset means epsilon
    std::optional<double> cutoff;
    /// lambda1/lambda2 here are the fallback when the grid search degenerates
    ExtractionConfig extraction;
    std::optional<LambdaPair> fixed_lambdas;
    int workers = 1;

    void validate() const {
        if (!(log_base > 1.0)) throw ConfigError("log base must exceed 1");
        if (threshold && !(*threshold > 0.0)) throw ConfigError("threshold must be positive");
        if (!(threshold_p > 0.0 && threshold_p < 1.0)) throw ConfigError("threshold p-value must lie in (0, 1)");
        if (!(bonferroni_alpha > 0.0 && bonferroni_alpha < 1.0)) throw ConfigError("Bonferroni alpha must lie in (0, 1)");
        if (cutoff && !(*cutoff >= 0.0)) throw ConfigError("cutoff must be >= 0");
        if (fixed_lambdas) {
            ExtractionConfig probe = extraction;
            std::tie(probe.lambda1, probe.lambda2) = *fixed_lambdas;
            probe.validate();
        } else {
            extraction.validate();
        }
        if (workers < 1) throw ConfigError("workers must be >= 1");
    }
};

/// Score equivalent of a two-sided p-value for each score kind.
inline double score_for_p(double p, ScoreKind kind, double log_base, double df) {
    switch (kind) {
        case ScoreKind::neg_log_p: return neg_log_score(p, log_base);
        case ScoreKind::abs_t: return critical_t(p, df);
        case ScoreKind::partial_corr: {
            const double t = critical_t(p, df);
            return t / std::sqrt(t * t + df);
        }
    }
    return neg_log_score(p, log_base);
}

/// epsilon resolved from the config for a |S| x |F| scan.
inline double resolve_threshold(const AnalysisConfig& cfg, double df, Eigen::Index s_count, Eigen::Index f_count) {
    if (cfg.threshold) return *cfg.threshold;
    const double p = cfg.bonferroni ? cfg.bonferroni_alpha / (static_cast<double>(s_count) * static_cast<double>(f_count))
                                    : cfg.threshold_p;
    return score_for_p(p, cfg.score_kind, cfg.log_base, df);
}

struct Analysis {
    AssociationMatrix scores;  // after thresholding; partial correlations as |r|
    double epsilon = 0.0;
    double cutoff = 0.0;
    std::optional<LambdaSelection> selection;
    ExtractionResult extraction;
    double p1 = 0.0;  // |H| / (|S||F|)
    double p2 = 0.0;  // density of the union of extracted F_c over all region pairs
};

/// Level-2 background: the connectome G is the union of the extracted F_c.
inline double extracted_connectome_density(const std::vector<Subnetwork>& subs, int n_regions) {
    std::vector<std::uint8_t> present(static_cast<std::size_t>(pair_count(n_regions)), 0);
    std::int64_t count = 0;
    for (const auto& s : subs)
        for (int f : s.f_nodes)
            if (!present[f]) {
                present[f] = 1;
                ++count;
            }
    return static_cast<double>(count) / static_cast<double>(pair_count(n_regions));
}

namespace detail {

inline Analysis finish_analysis(AssociationMatrix scores, const AnalysisConfig& cfg, double df) {
    Analysis out;
    out.epsilon = resolve_threshold(cfg, df, scores.s_count(), scores.f_count());
    out.cutoff = cfg.cutoff ? *cfg.cutoff : out.epsilon;
    if (scores.kind == ScoreKind::partial_corr) scores.scores = scores.scores.cwiseAbs();
    out.scores = threshold_scores(std::move(scores), out.epsilon);

    const int n = out.scores.n_regions;
    const auto g = ConnectomeGraph::complete(n);
    ExtractionConfig ecfg = cfg.extraction;
    ecfg.binarize_cutoff = out.cutoff;
    if (cfg.fixed_lambdas) {
        std::tie(ecfg.lambda1, ecfg.lambda2) = *cfg.fixed_lambdas;
    } else {
        out.selection = select_lambdas(out.scores.scores, g, ecfg, cfg.workers);
        std::tie(ecfg.lambda1, ecfg.lambda2) = out.selection->lambdas;
    }
    out.extraction = extract_all(out.scores.scores, g, ecfg);
    out.p1 = out.extraction.background_density;
    out.p2 = extracted_connectome_density(out.extraction.subnetworks, n);
    return out;
}

inline AssociationOptions scan_options(const AnalysisConfig& cfg, std::optional<double> floor, int workers) {
    AssociationOptions opts;
    opts.kind = cfg.score_kind;
    opts.log_base = cfg.log_base;
    opts.floor = floor;
    opts.workers = workers;
    return opts;
}

}  // namespace detail

/// Full single-dataset pass using a prepared scanner (rows of x aligned with
/// the scanner's outcomes).
inline Analysis analyze(const AssociationScanner& scanner, const Eigen::MatrixXd& x, const AnalysisConfig& cfg,
                        int workers) {
    const double df = scanner.residual_df();
    const double eps = resolve_threshold(cfg, df, x.cols(), scanner.outcomes());
    // partial correlations may be negative; the floor works on neg_log_p / abs_t only
    std::optional<double> floor;
    if (cfg.score_kind != ScoreKind::partial_corr) floor = eps;
    return detail::finish_analysis(scanner.scan(x, detail::scan_options(cfg, floor, workers)), cfg, df);
}

inline Analysis analyze(const StudyData& data, const AnalysisConfig& cfg) {
    cfg.validate();
    const AssociationScanner scanner(data);
    return analyze(scanner, data.x, cfg, cfg.workers);
}

/// Pass starting from an existing (unthresholded) association matrix.
inline Analysis analyze_scores(AssociationMatrix scores, const AnalysisConfig& cfg, double residual_df) {
    cfg.validate();
    return detail::finish_analysis(std::move(scores), cfg, residual_df);
}

}  // namespace moat
