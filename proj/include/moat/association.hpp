#pragma once

// Mass-univariate association scan: one confounder-adjusted OLS per
// (predictor, FC edge) pair, reduced to a score matrix A (|S| x |F|).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "moat/core_graph.hpp"
#include "moat/errors.hpp"
#include "moat/parallel.hpp"

namespace moat {

enum class ScoreKind { neg_log_p, abs_t, partial_corr };

inline std::string to_string(ScoreKind k) {
    switch (k) {
        case ScoreKind::neg_log_p: return "neg_log_p";
        case ScoreKind::abs_t: return "abs_t";
        case ScoreKind::partial_corr: return "partial_corr";
    }
    return "?";
}

inline ScoreKind score_kind_from_string(const std::string& s) {
    if (s == "neg_log_p") return ScoreKind::neg_log_p;
    if (s == "abs_t") return ScoreKind::abs_t;
    if (s == "partial_corr") return ScoreKind::partial_corr;
    throw ConfigError("unknown score kind '" + s + "' (expected neg_log_p, abs_t or partial_corr)");
}

/// Largest score reported for neg_log_p / abs_t; reached only by (near) perfect fits.
inline constexpr double kMaxScore = 1000.0;

/// Per-subject measurements: predictors X (D x m), vectorised upper-triangular
/// outcomes Y (D x C(n,2), lexicographic edge order), confounders eta (D x P).
struct StudyData {
    Eigen::MatrixXd x;
    Eigen::MatrixXd y;
    Eigen::MatrixXd eta;
    std::vector<std::string> predictor_names;
    std::vector<std::string> outcome_names;
    std::vector<std::string> confounder_names;
    int n_regions = 0;

    Eigen::Index subjects() const { return x.rows(); }
    Eigen::Index predictors() const { return x.cols(); }
    Eigen::Index outcomes() const { return y.cols(); }
    Eigen::Index confounders() const { return eta.cols(); }

    void validate() const {
        if (x.rows() != y.rows() || (eta.cols() > 0 && eta.rows() != x.rows())) {
            throw DataError("StudyData: row counts differ (X " + std::to_string(x.rows()) + ", Y " + std::to_string(y.rows()) +
                            ", confounders " + std::to_string(eta.rows()) + ")");
        }
        if (x.cols() < 1) throw DataError("StudyData: no predictors");
        if (n_regions < 2 || y.cols() != pair_count(n_regions)) {
            throw DataError("StudyData: " + std::to_string(y.cols()) + " outcome columns is not C(n,2) for n = " +
                            std::to_string(n_regions));
        }
        auto finite = [](const Eigen::MatrixXd& m) { return m.size() == 0 || m.allFinite(); };
        if (!finite(x) || !finite(y) || !finite(eta)) throw DataError("StudyData: non-finite entries");
    }

    /// Default names for any name list left empty.
    void fill_default_names() {
        auto fill = [](std::vector<std::string>& names, Eigen::Index count, const std::string& prefix) {
            if (static_cast<Eigen::Index>(names.size()) == count) return;
            names.clear();
            for (Eigen::Index i = 0; i < count; ++i) names.push_back(prefix + std::to_string(i + 1));
        };
        fill(predictor_names, x.cols(), "SI");
        fill(confounder_names, eta.cols(), "eta");
        if (static_cast<Eigen::Index>(outcome_names.size()) != y.cols()) {
            outcome_names.clear();
            for (Eigen::Index e = 0; e < y.cols(); ++e) {
                auto [i, j] = edge_endpoints(e, n_regions);
                outcome_names.push_back("FC_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
            }
        }
    }
};

struct FitResult {
    double beta = 0.0;
    double t_stat = 0.0;
    double p_value = 1.0;
    int df = 0;
};

// ---------------------------------------------------------------------------
// Student-t tail helpers

/// Two-sided p-value P(|T_df| >= |t|).
inline double two_sided_p(double t, double df) {
    if (std::isnan(t)) return 1.0;
    if (std::isinf(t)) return 0.0;
    boost::math::students_t dist(df);
    return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

/// -ln of the two-sided p-value, accurate when the p-value underflows.
inline double neg_ln_two_sided_p(double t, double df) {
    const double p = two_sided_p(t, df);
    if (p > 1e-300) return -std::log(p);
    if (!std::isfinite(t)) return std::numeric_limits<double>::infinity();
    // leading term of the tail: P(T > t) ~ f(t) (df + t^2) / (df t)
    const double at = std::abs(t);
    const double log_pdf = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) - 0.5 * std::log(df * std::numbers::pi) -
                           (df + 1.0) / 2.0 * std::log1p(at * at / df);
    return -(std::log(2.0) + log_pdf + std::log((df + at * at) / (df * at)));
}

/// |t| at which the two-sided p-value equals p.
inline double critical_t(double p, double df) {
    boost::math::students_t dist(df);
    return boost::math::quantile(boost::math::complement(dist, p / 2.0));
}

// ---------------------------------------------------------------------------

namespace detail {

inline std::string design_column_name(Eigen::Index c) {
    if (c == 0) return "intercept";
    if (c == 1) return "predictor";
    return "confounder " + std::to_string(c - 1);
}

/// Column indices (in the original order) that a pivoted QR found dependent.
inline std::vector<Eigen::Index> dependent_columns(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr) {
    std::vector<Eigen::Index> cols;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = qr.rank(); i < perm.size(); ++i) cols.push_back(perm[i]);
    std::sort(cols.begin(), cols.end());
    return cols;
}

}  // namespace detail

/// OLS of y on [1, x, eta] with identity link. t and p refer to the x coefficient
/// with D - P - 2 residual degrees of freedom.
inline FitResult fit_single(const Eigen::VectorXd& y, const Eigen::VectorXd& x, const Eigen::MatrixXd& eta) {
    const Eigen::Index d = y.size();
    const Eigen::Index p = eta.cols();
    if (x.size() != d || (p > 0 && eta.rows() != d)) throw DataError("fit_single: inputs have different lengths");
    if (d <= p + 2) {
        throw InsufficientDataError("fit_single: " + std::to_string(d) + " subjects cannot fit " + std::to_string(p + 2) +
                                    " coefficients with positive residual degrees of freedom");
    }
    Eigen::MatrixXd design(d, p + 2);
    design.col(0).setOnes();
    design.col(1) = x;
    if (p > 0) design.rightCols(p) = eta;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> pivoted(design);
    pivoted.setThreshold(1e-10);
    if (pivoted.rank() < p + 2) {
        std::string names;
        for (auto c : detail::dependent_columns(pivoted)) names += (names.empty() ? "" : ", ") + detail::design_column_name(c);
        throw SingularDesignError("fit_single: design matrix is rank deficient; linearly dependent column(s): " + names);
    }

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(design);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(p + 2).triangularView<Eigen::Upper>();
    const Eigen::VectorXd coef = qr.solve(y);
    const Eigen::VectorXd resid = y - design * coef;
    const int df = static_cast<int>(d - p - 2);
    const double sigma2 = resid.squaredNorm() / df;
    const Eigen::MatrixXd r_inv =
        r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p + 2, p + 2));
    const double se = std::sqrt(sigma2 * r_inv.row(1).squaredNorm());

    FitResult out;
    out.beta = coef(1);
    out.df = df;
    out.t_stat = se > 0.0 ? out.beta / se : std::copysign(std::numeric_limits<double>::infinity(), out.beta);
    if (se == 0.0 && out.beta == 0.0) out.t_stat = 0.0;
    out.p_value = two_sided_p(out.t_stat, df);
    return out;
}

/// Score matrix a_(ij),k, rows = predictors, columns = FC edges.
struct AssociationMatrix {
    Eigen::MatrixXd scores;
    ScoreKind kind = ScoreKind::neg_log_p;
    int n_regions = 0;
    double log_base = std::numbers::e;
    std::vector<std::string> predictor_names;
    std::vector<std::string> outcome_names;

    Eigen::Index s_count() const { return scores.rows(); }
    Eigen::Index f_count() const { return scores.cols(); }
};

struct AssociationOptions {
    ScoreKind kind = ScoreKind::neg_log_p;
    /// Base of the logarithm in neg_log_p scores.
    double log_base = std::numbers::e;
    /// When set, scores below this value come back as 0 (same result as
    /// threshold_scores) and their p-values are never evaluated.
    std::optional<double> floor;
    int workers = 1;
};

/// Converts a p-value to the neg_log_p score in the requested base.
inline double neg_log_score(double p, double log_base = std::numbers::e) { return -std::log(p) / std::log(log_base); }

/// Factorises the confounder block [1, eta] once and caches the residualised
/// outcomes, so repeated scans (e.g. with permuted predictors) only pay for
/// the predictor side and one cross-product.
class AssociationScanner {
public:
    explicit AssociationScanner(const StudyData& data) : data_(&data) {
        data.validate();
        const Eigen::Index d = data.subjects();
        const Eigen::Index p = data.confounders();
        if (d <= p + 2) {
            throw InsufficientDataError("association: " + std::to_string(d) + " subjects with " + std::to_string(p) +
                                        " confounders leaves no residual degrees of freedom");
        }
        Eigen::MatrixXd base(d, p + 1);
        base.col(0).setOnes();
        if (p > 0) base.rightCols(p) = data.eta;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> pivoted(base);
        pivoted.setThreshold(1e-10);
        if (pivoted.rank() < p + 1) {
            std::string names;
            for (auto c : detail::dependent_columns(pivoted)) {
                names += (names.empty() ? "" : ", ");
                if (c == 0)
                    names += "intercept";
                else if (data.confounder_names.size() == static_cast<std::size_t>(p))
                    names += data.confounder_names[c - 1];
                else
                    names += "confounder " + std::to_string(c);
            }
            throw SingularDesignError("association: confounder block is rank deficient; dependent column(s): " + names);
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(base);
        q_ = qr.householderQ() * Eigen::MatrixXd::Identity(d, p + 1);
        yr_ = data.y - q_ * (q_.transpose() * data.y);
        syy_ = yr_.colwise().squaredNorm().transpose();
        df_ = static_cast<double>(d - p - 2);
    }

    double residual_df() const { return df_; }
    Eigen::Index outcomes() const { return yr_.cols(); }

    /// Scores for predictor matrix `x` (rows aligned with the outcomes).
    AssociationMatrix scan(const Eigen::MatrixXd& x, const AssociationOptions& opts = {}) const {
        const StudyData& data = *data_;
        if (x.rows() != data.subjects()) throw DataError("association: predictor rows do not match outcome rows");
        if (!(opts.log_base > 1.0)) throw ConfigError("association: log base must exceed 1");
        const Eigen::Index m = x.cols();
        const Eigen::Index f = yr_.cols();
        const Eigen::MatrixXd xr = x - q_ * (q_.transpose() * x);
        const Eigen::VectorXd sxx = xr.colwise().squaredNorm().transpose();
        for (Eigen::Index k = 0; k < m; ++k) {
            if (sxx(k) <= 1e-20 * std::max(1.0, x.col(k).squaredNorm())) {
                const std::string name = static_cast<std::size_t>(k) < data.predictor_names.size()
                                             ? data.predictor_names[k]
                                             : "predictor " + std::to_string(k + 1);
                throw SingularDesignError("association: " + name + " is collinear with the confounders/intercept");
            }
        }
        const Eigen::MatrixXd cross = xr.transpose() * yr_;  // m x F

        // |t| below which a score is certainly under the floor
        double t_floor = 0.0;
        if (opts.floor) {
            switch (opts.kind) {
                case ScoreKind::neg_log_p: {
                    const double p_floor = std::pow(opts.log_base, -*opts.floor);
                    t_floor = p_floor >= 1.0 ? 0.0 : critical_t(p_floor, df_) * (1.0 - 1e-9);
                    break;
                }
                case ScoreKind::abs_t: t_floor = std::max(0.0, *opts.floor); break;
                case ScoreKind::partial_corr: t_floor = 0.0; break;
            }
        }

        AssociationMatrix out;
        out.kind = opts.kind;
        out.n_regions = data.n_regions;
        out.log_base = opts.log_base;
        out.predictor_names = data.predictor_names;
        out.outcome_names = data.outcome_names;
        out.scores.resize(m, f);

        const double ln_base = std::log(opts.log_base);
        const double df = df_;
        parallel_for(static_cast<std::size_t>(f), opts.workers, [&](std::size_t col) {
            const auto e = static_cast<Eigen::Index>(col);
            for (Eigen::Index k = 0; k < m; ++k) {
                const double c = cross(k, e);
                const double rss = std::max(0.0, syy_(e) - c * c / sxx(k));
                const double denom = std::sqrt(sxx(k) * rss / df);
                const double t =
                    denom > 0.0 ? c / denom : (c == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), c));
                if (std::abs(t) < t_floor) {
                    out.scores(k, e) = 0.0;
                    continue;
                }
                double score = 0.0;
                switch (opts.kind) {
                    case ScoreKind::neg_log_p: score = std::min(kMaxScore, neg_ln_two_sided_p(t, df) / ln_base); break;
                    case ScoreKind::abs_t: score = std::min(kMaxScore, std::abs(t)); break;
                    case ScoreKind::partial_corr: score = std::isinf(t) ? std::copysign(1.0, t) : t / std::sqrt(t * t + df); break;
                }
                if (score == 0.0) score = 0.0;  // normalise -0
                if (opts.floor && score < *opts.floor) score = 0.0;
                out.scores(k, e) = score;
            }
        });
        return out;
    }

private:
    const StudyData* data_;
    Eigen::MatrixXd q_;
    Eigen::MatrixXd yr_;
    Eigen::VectorXd syy_;
    double df_ = 0.0;
};

/// Runs every (k, ij) regression; a_(ij),k comes from the t statistic of x_k
/// in y_ij ~ 1 + x_k + eta.
inline AssociationMatrix build_association_matrix(const StudyData& data, const AssociationOptions& opts = {}) {
    return AssociationScanner(data).scan(data.x, opts);
}

inline AssociationMatrix build_association_matrix(const StudyData& data, ScoreKind kind) {
    AssociationOptions opts;
    opts.kind = kind;
    return build_association_matrix(data, opts);
}

/// Hard-thresholding: entries below epsilon become 0, the rest are kept.
inline AssociationMatrix threshold_scores(AssociationMatrix a, double epsilon) {
    if (!(epsilon > 0.0)) throw DomainError("threshold_scores: epsilon must be positive");
    a.scores = (a.scores.array() < epsilon).select(0.0, a.scores);
    return a;
}

/// Default threshold: scores for p < 0.001 in the given log base.
inline double default_threshold(double log_base = std::numbers::e) { return neg_log_score(1e-3, log_base); }

}  // namespace moat
