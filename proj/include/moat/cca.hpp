#pragma once

// Canonical correlation analysis on the (S_c, F_c) columns of a study.
// Both sets are residualised on [1, eta]; correlations are the singular
// values of Sxx^-1/2 Sxy Syy^-1/2 with optional ridge on the diagonals.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "moat/association.hpp"
#include "moat/core_graph.hpp"
#include "moat/errors.hpp"

namespace moat {

struct CcaResult {
    Eigen::VectorXd correlations;  // descending, in [0, 1]
    Eigen::MatrixXd x_weights;     // |S_c| x k
    Eigen::MatrixXd y_weights;     // |F_c| x k
    int k = 0;
};

inline constexpr double kDefaultCcaRidge = 1e-6;

namespace detail {

/// Removes the column span of [1, eta] from m.
inline Eigen::MatrixXd residualize(const Eigen::MatrixXd& m, const Eigen::MatrixXd& eta) {
    const Eigen::Index d = m.rows();
    Eigen::MatrixXd base(d, eta.cols() + 1);
    base.col(0).setOnes();
    if (eta.cols() > 0) base.rightCols(eta.cols()) = eta;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(base);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, base.cols());
    return m - q * (q.transpose() * m);
}

/// (S + ridge * tr(S)/p * I)^-1/2 for symmetric S.
inline Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& s, double ridge, const char* which) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
    if (eig.info() != Eigen::Success) throw NumericError(std::string("cca: eigendecomposition of ") + which + " failed");
    const double shift = ridge * s.trace() / static_cast<double>(s.rows());
    Eigen::VectorXd vals = eig.eigenvalues().array() + shift;
    const double top = std::max(vals.maxCoeff(), 0.0);
    if (!(vals.minCoeff() > 1e-10 * top) || !(top > 0.0)) {
        throw SingularCovarianceError(std::string("cca: ") + which +
                                      " covariance is singular; use a ridge > 0 or a smaller subnetwork");
    }
    return eig.eigenvectors() * vals.cwiseInverse().cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

/// CCA of predictor block x (D x p) against outcome block y (D x q).
inline CcaResult cca(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const Eigen::MatrixXd& eta, int k,
                     double ridge = kDefaultCcaRidge) {
    const Eigen::Index d = x.rows();
    const Eigen::Index p = x.cols();
    const Eigen::Index q = y.cols();
    if (y.rows() != d || (eta.cols() > 0 && eta.rows() != d)) throw DataError("cca: row counts differ");
    if (p < 1 || q < 1) throw DomainError("cca: both sets need at least one column");
    if (k < 1 || k > std::min(p, q)) {
        throw DomainError("cca: k = " + std::to_string(k) + " must lie in [1, " + std::to_string(std::min(p, q)) + "]");
    }
    if (!(ridge >= 0.0)) throw DomainError("cca: ridge must be >= 0");
    if (ridge == 0.0 && d <= p + q + eta.cols()) {
        throw InsufficientDataError("cca: " + std::to_string(d) + " subjects cannot support " + std::to_string(p) + " + " +
                                    std::to_string(q) + " variables without a ridge");
    }
    if (d < 10) throw InsufficientDataError("cca: needs at least 10 subjects");

    const Eigen::MatrixXd xr = detail::residualize(x, eta);
    const Eigen::MatrixXd yr = detail::residualize(y, eta);
    const double scale = 1.0 / static_cast<double>(d - 1 - eta.cols());
    const Eigen::MatrixXd sxx = scale * xr.transpose() * xr;
    const Eigen::MatrixXd syy = scale * yr.transpose() * yr;
    const Eigen::MatrixXd sxy = scale * xr.transpose() * yr;

    const Eigen::MatrixXd wx = detail::inverse_sqrt(sxx, ridge, "predictor");
    const Eigen::MatrixXd wy = detail::inverse_sqrt(syy, ridge, "outcome");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(wx * sxy * wy, Eigen::ComputeThinU | Eigen::ComputeThinV);

    CcaResult out;
    out.k = k;
    out.correlations = svd.singularValues().head(k).cwiseMax(0.0).cwiseMin(1.0);
    out.x_weights = wx * svd.matrixU().leftCols(k);
    out.y_weights = wy * svd.matrixV().leftCols(k);
    return out;
}

inline CcaResult cca_on_subnetwork(const StudyData& data, const Subnetwork& sub, int k, double ridge = kDefaultCcaRidge) {
    data.validate();
    Eigen::MatrixXd x(data.subjects(), static_cast<Eigen::Index>(sub.s_size()));
    Eigen::MatrixXd y(data.subjects(), static_cast<Eigen::Index>(sub.f_size()));
    for (std::size_t c = 0; c < sub.s_size(); ++c) {
        if (sub.s_nodes[c] < 0 || sub.s_nodes[c] >= data.predictors()) throw DataError("cca: predictor index out of range");
        x.col(static_cast<Eigen::Index>(c)) = data.x.col(sub.s_nodes[c]);
    }
    for (std::size_t c = 0; c < sub.f_size(); ++c) {
        if (sub.f_nodes[c] < 0 || sub.f_nodes[c] >= data.outcomes()) throw DataError("cca: edge index out of range");
        y.col(static_cast<Eigen::Index>(c)) = data.y.col(sub.f_nodes[c]);
    }
    return cca(x, y, data.eta, k, ridge);
}

}  // namespace moat
