#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "moat/simulation.hpp"
#include "oracles.hpp"

using namespace moat;

namespace {

PlantedDesign small_design(CovarianceModel model, double rho0, double rho) {
    PlantedDesign d;
    d.m = 6;
    d.n = 4;
    d.rho0 = rho0;
    d.subjects = 100000;
    d.blocks = {{2, 3, rho}};
    d.model = model;
    return d;
}

Eigen::MatrixXd sample_correlation(const StudyData& s) {
    Eigen::MatrixXd all(s.x.rows(), s.x.cols() + s.y.cols());
    all << s.x, s.y;
    const Eigen::MatrixXd c = all.rowwise() - all.colwise().mean();
    Eigen::MatrixXd cov = c.transpose() * c / (all.rows() - 1.0);
    const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt().cwiseInverse();
    return sd.asDiagonal() * cov * sd.asDiagonal();
}

}  // namespace

TEST(Covariance, ZeroCorrelationIsIdentity) {
    for (auto model : {CovarianceModel::factor, CovarianceModel::marginal_identity}) {
        const auto c = build_covariance(small_design(model, 0.0, 0.0));
        EXPECT_TRUE(c.sigma.isApprox(Eigen::MatrixXd::Identity(12, 12)));
        EXPECT_TRUE(c.mean.isZero());
    }
}

TEST(Covariance, StandardDesignSizes) {
    const auto d = standard_design(0.15, 0.55, 0.60, 200);
    EXPECT_EQ(d.f_count(), 4950);
    EXPECT_EQ(d.f_nodes(0).size(), 435U);
    EXPECT_EQ(d.f_nodes(1).size(), 190U);
    EXPECT_EQ(d.s_nodes(0).size(), 40U);
    EXPECT_EQ(d.s_nodes(1).size(), 60U);
    EXPECT_NO_THROW(d.validate());
}

TEST(Covariance, FactorModelStructureAndPsd) {
    const auto d = reduced_design(0.15, 0.55, 0.60, 200);
    const auto c = build_covariance(d);
    EXPECT_DOUBLE_EQ(c.sigma(0, 100 + d.f_nodes(0)[0]), 0.55);
    EXPECT_DOUBLE_EQ(c.sigma(8, 100 + d.f_nodes(1)[0]), 0.60);
    EXPECT_DOUBLE_EQ(c.sigma(50, 100 + 700), 0.15);
    EXPECT_DOUBLE_EQ(c.sigma(3, 3), 1.0);
    const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c.sigma, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    EXPECT_GE(min_eig, -1e-10);
    EXPECT_NEAR(min_eig, c.min_eigenvalue, 1e-8);
}

TEST(Covariance, MarginalIdentityRepairAndInfeasibility) {
    auto d = small_design(CovarianceModel::marginal_identity, 0.0, 0.3);
    const auto c = build_covariance(d);
    EXPECT_NEAR(c.sigma(0, 6), 0.3, 1e-12);  // first block cell (predictor 0, edge 0)
    EXPECT_DOUBLE_EQ(c.sigma(0, 1), 0.0);    // identity within predictors
    EXPECT_GE(c.min_eigenvalue, 0.0);
    for (int i = 0; i < 12; ++i) EXPECT_NEAR(c.sigma(i, i), 1.0, 1e-12);

    // a dense rho0 cross block is far from PSD and needs a large repair
    PlantedDesign big;
    big.m = 100;
    big.n = 20;
    big.rho0 = 0.3;
    big.blocks = {{10, 6, 0.5}};
    big.model = CovarianceModel::marginal_identity;
    try {
        build_covariance(big);
        FAIL() << "expected InfeasibleDesignError";
    } catch (const InfeasibleDesignError& e) {
        EXPECT_NE(std::string(e.what()).find("moves a planted cross-correlation"), std::string::npos);
    }
}

TEST(Generate, LargeSampleMatchesSigma) {
    for (auto model : {CovarianceModel::factor, CovarianceModel::marginal_identity}) {
        // a 2 x 3 block of 0.5 is not PSD without a common factor, so the identity model gets 0.3
        const bool factor = model == CovarianceModel::factor;
        const double rho = factor ? 0.5 : 0.3;
        const auto d = small_design(model, factor ? 0.1 : 0.0, rho);
        const auto c = build_covariance(d);
        const auto s = generate(d, 99);
        EXPECT_EQ(s.x.rows(), 100000);
        EXPECT_EQ(s.eta.cols(), 0);
        const Eigen::MatrixXd r = sample_correlation(s);
        EXPECT_LT((r - c.sigma).cwiseAbs().maxCoeff(), 0.02) << to_string(model);
        // planted cross-correlation
        EXPECT_NEAR(r(0, 6), rho, 0.03);
    }
}

TEST(Generate, SeedDeterminism) {
    const auto d = reduced_design(0.15, 0.55, 0.6, 50);
    const auto a = generate(d, 1), b = generate(d, 1), c = generate(d, 2);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.y, b.y);
    EXPECT_NE(a.x, c.x);
}

TEST(Generate, PlantedScoresDominateBackground) {
    const auto d = standard_design(0.15, 0.55, 0.60, 200);
    const auto data = generate(d, 12);
    const auto a = build_association_matrix(data, ScoreKind::neg_log_p);
    const auto sb = d.predictor_block();
    const auto fb = d.edge_block();
    std::vector<double> planted, background;
    std::mt19937_64 rng(1);
    std::bernoulli_distribution keep(0.05);  // subsample the 2.4M background cells
    for (int e = 0; e < d.f_count(); ++e)
        for (int k = 0; k < d.m; ++k) {
            if (sb[k] >= 0 && sb[k] == fb[e])
                planted.push_back(a.scores(k, e));
            else if (keep(rng))
                background.push_back(a.scores(k, e));
        }
    // one-sided p < 0.01
    EXPECT_GT(oracle::mann_whitney_z(planted, background), 2.326);
}

TEST(Design, Validation) {
    PlantedDesign d = reduced_design(0.15, 0.55, 0.6, 200);
    d.blocks[0].rho = 0.1;
    EXPECT_THROW(d.validate(), ConfigError);
    d = reduced_design(0.15, 0.55, 0.6, 200);
    d.blocks.push_back({90, 2, 0.5});
    EXPECT_THROW(d.validate(), ConfigError);
    d = reduced_design(-0.1, 0.55, 0.6, 200);
    EXPECT_THROW(d.validate(), InfeasibleDesignError);
    d.model = CovarianceModel::marginal_identity;
    EXPECT_NO_THROW(d.validate());
    EXPECT_THROW(covariance_model_from_string("cholesky"), ConfigError);
}

TEST(Recovery, PerfectAndEmpty) {
    const auto d = standard_design(0.15, 0.55, 0.6, 200);
    std::vector<BlockCall> perfect;
    for (std::size_t c = 0; c < 2; ++c) perfect.push_back({d.s_nodes(c), d.f_nodes(c), true});
    for (double v : score_recovery(perfect, d).as_array()) EXPECT_DOUBLE_EQ(v, 1.0);
    const auto none = score_recovery(std::vector<BlockCall>{}, d);
    EXPECT_EQ(none.tpr_si, 0.0);
    EXPECT_EQ(none.tpr_fc, 0.0);
    EXPECT_EQ(none.tpr_edge, 0.0);
    EXPECT_EQ(none.tnr_si, 1.0);
    EXPECT_EQ(none.tnr_fc, 1.0);
    EXPECT_EQ(none.tnr_edge, 1.0);
    // non-significant calls do not count
    auto flagged = perfect;
    for (auto& c : flagged) c.significant = false;
    EXPECT_EQ(score_recovery(flagged, d).tpr_si, 0.0);
}

TEST(Recovery, SpuriousPredictorsHandCount) {
    const auto d = standard_design(0.15, 0.55, 0.6, 200);
    // 100 planted SIs, 400 background; report 10 background SIs with block 1
    std::vector<BlockCall> calls = {{d.s_nodes(0), d.f_nodes(0), true}, {d.s_nodes(1), d.f_nodes(1), true}};
    for (int k = 200; k < 210; ++k) calls[0].s_nodes.push_back(k);
    const auto r = score_recovery(calls, d);
    EXPECT_DOUBLE_EQ(r.tnr_si, 390.0 / 400.0);
    EXPECT_DOUBLE_EQ(r.tpr_si, 1.0);
    const double cells = 500.0 * 4950.0 - (40 * 435 + 60 * 190);
    EXPECT_DOUBLE_EQ(r.tnr_edge, (cells - 10 * 435) / cells);
}

TEST(Recovery, OrderInvariantAndRangeChecked) {
    const auto d = reduced_design(0.15, 0.55, 0.6, 200);
    std::vector<BlockCall> calls = {{{0, 1, 50}, {3, 4, 600}, true}, {{8, 9}, d.f_nodes(1), true}, {{70}, {5}, false}};
    auto reversed = calls;
    std::reverse(reversed.begin(), reversed.end());
    EXPECT_EQ(score_recovery(calls, d).as_array(), score_recovery(reversed, d).as_array());
    calls[0].s_nodes.push_back(100);
    EXPECT_THROW(score_recovery(calls, d), DataError);
}

TEST(Recovery, MembershipError) {
    const auto d = reduced_design(0.15, 0.55, 0.6, 200);
    Subnetwork s;
    s.s_nodes = d.s_nodes(0);
    s.f_nodes = d.f_nodes(0);
    EXPECT_EQ(membership_error({s}, d), std::sqrt(12.0 * 28.0));  // block 2 missed entirely
    Subnetwork t;
    t.s_nodes = d.s_nodes(1);
    t.f_nodes = d.f_nodes(1);
    EXPECT_EQ(membership_error({s, t}, d), 0.0);
    t.s_nodes.push_back(99);
    EXPECT_DOUBLE_EQ(membership_error({s, t}, d), std::sqrt(28.0));
}

TEST(Benchmark, SingleReplicateHasZeroSd) {
    BenchmarkSettings s;
    s.design = reduced_design(0.15, 0.55, 0.6, 200);
    s.replicates = 1;
    const auto rows = run_benchmark({{0.15, 0.55, 0.60, 200}}, s);
    ASSERT_EQ(rows.size(), 1U);
    for (double v : rows[0].sd.as_array()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(rows[0].raw.size(), 1U);
    EXPECT_TRUE(s.analysis.bonferroni);
    s.replicates = 0;
    EXPECT_THROW(run_benchmark({{0.15, 0.55, 0.60, 200}}, s), ConfigError);
}

TEST(Benchmark, DefaultConfigs) {
    const auto c = default_benchmark_configs();
    ASSERT_EQ(c.size(), 3U);
    EXPECT_EQ(c[0].subjects, 200);
    EXPECT_EQ(c[1].rho2, 0.45);
    EXPECT_EQ(c[2].rho1, 0.70);
    EXPECT_EQ(weak_signal_config().rho1, 0.40);
}

TEST(Benchmark, LargerSampleDoesNotLowerEdgeTpr) {
    // 50-replicate trend check at the reduced scale
    BenchmarkSettings s;
    s.design = reduced_design(0.15, 0.55, 0.6, 200);
    s.replicates = 50;
    s.workers = default_workers();
    const auto rows = run_benchmark({{0.15, 0.55, 0.60, 200}, {0.15, 0.55, 0.60, 400}}, s);
    EXPECT_GE(rows[1].mean.tpr_edge + 1e-12, rows[0].mean.tpr_edge);
}
