#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "moat/association.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace moat;

TEST(FitSingle, PerfectLinearFit) {
    Eigen::VectorXd x(10), y(10);
    for (int i = 0; i < 10; ++i) {
        x(i) = i * 0.7 - 2.0;
        y(i) = 2.0 * x(i);
    }
    const auto fit = fit_single(y, x, Eigen::MatrixXd(10, 0));
    EXPECT_NEAR(fit.beta, 2.0, 1e-12);
    EXPECT_LT(fit.p_value, 1e-12);
    EXPECT_EQ(fit.df, 8);
}

TEST(FitSingle, ToyDatasetMatchesNormalEquations) {
    Eigen::VectorXd x(6), y(6);
    Eigen::MatrixXd eta(6, 1);
    x << 1.2, -0.4, 2.2, 0.9, -1.5, 0.3;
    y << 3.1, 0.2, 4.8, 2.0, -2.2, 1.7;
    eta << 0.5, 1.5, -0.5, 2.0, 0.0, -1.0;
    const auto fit = fit_single(y, x, eta);
    const auto ref = oracle::normal_equations(y, x, eta);
    EXPECT_NEAR(fit.beta, ref.beta, 1e-10 * std::abs(ref.beta));
    EXPECT_NEAR(fit.t_stat, ref.t, 1e-10 * std::abs(ref.t));
    EXPECT_NEAR(fit.p_value, ref.p, 1e-10);
    EXPECT_EQ(fit.df, 3);
}

TEST(FitSingle, NullPValuesAreUniform) {
    std::mt19937_64 rng(2024);
    std::vector<double> ps;
    for (int r = 0; r < 1000; ++r) {
        const Eigen::MatrixXd xy = testutil::normal_matrix(1000, 2, rng);
        ps.push_back(fit_single(xy.col(1), xy.col(0), Eigen::MatrixXd(1000, 0)).p_value);
    }
    // KS critical value at 0.01 for n = 1000
    EXPECT_LT(oracle::ks_uniform(ps), 1.628 / std::sqrt(1000.0));
}

TEST(FitSingle, Errors) {
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd v = testutil::normal_matrix(8, 3, rng);
    Eigen::MatrixXd eta(8, 2);
    eta.col(0) = v.col(2);
    eta.col(1) = 2.0 * v.col(2);  // collinear confounder
    try {
        fit_single(v.col(0), v.col(1), eta);
        FAIL() << "expected SingularDesignError";
    } catch (const SingularDesignError& e) {
        EXPECT_NE(std::string(e.what()).find("confounder"), std::string::npos) << e.what();
    }
    EXPECT_THROW(fit_single(v.col(0).head(3), v.col(1).head(3), v.block(0, 2, 3, 1)), InsufficientDataError);
}

TEST(Scores, NegLogExamples) {
    EXPECT_NEAR(neg_log_score(0.05), 2.995732273553991, 1e-12);
    EXPECT_EQ(neg_log_score(1.0), 0.0);
    EXPECT_NEAR(default_threshold(), 6.907755278982137, 1e-12);
    EXPECT_NEAR(default_threshold(10.0), 3.0, 1e-12);
}

TEST(Threshold, Examples) {
    AssociationMatrix a;
    a.scores.resize(1, 3);
    a.scores << 1, 5, 9;
    const auto t = threshold_scores(a, 4.0);
    EXPECT_EQ(t.scores(0, 0), 0.0);
    EXPECT_EQ(t.scores(0, 1), 5.0);
    EXPECT_EQ(t.scores(0, 2), 9.0);
    EXPECT_TRUE(threshold_scores(a, 10.0).scores.isZero());
    EXPECT_THROW(threshold_scores(a, 0.0), DomainError);
    EXPECT_THROW(threshold_scores(a, -1.0), DomainError);
}

TEST(AssociationMatrix, ToyMatchesLoopOracle) {
    const auto data = testutil::random_study(25, 3, 4, 2, 77);
    for (auto kind : {ScoreKind::neg_log_p, ScoreKind::abs_t, ScoreKind::partial_corr}) {
        const auto a = build_association_matrix(data, kind);
        ASSERT_EQ(a.scores.rows(), 3);
        ASSERT_EQ(a.scores.cols(), 6);
        for (int k = 0; k < 3; ++k)
            for (int e = 0; e < 6; ++e) {
                const auto ref = oracle::normal_equations(data.y.col(e), data.x.col(k), data.eta);
                const auto fit = fit_single(data.y.col(e), data.x.col(k), data.eta);
                const double df = 25 - 2 - 2;
                double expect = 0.0;
                switch (kind) {
                    case ScoreKind::neg_log_p: expect = -std::log(ref.p); break;
                    case ScoreKind::abs_t: expect = std::abs(ref.t); break;
                    case ScoreKind::partial_corr: expect = ref.t / std::sqrt(ref.t * ref.t + df); break;
                }
                EXPECT_NEAR(a.scores(k, e), expect, 1e-9 * std::max(1.0, std::abs(expect)));
                if (kind == ScoreKind::neg_log_p) EXPECT_NEAR(a.scores(k, e), -std::log(fit.p_value), 1e-9);
            }
    }
}

TEST(AssociationMatrix, ScoreRanges) {
    const auto data = testutil::random_study(40, 6, 5, 1, 5);
    EXPECT_GE(build_association_matrix(data, ScoreKind::neg_log_p).scores.minCoeff(), 0.0);
    const auto r = build_association_matrix(data, ScoreKind::partial_corr).scores;
    EXPECT_GE(r.minCoeff(), -1.0);
    EXPECT_LE(r.maxCoeff(), 1.0);
}

TEST(AssociationMatrix, InvariantToSubjectOrder) {
    auto data = testutil::random_study(60, 5, 6, 2, 8);
    const auto a = build_association_matrix(data, ScoreKind::neg_log_p);
    std::vector<int> perm(60);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
    StudyData shuffled = data;
    for (int i = 0; i < 60; ++i) {
        shuffled.x.row(i) = data.x.row(perm[i]);
        shuffled.y.row(i) = data.y.row(perm[i]);
        shuffled.eta.row(i) = data.eta.row(perm[i]);
    }
    const auto b = build_association_matrix(shuffled, ScoreKind::neg_log_p);
    EXPECT_LT((a.scores - b.scores).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(AssociationMatrix, CollinearConfounderIsReported) {
    auto data = testutil::random_study(30, 3, 4, 2, 10);
    data.eta.col(1) = (3.0 * data.eta.col(0)).array() - 1.0;
    data.confounder_names = {"age", "age_scaled"};
    try {
        build_association_matrix(data, ScoreKind::neg_log_p);
        FAIL() << "expected SingularDesignError";
    } catch (const SingularDesignError& e) {
        const std::string msg = e.what();
        EXPECT_TRUE(msg.find("age") != std::string::npos) << msg;
    }
}

TEST(AssociationMatrix, PredictorCollinearWithConfounder) {
    auto data = testutil::random_study(30, 3, 4, 1, 11);
    data.x.col(2) = data.eta.col(0) * 2.0 + Eigen::VectorXd::Constant(30, 1.0);
    EXPECT_THROW(build_association_matrix(data, ScoreKind::neg_log_p), SingularDesignError);
}

TEST(AssociationMatrix, PermutedPredictorsAreCalibrated) {
    std::mt19937_64 rng(99);
    const int d = 200, m = 50, n = 11;
    auto data = testutil::random_study(d, m, n, 1, 12);
    // shuffle X rows: no association by construction
    std::vector<int> perm(d);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd x = data.x;
    for (int i = 0; i < d; ++i) data.x.row(i) = x.row(perm[i]);
    const auto a = build_association_matrix(data, ScoreKind::neg_log_p);
    const double alpha = 0.05;
    const double cut = -std::log(alpha);
    const double pairs = static_cast<double>(a.scores.size());
    const double frac = (a.scores.array() > cut).cast<double>().sum() / pairs;
    EXPECT_NEAR(frac, alpha, 2.0 * std::sqrt(alpha * (1 - alpha) / pairs));
}

TEST(AssociationMatrix, FloorMatchesThreshold) {
    const auto data = testutil::random_study(50, 8, 7, 1, 13);
    AssociationOptions opts;
    const auto full = build_association_matrix(data, opts);
    opts.floor = 1.5;
    const auto floored = build_association_matrix(data, opts);
    EXPECT_EQ(floored.scores, threshold_scores(full, 1.5).scores);
}

TEST(AssociationMatrix, WorkerCountDoesNotChangeScores) {
    const auto data = testutil::random_study(50, 8, 9, 2, 14);
    AssociationOptions one, four;
    four.workers = 4;
    EXPECT_EQ(build_association_matrix(data, one).scores, build_association_matrix(data, four).scores);
}

TEST(StudyData, ValidationErrors) {
    auto data = testutil::random_study(20, 3, 4, 0, 15);
    data.y.conservativeResize(20, 5);
    EXPECT_THROW(data.validate(), DataError);
    auto d2 = testutil::random_study(20, 3, 4, 0, 15);
    d2.x(3, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(d2.validate(), DataError);
    auto d3 = testutil::random_study(3, 3, 4, 1, 15);
    EXPECT_THROW(build_association_matrix(d3, ScoreKind::neg_log_p), InsufficientDataError);
}
