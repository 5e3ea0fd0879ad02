#include <gtest/gtest.h>

#include <random>

#include "moat/extraction.hpp"
#include "moat/simulation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace moat;

namespace {

int eid(int i, int j, int n) { return static_cast<int>(edge_id(i, j, n)); }

/// Planted all-ones block on predictors `s` and the clique of regions `v`.
Eigen::MatrixXd planted(int m, int n, const std::vector<int>& s, const std::vector<int>& v, double value = 1.0) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, pair_count(n));
    for (std::size_t x = 0; x < v.size(); ++x)
        for (std::size_t y = x + 1; y < v.size(); ++y)
            for (int k : s) a(k, eid(v[x], v[y], n)) = value;
    return a;
}

std::vector<int> clique_edges(const std::vector<int>& v, int n) {
    std::vector<int> out;
    for (std::size_t x = 0; x < v.size(); ++x)
        for (std::size_t y = x + 1; y < v.size(); ++y) out.push_back(eid(v[x], v[y], n));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST(Objective, HandEvaluation) {
    // 2 x 3 block of ones over the triangle {0,1,2}, lambda1 = lambda2 = 2
    const int n = 4;
    const auto a = planted(2, n, {0, 1}, {0, 1, 2});
    Subnetwork s;
    s.s_nodes = {0, 1};
    s.f_nodes = clique_edges({0, 1, 2}, n);
    s.v_nodes = {0, 1, 2};
    const double expect = 6.0 / (2.0 * 3.0) + 3.0 / 9.0;
    EXPECT_NEAR(objective(a, {s}, 2.0, 2.0), expect, 1e-10 * expect);
    EXPECT_NEAR(objective(a, {s}, 2.0, 2.0), 1.3333333333333333, 1e-10);
    EXPECT_NEAR(objective(a, {s}, 2.0, 2.0), oracle::block_objective(a, {0, 1}, {0, 1, 2}, n, 2.0, 2.0), 1e-12);
}

TEST(Objective, EmptyAndLambdaTwo) {
    const Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 6);
    EXPECT_EQ(objective(a, {}, 1.5, 1.5), 0.0);
    // lambda1 = 2: the first term is the mean weight of the block
    std::mt19937_64 rng(1);
    Eigen::MatrixXd w = Eigen::MatrixXd::Random(3, 6).cwiseAbs();
    Subnetwork s;
    s.s_nodes = {0, 2};
    s.v_nodes = {0, 1, 3};
    s.f_nodes = clique_edges(s.v_nodes, 4);
    double mean = 0.0;
    for (int k : s.s_nodes)
        for (int f : s.f_nodes) mean += w(k, f);
    mean /= 6.0;
    EXPECT_NEAR(objective(w, {s}, 2.0, 1.5) - 3.0 / std::pow(3.0, 1.5), mean, 1e-12);
    Subnetwork empty_s = s;
    empty_s.s_nodes.clear();
    EXPECT_THROW(objective(w, {empty_s}, 1.5, 1.5), DomainError);
}

TEST(GreedyPeel, PlantedTriangleBlock) {
    // 6 predictors, n = 5 (10 FC nodes); block = predictors {1,3,4} x triangle {0,2,4}
    const int n = 5;
    const std::vector<int> s = {1, 3, 4}, v = {0, 2, 4};
    const auto a = planted(6, n, s, v);
    const auto g = ConnectomeGraph::complete(n);
    const auto r = greedy_peel(a, g, 1.25, 1.5, 0.5);
    EXPECT_EQ(r.subnetwork.s_nodes, s);
    EXPECT_EQ(r.subnetwork.v_nodes, v);
    EXPECT_EQ(r.subnetwork.f_nodes, clique_edges(v, n));
    const auto best = oracle::exhaustive_block(a, n, 1.25, 1.5);
    EXPECT_EQ(best.s_nodes, s);
    EXPECT_EQ(best.v_nodes, v);
    EXPECT_DOUBLE_EQ(r.subnetwork.gamma1, 1.0);
    EXPECT_DOUBLE_EQ(r.subnetwork.gamma2, 1.0);
}

TEST(GreedyPeel, UniformWeightsReturnWholeGraph) {
    const int n = 5;
    const Eigen::MatrixXd a = Eigen::MatrixXd::Ones(5, pair_count(n));
    for (auto [l1, l2] : std::vector<LambdaPair>{{1.25, 1.5}, {1.05, 1.95}, {2.0, 2.0}}) {
        const auto r = greedy_peel(a, ConnectomeGraph::complete(n), l1, l2);
        EXPECT_EQ(r.subnetwork.s_size(), 5U);
        EXPECT_EQ(r.subnetwork.f_size(), 10U);
        const auto best = oracle::exhaustive_block(a, n, l1, l2);
        EXPECT_NEAR(r.subnetwork.objective_value, best.value, 1e-10);
    }
}

TEST(GreedyPeel, AllZeroIsEmptyResult) {
    EXPECT_THROW(greedy_peel(Eigen::MatrixXd::Zero(4, 6), ConnectomeGraph::complete(4), 1.25, 1.5), EmptyResultError);
}

TEST(GreedyPeel, StoredObjectiveIsCertified) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 8, m = 12;
        Eigen::MatrixXd a(m, pair_count(n));
        for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = u(rng) < 0.3 ? -std::log(u(rng)) : 0.0;
        a += planted(m, n, {0, 1, 2, 3}, {2, 3, 4, 5}, 3.0);
        const auto r = greedy_peel(a, ConnectomeGraph::complete(n), 1.35, 1.45, 1.0);
        const double fresh = objective(a, {r.subnetwork}, 1.35, 1.45);
        EXPECT_NEAR(r.subnetwork.objective_value, fresh, 1e-10 * std::abs(fresh));
        EXPECT_NEAR(r.trace.objective[r.trace.best_iteration], fresh, 1e-10 * std::abs(fresh));
        for (double v : r.trace.objective) EXPECT_LE(v, fresh * (1 + 1e-12));
    }
}

TEST(GreedyPeel, EveryRemovalHadMinimalDegree) {
    // Replay the trace with degrees recomputed from scratch.
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 9, m = 15;
        const int f = static_cast<int>(pair_count(n));
        Eigen::MatrixXd a(m, f);
        for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = u(rng) < 0.4 ? u(rng) * 5 : 0.0;
        const auto r = greedy_peel(a, ConnectomeGraph::complete(n), 1.25, 1.5);
        std::vector<int> alive_s(m, 1), alive_f(f, 1);
        auto deg_s = [&](int k) {
            double d = 0;
            for (int e = 0; e < f; ++e) d += alive_f[e] ? a(k, e) : 0.0;
            return d;
        };
        auto deg_f = [&](int e) {
            double d = 0;
            for (int k = 0; k < m; ++k) d += alive_s[k] ? a(k, e) : 0.0;
            return d;
        };
        for (const auto& ev : r.trace.events) {
            if (ev.step == PeelStep::predictor) {
                const double mine = deg_s(ev.node);
                EXPECT_NEAR(mine, ev.degree, 1e-9);
                for (int k = 0; k < m; ++k)
                    if (alive_s[k]) EXPECT_LE(mine, deg_s(k) + 1e-9);
                alive_s[ev.node] = 0;
            } else if (ev.step == PeelStep::edge) {
                const double mine = deg_f(ev.node);
                EXPECT_NEAR(mine, ev.degree, 1e-9);
                for (int e = 0; e < f; ++e)
                    if (alive_f[e]) EXPECT_LE(mine, deg_f(e) + 1e-9);
                alive_f[ev.node] = 0;
            } else {
                alive_f[ev.node] = 0;
            }
        }
    }
}

TEST(GreedyPeel, WithinFactorOfExhaustiveOptimum) {
    std::mt19937_64 rng(314);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 1.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 5, m = 5;
        Eigen::MatrixXd a(m, pair_count(n));
        for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = u(rng) < 0.5 ? -std::log(u(rng)) : 0.0;
        if (a.isZero()) continue;
        const auto r = greedy_peel(a, ConnectomeGraph::complete(n), 1.25, 1.5);
        const auto best = oracle::exhaustive_block(a, n, 1.25, 1.5);
        worst = std::min(worst, r.subnetwork.objective_value / best.value);
        EXPECT_LE(r.subnetwork.objective_value, best.value + 1e-9);
    }
    EXPECT_GE(worst, 0.8);
}

TEST(ExtractAll, MaskingDisjointnessAndCap) {
    const int n = 8, m = 10;
    Eigen::MatrixXd a = planted(m, n, {0, 1, 2}, {0, 1, 2, 3}, 9.0) + planted(m, n, {5, 6, 7, 8}, {4, 5, 6}, 8.0);
    ExtractionConfig cfg;
    cfg.binarize_cutoff = 1.0;
    const auto r = extract_all(a, ConnectomeGraph::complete(n), cfg);
    ASSERT_GE(r.subnetworks.size(), 2U);
    EXPECT_EQ(r.subnetworks[0].s_nodes, (std::vector<int>{0, 1, 2}));
    EXPECT_EQ(r.subnetworks[0].v_nodes, (std::vector<int>{0, 1, 2, 3}));
    EXPECT_EQ(r.subnetworks[1].s_nodes, (std::vector<int>{5, 6, 7, 8}));
    EXPECT_EQ(r.subnetworks[1].v_nodes, (std::vector<int>{4, 5, 6}));
    for (std::size_t i = 0; i < r.subnetworks.size(); ++i)
        for (std::size_t j = i + 1; j < r.subnetworks.size(); ++j)
            for (int k : r.subnetworks[i].s_nodes)
                for (int f : r.subnetworks[i].f_nodes) {
                    const auto& o = r.subnetworks[j];
                    EXPECT_FALSE(std::binary_search(o.s_nodes.begin(), o.s_nodes.end(), k) &&
                                 std::binary_search(o.f_nodes.begin(), o.f_nodes.end(), f));
                }
    cfg.max_subnetworks = 1;
    EXPECT_EQ(extract_all(a, ConnectomeGraph::complete(n), cfg).subnetworks.size(), 1U);
    EXPECT_EQ(r.mask_value, 0.0);
}

TEST(ExtractAll, PlantedReducedDesignRecoversBothBlocks) {
    const auto design = reduced_design(0.15, 0.55, 0.60, 200);
    const auto data = generate(design, 17);
    auto scores = build_association_matrix(data, ScoreKind::neg_log_p);
    const double eps = neg_log_score(0.05 / static_cast<double>(scores.scores.size()));
    scores = threshold_scores(scores, eps);
    ExtractionConfig cfg;
    cfg.binarize_cutoff = eps;
    const auto r = extract_all(scores.scores, ConnectomeGraph::complete(design.n), cfg);
    ASSERT_GE(r.subnetworks.size(), 2U);
    // the two largest extractions are the planted blocks, in some order
    std::vector<const Subnetwork*> big;
    for (const auto& s : r.subnetworks)
        if (s.s_size() > 2) big.push_back(&s);
    ASSERT_EQ(big.size(), 2U);
    for (std::size_t c = 0; c < 2; ++c) {
        const auto& truth_s = design.s_nodes(c);
        const auto& truth_f = design.f_nodes(c);
        const bool match = std::any_of(big.begin(), big.end(), [&](const Subnetwork* s) {
            return s->s_nodes == truth_s && s->f_nodes == truth_f;
        });
        EXPECT_TRUE(match) << "block " << c;
    }
}

TEST(ExtractAll, PureNoiseRarelyExtracts) {
    // iid noise scores: the whole graph is the best iterate and fails gamma1 > p1
    std::mt19937_64 rng(606);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int empty = 0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
        const int n = 12, m = 30;
        Eigen::MatrixXd a(m, pair_count(n));
        for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = -std::log(u(rng));
        ExtractionConfig cfg;
        cfg.binarize_cutoff = default_threshold();
        if (extract_all(a, ConnectomeGraph::complete(n), cfg).subnetworks.empty()) ++empty;
    }
    EXPECT_GE(empty, static_cast<int>(0.95 * reps));
}

TEST(SelectLambdas, SinglePointGridAndFallback) {
    const int n = 5;
    const auto a = planted(4, n, {0, 1}, {0, 1, 2}, 10.0);
    ExtractionConfig cfg;
    cfg.binarize_cutoff = 1.0;
    cfg.lambda_grid = {{1.55, 1.35}};
    const auto sel = select_lambdas(a, ConnectomeGraph::complete(n), cfg);
    EXPECT_EQ(sel.lambdas, (LambdaPair{1.55, 1.35}));
    EXPECT_FALSE(sel.fallback);

    // nothing above the cutoff: every point is degenerate, configured lambdas come back
    cfg.lambda_grid = default_lambda_grid();
    cfg.binarize_cutoff = 100.0;
    const auto none = select_lambdas(a, ConnectomeGraph::complete(n), cfg);
    EXPECT_TRUE(none.fallback);
    EXPECT_EQ(none.lambdas, (LambdaPair{cfg.lambda1, cfg.lambda2}));
    cfg.lambda_grid.clear();
    EXPECT_THROW(select_lambdas(a, ConnectomeGraph::complete(n), cfg), ConfigError);
}

TEST(SelectLambdas, SelectedPairRecoversPlantedBlock) {
    const int n = 6, m = 6;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::vector<int> s = {1, 2, 4}, v = {0, 2, 3, 5};
    Eigen::MatrixXd a = planted(m, n, s, v, 12.0);
    // sparse background at a weaker level
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (a.data()[i] == 0.0 && u(rng) < 0.08) a.data()[i] = 8.0;
    ExtractionConfig cfg;
    cfg.binarize_cutoff = 7.0;
    const auto g = ConnectomeGraph::complete(n);
    const auto sel = select_lambdas(a, g, cfg);
    ASSERT_FALSE(sel.fallback);
    std::tie(cfg.lambda1, cfg.lambda2) = sel.lambdas;
    const auto r = extract_all(a, g, cfg);
    ASSERT_FALSE(r.subnetworks.empty());
    EXPECT_EQ(r.subnetworks[0].s_nodes, s);
    EXPECT_EQ(r.subnetworks[0].v_nodes, v);
    const auto best = oracle::exhaustive_block(a, n, cfg.lambda1, cfg.lambda2);
    EXPECT_EQ(best.s_nodes, s);
    EXPECT_EQ(best.v_nodes, v);
}

TEST(ExtractionConfig, DefaultsAndValidation) {
    ExtractionConfig cfg;
    EXPECT_EQ(cfg.lambda1, 1.25);
    EXPECT_EQ(cfg.lambda2, 1.5);
    EXPECT_EQ(cfg.lambda_grid.size(), 100U);
    EXPECT_NEAR(cfg.lambda_grid.front().first, 1.05, 1e-12);
    EXPECT_NEAR(cfg.lambda_grid.back().second, 1.95, 1e-12);
    cfg.lambda1 = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.lambda1 = 1.25;
    cfg.max_subnetworks = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.max_subnetworks = 5;
    cfg.lambda_grid = {{1.5, 2.5}};
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(PartitionDivergence, SymmetricKl) {
    EXPECT_NEAR(symmetric_bernoulli_kl(0.9, 0.1), 0.8 * 2.0 * std::log(9.0), 1e-12);
    EXPECT_EQ(symmetric_bernoulli_kl(0.3, 0.3), 0.0);
}
