#pragma once

// Two-level graph structure: a bipartite predictor x FC-edge graph and the
// region-level connectome whose edges are the FC nodes.
//
// Region pairs (i, j), i < j, are numbered lexicographically. The public
// pair_to_flat / flat_to_pair functions use 1-based regions and indices, which
// is also what every file format uses. Everything else in the library works
// with 0-based region ids and 0-based edge ids.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "moat/errors.hpp"

namespace moat {

inline std::int64_t pair_count(std::int64_t n_regions) { return n_regions * (n_regions - 1) / 2; }

/// 0-based edge id of regions i < j (0-based).
inline std::int64_t edge_id(std::int64_t i, std::int64_t j, std::int64_t n) {
    return i * (2 * n - i - 1) / 2 + (j - i - 1);
}

/// Inverse of edge_id.
inline std::pair<int, int> edge_endpoints(std::int64_t id, std::int64_t n) {
    const double b = 2.0 * static_cast<double>(n) - 1.0;
    auto i = static_cast<std::int64_t>((b - std::sqrt(b * b - 8.0 * static_cast<double>(id))) / 2.0);
    i = std::clamp<std::int64_t>(i, 0, n - 2);
    // the floating estimate can be off by one near row boundaries
    while (i > 0 && edge_id(i, i + 1, n) > id) --i;
    while (i + 1 < n - 1 && edge_id(i + 1, i + 2, n) <= id) ++i;
    const std::int64_t j = id - edge_id(i, i + 1, n) + i + 1;
    return {static_cast<int>(i), static_cast<int>(j)};
}

/// 1-based lexicographic index of region pair (i, j), 1 <= i < j <= n.
inline std::int64_t pair_to_flat(std::int64_t i, std::int64_t j, std::int64_t n) {
    if (n < 2 || i < 1 || j <= i || j > n) {
        throw DomainError("pair_to_flat: need 1 <= i < j <= n, got (" + std::to_string(i) + ", " +
                          std::to_string(j) + ") with n = " + std::to_string(n));
    }
    return (i - 1) * (2 * n - i) / 2 + (j - i);
}

/// Inverse of pair_to_flat; returns 1-based regions.
inline std::pair<int, int> flat_to_pair(std::int64_t idx, std::int64_t n) {
    if (n < 2 || idx < 1 || idx > pair_count(n)) {
        throw DomainError("flat_to_pair: index " + std::to_string(idx) + " outside [1, " +
                          std::to_string(pair_count(n)) + "]");
    }
    auto [i, j] = edge_endpoints(idx - 1, n);
    return {i + 1, j + 1};
}

/// Number of regions n with n(n-1)/2 == n_edges, or -1 if there is none.
inline int regions_for_edge_count(std::int64_t n_edges) {
    if (n_edges < 1) return -1;
    const auto n = static_cast<std::int64_t>(std::llround((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(n_edges))) / 2.0));
    return pair_count(n) == n_edges ? static_cast<int>(n) : -1;
}

/// Binary incidence H over predictors x FC edges, stored as packed row bitsets
/// with cached row and column degrees.
class BipartiteGraph {
public:
    BipartiteGraph() = default;

    BipartiteGraph(int s_count, int n_regions)
        : s_count_(s_count),
          n_regions_(n_regions),
          f_count_(static_cast<int>(pair_count(n_regions))),
          words_per_row_((static_cast<std::size_t>(f_count_) + 63) / 64),
          bits_(static_cast<std::size_t>(s_count) * words_per_row_, 0),
          row_degree_(static_cast<std::size_t>(s_count), 0),
          col_degree_(static_cast<std::size_t>(f_count_), 0) {
        if (s_count < 1 || n_regions < 2) throw DomainError("BipartiteGraph: need |S| >= 1 and n >= 2");
    }

    /// H = I(a > cutoff) over an |S| x |F| score matrix.
    static BipartiteGraph from_scores(const Eigen::MatrixXd& scores, int n_regions, double cutoff) {
        if (scores.cols() != pair_count(n_regions)) {
            throw DataError("BipartiteGraph: " + std::to_string(scores.cols()) + " columns but n = " +
                            std::to_string(n_regions) + " regions implies " + std::to_string(pair_count(n_regions)));
        }
        BipartiteGraph g(static_cast<int>(scores.rows()), n_regions);
        for (Eigen::Index f = 0; f < scores.cols(); ++f)
            for (Eigen::Index k = 0; k < scores.rows(); ++k)
                if (scores(k, f) > cutoff) g.set(static_cast<int>(k), static_cast<int>(f));
        return g;
    }

    void set(int k, int f) {
        auto& word = bits_[static_cast<std::size_t>(k) * words_per_row_ + static_cast<std::size_t>(f) / 64];
        const std::uint64_t mask = std::uint64_t{1} << (f % 64);
        if (word & mask) return;
        word |= mask;
        ++row_degree_[k];
        ++col_degree_[f];
        ++edge_count_;
    }

    bool test(int k, int f) const {
        return (bits_[static_cast<std::size_t>(k) * words_per_row_ + static_cast<std::size_t>(f) / 64] >> (f % 64)) & 1U;
    }

    int s_count() const { return s_count_; }
    int f_count() const { return f_count_; }
    int n_regions() const { return n_regions_; }
    std::int64_t edge_count() const { return edge_count_; }
    int row_degree(int k) const { return row_degree_[k]; }
    int col_degree(int f) const { return col_degree_[f]; }

    /// p1 = |H| / (|S||F|)
    double density() const {
        return static_cast<double>(edge_count_) / (static_cast<double>(s_count_) * static_cast<double>(f_count_));
    }

    std::int64_t count_block(std::span<const int> s_nodes, std::span<const int> f_nodes) const {
        std::int64_t total = 0;
        for (int k : s_nodes)
            for (int f : f_nodes) total += test(k, f) ? 1 : 0;
        return total;
    }

private:
    int s_count_ = 0;
    int n_regions_ = 0;
    int f_count_ = 0;
    std::size_t words_per_row_ = 0;
    std::vector<std::uint64_t> bits_;
    std::vector<int> row_degree_;
    std::vector<int> col_degree_;
    std::int64_t edge_count_ = 0;
};

/// Binary region-level graph. `vertices` is the node set the graph lives on
/// (all n regions unless it was built as an induced clique); `active` flags
/// present edges over the full edge-id space of n regions.
class ConnectomeGraph {
public:
    ConnectomeGraph() = default;

    explicit ConnectomeGraph(int n_regions)
        : n_regions_(n_regions), active_(static_cast<std::size_t>(pair_count(n_regions)), 0), vertices_(n_regions) {
        if (n_regions < 2) throw DomainError("ConnectomeGraph: need at least 2 regions");
        std::iota(vertices_.begin(), vertices_.end(), 0);
    }

    static ConnectomeGraph complete(int n_regions) {
        ConnectomeGraph g(n_regions);
        std::fill(g.active_.begin(), g.active_.end(), std::uint8_t{1});
        g.edge_count_ = pair_count(n_regions);
        return g;
    }

    static ConnectomeGraph from_edges(int n_regions, std::span<const int> edge_ids) {
        ConnectomeGraph g(n_regions);
        for (int e : edge_ids) g.add_edge(e);
        return g;
    }

    void add_edge(int e) {
        if (e < 0 || e >= static_cast<int>(active_.size())) throw DomainError("ConnectomeGraph: edge id out of range");
        if (!active_[e]) {
            active_[e] = 1;
            ++edge_count_;
        }
    }

    bool has_edge(int e) const { return active_[e] != 0; }
    int n_regions() const { return n_regions_; }
    int v_count() const { return static_cast<int>(vertices_.size()); }
    const std::vector<int>& vertices() const { return vertices_; }
    std::int64_t edge_count() const { return edge_count_; }

    /// p2 = |F_active| / C(|V|, 2)
    double density() const {
        const auto pairs = pair_count(v_count());
        return pairs == 0 ? 0.0 : static_cast<double>(edge_count_) / static_cast<double>(pairs);
    }

    std::vector<int> degrees() const {
        std::vector<int> deg(static_cast<std::size_t>(n_regions_), 0);
        for (std::size_t e = 0; e < active_.size(); ++e) {
            if (!active_[e]) continue;
            auto [i, j] = edge_endpoints(static_cast<std::int64_t>(e), n_regions_);
            ++deg[i];
            ++deg[j];
        }
        return deg;
    }

    void restrict_vertices(std::vector<int> vertices) { vertices_ = std::move(vertices); }

private:
    int n_regions_ = 0;
    std::vector<std::uint8_t> active_;
    std::vector<int> vertices_;
    std::int64_t edge_count_ = 0;
};

/// Sorted region set spanned by the given edges.
inline std::vector<int> spanned_regions(std::span<const int> edge_ids, int n_regions) {
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(n_regions), 0);
    for (int e : edge_ids) {
        auto [i, j] = edge_endpoints(e, n_regions);
        seen[i] = seen[j] = 1;
    }
    std::vector<int> out;
    for (int v = 0; v < n_regions; ++v)
        if (seen[v]) out.push_back(v);
    return out;
}

/// Graph on the endpoints of `edge_ids` containing exactly those edges.
inline ConnectomeGraph induced_clique(std::span<const int> edge_ids, int n_regions) {
    auto g = ConnectomeGraph::from_edges(n_regions, edge_ids);
    g.restrict_vertices(spanned_regions(edge_ids, n_regions));
    return g;
}

/// One extracted block B_c = (S_c, F_c; H_c) with its clique G_c = (V_c; F_c).
/// Node ids are 0-based; files and reports convert to 1-based.
struct Subnetwork {
    std::vector<int> s_nodes;
    std::vector<int> f_nodes;
    std::vector<int> v_nodes;
    double gamma1 = 0.0;  // |H_c| / (|S_c||F_c|)
    double gamma2 = 0.0;  // |F_c| / C(|V_c|, 2)
    double objective_value = 0.0;

    std::size_t s_size() const { return s_nodes.size(); }
    std::size_t f_size() const { return f_nodes.size(); }
    std::size_t v_size() const { return v_nodes.size(); }
};

/// Builds a Subnetwork from node sets, deriving V_c and both densities.
/// objective_value is left at zero for the caller to fill.
inline Subnetwork make_subnetwork(std::vector<int> s_nodes, std::vector<int> f_nodes, const BipartiteGraph& h) {
    if (s_nodes.empty() || f_nodes.empty()) throw DomainError("make_subnetwork: S_c and F_c must be nonempty");
    std::sort(s_nodes.begin(), s_nodes.end());
    std::sort(f_nodes.begin(), f_nodes.end());
    Subnetwork sub;
    sub.v_nodes = spanned_regions(f_nodes, h.n_regions());
    sub.gamma1 = static_cast<double>(h.count_block(s_nodes, f_nodes)) /
                 (static_cast<double>(s_nodes.size()) * static_cast<double>(f_nodes.size()));
    sub.gamma2 = static_cast<double>(f_nodes.size()) / static_cast<double>(pair_count(static_cast<std::int64_t>(sub.v_nodes.size())));
    sub.s_nodes = std::move(s_nodes);
    sub.f_nodes = std::move(f_nodes);
    return sub;
}

}  // namespace moat
