#pragma once

// Doubly-dense subnetwork extraction.
//
// The objective for a set of blocks (S_c, F_c, V_c) is
//
//   sum_c  W(S_c, F_c) / (|S_c| C(|V_c|,2))^(lambda1/2)  +  |F_c| / |V_c|^lambda2
//
// where W is the total score inside the block and the level-2 graph of a block
// is G_c = (V_c; F_c). greedy_peel approximates the single-block maximiser by
// removing minimum weighted-degree nodes from either side, re-peeling the
// region graph spanned by the surviving FC edges as it goes, and returning the
// best iterate. extract_all masks each accepted block and repeats.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "moat/association.hpp"
#include "moat/core_graph.hpp"
#include "moat/errors.hpp"
#include "moat/parallel.hpp"

namespace moat {

using LambdaPair = std::pair<double, double>;

/// lambda in {1.05, 1.15, ..., 1.95} on both axes.
inline std::vector<LambdaPair> default_lambda_grid() {
    std::vector<LambdaPair> grid;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) grid.emplace_back(1.05 + 0.1 * i, 1.05 + 0.1 * j);
    return grid;
}

struct ExtractionConfig {
    double lambda1 = 1.25;
    double lambda2 = 1.5;
    /// r: H = I(a > r) defines the binary graph used for densities.
    double binarize_cutoff = default_threshold();
    int max_subnetworks = 5;
    std::vector<LambdaPair> lambda_grid = default_lambda_grid();
    /// Level-2 refinement runs once the number of FC removals since the last
    /// refinement reaches max(1, refine_fraction * |F_c|). 0 refines after
    /// every FC removal.
    double refine_fraction = 0.005;

    void validate() const {
        auto in_range = [](double l) { return l > 1.0 && l <= 2.0; };
        if (!in_range(lambda1) || !in_range(lambda2)) throw ConfigError("lambda1 and lambda2 must lie in (1, 2]");
        if (max_subnetworks < 1) throw ConfigError("max_subnetworks must be at least 1");
        if (!(binarize_cutoff >= 0.0)) throw ConfigError("binarize cutoff must be >= 0");
        if (!(refine_fraction >= 0.0 && refine_fraction < 1.0)) throw ConfigError("refine_fraction must lie in [0, 1)");
        for (const auto& [l1, l2] : lambda_grid)
            if (!in_range(l1) || !in_range(l2)) throw ConfigError("lambda grid values must lie in (1, 2]");
    }
};

// ---------------------------------------------------------------------------
// Objective

namespace detail {

inline double block_weight(const Eigen::MatrixXd& a, const Subnetwork& sub) {
    double w = 0.0;
    for (int f : sub.f_nodes)
        for (int k : sub.s_nodes) w += a(k, f);
    return w;
}

inline double objective_terms(double weight, double s_size, double f_size, double v_size, double lambda1, double lambda2) {
    const double pairs = v_size * (v_size - 1.0) / 2.0;
    return weight / std::pow(s_size * pairs, lambda1 / 2.0) + f_size / std::pow(v_size, lambda2);
}

}  // namespace detail

/// Objective value of a list of blocks, recomputed from the raw matrix.
inline double objective(const Eigen::MatrixXd& a, const std::vector<Subnetwork>& subnets, double lambda1, double lambda2) {
    double total = 0.0;
    for (const auto& sub : subnets) {
        if (sub.s_nodes.empty() || sub.f_nodes.empty() || sub.v_nodes.size() < 2) {
            throw DomainError("objective: subnetwork with empty S_c, F_c or fewer than two regions");
        }
        const auto n = static_cast<int>(std::round((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(a.cols()))) / 2.0));
        std::vector<std::uint8_t> in_v(static_cast<std::size_t>(n), 0);
        for (int v : sub.v_nodes) in_v[v] = 1;
        double level2_edges = 0.0;
        for (int f : sub.f_nodes) {
            auto [i, j] = edge_endpoints(f, n);
            if (in_v[i] && in_v[j]) level2_edges += 1.0;
        }
        total += detail::objective_terms(detail::block_weight(a, sub), static_cast<double>(sub.s_size()), level2_edges,
                                         static_cast<double>(sub.v_size()), lambda1, lambda2);
    }
    return total;
}

// ---------------------------------------------------------------------------
// Sparse weighted bipartite view used while peeling

/// Nonzero entries of A in both row-major and column-major compressed form.
class WeightedBipartite {
public:
    WeightedBipartite(const Eigen::MatrixXd& a, int n_regions) : s_count_(static_cast<int>(a.rows())), n_regions_(n_regions) {
        if (a.cols() != pair_count(n_regions)) throw DataError("score matrix has " + std::to_string(a.cols()) + " columns, expected C(n,2)");
        const auto f_count = static_cast<int>(a.cols());
        col_start_.assign(static_cast<std::size_t>(f_count) + 1, 0);
        row_start_.assign(static_cast<std::size_t>(s_count_) + 1, 0);
        for (int f = 0; f < f_count; ++f) {
            for (int k = 0; k < s_count_; ++k) {
                const double w = a(k, f);
                if (w < 0.0 || std::isnan(w)) throw DataError("peeling needs nonnegative finite scores");
                if (w > 0.0) {
                    col_rows_.push_back(k);
                    col_weights_.push_back(w);
                    ++row_start_[static_cast<std::size_t>(k) + 1];
                }
            }
            col_start_[static_cast<std::size_t>(f) + 1] = col_rows_.size();
        }
        for (int k = 0; k < s_count_; ++k) row_start_[k + 1] += row_start_[k];
        row_cols_.resize(col_rows_.size());
        row_weights_.resize(col_rows_.size());
        std::vector<std::size_t> fill(row_start_.begin(), row_start_.end() - 1);
        for (int f = 0; f < f_count; ++f) {
            for (auto i = col_start_[f]; i < col_start_[f + 1]; ++i) {
                const auto pos = fill[col_rows_[i]]++;
                row_cols_[pos] = f;
                row_weights_[pos] = col_weights_[i];
            }
        }
    }

    int s_count() const { return s_count_; }
    int f_count() const { return static_cast<int>(col_start_.size()) - 1; }
    int n_regions() const { return n_regions_; }
    std::size_t nonzeros() const { return col_rows_.size(); }

    template <typename Fn>
    void for_row(int k, Fn&& fn) const {
        for (auto i = row_start_[k]; i < row_start_[k + 1]; ++i) fn(row_cols_[i], row_weights_[i]);
    }
    template <typename Fn>
    void for_col(int f, Fn&& fn) const {
        for (auto i = col_start_[f]; i < col_start_[f + 1]; ++i) fn(col_rows_[i], col_weights_[i]);
    }

private:
    int s_count_;
    int n_regions_;
    std::vector<std::size_t> row_start_, col_start_;
    std::vector<int> row_cols_, col_rows_;
    std::vector<double> row_weights_, col_weights_;
};

// ---------------------------------------------------------------------------
// Greedy peeling

enum class PeelStep : std::uint8_t { predictor, edge, refine };

struct PeelEvent {
    PeelStep step;
    int node;       // predictor index, or 0-based edge id for edge/refine steps
    double degree;  // weighted degree at removal (0 for refine steps)
};

struct PeelTrace {
    std::vector<PeelEvent> events;
    /// objective of iterate q (q = 0 is the starting graph after its first
    /// level-2 pass)
    std::vector<double> objective;
    /// events applied before iterate q was scored
    std::vector<std::size_t> events_before;
    std::size_t best_iteration = 0;
    double scale_d = 0.0;  // d in the side comparison d * deg(tau) <= deg(phi)
};

struct PeelOptions {
    double refine_fraction = 0.005;
};

struct PeelNodes {
    std::vector<int> s_nodes;
    std::vector<int> f_nodes;
    PeelTrace trace;
};

namespace detail {

/// Core peeling loop over a sparse weighted view. `candidate_edges` is the
/// level-2 graph whose edges seed F_c.
inline PeelNodes peel(const WeightedBipartite& a, const ConnectomeGraph& candidate_edges, double lambda1, double lambda2,
                      const PeelOptions& opts) {
    const int s_count = a.s_count();
    const int f_count = a.f_count();
    const int n = a.n_regions();

    std::vector<std::uint8_t> alive_s(static_cast<std::size_t>(s_count), 1);
    std::vector<std::uint8_t> alive_f(static_cast<std::size_t>(f_count), 0);
    std::vector<double> deg_s(static_cast<std::size_t>(s_count), 0.0);
    std::vector<double> deg_f(static_cast<std::size_t>(f_count), 0.0);
    std::vector<int> vdeg(static_cast<std::size_t>(n), 0);
    std::vector<std::pair<int, int>> ends(static_cast<std::size_t>(f_count));
    for (int f = 0; f < f_count; ++f) ends[f] = edge_endpoints(f, n);

    int ns = s_count;
    int nf = 0;
    int nv = 0;
    double total = 0.0;
    for (int f = 0; f < f_count; ++f) {
        if (!candidate_edges.has_edge(f)) continue;
        alive_f[f] = 1;
        ++nf;
        a.for_col(f, [&](int k, double w) {
            deg_f[f] += w;
            deg_s[k] += w;
        });
        total += deg_f[f];
        if (vdeg[ends[f].first]++ == 0) ++nv;
        if (vdeg[ends[f].second]++ == 0) ++nv;
    }
    if (nf == 0 || !(total > 0.0)) throw EmptyResultError("greedy_peel: no positive association weight to peel");

    using Entry = std::pair<double, int>;
    using MinHeap = std::priority_queue<Entry, std::vector<Entry>, std::greater<>>;
    MinHeap heap_s, heap_f;
    for (int k = 0; k < s_count; ++k) heap_s.emplace(deg_s[k], k);
    for (int f = 0; f < f_count; ++f)
        if (alive_f[f]) heap_f.emplace(deg_f[f], f);

    PeelNodes out;
    PeelTrace& trace = out.trace;

    auto remove_edge = [&](int f, PeelStep step) {
        alive_f[f] = 0;
        --nf;
        total -= deg_f[f];
        trace.events.push_back({step, f, step == PeelStep::refine ? 0.0 : deg_f[f]});
        a.for_col(f, [&](int k, double w) {
            if (!alive_s[k]) return;
            deg_s[k] -= w;
            heap_s.emplace(deg_s[k], k);
        });
        if (--vdeg[ends[f].first] == 0) --nv;
        if (--vdeg[ends[f].second] == 0) --nv;
    };
    auto remove_predictor = [&](int k) {
        alive_s[k] = 0;
        --ns;
        total -= deg_s[k];
        trace.events.push_back({PeelStep::predictor, k, deg_s[k]});
        a.for_row(k, [&](int f, double w) {
            if (!alive_f[f]) return;
            deg_f[f] -= w;
            heap_f.emplace(deg_f[f], f);
        });
    };

    // incident edge ids per region, for the level-2 pass
    std::vector<std::vector<int>> incident(static_cast<std::size_t>(n));
    for (int f = 0; f < f_count; ++f) {
        if (!candidate_edges.has_edge(f)) continue;
        incident[ends[f].first].push_back(f);
        incident[ends[f].second].push_back(f);
    }

    // Level-2 pass: peel regions by minimum degree in (V; F_c), keep the
    // prefix maximising |F_c[V_p]| / |V_p|^lambda2, drop edges leaving it.
    // Degree ties go to the region carrying less association mass, so the
    // pass never trades a heavy edge for a light one on index order alone.
    std::vector<int> tdeg(static_cast<std::size_t>(n));
    std::vector<double> tmass(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> gone(static_cast<std::size_t>(n));
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(n));
    auto refine = [&] {
        if (nf == 0) return;
        std::copy(vdeg.begin(), vdeg.end(), tdeg.begin());
        std::fill(tmass.begin(), tmass.end(), 0.0);
        for (int v = 0; v < n; ++v)
            for (int f : incident[v])
                if (alive_f[f]) tmass[v] += deg_f[f];
        std::fill(gone.begin(), gone.end(), std::uint8_t{0});
        order.clear();
        using IEntry = std::tuple<int, double, int>;
        std::priority_queue<IEntry, std::vector<IEntry>, std::greater<>> heap;
        for (int v = 0; v < n; ++v) heap.emplace(tdeg[v], tmass[v], v);
        double edges = nf;
        double best = edges / std::pow(static_cast<double>(n), lambda2);
        std::size_t best_removed = 0;
        int remaining = n;
        while (remaining > 2) {
            auto [dv, mv, v] = heap.top();
            heap.pop();
            if (gone[v] || dv != tdeg[v] || mv != tmass[v]) continue;
            gone[v] = 1;
            order.push_back(v);
            --remaining;
            for (int f : incident[v]) {
                if (!alive_f[f]) continue;
                const int u = ends[f].first == v ? ends[f].second : ends[f].first;
                if (gone[u]) continue;
                edges -= 1.0;
                --tdeg[u];
                tmass[u] -= deg_f[f];
                heap.emplace(tdeg[u], tmass[u], u);
            }
            const double value = edges / std::pow(static_cast<double>(remaining), lambda2);
            if (value > best) {
                best = value;
                best_removed = order.size();
            }
        }
        for (std::size_t i = 0; i < best_removed; ++i) {
            for (int f : incident[order[i]])
                if (alive_f[f]) remove_edge(f, PeelStep::refine);
        }
    };

    auto score = [&] {
        const double value = detail::objective_terms(total, ns, nf, nv, lambda1, lambda2);
        trace.objective.push_back(value);
        trace.events_before.push_back(trace.events.size());
        if (value > trace.objective[trace.best_iteration]) trace.best_iteration = trace.objective.size() - 1;
    };

    auto pop_min = [](MinHeap& heap, const std::vector<std::uint8_t>& alive, const std::vector<double>& deg) {
        while (true) {
            auto [d, i] = heap.top();
            if (alive[i] && d == deg[i]) return i;
            heap.pop();
        }
    };

    // Zero-weight nodes go first and all at once. Peeling them one by one in
    // index order would hand the level-2 pass an arbitrary, index-shaped graph.
    for (int k = 0; k < s_count; ++k)
        if (deg_s[k] == 0.0) remove_predictor(k);
    for (int f = 0; f < f_count; ++f)
        if (alive_f[f] && deg_f[f] == 0.0) remove_edge(f, PeelStep::edge);
    trace.scale_d = static_cast<double>(ns) / static_cast<double>(nf);

    refine();
    score();
    std::size_t since_refine = 0;
    while (ns > 0 && nf > 0) {
        const int tau = pop_min(heap_s, alive_s, deg_s);
        const int phi = pop_min(heap_f, alive_f, deg_f);
        if (trace.scale_d * deg_s[tau] <= deg_f[phi]) {
            remove_predictor(tau);
        } else {
            remove_edge(phi, PeelStep::edge);
            ++since_refine;
            const auto every = std::max<std::size_t>(1, static_cast<std::size_t>(opts.refine_fraction * nf));
            if (since_refine >= every) {
                refine();
                since_refine = 0;
            }
        }
        if (ns == 0 || nf == 0) break;
        score();
    }

    // replay up to the best iterate
    std::fill(alive_s.begin(), alive_s.end(), std::uint8_t{1});
    for (int f = 0; f < f_count; ++f) alive_f[f] = candidate_edges.has_edge(f) ? 1 : 0;
    for (std::size_t e = 0; e < trace.events_before[trace.best_iteration]; ++e) {
        const auto& ev = trace.events[e];
        if (ev.step == PeelStep::predictor)
            alive_s[ev.node] = 0;
        else
            alive_f[ev.node] = 0;
    }
    for (int k = 0; k < s_count; ++k)
        if (alive_s[k]) out.s_nodes.push_back(k);
    for (int f = 0; f < f_count; ++f)
        if (alive_f[f]) out.f_nodes.push_back(f);
    return out;
}

}  // namespace detail

struct PeelResult {
    Subnetwork subnetwork;
    PeelTrace trace;
};

/// Single-block greedy peel. Densities in the returned Subnetwork use
/// H = I(a > cutoff); objective_value is recomputed from `a`.
inline PeelResult greedy_peel(const Eigen::MatrixXd& a, const ConnectomeGraph& g, double lambda1, double lambda2,
                              double cutoff = 0.0, const PeelOptions& opts = {}) {
    const WeightedBipartite view(a, g.n_regions());
    auto nodes = detail::peel(view, g, lambda1, lambda2, opts);
    const auto h = BipartiteGraph::from_scores(a, g.n_regions(), cutoff);
    PeelResult out;
    out.subnetwork = make_subnetwork(std::move(nodes.s_nodes), std::move(nodes.f_nodes), h);
    out.subnetwork.objective_value = objective(a, {out.subnetwork}, lambda1, lambda2);
    out.trace = std::move(nodes.trace);
    return out;
}

// ---------------------------------------------------------------------------
// Masking loop

struct ExtractionResult {
    std::vector<Subnetwork> subnetworks;
    /// one objective trace per greedy_peel call, including the final rejected one
    std::vector<std::vector<double>> objective_traces;
    LambdaPair lambdas{1.25, 1.5};
    double mask_value = 0.0;
    double background_density = 0.0;  // p1 of the binarised input
};

namespace detail {

inline std::vector<int> set_intersection(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline std::vector<int> set_difference(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

/// Removes cells already owned by earlier blocks, dropping whichever side of
/// each overlap carries less weight. Returns false if the block empties.
inline bool resolve_overlap(std::vector<int>& s_nodes, std::vector<int>& f_nodes, const std::vector<Subnetwork>& earlier,
                            const Eigen::MatrixXd& a) {
    for (const auto& prev : earlier) {
        auto s_common = set_intersection(s_nodes, prev.s_nodes);
        auto f_common = set_intersection(f_nodes, prev.f_nodes);
        if (s_common.empty() || f_common.empty()) continue;
        double s_loss = 0.0, f_loss = 0.0;
        for (int k : s_common)
            for (int f : f_nodes) s_loss += a(k, f);
        for (int f : f_common)
            for (int k : s_nodes) f_loss += a(k, f);
        if (s_loss <= f_loss)
            s_nodes = set_difference(s_nodes, s_common);
        else
            f_nodes = set_difference(f_nodes, f_common);
        if (s_nodes.empty() || f_nodes.empty()) return false;
    }
    return true;
}

inline double median_of(const Eigen::MatrixXd& a) {
    std::vector<double> v(a.data(), a.data() + a.size());
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

}  // namespace detail

/// Repeated greedy peeling. After each accepted block its cells are overwritten
/// with the median of the original matrix; extraction continues while the new
/// block's binary density exceeds the whole graph's and fewer than
/// max_subnetworks blocks have been accepted.
inline ExtractionResult extract_all(const Eigen::MatrixXd& a, const ConnectomeGraph& g, const ExtractionConfig& cfg) {
    cfg.validate();
    ExtractionResult out;
    out.lambdas = {cfg.lambda1, cfg.lambda2};
    out.mask_value = detail::median_of(a);
    const auto h = BipartiteGraph::from_scores(a, g.n_regions(), cfg.binarize_cutoff);
    out.background_density = h.density();

    Eigen::MatrixXd work = a;
    const PeelOptions opts{cfg.refine_fraction};
    while (static_cast<int>(out.subnetworks.size()) < cfg.max_subnetworks) {
        PeelNodes nodes;
        try {
            nodes = detail::peel(WeightedBipartite(work, g.n_regions()), g, cfg.lambda1, cfg.lambda2, opts);
        } catch (const EmptyResultError&) {
            break;
        }
        out.objective_traces.push_back(nodes.trace.objective);
        if (!detail::resolve_overlap(nodes.s_nodes, nodes.f_nodes, out.subnetworks, work)) break;
        auto sub = make_subnetwork(std::move(nodes.s_nodes), std::move(nodes.f_nodes), h);
        if (!(sub.gamma1 > out.background_density)) break;
        sub.objective_value = objective(work, {sub}, cfg.lambda1, cfg.lambda2);
        for (int f : sub.f_nodes)
            for (int k : sub.s_nodes) work(k, f) = out.mask_value;
        out.subnetworks.push_back(std::move(sub));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tuning lambda1, lambda2

/// Symmetrised KL divergence between Bernoulli(a) and Bernoulli(b).
inline double symmetric_bernoulli_kl(double a, double b) {
    auto logit = [](double x) { return std::log(x / (1.0 - x)); };
    return (a - b) * (logit(a) - logit(b));
}

/// Within-block vs background contrast of an extraction, summed over the
/// bipartite and the region level. Densities are smoothed as
/// (count + 1/2) / (total + 1) so that complete blocks stay finite. Returns
/// -inf when nothing was extracted or the two levels carry no contrast.
inline double partition_divergence(const BipartiteGraph& h, const ConnectomeGraph& g, const std::vector<Subnetwork>& subs) {
    if (subs.empty()) return -std::numeric_limits<double>::infinity();
    auto smooth = [](double count, double total) { return (count + 0.5) / (total + 1.0); };

    double in_cells = 0.0, in_ones = 0.0;
    for (const auto& s : subs) {
        in_cells += static_cast<double>(s.s_size()) * static_cast<double>(s.f_size());
        in_ones += static_cast<double>(h.count_block(s.s_nodes, s.f_nodes));
    }
    const double all_cells = static_cast<double>(h.s_count()) * h.f_count();
    const double level1 = symmetric_bernoulli_kl(smooth(in_ones, in_cells),
                                                 smooth(static_cast<double>(h.edge_count()) - in_ones, all_cells - in_cells));

    const int n = g.n_regions();
    std::vector<std::uint8_t> covered(static_cast<std::size_t>(pair_count(n)), 0);
    std::vector<std::uint8_t> chosen(covered.size(), 0);
    for (const auto& s : subs) {
        for (std::size_t x = 0; x < s.v_nodes.size(); ++x)
            for (std::size_t y = x + 1; y < s.v_nodes.size(); ++y) covered[edge_id(s.v_nodes[x], s.v_nodes[y], n)] = 1;
        for (int f : s.f_nodes) chosen[f] = 1;
    }
    double in_pairs = 0.0, in_edges = 0.0, out_pairs = 0.0, out_edges = 0.0;
    for (std::size_t e = 0; e < covered.size(); ++e) {
        if (covered[e]) {
            in_pairs += 1.0;
            in_edges += chosen[e];
        } else {
            out_pairs += 1.0;
            out_edges += g.has_edge(static_cast<int>(e)) ? 1.0 : 0.0;
        }
    }
    const double level2 = symmetric_bernoulli_kl(smooth(in_edges, in_pairs), smooth(out_edges, out_pairs));
    const double total = level1 + level2;
    return total > 0.0 ? total : -std::numeric_limits<double>::infinity();
}

struct LambdaSelection {
    LambdaPair lambdas{1.25, 1.5};
    std::vector<double> divergence;  // one per grid point
    bool fallback = false;           // every grid point was degenerate
};

/// Runs extract_all on the binarised graph at each grid point and keeps the
/// point with the largest within/background divergence (first wins ties).
inline LambdaSelection select_lambdas(const Eigen::MatrixXd& a, const ConnectomeGraph& g, const ExtractionConfig& cfg, int workers = 1) {
    if (cfg.lambda_grid.empty()) throw ConfigError("select_lambdas: empty lambda grid");
    cfg.validate();
    const auto h = BipartiteGraph::from_scores(a, g.n_regions(), cfg.binarize_cutoff);
    const Eigen::MatrixXd binary = (a.array() > cfg.binarize_cutoff).cast<double>();

    LambdaSelection out;
    out.divergence.assign(cfg.lambda_grid.size(), -std::numeric_limits<double>::infinity());
    parallel_for(cfg.lambda_grid.size(), workers, [&](std::size_t i) {
        ExtractionConfig point = cfg;
        std::tie(point.lambda1, point.lambda2) = cfg.lambda_grid[i];
        point.binarize_cutoff = 0.5;
        out.divergence[i] = partition_divergence(h, g, extract_all(binary, g, point).subnetworks);
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < out.divergence.size(); ++i)
        if (out.divergence[i] > out.divergence[best]) best = i;
    if (std::isinf(out.divergence[best])) {
        out.fallback = true;
        out.lambdas = {cfg.lambda1, cfg.lambda2};
    } else {
        out.lambdas = cfg.lambda_grid[best];
    }
    return out;
}

}  // namespace moat
