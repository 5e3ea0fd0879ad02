#pragma once

// JSON shapes for reports and sidecars. Every index written here is 1-based:
// predictors, regions and flat edge indices (lexicographic pair order).

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moat/analysis.hpp"
#include "moat/association.hpp"
#include "moat/cca.hpp"
#include "moat/core_graph.hpp"
#include "moat/errors.hpp"
#include "moat/extraction.hpp"
#include "moat/inference.hpp"
#include "moat/simulation.hpp"

namespace moat::report {

using json = nlohmann::ordered_json;

/// Non-finite doubles become null.
inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline std::vector<int> one_based(const std::vector<int>& ids) {
    std::vector<int> out(ids);
    for (auto& v : out) ++v;
    return out;
}

inline json subnetwork(const Subnetwork& s, const std::vector<std::string>& predictor_names) {
    json j;
    j["predictors"] = one_based(s.s_nodes);
    json names = json::array();
    for (int k : s.s_nodes)
        names.push_back(static_cast<std::size_t>(k) < predictor_names.size() ? predictor_names[k] : "SI" + std::to_string(k + 1));
    j["predictor_names"] = std::move(names);
    j["regions"] = one_based(s.v_nodes);
    j["edges"] = one_based(s.f_nodes);
    j["sizes"] = {{"s", s.s_size()}, {"f", s.f_size()}, {"v", s.v_size()}};
    j["gamma1"] = s.gamma1;
    j["gamma2"] = s.gamma2;
    j["objective"] = s.objective_value;
    return j;
}

inline json lambda_pair(const LambdaPair& l) { return json::array({l.first, l.second}); }

inline json lambda_selection(const LambdaSelection& sel, const std::vector<LambdaPair>& grid) {
    json j;
    j["selected"] = lambda_pair(sel.lambdas);
    j["fallback"] = sel.fallback;
    json points = json::array();
    for (std::size_t i = 0; i < grid.size() && i < sel.divergence.size(); ++i)
        points.push_back({{"lambda1", grid[i].first}, {"lambda2", grid[i].second}, {"divergence", number(sel.divergence[i])}});
    j["grid"] = std::move(points);
    return j;
}

inline json extraction(const ExtractionResult& r, const std::vector<std::string>& predictor_names) {
    json j;
    j["lambdas"] = lambda_pair(r.lambdas);
    j["mask_value"] = r.mask_value;
    j["background_density"] = r.background_density;
    json subs = json::array();
    for (const auto& s : r.subnetworks) subs.push_back(subnetwork(s, predictor_names));
    j["subnetworks"] = std::move(subs);
    j["objective_traces"] = r.objective_traces;
    return j;
}

inline json test_statistic(const TestStatistic& t, bool testable) {
    return {{"testable", testable},
            {"log_T", t.log_value},
            {"T", t.value()},
            {"gamma1", t.gamma1},
            {"p1", t.p1},
            {"gamma2", t.gamma2},
            {"p2", t.p2},
            {"sizes", {{"s", t.s_size}, {"f", t.f_size}, {"v", t.v_size}}}};
}

inline json permutation(const PermutationReport& r) {
    json j;
    j["permutations"] = r.permutations;
    j["seed"] = r.seed;
    j["lambdas"] = lambda_pair(r.lambdas);
    json obs = json::array();
    for (std::size_t i = 0; i < r.observed.size(); ++i) {
        auto t = test_statistic(r.observed[i], r.testable[i]);
        t["q_value"] = r.q_values[i];
        obs.push_back(std::move(t));
    }
    j["observed"] = std::move(obs);
    j["null_log_T"] = r.null_log_extremes;
    return j;
}

inline json cca(const CcaResult& r, const Subnetwork& s, const std::vector<std::string>& predictor_names,
                const std::vector<std::string>& outcome_names, double ridge) {
    json j;
    j["k"] = r.k;
    j["ridge"] = ridge;
    j["correlations"] = std::vector<double>(r.correlations.data(), r.correlations.data() + r.correlations.size());
    json xw = json::array();
    for (std::size_t i = 0; i < s.s_size(); ++i) {
        const int k = s.s_nodes[i];
        json row;
        row["predictor"] = k + 1;
        row["name"] = static_cast<std::size_t>(k) < predictor_names.size() ? predictor_names[k] : "SI" + std::to_string(k + 1);
        std::vector<double> w(static_cast<std::size_t>(r.k));
        for (int c = 0; c < r.k; ++c) w[c] = r.x_weights(static_cast<Eigen::Index>(i), c);
        row["weights"] = w;
        xw.push_back(std::move(row));
    }
    json yw = json::array();
    for (std::size_t i = 0; i < s.f_size(); ++i) {
        const int e = s.f_nodes[i];
        json row;
        row["edge"] = e + 1;
        row["name"] = static_cast<std::size_t>(e) < outcome_names.size() ? outcome_names[e] : "FC" + std::to_string(e + 1);
        std::vector<double> w(static_cast<std::size_t>(r.k));
        for (int c = 0; c < r.k; ++c) w[c] = r.y_weights(static_cast<Eigen::Index>(i), c);
        row["weights"] = w;
        yw.push_back(std::move(row));
    }
    j["x_weights"] = std::move(xw);
    j["y_weights"] = std::move(yw);
    return j;
}

inline json association_sidecar(const AssociationMatrix& a, std::optional<double> threshold) {
    json j;
    j["score_kind"] = to_string(a.kind);
    j["n_regions"] = a.n_regions;
    j["rows"] = a.s_count();
    j["cols"] = a.f_count();
    j["log_base"] = a.log_base;
    j["threshold"] = threshold ? json(*threshold) : json(nullptr);
    j["threshold_rule"] = "entries below the threshold are set to 0";
    j["predictor_names"] = a.predictor_names;
    j["outcome_names"] = a.outcome_names;
    return j;
}

inline json recovery(const RecoveryScore& r) {
    json j;
    const auto v = r.as_array();
    const auto names = RecoveryScore::field_names();
    for (std::size_t i = 0; i < v.size(); ++i) j[names[i]] = v[i];
    return j;
}

inline json design(const PlantedDesign& d) {
    json blocks = json::array();
    for (std::size_t c = 0; c < d.blocks.size(); ++c) {
        blocks.push_back({{"s_size", d.blocks[c].s_size},
                          {"v_size", d.blocks[c].v_size},
                          {"rho", d.blocks[c].rho},
                          {"predictors", one_based(d.s_nodes(c))},
                          {"regions", one_based(d.v_nodes(c))}});
    }
    return {{"m", d.m}, {"n", d.n}, {"rho0", d.rho0}, {"subjects", d.subjects}, {"model", to_string(d.model)}, {"blocks", blocks}};
}

inline json benchmark(const std::vector<BenchmarkRow>& rows, bool include_raw) {
    json out = json::array();
    for (const auto& row : rows) {
        json j;
        j["config"] = {{"rho0", row.config.rho0}, {"rho1", row.config.rho1}, {"rho2", row.config.rho2}, {"subjects", row.config.subjects}};
        j["replicates"] = row.replicates;
        j["mean"] = recovery(row.mean);
        j["sd"] = recovery(row.sd);
        if (include_raw) {
            json raw = json::array();
            for (const auto& o : row.raw) {
                raw.push_back({{"score", recovery(o.score)},
                               {"extracted", o.extracted},
                               {"significant", o.significant},
                               {"q_values", o.q_values},
                               {"lambdas", lambda_pair(o.lambdas)}});
            }
            j["replicate_scores"] = std::move(raw);
        }
        out.push_back(std::move(j));
    }
    return out;
}

/// Table with one row per configuration: config columns, then mean and sd of
/// each recovery rate.
inline std::string benchmark_csv(const std::vector<BenchmarkRow>& rows) {
    std::string out = "rho0,rho1,rho2,D,replicates";
    for (const char* name : RecoveryScore::field_names()) out += std::string(",") + name + "_mean," + name + "_sd";
    out += "\n";
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    for (const auto& row : rows) {
        out += fmt(row.config.rho0) + "," + fmt(row.config.rho1) + "," + fmt(row.config.rho2) + "," +
               std::to_string(row.config.subjects) + "," + std::to_string(row.replicates);
        const auto mean = row.mean.as_array();
        const auto sd = row.sd.as_array();
        for (std::size_t i = 0; i < mean.size(); ++i) out += "," + fmt(mean[i]) + "," + fmt(sd[i]);
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reading back

/// Subnetworks from an extraction JSON ({"subnetworks": [{predictors, edges}, ...]}).
/// Densities are recomputed against `h`.
inline std::vector<Subnetwork> subnetworks_from_json(const json& j, const BipartiteGraph& h) {
    if (!j.contains("subnetworks") || !j["subnetworks"].is_array()) throw DataError("expected a 'subnetworks' array");
    std::vector<Subnetwork> out;
    for (const auto& s : j["subnetworks"]) {
        std::vector<int> preds, edges;
        for (int k : s.at("predictors").get<std::vector<int>>()) {
            if (k < 1 || k > h.s_count()) throw DataError("subnetwork predictor index " + std::to_string(k) + " out of range");
            preds.push_back(k - 1);
        }
        for (int e : s.at("edges").get<std::vector<int>>()) {
            if (e < 1 || e > h.f_count()) throw DataError("subnetwork edge index " + std::to_string(e) + " out of range");
            edges.push_back(e - 1);
        }
        auto sub = make_subnetwork(std::move(preds), std::move(edges), h);
        if (s.contains("objective") && s["objective"].is_number()) sub.objective_value = s["objective"].get<double>();
        out.push_back(std::move(sub));
    }
    return out;
}

/// Block calls from any method: {"subnetworks": [{"predictors": [...], "edges": [...], "significant": bool}]}.
/// "significant" defaults to true.
inline std::vector<BlockCall> block_calls_from_json(const json& j) {
    if (!j.contains("subnetworks") || !j["subnetworks"].is_array()) throw DataError("expected a 'subnetworks' array");
    std::vector<BlockCall> out;
    for (const auto& s : j["subnetworks"]) {
        if (!s.contains("predictors") || !s.contains("edges")) throw DataError("block call needs 'predictors' and 'edges'");
        BlockCall c;
        for (int k : s.at("predictors").get<std::vector<int>>()) c.s_nodes.push_back(k - 1);
        for (int e : s.at("edges").get<std::vector<int>>()) c.f_nodes.push_back(e - 1);
        c.significant = s.value("significant", true);
        out.push_back(std::move(c));
    }
    return out;
}

/// Inverse of design(); accepts the design object or a document holding it under "design".
inline PlantedDesign design_from_json(const json& doc) {
    const json& d = doc.contains("design") ? doc["design"] : doc;
    PlantedDesign out;
    try {
        out.m = d.at("m").get<int>();
        out.n = d.at("n").get<int>();
        out.rho0 = d.at("rho0").get<double>();
        out.subjects = d.at("subjects").get<int>();
        out.model = covariance_model_from_string(d.value("model", std::string("factor")));
        for (const auto& b : d.at("blocks"))
            out.blocks.push_back({b.at("s_size").get<int>(), b.at("v_size").get<int>(), b.at("rho").get<double>()});
    } catch (const json::exception& e) {
        throw DataError(std::string("design JSON: ") + e.what());
    }
    out.validate();
    return out;
}

/// Calls are checked against the design dimensions.
inline void check_calls(const std::vector<BlockCall>& calls, const PlantedDesign& d) {
    for (const auto& c : calls) {
        for (int k : c.s_nodes)
            if (k < 0 || k >= d.m) throw DataError("block call predictor " + std::to_string(k + 1) + " out of range");
        for (int e : c.f_nodes)
            if (e < 0 || e >= d.f_count()) throw DataError("block call edge " + std::to_string(e + 1) + " out of range");
    }
}

inline json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

inline void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
}

}  // namespace moat::report
