// moat: command-line front end.
//
//   moat [--config FILE] <simulate|associate|extract|infer|cca|run|benchmark> [options]
//
// A config file holds one [section] per subcommand with `key = value` lines
// named after the long flags; flags given on the command line win.
// Exit codes: 0 ok, 2 configuration/domain error, 3 data error, 4 numeric failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moat/moat.hpp"
#include "moat/report.hpp"

namespace fs = std::filesystem;
using moat::report::json;

namespace {

constexpr int kExitConfig = 2;

// ---------------------------------------------------------------------------
// Shared option groups

struct DataInputs {
    std::string x_path, y_path, eta_path;
    int n_regions = 0;

    void add(CLI::App* app) {
        app->add_option("--x", x_path, "Predictor matrix (subjects x m), .csv or MOAT binary")->required();
        app->add_option("--y", y_path, "Outcome matrix (subjects x C(n,2)), lexicographic edge order")->required();
        app->add_option("--eta", eta_path, "Confounder matrix (subjects x P)");
        app->add_option("--n-regions", n_regions, "Region count; inferred from the outcome columns when omitted");
    }

    json to_json() const {
        return {{"x", x_path}, {"y", y_path}, {"eta", eta_path.empty() ? json(nullptr) : json(eta_path)}, {"n_regions", n_regions}};
    }
};

moat::StudyData load_study(const DataInputs& in) {
    for (const auto* p : {&in.x_path, &in.y_path, &in.eta_path})
        if (!p->empty() && !fs::exists(*p)) throw moat::DataError("input file not found: " + *p);
    auto x = moat::io::read_matrix(in.x_path, "SI");
    auto y = moat::io::read_matrix(in.y_path, "FC");
    moat::StudyData data;
    data.x = std::move(x.values);
    data.predictor_names = std::move(x.names);
    data.y = std::move(y.values);
    if (!in.eta_path.empty()) {
        auto eta = moat::io::read_matrix(in.eta_path, "eta");
        data.eta = std::move(eta.values);
        data.confounder_names = std::move(eta.names);
    } else {
        data.eta.resize(data.x.rows(), 0);
    }
    const int inferred = moat::regions_for_edge_count(data.y.cols());
    if (inferred < 0) {
        throw moat::DataError("outcome matrix has " + std::to_string(data.y.cols()) + " columns, which is not C(n,2) for any n");
    }
    if (in.n_regions != 0 && in.n_regions != inferred) {
        throw moat::DataError("--n-regions " + std::to_string(in.n_regions) + " does not match the " +
                              std::to_string(data.y.cols()) + " outcome columns (n = " + std::to_string(inferred) + ")");
    }
    data.n_regions = inferred;
    // headers are only kept if they are FC_i_j style names for the outcomes
    if (!y.names.empty() && y.names.size() == static_cast<std::size_t>(data.y.cols())) data.outcome_names = std::move(y.names);
    data.fill_default_names();
    moat::io::require_finite(data.x, in.x_path);
    moat::io::require_finite(data.y, in.y_path);
    if (data.eta.cols() > 0) moat::io::require_finite(data.eta, in.eta_path);
    data.validate();
    return data;
}

struct AnalysisOptions {
    std::string score_kind = "neg_log_p";
    double log_base = std::numbers::e;
    std::optional<double> threshold;
    double threshold_p = 1e-3;
    bool bonferroni = false;
    double bonferroni_alpha = 0.05;
    std::optional<double> cutoff;
    std::vector<double> fixed_lambdas;
    double fallback_lambda1 = 1.25, fallback_lambda2 = 1.5;
    int max_subnetworks = 5;
    double refine_fraction = 0.005;

    void add(CLI::App* app) {
        app->add_option("--score-kind", score_kind, "neg_log_p | abs_t | partial_corr")->capture_default_str();
        app->add_option("--log-base", log_base, "Log base for neg_log_p scores")->capture_default_str();
        app->add_option("--threshold", threshold, "Hard threshold epsilon on scores (default: score of p = --threshold-p)");
        app->add_option("--threshold-p", threshold_p, "p-value defining the default threshold")->capture_default_str();
        app->add_flag("--bonferroni", bonferroni, "Default threshold at alpha / (|S||F|) instead of --threshold-p");
        app->add_option("--bonferroni-alpha", bonferroni_alpha)->capture_default_str();
        app->add_option("--cutoff", cutoff, "Binarisation cutoff r (default: the threshold)");
        app->add_option("--fixed-lambdas", fixed_lambdas, "Skip the grid search and use LAMBDA1 LAMBDA2")->expected(2);
        app->add_option("--lambda1", fallback_lambda1, "Fallback lambda1 if every grid point degenerates")->capture_default_str();
        app->add_option("--lambda2", fallback_lambda2, "Fallback lambda2 if every grid point degenerates")->capture_default_str();
        app->add_option("--max-subnetworks", max_subnetworks, "C_max")->capture_default_str();
        app->add_option("--refine-fraction", refine_fraction, "Level-2 refinement batch as a fraction of |F_c|")->capture_default_str();
    }

    moat::AnalysisConfig resolve(int workers) const {
        moat::AnalysisConfig cfg;
        cfg.score_kind = moat::score_kind_from_string(score_kind);
        cfg.log_base = log_base;
        cfg.threshold = threshold;
        cfg.threshold_p = threshold_p;
        cfg.bonferroni = bonferroni;
        cfg.bonferroni_alpha = bonferroni_alpha;
        cfg.cutoff = cutoff;
        if (fixed_lambdas.size() == 2) cfg.fixed_lambdas = moat::LambdaPair{fixed_lambdas[0], fixed_lambdas[1]};
        cfg.extraction.lambda1 = fallback_lambda1;
        cfg.extraction.lambda2 = fallback_lambda2;
        cfg.extraction.max_subnetworks = max_subnetworks;
        cfg.extraction.refine_fraction = refine_fraction;
        cfg.workers = workers;
        cfg.validate();
        return cfg;
    }

    json to_json() const {
        json j;
        j["score_kind"] = score_kind;
        j["log_base"] = log_base;
        j["threshold"] = threshold ? json(*threshold) : json(nullptr);
        j["threshold_p"] = threshold_p;
        j["bonferroni"] = bonferroni;
        j["bonferroni_alpha"] = bonferroni_alpha;
        j["cutoff"] = cutoff ? json(*cutoff) : json(nullptr);
        j["fixed_lambdas"] = fixed_lambdas.size() == 2 ? json(fixed_lambdas) : json(nullptr);
        j["lambda1"] = fallback_lambda1;
        j["lambda2"] = fallback_lambda2;
        j["max_subnetworks"] = max_subnetworks;
        j["refine_fraction"] = refine_fraction;
        return j;
    }
};

json resolved_analysis(const moat::Analysis& a) {
    json j;
    j["epsilon"] = a.epsilon;
    j["cutoff"] = a.cutoff;
    j["p1"] = a.p1;
    j["p2"] = a.p2;
    return j;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw moat::DataError("cannot create output directory " + dir + ": " + ec.message());
}

// Failure marker left next to partial artifacts.
void write_failure(const std::string& dir, const std::string& stage, const std::string& message, int code) {
    if (dir.empty()) return;
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream out(fs::path(dir) / "FAILED");
    out << "stage: " << stage << "\nexit_code: " << code << "\nerror: " << message << "\n";
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateCmd {
    std::string layout = "standard";
    int m = 500, n = 100, subjects = 200;
    double rho0 = 0.15, rho1 = 0.55, rho2 = 0.60;
    std::vector<std::string> blocks;
    std::string model = "factor";
    std::string format = "bin";
    std::uint64_t seed = 1;
    std::string out = "moat_sim";

    void add(CLI::App* app) {
        app->add_option("--layout", layout, "standard (m=500,n=100) | reduced (m=100,n=40) | custom | none")->capture_default_str();
        app->add_option("--m", m, "Predictor count (custom / none layouts)");
        app->add_option("--n", n, "Region count (custom / none layouts)");
        app->add_option("--subjects", subjects, "D")->capture_default_str();
        app->add_option("--rho0", rho0)->capture_default_str();
        app->add_option("--rho1", rho1)->capture_default_str();
        app->add_option("--rho2", rho2)->capture_default_str();
        app->add_option("--block", blocks, "custom layout block S_SIZE,V_SIZE,RHO (repeatable)");
        app->add_option("--model", model, "factor | marginal_identity")->capture_default_str();
        app->add_option("--format", format, "bin | csv")->capture_default_str();
        app->add_option("--seed", seed)->capture_default_str();
        app->add_option("--out", out, "Output directory")->capture_default_str();
    }

    moat::PlantedDesign design() const {
        moat::PlantedDesign d;
        if (layout == "standard") {
            d = moat::standard_design(rho0, rho1, rho2, subjects);
        } else if (layout == "reduced") {
            d = moat::reduced_design(rho0, rho1, rho2, subjects);
        } else if (layout == "custom" || layout == "none") {
            d.m = m;
            d.n = n;
            d.rho0 = rho0;
            d.subjects = subjects;
            if (layout == "custom") {
                for (const auto& b : blocks) {
                    moat::PlantedBlock pb;
                    char c1 = 0, c2 = 0;
                    std::istringstream is(b);
                    if (!(is >> pb.s_size >> c1 >> pb.v_size >> c2 >> pb.rho) || c1 != ',' || c2 != ',') {
                        throw moat::ConfigError("--block expects S_SIZE,V_SIZE,RHO, got '" + b + "'");
                    }
                    d.blocks.push_back(pb);
                }
            }
        } else {
            throw moat::ConfigError("unknown layout '" + layout + "'");
        }
        d.model = moat::covariance_model_from_string(model);
        d.validate();
        return d;
    }

    int run() const {
        if (format != "bin" && format != "csv") throw moat::ConfigError("--format must be bin or csv");
        const auto d = design();
        if (d.model == moat::CovarianceModel::marginal_identity) (void)moat::build_covariance(d);  // shift guard
        const auto data = moat::generate(d, seed);
        ensure_dir(out);
        if (format == "bin") {
            moat::io::write_binary(fs::path(out) / "X.bin", data.x);
            moat::io::write_binary(fs::path(out) / "Y.bin", data.y);
        } else {
            moat::io::write_csv(fs::path(out) / "X.csv", {data.predictor_names, data.x});
            moat::io::write_csv(fs::path(out) / "Y.csv", {data.outcome_names, data.y});
        }
        json j;
        j["design"] = moat::report::design(d);
        j["seed"] = seed;
        j["files"] = {{"x", format == "bin" ? "X.bin" : "X.csv"}, {"y", format == "bin" ? "Y.bin" : "Y.csv"}};
        j["shapes"] = {{"x", {data.x.rows(), data.x.cols()}}, {"y", {data.y.rows(), data.y.cols()}}};
        moat::report::write_json(fs::path(out) / "design.json", j);
        std::cout << "wrote " << data.x.rows() << "x" << data.x.cols() << " predictors and " << data.y.rows() << "x"
                  << data.y.cols() << " outcomes to " << out << "\n";
        return 0;
    }
};

// ---------------------------------------------------------------------------
// associate

struct AssociateCmd {
    DataInputs inputs;
    std::string score_kind = "neg_log_p";
    double log_base = std::numbers::e;
    std::optional<double> threshold;
    std::string out = "moat_assoc";

    void add(CLI::App* app) {
        inputs.add(app);
        app->add_option("--score-kind", score_kind)->capture_default_str();
        app->add_option("--log-base", log_base)->capture_default_str();
        app->add_option("--threshold", threshold, "Zero scores below this value");
        app->add_option("--out", out)->capture_default_str();
    }

    int run(int workers) const {
        const auto data = load_study(inputs);
        moat::AssociationOptions opts;
        opts.kind = moat::score_kind_from_string(score_kind);
        opts.log_base = log_base;
        opts.workers = workers;
        auto a = moat::build_association_matrix(data, opts);
        if (threshold) a = moat::threshold_scores(std::move(a), *threshold);
        ensure_dir(out);
        moat::io::write_binary(fs::path(out) / "scores.bin", a.scores);
        auto side = moat::report::association_sidecar(a, threshold);
        side["inputs"] = inputs.to_json();
        moat::report::write_json(fs::path(out) / "scores.json", side);
        std::cout << "wrote " << a.s_count() << "x" << a.f_count() << " " << score_kind << " scores to " << out << "\n";
        return 0;
    }
};

/// Score matrix plus the sidecar written by `associate`.
moat::AssociationMatrix load_scores(const std::string& path) {
    if (!fs::exists(path)) throw moat::DataError("score file not found: " + path);
    moat::AssociationMatrix a;
    a.scores = moat::io::read_binary(path);
    const auto side_path = fs::path(path).replace_extension(".json");
    if (!fs::exists(side_path)) throw moat::DataError("missing sidecar " + side_path.string());
    const auto side = moat::report::read_json(side_path);
    a.kind = moat::score_kind_from_string(side.at("score_kind").get<std::string>());
    a.n_regions = side.at("n_regions").get<int>();
    a.log_base = side.value("log_base", std::numbers::e);
    a.predictor_names = side.value("predictor_names", std::vector<std::string>{});
    a.outcome_names = side.value("outcome_names", std::vector<std::string>{});
    if (a.scores.cols() != moat::pair_count(a.n_regions)) throw moat::DataError(path + ": columns do not match n_regions in the sidecar");
    moat::io::require_finite(a.scores, path);
    return a;
}

// ---------------------------------------------------------------------------
// extract

struct ExtractCmd {
    std::string scores_path;
    double residual_df = 0.0;
    AnalysisOptions analysis;
    std::string out = "moat_extract";

    void add(CLI::App* app) {
        app->add_option("--scores", scores_path, "scores.bin written by `associate` (sidecar scores.json alongside)")->required();
        app->add_option("--df", residual_df, "Residual degrees of freedom; needed for default thresholds on abs_t / partial_corr");
        analysis.add(app);
        app->add_option("--out", out)->capture_default_str();
    }

    int run(int workers) const {
        auto a = load_scores(scores_path);
        auto cfg = analysis.resolve(workers);
        if (a.kind != moat::ScoreKind::neg_log_p && !cfg.threshold && !(residual_df > 0.0)) {
            throw moat::ConfigError("extract: give --threshold or --df for " + moat::to_string(a.kind) + " scores");
        }
        cfg.score_kind = a.kind;
        cfg.log_base = a.log_base;
        const auto names = a.predictor_names;
        const auto result = moat::analyze_scores(std::move(a), cfg, residual_df > 0.0 ? residual_df : 1.0);
        ensure_dir(out);
        json j = moat::report::extraction(result.extraction, names);
        j["resolved"] = resolved_analysis(result);
        if (result.selection) j["lambda_selection"] = moat::report::lambda_selection(*result.selection, cfg.extraction.lambda_grid);
        j["config"] = analysis.to_json();
        j["config"]["scores"] = scores_path;
        moat::report::write_json(fs::path(out) / "extraction.json", j);
        std::cout << "extracted " << result.extraction.subnetworks.size() << " subnetwork(s) with lambdas ("
                  << result.extraction.lambdas.first << ", " << result.extraction.lambdas.second << ")\n";
        return 0;
    }
};

// ---------------------------------------------------------------------------
// infer

struct InferCmd {
    DataInputs inputs;
    AnalysisOptions analysis;
    int permutations = 1000;
    double alpha = 0.05;
    std::uint64_t seed = 1;
    std::string out = "moat_infer";

    void add(CLI::App* app) {
        inputs.add(app);
        analysis.add(app);
        app->add_option("--permutations", permutations, "L (>= 100)")->capture_default_str();
        app->add_option("--alpha", alpha)->capture_default_str();
        app->add_option("--seed", seed)->capture_default_str();
        app->add_option("--out", out)->capture_default_str();
    }

    int run(int workers) const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw moat::ConfigError("--alpha must lie in (0, 1)");
        if (permutations < moat::kMinPermutations) throw moat::ConfigError("--permutations must be >= 100");
        const auto data = load_study(inputs);
        const auto cfg = analysis.resolve(workers);
        const auto a = moat::analyze(data, cfg);
        ensure_dir(out);
        json j;
        j["extraction"] = moat::report::extraction(a.extraction, data.predictor_names);
        j["resolved"] = resolved_analysis(a);
        if (a.extraction.subnetworks.empty()) {
            j["inference"] = nullptr;
            j["note"] = "nothing extracted; no permutations run";
        } else {
            const auto rep = moat::permutation_test(data, cfg, a, permutations, seed);
            j["inference"] = moat::report::permutation(rep);
            json sig = json::array();
            for (double q : rep.q_values) sig.push_back(q < alpha);
            j["significant"] = std::move(sig);
        }
        json c = analysis.to_json();
        c["inputs"] = inputs.to_json();
        c["permutations"] = permutations;
        c["alpha"] = alpha;
        c["seed"] = seed;
        j["config"] = std::move(c);
        moat::report::write_json(fs::path(out) / "inference.json", j);
        std::cout << "inference written to " << out << "\n";
        return 0;
    }
};

// ---------------------------------------------------------------------------
// cca

struct CcaCmd {
    DataInputs inputs;
    std::string subnetworks_path;
    int k = 3;
    double ridge = moat::kDefaultCcaRidge;
    std::string out = "moat_cca";

    void add(CLI::App* app) {
        inputs.add(app);
        app->add_option("--subnetworks", subnetworks_path, "extraction.json / inference.json / report.json")->required();
        app->add_option("--k", k, "Canonical pairs kept (capped at min(|S_c|, |F_c|))")->capture_default_str();
        app->add_option("--ridge", ridge, "Ridge, as a multiple of the mean within-set variance")->capture_default_str();
        app->add_option("--out", out)->capture_default_str();
    }

    int run() const {
        const auto data = load_study(inputs);
        auto j = moat::report::read_json(subnetworks_path);
        if (j.contains("extraction")) j = j["extraction"];
        const moat::BipartiteGraph h(static_cast<int>(data.predictors()), data.n_regions);
        const auto subs = moat::report::subnetworks_from_json(j, h);
        ensure_dir(out);
        json results = json::array();
        for (const auto& s : subs) {
            const int kk = std::min<int>(k, static_cast<int>(std::min(s.s_size(), s.f_size())));
            const auto r = moat::cca_on_subnetwork(data, s, kk, ridge);
            results.push_back(moat::report::cca(r, s, data.predictor_names, data.outcome_names, ridge));
        }
        json doc;
        doc["cca"] = std::move(results);
        doc["config"] = {{"inputs", inputs.to_json()}, {"subnetworks", subnetworks_path}, {"k", k}, {"ridge", ridge}};
        moat::report::write_json(fs::path(out) / "cca.json", doc);
        std::cout << "CCA for " << subs.size() << " subnetwork(s) written to " << out << "\n";
        return 0;
    }
};

// ---------------------------------------------------------------------------
// run

struct RunCmd {
    DataInputs inputs;
    AnalysisOptions analysis;
    int permutations = 1000;
    double alpha = 0.05;
    int cca_k = 3;
    double ridge = moat::kDefaultCcaRidge;
    std::uint64_t seed = 1;
    std::string out = "moat_run";

    void add(CLI::App* app) {
        inputs.add(app);
        analysis.add(app);
        app->add_option("--permutations", permutations, "L (>= 100)")->capture_default_str();
        app->add_option("--alpha", alpha)->capture_default_str();
        app->add_option("--cca-k", cca_k)->capture_default_str();
        app->add_option("--ridge", ridge)->capture_default_str();
        app->add_option("--seed", seed)->capture_default_str();
        app->add_option("--out", out)->capture_default_str();
    }

    /// Every option with its effective value; `moat --config resolved_config.ini run` replays the run.
    std::string resolved_ini() const {
        std::ostringstream o;
        auto num = [](double v) {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", v);
            return std::string(buf);
        };
        auto str = [](const std::string& v) { return "\"" + v + "\""; };
        o << "[run]\n";
        o << "x = " << str(inputs.x_path) << "\ny = " << str(inputs.y_path) << "\n";
        if (!inputs.eta_path.empty()) o << "eta = " << str(inputs.eta_path) << "\n";
        if (inputs.n_regions != 0) o << "n-regions = " << inputs.n_regions << "\n";
        o << "score-kind = " << str(analysis.score_kind) << "\nlog-base = " << num(analysis.log_base) << "\n";
        if (analysis.threshold) o << "threshold = " << num(*analysis.threshold) << "\n";
        o << "threshold-p = " << num(analysis.threshold_p) << "\nbonferroni = " << (analysis.bonferroni ? "true" : "false") << "\n";
        o << "bonferroni-alpha = " << num(analysis.bonferroni_alpha) << "\n";
        if (analysis.cutoff) o << "cutoff = " << num(*analysis.cutoff) << "\n";
        if (analysis.fixed_lambdas.size() == 2)
            o << "fixed-lambdas = [" << num(analysis.fixed_lambdas[0]) << ", " << num(analysis.fixed_lambdas[1]) << "]\n";
        o << "lambda1 = " << num(analysis.fallback_lambda1) << "\nlambda2 = " << num(analysis.fallback_lambda2) << "\n";
        o << "max-subnetworks = " << analysis.max_subnetworks << "\nrefine-fraction = " << num(analysis.refine_fraction) << "\n";
        o << "permutations = " << permutations << "\nalpha = " << num(alpha) << "\ncca-k = " << cca_k << "\nridge = " << num(ridge) << "\n";
        o << "seed = " << seed << "\nout = " << str(out) << "\n";
        return o.str();
    }

    json config_json() const {
        json c = analysis.to_json();
        c["inputs"] = inputs.to_json();
        c["permutations"] = permutations;
        c["alpha"] = alpha;
        c["cca_k"] = cca_k;
        c["ridge"] = ridge;
        c["seed"] = seed;
        return c;
    }

    int run(int workers, const std::string& resolved_ini, std::string& stage) const {
        stage = "config";
        if (!(alpha > 0.0 && alpha < 1.0)) throw moat::ConfigError("--alpha must lie in (0, 1)");
        if (permutations < moat::kMinPermutations) throw moat::ConfigError("--permutations must be >= 100");
        if (cca_k < 1) throw moat::ConfigError("--cca-k must be >= 1");
        auto cfg = analysis.resolve(workers);

        stage = "load";
        const auto data = load_study(inputs);
        ensure_dir(out);
        std::error_code ec;
        fs::remove(fs::path(out) / "FAILED", ec);
        {
            std::ofstream ini(fs::path(out) / "resolved_config.ini", std::ios::trunc);
            ini << resolved_ini;
        }

        stage = "associate";
        const moat::AssociationScanner scanner(data);
        moat::AssociationOptions aopts;
        aopts.kind = cfg.score_kind;
        aopts.log_base = cfg.log_base;
        aopts.workers = workers;
        const auto raw = scanner.scan(data.x, aopts);
        moat::io::write_binary(fs::path(out) / "scores.bin", raw.scores);

        stage = "extract";
        const auto a = moat::analyze_scores(raw, cfg, scanner.residual_df());
        {
            auto side = moat::report::association_sidecar(raw, a.epsilon);
            side["threshold_rule"] = "scores.bin is unthresholded; the pipeline zeroes entries below 'threshold'";
            moat::report::write_json(fs::path(out) / "scores.json", side);
        }
        json extraction = moat::report::extraction(a.extraction, data.predictor_names);
        extraction["resolved"] = resolved_analysis(a);
        if (a.selection) extraction["lambda_selection"] = moat::report::lambda_selection(*a.selection, cfg.extraction.lambda_grid);
        moat::report::write_json(fs::path(out) / "extraction.json", extraction);

        json report;
        report["config"] = config_json();
        report["config_file"] = resolved_ini;
        report["resolved"] = resolved_analysis(a);
        report["lambdas"] = moat::report::lambda_pair(a.extraction.lambdas);
        report["lambda_source"] = cfg.fixed_lambdas ? "fixed" : (a.selection && a.selection->fallback ? "fallback" : "grid");
        report["threshold_rule"] = "scores below epsilon are set to 0; H = I(score > cutoff)";
        report["subnetworks"] = json::array();

        stage = "infer";
        std::vector<double> q(a.extraction.subnetworks.size(), 1.0);
        if (!a.extraction.subnetworks.empty()) {
            const auto rep = moat::permutation_test(data, cfg, a, permutations, seed);
            q = rep.q_values;
            moat::report::write_json(fs::path(out) / "inference.json", moat::report::permutation(rep));
            report["null_log_T"] = rep.null_log_extremes;
            for (std::size_t i = 0; i < a.extraction.subnetworks.size(); ++i) {
                json s = moat::report::subnetwork(a.extraction.subnetworks[i], data.predictor_names);
                s["test"] = moat::report::test_statistic(rep.observed[i], rep.testable[i]);
                s["q_value"] = rep.q_values[i];
                s["significant"] = rep.q_values[i] < alpha;
                report["subnetworks"].push_back(std::move(s));
            }
        }

        stage = "cca";
        json cca = json::array();
        int significant = 0;
        for (std::size_t i = 0; i < a.extraction.subnetworks.size(); ++i) {
            if (!(q[i] < alpha)) continue;
            ++significant;
            const auto& s = a.extraction.subnetworks[i];
            const int kk = std::min<int>(cca_k, static_cast<int>(std::min(s.s_size(), s.f_size())));
            const auto r = moat::cca_on_subnetwork(data, s, kk, ridge);
            auto cj = moat::report::cca(r, s, data.predictor_names, data.outcome_names, ridge);
            cj["subnetwork"] = i + 1;
            report["subnetworks"][i]["canonical_correlations"] = cj["correlations"];
            cca.push_back(std::move(cj));
        }
        moat::report::write_json(fs::path(out) / "cca.json", cca);
        report["significant_count"] = significant;
        stage = "report";
        moat::report::write_json(fs::path(out) / "report.json", report);
        std::cout << a.extraction.subnetworks.size() << " subnetwork(s) extracted, " << significant << " significant at alpha = " << alpha
                  << "; report in " << (fs::path(out) / "report.json").string() << "\n";
        return 0;
    }
};

// ---------------------------------------------------------------------------
// benchmark

struct BenchmarkCmd {
    std::vector<std::string> configs;
    bool weak = false;
    std::string scale = "standard";
    int replicates = 25;
    int permutations = 100;
    double alpha = 0.05;
    std::string threshold_rule = "bonferroni";
    std::vector<double> fixed_lambdas;
    std::uint64_t seed = 20240101;
    bool raw = false;
    std::string score_external, design_path;
    std::string out = "moat_bench";

    void add(CLI::App* app) {
        app->add_option("--config-row", configs, "RHO0,RHO1,RHO2,D (repeatable; default: the three standard rows)");
        app->add_flag("--weak-signal", weak, "Also run (rho1, rho2) = (0.40, 0.35)");
        app->add_option("--scale", scale, "standard (m=500, n=100) | reduced (m=100, n=40)")->capture_default_str();
        app->add_option("--replicates", replicates)->capture_default_str();
        app->add_option("--permutations", permutations)->capture_default_str();
        app->add_option("--alpha", alpha)->capture_default_str();
        app->add_option("--threshold-rule", threshold_rule, "bonferroni | uncorrected (p < 0.001)")->capture_default_str();
        app->add_option("--fixed-lambdas", fixed_lambdas)->expected(2);
        app->add_option("--seed", seed)->capture_default_str();
        app->add_flag("--raw", raw, "Include per-replicate scores in benchmark.json");
        app->add_option("--score-external", score_external, "Score an external result JSON against --design instead of running");
        app->add_option("--design", design_path, "design.json written by `simulate`");
        app->add_option("--out", out)->capture_default_str();
    }

    std::vector<moat::BenchmarkConfig> rows() const {
        std::vector<moat::BenchmarkConfig> out_rows;
        for (const auto& c : configs) {
            moat::BenchmarkConfig b;
            char c1 = 0, c2 = 0, c3 = 0;
            std::istringstream is(c);
            if (!(is >> b.rho0 >> c1 >> b.rho1 >> c2 >> b.rho2 >> c3 >> b.subjects) || c1 != ',' || c2 != ',' || c3 != ',' ||
                !is.eof()) {
                throw moat::ConfigError("--config-row expects RHO0,RHO1,RHO2,D, got '" + c + "'");
            }
            out_rows.push_back(b);
        }
        if (out_rows.empty()) out_rows = moat::default_benchmark_configs();
        if (weak) out_rows.push_back(moat::weak_signal_config());
        return out_rows;
    }

    int run(int workers) const {
        if (!score_external.empty()) {
            if (design_path.empty()) throw moat::ConfigError("--score-external needs --design");
            const auto design = moat::report::design_from_json(moat::report::read_json(design_path));
            const auto calls = moat::report::block_calls_from_json(moat::report::read_json(score_external));
            moat::report::check_calls(calls, design);
            const auto score = moat::score_recovery(calls, design);
            json j = moat::report::recovery(score);
            std::cout << j.dump(2) << "\n";
            ensure_dir(out);
            moat::report::write_json(fs::path(out) / "external_score.json", {{"score", j}, {"design", design_path}, {"calls", score_external}});
            return 0;
        }

        moat::BenchmarkSettings s;
        if (scale == "standard")
            s.design = moat::standard_design(0.15, 0.55, 0.60, 200);
        else if (scale == "reduced")
            s.design = moat::reduced_design(0.15, 0.55, 0.60, 200);
        else
            throw moat::ConfigError("--scale must be standard or reduced");
        s.replicates = replicates;
        s.permutations = permutations;
        s.alpha = alpha;
        s.seed = seed;
        s.workers = workers;
        if (threshold_rule != "bonferroni" && threshold_rule != "uncorrected")
            throw moat::ConfigError("--threshold-rule must be bonferroni or uncorrected");
        s.analysis.bonferroni = threshold_rule == "bonferroni";
        if (fixed_lambdas.size() == 2) s.analysis.fixed_lambdas = moat::LambdaPair{fixed_lambdas[0], fixed_lambdas[1]};
        const auto cfgs = rows();
        s.validate();
        for (const auto& c : cfgs) moat::design_for(s, c).validate();

        const auto result = moat::run_benchmark(cfgs, s);
        ensure_dir(out);
        {
            std::ofstream csv(fs::path(out) / "benchmark.csv", std::ios::trunc);
            csv << moat::report::benchmark_csv(result);
        }
        json j;
        j["rows"] = moat::report::benchmark(result, raw);
        j["config"] = {{"scale", scale},
                       {"replicates", replicates},
                       {"permutations", permutations},
                       {"alpha", alpha},
                       {"threshold_rule", threshold_rule},
                       {"fixed_lambdas", fixed_lambdas.size() == 2 ? json(fixed_lambdas) : json(nullptr)},
                       {"seed", seed},
                       {"design", moat::report::design(s.design)}};
        moat::report::write_json(fs::path(out) / "benchmark.json", j);
        std::cout << moat::report::benchmark_csv(result);
        return 0;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MOAT: doubly-dense SI-FC subnetwork extraction and inference"};
    app.set_config("--config", "", "Key-value config file with one [section] per subcommand");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);
    app.fallthrough();
    int workers = moat::default_workers();
    app.add_option("--workers", workers, "Worker threads (env MOAT_WORKERS)")->capture_default_str();

    SimulateCmd simulate;
    AssociateCmd associate;
    ExtractCmd extract;
    InferCmd infer;
    CcaCmd cca;
    RunCmd run;
    BenchmarkCmd benchmark;
    auto* c_sim = app.add_subcommand("simulate", "Generate a planted-subnetwork dataset");
    simulate.add(c_sim);
    auto* c_assoc = app.add_subcommand("associate", "Mass-univariate association scan");
    associate.add(c_assoc);
    auto* c_extract = app.add_subcommand("extract", "Extract subnetworks from a score matrix");
    extract.add(c_extract);
    auto* c_infer = app.add_subcommand("infer", "Extraction plus permutation inference");
    infer.add(c_infer);
    auto* c_cca = app.add_subcommand("cca", "Canonical correlations within given subnetworks");
    cca.add(c_cca);
    auto* c_run = app.add_subcommand("run", "Full pipeline with a single report");
    run.add(c_run);
    auto* c_bench = app.add_subcommand("benchmark", "Planted-subnetwork recovery benchmark");
    benchmark.add(c_bench);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }
    if (workers < 1) {
        std::cerr << "error: --workers must be >= 1\n";
        return kExitConfig;
    }

    std::string stage = "setup";
    std::string out_dir;
    try {
        if (c_sim->parsed()) return simulate.run();
        if (c_assoc->parsed()) return associate.run(workers);
        if (c_extract->parsed()) return extract.run(workers);
        if (c_infer->parsed()) return infer.run(workers);
        if (c_cca->parsed()) return cca.run();
        if (c_run->parsed()) {
            out_dir = run.out;
            return run.run(workers, run.resolved_ini(), stage);
        }
        if (c_bench->parsed()) return benchmark.run(workers);
    } catch (const moat::Error& e) {
        std::cerr << "error [" << stage << "]: " << e.what() << "\n";
        if (stage != "config" && stage != "setup") write_failure(out_dir, stage, e.what(), e.exit_code());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error [" << stage << "]: " << e.what() << "\n";
        if (stage != "config" && stage != "setup") write_failure(out_dir, stage, e.what(), 4);
        return 4;
    }
    return 0;
}
