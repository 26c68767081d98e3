#ifndef MIXMECH_EXPERIMENTS_HPP
#define MIXMECH_EXPERIMENTS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixmech/discretize.hpp"
#include "mixmech/divergences.hpp"
#include "mixmech/gmm.hpp"
#include "mixmech/langevin.hpp"
#include "mixmech/measure.hpp"
#include "mixmech/npmle.hpp"
#include "mixmech/parallel.hpp"
#include "mixmech/polymer.hpp"
#include "mixmech/rng.hpp"
#include "mixmech/stats.hpp"
#include "mixmech/types.hpp"

namespace mixmech {

inline constexpr const char* kVersion = "0.1.0";

inline MixingMeasure default_f_star(std::size_t d) {
    if (d == 1) return MixingMeasure(1, {-2.0, 2.0}, {0.5, 0.5});
    if (d == 2)
        return MixingMeasure(2, {-2.0, -2.0, -2.0, 2.0, 2.0, -2.0, 2.0, 2.0},
                             {0.25, 0.25, 0.25, 0.25});
    throw std::invalid_argument("experiments: no default source measure for d > 2");
}

// near-optimality budget per sample size: 0, a constant, or c / sqrt(n)
struct EpsRule {
    enum class Kind { zero, constant, over_sqrt_n } kind = Kind::zero;
    double value = 0.0;

    double eps_for(std::size_t n) const {
        switch (kind) {
            case Kind::zero: return 0.0;
            case Kind::constant: return value;
            default: return value / std::sqrt(static_cast<double>(n));
        }
    }

    static EpsRule from_json(const nlohmann::json& j) {
        EpsRule r;
        if (j.is_number()) {
            const double v = j.get<double>();
            if (v < 0.0) throw std::invalid_argument("eps_n: value must be >= 0");
            r.kind = v == 0.0 ? Kind::zero : Kind::constant;
            r.value = v;
            return r;
        }
        const std::string rule = j.at("rule").get<std::string>();
        if (rule == "zero") {
            r.kind = Kind::zero;
            return r;
        }
        r.value = j.at("value").get<double>();
        if (!(r.value > 0.0)) throw std::invalid_argument("eps_n: value must be > 0");
        if (rule == "constant") r.kind = Kind::constant;
        else if (rule == "c_over_sqrt_n") r.kind = Kind::over_sqrt_n;
        else throw std::invalid_argument("eps_n: unknown rule '" + rule + "'");
        return r;
    }

    nlohmann::json to_json() const {
        switch (kind) {
            case Kind::zero: return {{"rule", "zero"}};
            case Kind::constant: return {{"rule", "constant"}, {"value", value}};
            default: return {{"rule", "c_over_sqrt_n"}, {"value", value}};
        }
    }
};

namespace detail {

inline const std::vector<std::string>& known_experiments() {
    static const std::vector<std::string> names{"stability", "kl-risk",  "chaos-bc", "fluctuation",
                                                "moments",   "polymer",  "bracketing"};
    return names;
}

inline std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::em: return "em";
        case Algorithm::vertex_direction: return "vd";
        default: return "hybrid";
    }
}

inline Algorithm algorithm_from_name(const std::string& s) {
    if (s == "em") return Algorithm::em;
    if (s == "vd") return Algorithm::vertex_direction;
    if (s == "hybrid") return Algorithm::hybrid;
    throw std::invalid_argument("solver: unknown algorithm '" + s + "'");
}

inline nlohmann::json box_to_json(const Box& b) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t j = 0; j < b.dim(); ++j) {
        out.push_back(b.lo[j]);
        out.push_back(b.hi[j]);
    }
    return out;
}

inline Box box_from_json(const nlohmann::json& j) {
    const auto vals = j.get<std::vector<double>>();
    if (vals.empty() || vals.size() % 2 != 0)
        throw std::invalid_argument("box: expected [lo1, hi1, lo2, hi2, ...]");
    std::vector<double> lo, hi;
    for (std::size_t k = 0; k < vals.size(); k += 2) {
        lo.push_back(vals[k]);
        hi.push_back(vals[k + 1]);
    }
    return Box(std::move(lo), std::move(hi));
}

inline SolverConfig solver_from_json(const nlohmann::json& j) {
    SolverConfig cfg;
    if (j.contains("algorithm")) cfg.algorithm = algorithm_from_name(j.at("algorithm"));
    if (j.contains("max_iters")) cfg.max_iters = j.at("max_iters").get<std::size_t>();
    if (j.contains("rel_tol")) cfg.rel_tol = j.at("rel_tol").get<double>();
    if (j.contains("gap_tol")) cfg.gap_tol = j.at("gap_tol").get<double>();
    if (j.contains("grid") && !j.at("grid").is_string()) {
        const auto& g = j.at("grid");
        cfg.grid = GridSpec::explicit_grid(box_from_json(g.at("box")),
                                           g.at("spacing").get<double>());
    } else if (j.contains("grid") && j.at("grid").get<std::string>() != "auto") {
        throw std::invalid_argument("solver: grid must be \"auto\" or {box, spacing}");
    }
    if (j.contains("theta") != j.contains("tau"))
        throw std::invalid_argument("solver: theta and tau must be given together");
    if (j.contains("theta"))
        cfg.restriction = Restriction{box_from_json(j.at("theta")), j.at("tau").get<double>()};
    return cfg;
}

inline nlohmann::json solver_to_json(const SolverConfig& cfg) {
    nlohmann::json out{{"algorithm", algorithm_name(cfg.algorithm)},
                       {"max_iters", cfg.max_iters},
                       {"rel_tol", cfg.rel_tol},
                       {"gap_tol", cfg.gap_tol}};
    if (cfg.grid.automatic) out["grid"] = "auto";
    else out["grid"] = {{"box", box_to_json(cfg.grid.box)}, {"spacing", cfg.grid.spacing}};
    if (cfg.restriction) {
        out["theta"] = box_to_json(cfg.restriction->theta);
        out["tau"] = cfg.restriction->tau;
    }
    return out;
}

inline DivergenceConfig divergence_from_json(const nlohmann::json& j) {
    DivergenceConfig cfg;
    if (j.contains("method")) {
        const std::string m = j.at("method");
        if (m == "quad") cfg.method = DivMethod::quadrature;
        else if (m == "mc") cfg.method = DivMethod::monte_carlo;
        else throw std::invalid_argument("divergence: method must be quad or mc");
    }
    if (j.contains("n_samples")) cfg.n_samples = j.at("n_samples").get<std::size_t>();
    return cfg;
}

inline nlohmann::json divergence_to_json(const DivergenceConfig& cfg) {
    return {{"method", cfg.method == DivMethod::quadrature ? "quad" : "mc"},
            {"n_samples", cfg.n_samples}};
}

}  // namespace detail

struct ExperimentConfig {
    std::string experiment;
    std::optional<MixingMeasure> f_star;  // empty uses the d-specific default
    std::size_t d = 1;
    std::vector<std::size_t> n_list;
    std::size_t reps = 30;
    EpsRule eps_n;
    std::vector<double> t_list;
    std::vector<double> eps_list;  // bracketing accuracies
    std::uint64_t master_seed = 1;
    SolverConfig solver;
    DivergenceConfig divergence;
    bool assert_trends = false;

    MixingMeasure resolved_f_star() const { return f_star ? *f_star : default_f_star(d); }

    void validate() const {
        const auto& known = detail::known_experiments();
        if (std::find(known.begin(), known.end(), experiment) == known.end())
            throw std::invalid_argument("experiments: unknown experiment '" + experiment + "'");
        if (d < 1) throw std::invalid_argument("experiments: d must be >= 1");
        if (f_star && f_star->dim() != d)
            throw std::invalid_argument("experiments: f_star dimension does not match d");
        if (experiment == "bracketing") {
            if (eps_list.empty())
                throw std::invalid_argument("experiments: bracketing needs eps_list");
            for (double e : eps_list)
                if (!(e > 0.0) || !(e < 1.0))
                    throw std::invalid_argument("experiments: eps_list entries must be in (0, 1)");
            return;
        }
        if (n_list.empty()) throw std::invalid_argument("experiments: n_list must be nonempty");
        for (std::size_t i = 0; i + 1 < n_list.size(); ++i)
            if (n_list[i] >= n_list[i + 1])
                throw std::invalid_argument("experiments: n_list must be strictly increasing");
        if (reps < 2) throw std::invalid_argument("experiments: reps must be >= 2");
        if ((experiment == "fluctuation" || experiment == "moments") && reps < 50)
            throw std::invalid_argument("experiments: " + experiment + " needs reps >= 50");
        if ((experiment == "chaos-bc" || experiment == "polymer") && t_list.empty())
            throw std::invalid_argument("experiments: " + experiment + " needs t_list");
        for (double t : t_list)
            if (!(t >= 0.0)) throw std::invalid_argument("experiments: times must be >= 0");
        solver.validate();
    }

    static ExperimentConfig from_json(const nlohmann::json& j) {
        ExperimentConfig cfg;
        cfg.experiment = j.at("experiment").get<std::string>();
        if (j.contains("d")) cfg.d = j.at("d").get<std::size_t>();
        if (j.contains("f_star") && !(j.at("f_star").is_string() && j.at("f_star") == "default"))
            cfg.f_star = MixingMeasure::from_json(j.at("f_star"));
        if (j.contains("n_list")) cfg.n_list = j.at("n_list").get<std::vector<std::size_t>>();
        if (j.contains("reps")) cfg.reps = j.at("reps").get<std::size_t>();
        if (j.contains("eps_n")) cfg.eps_n = EpsRule::from_json(j.at("eps_n"));
        if (j.contains("t_list")) cfg.t_list = j.at("t_list").get<std::vector<double>>();
        if (j.contains("eps_list")) cfg.eps_list = j.at("eps_list").get<std::vector<double>>();
        if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
        if (j.contains("solver")) cfg.solver = detail::solver_from_json(j.at("solver"));
        if (j.contains("divergence"))
            cfg.divergence = detail::divergence_from_json(j.at("divergence"));
        if (j.contains("assert_trends")) cfg.assert_trends = j.at("assert_trends").get<bool>();

        if (cfg.n_list.empty()) {
            if (cfg.experiment == "stability" || cfg.experiment == "kl-risk")
                cfg.n_list = {100, 400, 1600, 6400};
            else if (cfg.experiment == "chaos-bc" || cfg.experiment == "moments")
                cfg.n_list = {200, 800, 3200};
            else if (cfg.experiment == "fluctuation") cfg.n_list = {200, 400, 800, 1600, 3200};
            else if (cfg.experiment == "polymer") cfg.n_list = {50, 400};
            else cfg.n_list = {1};
        }
        if (cfg.t_list.empty()) {
            if (cfg.experiment == "chaos-bc") cfg.t_list = {0.1};
            else if (cfg.experiment == "polymer") cfg.t_list = {0.0, 0.05, 50.0};
        }
        if (!j.contains("reps")) {
            if (cfg.experiment == "fluctuation") cfg.reps = 200;
            else if (cfg.experiment == "moments") cfg.reps = 100;
        }
        if (cfg.eps_list.empty() && cfg.experiment == "bracketing") cfg.eps_list = {0.3, 0.1};
        cfg.validate();
        return cfg;
    }

    nlohmann::json to_json() const {
        nlohmann::json out{{"experiment", experiment},
                           {"d", d},
                           {"n_list", n_list},
                           {"reps", reps},
                           {"eps_n", eps_n.to_json()},
                           {"master_seed", master_seed},
                           {"solver", detail::solver_to_json(solver)},
                           {"divergence", detail::divergence_to_json(divergence)},
                           {"assert_trends", assert_trends}};
        out["f_star"] = f_star ? f_star->to_json() : nlohmann::json("default");
        if (!t_list.empty()) out["t_list"] = t_list;
        if (!eps_list.empty()) out["eps_list"] = eps_list;
        return out;
    }
};

struct ExperimentRow {
    std::size_t n = 0;
    double t = 0.0;
    std::size_t rep = 0;
    std::uint64_t seed = 0;
    std::vector<double> values;
    std::string error;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<std::string> value_columns;
    std::vector<ExperimentRow> rows;
    nlohmann::json summary = nlohmann::json::object();
    nlohmann::json checks = nlohmann::json::array();
    bool checks_passed = true;
};

namespace detail {

inline std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void add_check(ExperimentReport& rep, const std::string& name, bool pass,
                      const std::string& detail_text) {
    rep.checks.push_back({{"name", name}, {"pass", pass}, {"detail", detail_text}});
    rep.checks_passed = rep.checks_passed && pass;
}

// (1/n) sum_i |grad log f(X_i)|^2, the discrete Dirichlet energy of the fit
inline double mean_grad_sq(const GmmDensity& f, const Dataset& data) {
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Point g = f.grad_log_density(data.point(i));
        for (double v : g) s += v * v;
    }
    return s / static_cast<double>(data.size());
}

inline bool strictly_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 0; i + 1 < v.size(); ++i)
        if (!(v[i + 1] < v[i])) return false;
    return true;
}

inline std::string join_g(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_g(v[i]);
    return s;
}

// per-replication seeds: one base stream per (n index, t index, rep)
inline std::uint64_t rep_seed(std::uint64_t master, std::size_t n_idx, std::size_t t_idx,
                              std::size_t rep) {
    return derive_seed(derive_seed(master, n_idx, t_idx), rep);
}

// collect one value column from clean rows in a cell
inline std::vector<double> cell_values(const ExperimentReport& rep, std::size_t col,
                                       std::size_t n, double t) {
    std::vector<double> out;
    for (const auto& row : rep.rows)
        if (row.error.empty() && row.n == n && row.t == t) out.push_back(row.values[col]);
    return out;
}

}  // namespace detail

inline ExperimentReport run_stability(const ExperimentConfig& cfg) {
    ExperimentReport rep;
    rep.config = cfg;
    rep.value_columns = {"eps_n", "h2", "gap"};
    const GmmDensity source(cfg.resolved_f_star());
    const std::size_t cells = cfg.n_list.size();
    rep.rows.resize(cells * cfg.reps);
    parallel_for(rep.rows.size(), [&](std::size_t task) {
        const std::size_t n_idx = task / cfg.reps, r = task % cfg.reps;
        const std::size_t n = cfg.n_list[n_idx];
        ExperimentRow& row = rep.rows[task];
        row.n = n;
        row.rep = r;
        row.seed = detail::rep_seed(cfg.master_seed, n_idx, 0, r);
        try {
            const double eps = cfg.eps_n.eps_for(n);
            const Dataset data = source.sample(n, derive_seed(row.seed, 1));
            SolverResult res = fit(data, cfg.solver);
            double gap = res.gap;
            if (eps > 0.0) {
                SolverResult moved = near_optimal_perturb(res, data, eps, derive_seed(row.seed, 2));
                gap += moved.gap;
                res.measure = std::move(moved.measure);
            }
            DivergenceConfig div = cfg.divergence;
            div.seed = derive_seed(row.seed, 3);
            const double h2 = hellinger_sq(source, GmmDensity(res.measure), div).value;
            row.values = {eps, h2, gap};
        } catch (const std::exception& e) {
            row.values.assign(rep.value_columns.size(), std::numeric_limits<double>::quiet_NaN());
            row.error = "n=" + std::to_string(n) + ",rep=" + std::to_string(r) + ": " + e.what();
        }
    });

    std::vector<double> log_n, log_median, medians, ratios, n_as_double;
    nlohmann::json per_n = nlohmann::json::array();
    for (std::size_t i = 0; i < cells; ++i) {
        const std::size_t n = cfg.n_list[i];
        const auto h2 = detail::cell_values(rep, 1, n, 0.0);
        const double med = h2.empty() ? std::numeric_limits<double>::quiet_NaN() : median(h2);
        const double envelope =
            std::pow(std::log(static_cast<double>(n)), static_cast<double>(cfg.d) + 1.0) /
            static_cast<double>(n);
        medians.push_back(med);
        ratios.push_back(med / envelope);
        n_as_double.push_back(static_cast<double>(n));
        log_n.push_back(std::log(static_cast<double>(n)));
        log_median.push_back(std::log(med));
        per_n.push_back({{"n", n},
                         {"eps_n", cfg.eps_n.eps_for(n)},
                         {"median_h2", med},
                         {"mean_h2", h2.empty() ? 0.0 : mean(h2)},
                         {"se_h2", h2.size() < 2 ? 0.0 : std_error(h2)},
                         {"ratio_envelope", med / envelope}});
    }
    rep.summary["per_n"] = per_n;
    if (cells >= 2) {
        rep.summary["loglog_slope_median_h2"] = ols_slope(log_n, log_median);
        const double tau = kendall_tau(n_as_double, ratios);
        rep.summary["ratio_kendall_tau"] = tau;
        detail::add_check(rep, "median_h2_decreasing", detail::strictly_decreasing(medians),
                          detail::join_g(medians));
        detail::add_check(rep, "h2_ratio_kendall_nonpositive", tau <= 0.0, detail::fmt_g(tau));
    }
    return rep;
}

inline ExperimentReport run_kl_risk(const ExperimentConfig& cfg) {
    ExperimentReport rep;
    rep.config = cfg;
    rep.value_columns = {"eps_n", "kl", "kl_se", "h2", "gap"};
    const GmmDensity source(cfg.resolved_f_star());
    const std::size_t cells = cfg.n_list.size();
    rep.rows.resize(cells * cfg.reps);
    parallel_for(rep.rows.size(), [&](std::size_t task) {
        const std::size_t n_idx = task / cfg.reps, r = task % cfg.reps;
        const std::size_t n = cfg.n_list[n_idx];
        ExperimentRow& row = rep.rows[task];
        row.n = n;
        row.rep = r;
        row.seed = detail::rep_seed(cfg.master_seed, n_idx, 0, r);
        try {
            const double eps = cfg.eps_n.eps_for(n);
            const Dataset data = source.sample(n, derive_seed(row.seed, 1));
            SolverResult res = fit(data, cfg.solver);
            double gap = res.gap;
            if (eps > 0.0) {
                SolverResult moved = near_optimal_perturb(res, data, eps, derive_seed(row.seed, 2));
                gap += moved.gap;
                res.measure = std::move(moved.measure);
            }
            const GmmDensity fitted(res.measure);
            DivergenceConfig mc = cfg.divergence;
            mc.method = DivMethod::monte_carlo;
            mc.seed = derive_seed(row.seed, 3);
            const DivergenceEstimate k = kl(source, fitted, mc);
            DivergenceConfig quad = cfg.divergence;
            quad.method = DivMethod::quadrature;
            const double h2 = hellinger_sq(source, fitted, quad).value;
            row.values = {eps, k.value, k.std_error, h2, gap};
        } catch (const std::exception& e) {
            row.values.assign(rep.value_columns.size(), std::numeric_limits<double>::quiet_NaN());
            row.error = "n=" + std::to_string(n) + ",rep=" + std::to_string(r) + ": " + e.what();
        }
    });

    std::vector<double> log_n, log_median_kl, mean_kls;
    std::size_t kl_h2_violations = 0, clean_rows = 0;
    for (const auto& row : rep.rows)
        if (row.error.empty()) {
            ++clean_rows;
            if (row.values[1] < row.values[3] - 4.0 * row.values[2]) ++kl_h2_violations;
        }
    nlohmann::json per_n = nlohmann::json::array();
    for (std::size_t i = 0; i < cells; ++i) {
        const std::size_t n = cfg.n_list[i];
        const auto kls = detail::cell_values(rep, 1, n, 0.0);
        const auto h2s = detail::cell_values(rep, 3, n, 0.0);
        const double med = kls.empty() ? std::numeric_limits<double>::quiet_NaN() : median(kls);
        const double mkl = kls.empty() ? std::numeric_limits<double>::quiet_NaN() : mean(kls);
        mean_kls.push_back(mkl);
        log_n.push_back(std::log(static_cast<double>(n)));
        log_median_kl.push_back(std::log(med));
        nlohmann::json entry{{"n", n},
                             {"median_kl", med},
                             {"mean_kl", mkl},
                             {"median_h2", h2s.empty() ? 0.0 : median(h2s)}};
        if (cfg.solver.restriction)
            entry["eps_plus_root_n"] =
                cfg.eps_n.eps_for(n) + 1.0 / std::sqrt(static_cast<double>(n));
        per_n.push_back(entry);
    }
    rep.summary["per_n"] = per_n;
    rep.summary["kl_vs_h2_violations"] = kl_h2_violations;
    detail::add_check(rep, "kl_above_h2_rowwise", clean_rows > 0 && kl_h2_violations == 0,
                      std::to_string(kl_h2_violations) + " of " + std::to_string(clean_rows));
    if (cells >= 2) {
        const double slope = ols_slope(log_n, log_median_kl);
        rep.summary["loglog_slope_median_kl"] = slope;
        detail::add_check(rep, "kl_slope_in_band", slope >= -1.35 && slope <= -0.6,
                          detail::fmt_g(slope));
        if (cfg.solver.restriction)
            detail::add_check(rep, "restricted_kl_contraction",
                              mean_kls.front() >= 3.0 * mean_kls.back(),
                              detail::join_g(mean_kls));
    }
    return rep;
}

inline ExperimentReport run_chaos_bc(const ExperimentConfig& cfg) {
    ExperimentReport rep;
    rep.config = cfg;
    rep.value_columns = {"bc", "h2_pair", "gap_base", "gap_t"};
    const GmmDensity source(cfg.resolved_f_star());
    const std::size_t nt = cfg.t_list.size();
    rep.rows.resize(cfg.n_list.size() * nt * cfg.reps);
    parallel_for(rep.rows.size(), [&](std::size_t task) {
        const std::size_t n_idx = task / (nt * cfg.reps);
        const std::size_t t_idx = (task / cfg.reps) % nt;
        const std::size_t r = task % cfg.reps;
        const std::size_t n = cfg.n_list[n_idx];
        const double t = cfg.t_list[t_idx];
        ExperimentRow& row = rep.rows[task];
        row.n = n;
        row.t = t;
        row.rep = r;
        row.seed = detail::rep_seed(cfg.master_seed, n_idx, t_idx, r);
        try {
            const Dataset data = source.sample(n, derive_seed(row.seed, 1));
            const SolverResult base = fit(data, cfg.solver);
            LangevinConfig lcfg;
            lcfg.t_final = t;
            lcfg.seed = derive_seed(row.seed, 4);
            const Dataset moved = evolve(data, source, lcfg);
            const SolverResult after = fit(moved, cfg.solver);
            DivergenceConfig div = cfg.divergence;
            div.method = DivMethod::quadrature;
            const GmmDensity fa(base.measure), fb(after.measure);
            row.values = {bhattacharyya(fa, fb, div).value, hellinger_sq(fa, fb, div).value,
                          base.gap, after.gap};
        } catch (const std::exception& e) {
            row.values.assign(rep.value_columns.size(), std::numeric_limits<double>::quiet_NaN());
            row.error = "n=" + std::to_string(n) + ",t=" + detail::fmt_g(t) +
                        ",rep=" + std::to_string(r) + ": " + e.what();
        }
    });

    nlohmann::json per_cell = nlohmann::json::array();
    for (std::size_t i = 0; i < cfg.n_list.size(); ++i)
        for (std::size_t ti = 0; ti < nt; ++ti) {
            const std::size_t n = cfg.n_list[i];
            const double t = cfg.t_list[ti];
            auto bc = detail::cell_values(rep, 0, n, t);
            for (double& v : bc) v = 1.0 - v;
            per_cell.push_back(
                {{"n", n},
                 {"t", t},
                 {"mean_one_minus_bc", bc.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                  : mean(bc)},
                 {"se_one_minus_bc", bc.size() < 2 ? 0.0 : std_error(bc)}});
        }
    rep.summary["per_cell"] = per_cell;
    double t_probe = -1.0;
    for (double t : cfg.t_list)
        if (t > 0.0 && (t_probe < 0.0 || t < t_probe)) t_probe = t;
    if (t_probe > 0.0 && cfg.n_list.size() >= 2) {
        std::vector<double> by_n;
        for (std::size_t i = 0; i < cfg.n_list.size(); ++i) {
            auto bc = detail::cell_values(rep, 0, cfg.n_list[i], t_probe);
            for (double& v : bc) v = 1.0 - v;
            by_n.push_back(bc.empty() ? std::numeric_limits<double>::quiet_NaN() : mean(bc));
        }
        detail::add_check(rep, "chaos_decreasing_in_n", detail::strictly_decreasing(by_n),
                          detail::join_g(by_n));
    }
    return rep;
}

inline ExperimentReport run_fluctuation(const ExperimentConfig& cfg) {
    ExperimentReport rep;
    rep.config = cfg;
    rep.value_columns = {"loglik_hat", "loglik_star", "grad_norm_sq", "gap"};
    const GmmDensity source(cfg.resolved_f_star());
    const std::size_t cells = cfg.n_list.size();
    rep.rows.resize(cells * cfg.reps);
    parallel_for(rep.rows.size(), [&](std::size_t task) {
        const std::size_t n_idx = task / cfg.reps, r = task % cfg.reps;
        const std::size_t n = cfg.n_list[n_idx];
        ExperimentRow& row = rep.rows[task];
        row.n = n;
        row.rep = r;
        row.seed = detail::rep_seed(cfg.master_seed, n_idx, 0, r);
        try {
            const Dataset data = source.sample(n, derive_seed(row.seed, 1));
            const SolverResult res = fit(data, cfg.solver);
            const GmmDensity fitted(res.measure);
            row.values = {res.loglik, loglik(source, data), detail::mean_grad_sq(fitted, data),
                          res.gap};
        } catch (const std::exception& e) {
            row.values.assign(rep.value_columns.size(), std::numeric_limits<double>::quiet_NaN());
            row.error = "n=" + std::to_string(n) + ",rep=" + std::to_string(r) + ": " + e.what();
        }
    });

    std::vector<double> n_as_double, ratios;
    nlohmann::json per_n = nlohmann::json::array();
    bool ratios_in_band = true;
    for (std::size_t i = 0; i < cells; ++i) {
        const std::size_t n = cfg.n_list[i];
        const auto lhat = detail::cell_values(rep, 0, n, 0.0);
        const auto grads = detail::cell_values(rep, 2, n, 0.0);
        const double n_var = lhat.size() < 2 ? std::numeric_limits<double>::quiet_NaN()
                                             : static_cast<double>(n) * variance(lhat);
        const double mg = grads.empty() ? std::numeric_limits<double>::quiet_NaN() : mean(grads);
        const double ratio = n_var / mg;
        ratios_in_band = ratios_in_band && ratio >= 0.02 && ratio <= 50.0;
        n_as_double.push_back(static_cast<double>(n));
        ratios.push_back(ratio);
        per_n.push_back({{"n", n},
                         {"n_var_loglik", n_var},
                         {"mean_grad_norm_sq", mg},
                         {"ratio", ratio}});
    }
    rep.summary["per_n"] = per_n;
    detail::add_check(rep, "ratio_in_band", ratios_in_band, detail::join_g(ratios));
    if (cells >= 2) {
        const double tau = kendall_tau(n_as_double, ratios);
        rep.summary["ratio_kendall_tau"] = tau;
        detail::add_check(rep, "ratio_kendall_small", std::fabs(tau) <= 0.6, detail::fmt_g(tau));
    }

    // calibration against a case with a closed-form answer: for the standard
    // gaussian source n Var(L_n) = Var(log phi(X)) = 1/2
    {
        const GmmDensity point_source(MixingMeasure::delta(Point(1, 0.0)));
        const std::size_t sanity_n = 1000, sanity_reps = 200;
        std::vector<double> ll(sanity_reps);
        for (std::size_t r = 0; r < sanity_reps; ++r) {
            const Dataset data =
                point_source.sample(sanity_n, derive_seed(cfg.master_seed, 0xf5a7, r));
            ll[r] = loglik(point_source, data);
        }
        const double v = static_cast<double>(sanity_n) * variance(ll);
        rep.summary["n_var_loglik_fstar"] = v;
        detail::add_check(rep, "fstar_variance_sanity", v >= 0.425 && v <= 0.575,
                          detail::fmt_g(v));
    }
    return rep;
}

inline ExperimentReport run_moments(const ExperimentConfig& cfg) {
    ExperimentReport rep;
    rep.config = cfg;
    rep.value_columns = {"loglik_hat", "loglik_star", "gap"};
    const GmmDensity source(cfg.resolved_f_star());
    const std::size_t cells = cfg.n_list.size();
    rep.rows.resize(cells * cfg.reps);
    parallel_for(rep.rows.size(), [&](std::size_t task) {
        const std::size_t n_idx = task / cfg.reps, r = task % cfg.reps;
        const std::size_t n = cfg.n_list[n_idx];
        ExperimentRow& row = rep.rows[task];
        row.n = n;
        row.rep = r;
        row.seed = detail::rep_seed(cfg.master_seed, n_idx, 0, r);
        try {
            const Dataset data = source.sample(n, derive_seed(row.seed, 1));
            const SolverResult res = fit(data, cfg.solver);
            row.values = {res.loglik, loglik(source, data), res.gap};
        } catch (const std::exception& e) {
            row.values.assign(rep.value_columns.size(), std::numeric_limits<double>::quiet_NaN());
            row.error = "n=" + std::to_string(n) + ",rep=" + std::to_string(r) + ": " + e.what();
        }
    });

    std::vector<double> scaled_abs;
    nlohmann::json per_n = nlohmann::json::array();
    for (std::size_t i = 0; i < cells; ++i) {
        const std::size_t n = cfg.n_list[i];
        const auto lhat = detail::cell_values(rep, 0, n, 0.0);
        const auto lstar = detail::cell_values(rep, 1, n, 0.0);
        std::vector<double> abs_diff(lhat.size()), sq_diff(lhat.size());
        for (std::size_t r = 0; r < lhat.size(); ++r) {
            const double diff = lhat[r] - lstar[r];
            abs_diff[r] = std::sqrt(static_cast<double>(n)) * std::fabs(diff);
            sq_diff[r] = static_cast<double>(n) * diff * diff;
        }
        const double ma =
            abs_diff.empty() ? std::numeric_limits<double>::quiet_NaN() : mean(abs_diff);
        scaled_abs.push_back(ma);
        per_n.push_back({{"n", n},
                         {"mean_sqrt_n_absdiff", ma},
                         {"mean_n_sqdiff", sq_diff.empty()
                                               ? std::numeric_limits<double>::quiet_NaN()
                                               : mean(sq_diff)}});
    }
    rep.summary["per_n"] = per_n;
    if (cells >= 2)
        detail::add_check(rep, "rescaled_absdiff_decreasing",
                          detail::strictly_decreasing(scaled_abs), detail::join_g(scaled_abs));
    return rep;
}

inline ExperimentReport run_polymer(const ExperimentConfig& cfg) {
    ExperimentReport rep;
    rep.config = cfg;
    rep.value_columns = {"overlap", "energy", "energy_t"};
    nlohmann::json per_cell = nlohmann::json::array();
    std::vector<double> var_by_n;
    std::vector<std::vector<double>> overlap_by_t(cfg.t_list.size());
    for (std::size_t i = 0; i < cfg.n_list.size(); ++i) {
        const std::size_t n = cfg.n_list[i];
        const ChaosStats stats =
            chaos_stats(n, cfg.t_list, cfg.reps, derive_seed(cfg.master_seed, i));
        for (const auto& r : stats.rows) {
            ExperimentRow row;
            row.n = r.n;
            row.t = r.t;
            row.rep = r.rep;
            row.seed = r.seed;
            row.values = {r.overlap, r.energy, r.energy_t};
            rep.rows.push_back(std::move(row));
        }
        for (std::size_t ti = 0; ti < cfg.t_list.size(); ++ti) {
            const auto& s = stats.summary[ti];
            per_cell.push_back({{"n", s.n},
                                {"t", s.t},
                                {"mean_overlap", s.mean_overlap},
                                {"var_energy_over_n", s.var_energy_over_n}});
            overlap_by_t[ti].push_back(s.mean_overlap);
        }
        var_by_n.push_back(stats.summary.front().var_energy_over_n);
    }
    rep.summary["per_cell"] = per_cell;
    for (std::size_t ti = 0; ti < cfg.t_list.size(); ++ti)
        if (cfg.t_list[ti] == 0.0) {
            bool all_one = true;
            for (double v : overlap_by_t[ti]) all_one = all_one && v == 1.0;
            detail::add_check(rep, "overlap_one_at_t0", all_one,
                              detail::join_g(overlap_by_t[ti]));
        }
    if (cfg.n_list.size() >= 2)
        detail::add_check(rep, "var_over_n_decreasing", detail::strictly_decreasing(var_by_n),
                          detail::join_g(var_by_n));
    double t_lo = -1.0, t_hi = -1.0;
    std::size_t i_lo = 0, i_hi = 0;
    for (std::size_t ti = 0; ti < cfg.t_list.size(); ++ti)
        if (cfg.t_list[ti] > 0.0) {
            if (t_lo < 0.0 || cfg.t_list[ti] < t_lo) {
                t_lo = cfg.t_list[ti];
                i_lo = ti;
            }
            if (cfg.t_list[ti] > t_hi) {
                t_hi = cfg.t_list[ti];
                i_hi = ti;
            }
        }
    if (t_lo > 0.0 && t_hi > t_lo) {
        bool ok = true;
        for (std::size_t i = 0; i < cfg.n_list.size(); ++i)
            ok = ok && overlap_by_t[i_hi][i] < overlap_by_t[i_lo][i];
        detail::add_check(rep, "overlap_decreasing_in_t", ok,
                          detail::join_g(overlap_by_t[i_lo]) + " vs " +
                              detail::join_g(overlap_by_t[i_hi]));
    }
    return rep;
}

namespace detail {

// random test density for coverage runs: a handful of atoms around theta with
// comparable weights and at least tau mass inside
inline MixingMeasure random_coverage_measure(const Box& theta, double tau, std::size_t max_atoms,
                                             std::uint64_t seed) {
    const std::size_t d = theta.dim();
    Rng rng(seed);
    const std::size_t k =
        std::min<std::size_t>(max_atoms, 3 + static_cast<std::size_t>(rng.uniform() * 5.0));
    std::vector<double> atoms;
    std::vector<double> w;
    std::vector<char> inside(k);
    for (std::size_t a = 0; a < k; ++a) {
        inside[a] = a < (k + 1) / 2;
        for (std::size_t j = 0; j < d; ++j) {
            if (inside[a])
                atoms.push_back(theta.lo[j] + (theta.hi[j] - theta.lo[j]) * rng.uniform());
            else {
                const double mag = 1.0 + rng.uniform();
                atoms.push_back(rng.uniform() < 0.5 ? -mag : mag);
            }
        }
        w.push_back(0.8 + 0.4 * rng.uniform());
    }
    double s = 0.0;
    for (double v : w) s += v;
    for (double& v : w) v /= s;
    mixmech::detail::project_restriction(w, inside, tau);
    return MixingMeasure(d, atoms, w);
}

}  // namespace detail

inline ExperimentReport run_bracketing(const ExperimentConfig& cfg) {
    ExperimentReport rep;
    rep.config = cfg;
    rep.value_columns = {"eps", "log_count", "coverage_worst_gap", "predicted_bound"};
    Box theta(std::vector<double>(cfg.d, -1.0), std::vector<double>(cfg.d, 1.0));
    double tau = 0.5;
    if (cfg.solver.restriction) {
        theta = cfg.solver.restriction->theta;
        tau = cfg.solver.restriction->tau;
    }
    nlohmann::json per_eps = nlohmann::json::array();
    bool counts_ok = true, coverage_ok = true;
    for (std::size_t ei = 0; ei < cfg.eps_list.size(); ++ei) {
        const double eps = cfg.eps_list[ei];
        ExperimentRow row;
        row.n = 0;
        row.rep = ei;
        row.seed = derive_seed(cfg.master_seed, 0xb4a0, ei);
        try {
            const DiscretizeConfig dcfg = DiscretizeConfig::desk(eps, cfg.d);
            const BracketFamily fam = build_bracket_family(theta, tau, dcfg);
            double worst = 0.0;
            for (std::size_t k = 0; k < 20; ++k) {
                const MixingMeasure f = detail::random_coverage_measure(
                    theta, tau, fam.m + 1, derive_seed(row.seed, k));
                worst = std::max(worst, cover_with_member(GmmDensity(f), theta, dcfg).gap);
            }
            const double bound = predicted_log_count_bound(eps, cfg.d);
            row.values = {eps, fam.log_count, worst, bound};
            counts_ok = counts_ok && fam.log_count <= bound + 1e-9;
            coverage_ok = coverage_ok && worst <= kCoverageC * eps;
            per_eps.push_back({{"eps", eps},
                               {"log_count", fam.log_count},
                               {"coverage_worst_gap", worst},
                               {"predicted_bound", bound},
                               {"m", fam.m},
                               {"lattice_points", fam.per_axis_points},
                               {"weight_levels", fam.weight_levels}});
        } catch (const std::exception& e) {
            row.values.assign(rep.value_columns.size(), std::numeric_limits<double>::quiet_NaN());
            row.error = "eps=" + detail::fmt_g(eps) + ": " + e.what();
        }
        rep.rows.push_back(std::move(row));
    }
    rep.summary["per_eps"] = per_eps;
    rep.summary["envelope_D"] = entropy_envelope_D();
    rep.summary["coverage_slack_constant"] = kCoverageC;
    detail::add_check(rep, "log_count_within_envelope", counts_ok, "");
    detail::add_check(rep, "coverage_within_slack", coverage_ok, "");
    return rep;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.experiment == "stability") return run_stability(cfg);
    if (cfg.experiment == "kl-risk") return run_kl_risk(cfg);
    if (cfg.experiment == "chaos-bc") return run_chaos_bc(cfg);
    if (cfg.experiment == "fluctuation") return run_fluctuation(cfg);
    if (cfg.experiment == "moments") return run_moments(cfg);
    if (cfg.experiment == "polymer") return run_polymer(cfg);
    return run_bracketing(cfg);
}

// rows.csv plus summary.json under dir; reruns with the same config are
// byte-identical
inline void emit(const ExperimentReport& rep, const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream csv(std::filesystem::path(dir) / "rows.csv");
        if (!csv) throw std::runtime_error("emit: cannot write rows.csv under " + dir);
        csv << "experiment,n,d,t,rep,seed";
        for (const auto& c : rep.value_columns) csv << "," << c;
        csv << ",error\n";
        for (const auto& row : rep.rows) {
            csv << rep.config.experiment << "," << row.n << "," << rep.config.d << ","
                << detail::fmt_g(row.t) << "," << row.rep << "," << row.seed;
            for (double v : row.values) csv << "," << detail::fmt_g(v);
            std::string err = row.error;
            for (char& c : err)
                if (c == ',' || c == '\n' || c == '\r') c = ';';
            csv << "," << err << "\n";
        }
    }
    {
        nlohmann::json out;
        out["config"] = rep.config.to_json();
        out["version"] = kVersion;
        out["summary"] = rep.summary;
        out["checks"] = rep.checks;
        out["checks_passed"] = rep.checks_passed;
        std::ofstream js(std::filesystem::path(dir) / "summary.json");
        if (!js) throw std::runtime_error("emit: cannot write summary.json under " + dir);
        js << out.dump(2) << "\n";
    }
}

}  // namespace mixmech

#endif
