#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "mixmech/discretize.hpp"
#include "mixmech/divergences.hpp"
#include "mixmech/experiments.hpp"
#include "mixmech/gmm.hpp"
#include "mixmech/langevin.hpp"
#include "mixmech/measure.hpp"
#include "mixmech/npmle.hpp"
#include "mixmech/polymer.hpp"
#include "mixmech/types.hpp"

namespace {

mixmech::MixingMeasure load_measure(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    nlohmann::json j;
    in >> j;
    return mixmech::MixingMeasure::from_json(j);
}

// "auto" or "lo1,hi1[,lo2,hi2,...]:spacing"
mixmech::GridSpec parse_grid(const std::string& text) {
    if (text == "auto") return mixmech::GridSpec::auto_grid();
    const auto colon = text.rfind(':');
    if (colon == std::string::npos)
        throw std::invalid_argument("grid: expected auto or lo1,hi1[,...]:spacing");
    return mixmech::GridSpec::explicit_grid(mixmech::parse_box(text.substr(0, colon)),
                                            std::stod(text.substr(colon + 1)));
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stod(tok));
    if (out.empty()) throw std::invalid_argument("expected a comma-separated list of numbers");
    return out;
}

void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

int run_fit(const std::string& data_path, const std::string& grid, const std::string& alg,
            double tol, double gap_tol, const std::string& theta, double tau, bool has_tau,
            const std::string& out_path) {
    mixmech::SolverConfig cfg;
    cfg.grid = parse_grid(grid);
    cfg.algorithm = mixmech::detail::algorithm_from_name(alg);
    cfg.rel_tol = tol;
    cfg.gap_tol = gap_tol;
    if (theta.empty() != !has_tau)
        throw std::invalid_argument("fit: --theta and --tau must be given together");
    if (!theta.empty()) cfg.restriction = mixmech::Restriction{mixmech::parse_box(theta), tau};
    const mixmech::Dataset data = mixmech::Dataset::read_csv(data_path);
    const mixmech::SolverResult res = mixmech::fit(data, cfg);
    const nlohmann::json out{{"measure", res.measure.to_json()},
                             {"loglik", res.loglik},
                             {"gap", res.gap},
                             {"iters", res.iters}};
    if (out_path.empty()) std::cout << out.dump(2) << "\n";
    else write_json(out, out_path);
    return 0;
}

int run_divergence(const std::string& f_path, const std::string& g_path,
                   const std::string& metric, const std::string& method, std::size_t samples,
                   std::uint64_t seed) {
    const mixmech::GmmDensity f(load_measure(f_path));
    const mixmech::GmmDensity g(load_measure(g_path));
    mixmech::DivergenceConfig cfg;
    if (method == "quad") cfg.method = mixmech::DivMethod::quadrature;
    else if (method == "mc") cfg.method = mixmech::DivMethod::monte_carlo;
    else throw std::invalid_argument("divergence: method must be quad or mc");
    cfg.n_samples = samples;
    cfg.seed = seed;
    mixmech::DivergenceEstimate est;
    if (metric == "h2") est = mixmech::hellinger_sq(f, g, cfg);
    else if (metric == "kl") est = mixmech::kl(f, g, cfg);
    else if (metric == "bc") est = mixmech::bhattacharyya(f, g, cfg);
    else if (metric == "tv") est = mixmech::tv(f, g, cfg);
    else throw std::invalid_argument("divergence: metric must be one of h2, kl, bc, tv");
    std::cout << est.to_json().dump(2) << "\n";
    return 0;
}

int run_langevin(const std::string& data_path, const std::string& fstar_path, double t, double dt,
                 std::uint64_t seed, const std::string& out_path) {
    const mixmech::Dataset data = mixmech::Dataset::read_csv(data_path);
    const mixmech::GmmDensity f_star(load_measure(fstar_path));
    mixmech::LangevinConfig cfg;
    cfg.t_final = t;
    cfg.dt = dt;
    cfg.seed = seed;
    mixmech::evolve(data, f_star, cfg).write_csv(out_path);
    return 0;
}

int run_polymer(std::size_t n, const std::string& t_text, std::size_t reps, std::uint64_t seed,
                const std::string& out_path) {
    const std::vector<double> t_list = parse_double_list(t_text);
    const mixmech::ChaosStats stats = mixmech::chaos_stats(n, t_list, reps, seed);
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << "n,t,mean_overlap,var_energy_over_n\n";
    char buf[160];
    for (const auto& s : stats.summary) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", s.n, s.t, s.mean_overlap,
                      s.var_energy_over_n);
        out << buf;
    }
    return 0;
}

int run_bracketing(const std::string& theta_text, double tau, double eps, std::size_t dim,
                   std::uint64_t seed, const std::string& out_path) {
    mixmech::ExperimentConfig cfg;
    cfg.experiment = "bracketing";
    cfg.d = dim;
    cfg.eps_list = {eps};
    cfg.master_seed = seed;
    cfg.solver.restriction = mixmech::Restriction{mixmech::parse_box(theta_text), tau};
    if (cfg.solver.restriction->theta.dim() != dim)
        throw std::invalid_argument("bracketing: --theta dimension does not match --dim");
    const mixmech::ExperimentReport rep = mixmech::run_experiment(cfg);
    if (!rep.rows.front().error.empty()) throw std::runtime_error(rep.rows.front().error);
    const auto& v = rep.rows.front().values;
    const nlohmann::json out{{"count", std::exp(v[1])},
                             {"log_count", v[1]},
                             {"coverage_worst_gap", v[2]},
                             {"predicted_bound", v[3]}};
    if (out_path.empty()) std::cout << out.dump(2) << "\n";
    else write_json(out, out_path);
    return 0;
}

int run_experiment_cmd(const std::string& name, const std::string& config_path,
                       const std::string& out_dir) {
    nlohmann::json j;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::runtime_error("cannot read " + config_path);
        in >> j;
    } else {
        j = nlohmann::json::object();
    }
    if (!j.contains("experiment")) j["experiment"] = name;
    else if (j.at("experiment") != name)
        throw std::invalid_argument("experiment: config names '" +
                                    j.at("experiment").get<std::string>() +
                                    "' but the command line says '" + name + "'");
    const mixmech::ExperimentConfig cfg = mixmech::ExperimentConfig::from_json(j);
    const mixmech::ExperimentReport rep = mixmech::run_experiment(cfg);
    mixmech::emit(rep, out_dir);
    for (const auto& c : rep.checks)
        std::cout << (c.at("pass").get<bool>() ? "[ok]   " : "[FAIL] ")
                  << c.at("name").get<std::string>() << " " << c.at("detail").get<std::string>()
                  << "\n";
    if (cfg.assert_trends && !rep.checks_passed) return 2;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gaussian location-mixture maximum likelihood toolkit"};
    app.require_subcommand(1);

    auto* fit = app.add_subcommand("fit", "fit a mixing measure to a dataset");
    std::string fit_data, fit_grid = "auto", fit_alg = "hybrid", fit_theta, fit_out;
    double fit_tol = 1e-8, fit_gap_tol = 1e-4, fit_tau = 0.0;
    fit->add_option("--data", fit_data, "dataset csv")->required();
    fit->add_option("--grid", fit_grid, "auto or lo1,hi1[,...]:spacing");
    fit->add_option("--alg", fit_alg, "em, vd, or hybrid");
    fit->add_option("--tol", fit_tol, "relative loglik tolerance");
    fit->add_option("--gap-tol", fit_gap_tol, "certificate gap tolerance");
    fit->add_option("--theta", fit_theta, "restriction box lo1,hi1[,...]");
    auto* tau_opt = fit->add_option("--tau", fit_tau, "minimum mass inside the restriction box");
    fit->add_option("--out", fit_out, "result json path (stdout when omitted)");

    auto* div = app.add_subcommand("divergence", "divergence between two mixture densities");
    std::string div_f, div_g, div_metric, div_method = "quad";
    std::size_t div_samples = 200000;
    std::uint64_t div_seed = 0;
    div->add_option("--f", div_f, "first measure json")->required();
    div->add_option("--g", div_g, "second measure json")->required();
    div->add_option("--metric", div_metric, "h2, kl, bc, or tv")->required();
    div->add_option("--method", div_method, "quad or mc");
    div->add_option("--samples", div_samples, "monte carlo sample count");
    div->add_option("--seed", div_seed, "monte carlo seed");

    auto* lan = app.add_subcommand("langevin", "diffuse a dataset along a stationary density");
    std::string lan_data, lan_fstar, lan_out;
    double lan_t = 0.0, lan_dt = 1e-3;
    std::uint64_t lan_seed = 0;
    lan->add_option("--data", lan_data, "input dataset csv")->required();
    lan->add_option("--fstar", lan_fstar, "stationary measure json")->required();
    lan->add_option("--t", lan_t, "diffusion time")->required();
    lan->add_option("--dt", lan_dt, "step size");
    lan->add_option("--seed", lan_seed, "noise seed");
    lan->add_option("--out", lan_out, "output dataset csv")->required();

    auto* pol = app.add_subcommand("polymer", "directed polymer ground-state chaos sweep");
    std::size_t pol_n = 400, pol_reps = 200;
    std::string pol_t = "0,0.01,0.05,0.2,1.0", pol_out;
    std::uint64_t pol_seed = 0;
    pol->add_option("--n", pol_n, "polymer length");
    pol->add_option("--t", pol_t, "comma-separated decorrelation times");
    pol->add_option("--reps", pol_reps, "environment replicates");
    pol->add_option("--seed", pol_seed, "environment seed");
    pol->add_option("--out", pol_out, "summary csv path")->required();

    auto* bra = app.add_subcommand("bracketing", "bracket-family size and coverage report");
    std::string bra_theta = "-1,1", bra_out;
    double bra_tau = 0.5, bra_eps = 0.3;
    std::size_t bra_dim = 1;
    std::uint64_t bra_seed = 1;
    bra->add_option("--theta", bra_theta, "support box lo1,hi1[,...]");
    bra->add_option("--tau", bra_tau, "minimum mass inside the box");
    bra->add_option("--eps", bra_eps, "target accuracy");
    bra->add_option("--dim", bra_dim, "dimension");
    bra->add_option("--seed", bra_seed, "coverage test seed");
    bra->add_option("--out", bra_out, "stats json path (stdout when omitted)");

    auto* exp = app.add_subcommand("experiment", "run a named experiment from a config");
    std::string exp_name, exp_config, exp_out = "results";
    exp->add_option("name", exp_name, "experiment name")->required();
    exp->add_option("--config", exp_config, "config json path");
    exp->add_option("--out-dir", exp_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*fit)
            return run_fit(fit_data, fit_grid, fit_alg, fit_tol, fit_gap_tol, fit_theta, fit_tau,
                           tau_opt->count() > 0, fit_out);
        if (*div) return run_divergence(div_f, div_g, div_metric, div_method, div_samples,
                                        div_seed);
        if (*lan) return run_langevin(lan_data, lan_fstar, lan_t, lan_dt, lan_seed, lan_out);
        if (*pol) return run_polymer(pol_n, pol_t, pol_reps, pol_seed, pol_out);
        if (*bra) return run_bracketing(bra_theta, bra_tau, bra_eps, bra_dim, bra_seed, bra_out);
        if (*exp) return run_experiment_cmd(exp_name, exp_config, exp_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
