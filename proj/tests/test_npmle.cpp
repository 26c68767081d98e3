#include "catch_amalgamated.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mixmech/gmm.hpp"
#include "mixmech/measure.hpp"
#include "mixmech/npmle.hpp"
#include "mixmech/rng.hpp"

using namespace mixmech;

namespace {

Dataset two_spike_sample(std::size_t n, std::uint64_t seed) {
    return GmmDensity(MixingMeasure::uniform(1, {-2.0, 2.0})).sample(n, seed);
}

}  // namespace

TEST_CASE("automatic grid covers the sample range at the documented resolution") {
    const Dataset data = two_spike_sample(100, 3);
    const AtomGrid grid = detail::default_grid(data);
    REQUIRE(grid.dim == 1);
    REQUIRE(grid.size() == 100);  // ceil(10 sqrt(n)) capped at 2000

    double lo = data.point(0)[0], hi = lo;
    for (std::size_t i = 0; i < data.size(); ++i) {
        lo = std::min(lo, data.point(i)[0]);
        hi = std::max(hi, data.point(i)[0]);
    }
    REQUIRE(grid.atom(0)[0] == Catch::Approx(lo - 1.0).margin(1e-12));
    REQUIRE(grid.atom(grid.size() - 1)[0] == Catch::Approx(hi + 1.0).margin(1e-9));
}

TEST_CASE("explicit grid enumerates the box at the requested spacing") {
    const AtomGrid grid =
        detail::explicit_grid(GridSpec::explicit_grid(parse_box("-3,3"), 0.5), 1);
    REQUIRE(grid.size() == 13);
    REQUIRE(grid.atom(0)[0] == -3.0);
    REQUIRE(grid.atom(12)[0] == Catch::Approx(3.0).margin(1e-12));
    REQUIRE(grid.spacing[0] == 0.5);

    const AtomGrid g2 =
        detail::explicit_grid(GridSpec::explicit_grid(parse_box("0,1,0,1"), 0.5), 2);
    REQUIRE(g2.size() == 9);
}

TEST_CASE("automatic grids reject dimensions above two") {
    const GmmDensity f(MixingMeasure::delta(Point{0.0, 0.0, 0.0}));
    const Dataset data = f.sample(20, 1);
    SolverConfig cfg;
    REQUIRE_THROWS_AS(fit(data, cfg), std::invalid_argument);
}

TEST_CASE("single em step matches the closed-form posterior reweighting") {
    // one observation at x = 1 under atoms {-1, +1}: the +1 atom picks up
    // weight 1 / (1 + e^{-2})
    const MixingMeasure mu = MixingMeasure::uniform(1, {-1.0, 1.0});
    const Dataset data(1, {1.0}, 0, "inline");
    const MixingMeasure next = em_step(mu, data);
    REQUIRE(next.weight(1) == Catch::Approx(0.8807970779778823).epsilon(1e-14));
    REQUIRE(next.weight(0) + next.weight(1) == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("em sweeps never decrease the log-likelihood") {
    const Dataset data = two_spike_sample(150, 7);
    SolverConfig cfg;
    cfg.algorithm = Algorithm::em;
    cfg.max_iters = 60;
    const SolverResult res = fit(data, cfg);
    REQUIRE(res.trace.size() >= 2);
    for (std::size_t i = 1; i < res.trace.size(); ++i)
        REQUIRE(res.trace[i] >= res.trace[i - 1] - 1e-12);
    REQUIRE(res.loglik == Catch::Approx(loglik(res.measure, data)).margin(1e-12));
}

TEST_CASE("certificate gap bounds every reweighting of the fitted support") {
    const Dataset data = two_spike_sample(120, 11);
    SolverConfig cfg;
    cfg.algorithm = Algorithm::em;
    cfg.max_iters = 40;   // intentionally early stop so the gap is not tiny
    cfg.gap_tol = 1e-12;  // and the loop does not exit on the gap
    const SolverResult res = fit(data, cfg);

    const std::size_t k = res.measure.size();
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        // Dirichlet(1) reweighting via normalized exponentials
        std::vector<double> w(k);
        double s = 0.0;
        for (double& v : w) {
            v = -std::log(rng.uniform());
            s += v;
        }
        for (double& v : w) v /= s;
        const MixingMeasure other(1, res.measure.atoms_flat(), std::move(w));
        REQUIRE(loglik(other, data) <= res.loglik + res.gap + 1e-9);
    }
}

TEST_CASE("a single observation is fitted by a point mass at the observation") {
    const Dataset data(1, {0.3}, 0, "inline");
    SolverConfig cfg;
    cfg.grid = GridSpec::explicit_grid(parse_box("-2,2"), 0.25);
    cfg.algorithm = Algorithm::hybrid;
    const SolverResult res = fit(data, cfg);

    double best = 1e9;
    for (std::size_t j = 0; j < res.measure.size(); ++j)
        best = std::min(best, std::fabs(res.measure.atom(j)[0] - 0.3));
    REQUIRE(best <= 0.25);
    // optimum is -log sqrt(2 pi); a spacing-limited atom loses at most spacing^2/2
    REQUIRE(res.loglik >= -0.5 * kLog2Pi - 0.25 * 0.25 / 2.0);
    REQUIRE(res.loglik <= -0.5 * kLog2Pi + 1e-12);
}

TEST_CASE("restricted fits keep the required mass inside the box") {
    const Dataset data = two_spike_sample(200, 13);
    SolverConfig cfg;
    cfg.restriction = Restriction{parse_box("-1,1"), 0.7};
    for (Algorithm alg : {Algorithm::em, Algorithm::hybrid}) {
        cfg.algorithm = alg;
        const SolverResult res = fit(data, cfg);
        REQUIRE(res.measure.restrict_mass(cfg.restriction->theta) >= 0.7 - 1e-12);
    }
}

TEST_CASE("hybrid trace is monotone and the final gap is honest") {
    const Dataset data = two_spike_sample(250, 17);
    SolverConfig cfg;
    cfg.algorithm = Algorithm::hybrid;
    const SolverResult res = fit(data, cfg);
    for (std::size_t i = 1; i < res.trace.size(); ++i)
        REQUIRE(res.trace[i] >= res.trace[i - 1] - 1e-7);
    REQUIRE(res.gap >= 0.0);
    REQUIRE(res.gap <= 0.05);
    for (double w : res.measure.weights()) REQUIRE(w >= 1e-10);

    // the fit should place mass near both true spikes
    double near_lo = 0.0, near_hi = 0.0;
    for (std::size_t k = 0; k < res.measure.size(); ++k) {
        const double a = res.measure.atom(k)[0];
        if (std::fabs(a + 2.0) < 0.8) near_lo += res.measure.weight(k);
        if (std::fabs(a - 2.0) < 0.8) near_hi += res.measure.weight(k);
    }
    REQUIRE(near_lo > 0.15);
    REQUIRE(near_hi > 0.15);
}

TEST_CASE("vertex-direction and em land on likelihoods that agree") {
    const Dataset data = two_spike_sample(150, 23);
    SolverConfig em_cfg;
    em_cfg.algorithm = Algorithm::em;
    em_cfg.max_iters = 400;
    SolverConfig vd_cfg;
    vd_cfg.algorithm = Algorithm::vertex_direction;
    const double a = fit(data, em_cfg).loglik;
    const double b = fit(data, vd_cfg).loglik;
    REQUIRE(std::fabs(a - b) < 2e-3);
}

TEST_CASE("near-optimal perturbation tracks the likelihood deficit") {
    const Dataset data = two_spike_sample(100, 29);
    SolverConfig cfg;
    cfg.algorithm = Algorithm::em;
    const SolverResult res = fit(data, cfg);
    const SolverResult wiggled = near_optimal_perturb(res, data, 0.05, 5);
    REQUIRE(wiggled.gap <= 0.05);
    REQUIRE(wiggled.iters > 0);
    REQUIRE(wiggled.loglik >= res.loglik - 0.05);
    REQUIRE_THROWS_AS(near_optimal_perturb(res, data, 0.0, 5), std::invalid_argument);
}

TEST_CASE("solver configuration is validated") {
    const Dataset data = two_spike_sample(50, 31);
    SolverConfig cfg;
    cfg.gap_tol = 0.0;
    REQUIRE_THROWS_AS(fit(data, cfg), std::invalid_argument);

    SolverConfig bad_tau;
    bad_tau.restriction = Restriction{parse_box("-1,1"), 1.5};
    REQUIRE_THROWS_AS(fit(data, bad_tau), std::invalid_argument);

    // restriction box that misses every grid atom
    SolverConfig off;
    off.grid = GridSpec::explicit_grid(parse_box("-3,3"), 0.5);
    off.restriction = Restriction{parse_box("10,11"), 0.5};
    REQUIRE_THROWS_AS(fit(data, off), std::invalid_argument);

    REQUIRE_THROWS_AS(GridSpec::explicit_grid(parse_box("-1,1"), 0.0), std::invalid_argument);
}
