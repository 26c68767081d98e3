#include "catch_amalgamated.hpp"

#include <cmath>
#include <stdexcept>

#include "mixmech/divergences.hpp"
#include "mixmech/gmm.hpp"
#include "mixmech/measure.hpp"

using namespace mixmech;

namespace {

GmmDensity shifted(double delta) { return GmmDensity(MixingMeasure::delta(Point{delta})); }

const GmmDensity kStd = shifted(0.0);

}  // namespace

TEST_CASE("quadrature divergences between unit gaussians match closed forms") {
    DivergenceConfig cfg;
    cfg.method = DivMethod::quadrature;

    struct Row {
        double delta, h2, kl, bc, tv;
    };
    // H2 = 2(1 - e^{-d^2/8}), KL = d^2/2, BC = e^{-d^2/8}, TV = 2 Phi(d/2) - 1
    const Row rows[] = {
        {1.0, 0.2350061948308091, 0.5, 0.8824969025845955, 0.3829249225480262},
        {2.0, 0.7869386805747332, 2.0, 0.6065306597126334, 0.6826894921370859},
        {4.0, 1.7293294335267746, 8.0, 0.1353352832366127, 0.9544997361036416},
    };
    for (const Row& r : rows) {
        const GmmDensity g = shifted(r.delta);
        REQUIRE(hellinger_sq(kStd, g, cfg).value == Catch::Approx(r.h2).margin(1e-6));
        REQUIRE(kl(kStd, g, cfg).value == Catch::Approx(r.kl).margin(1e-6));
        REQUIRE(bhattacharyya(kStd, g, cfg).value == Catch::Approx(r.bc).margin(1e-6));
        REQUIRE(tv(kStd, g, cfg).value == Catch::Approx(r.tv).margin(1e-6));
    }
}

TEST_CASE("divergences vanish between identical densities") {
    DivergenceConfig cfg;
    cfg.method = DivMethod::quadrature;
    REQUIRE(hellinger_sq(kStd, kStd, cfg).value == Catch::Approx(0.0).margin(1e-10));
    REQUIRE(kl(kStd, kStd, cfg).value == Catch::Approx(0.0).margin(1e-10));
    REQUIRE(bhattacharyya(kStd, kStd, cfg).value == Catch::Approx(1.0).margin(1e-10));
    REQUIRE(tv(kStd, kStd, cfg).value == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("hellinger and tv are symmetric under quadrature") {
    DivergenceConfig cfg;
    cfg.method = DivMethod::quadrature;
    const GmmDensity f(MixingMeasure::uniform(1, {-1.0, 2.0}));
    const GmmDensity g = shifted(0.5);
    REQUIRE(hellinger_sq(f, g, cfg).value ==
            Catch::Approx(hellinger_sq(g, f, cfg).value).margin(1e-10));
    REQUIRE(tv(f, g, cfg).value == Catch::Approx(tv(g, f, cfg).value).margin(1e-10));
}

TEST_CASE("two-dimensional quadrature reproduces the location-shift formula") {
    DivergenceConfig cfg;
    cfg.method = DivMethod::quadrature;
    const GmmDensity f(MixingMeasure::delta(Point{0.0, 0.0}));
    const GmmDensity g(MixingMeasure::delta(Point{1.2, -0.9}));
    // |mu|^2 = 2.25
    REQUIRE(hellinger_sq(f, g, cfg).value ==
            Catch::Approx(0.4903207960219853).margin(1e-5));
    REQUIRE(kl(f, g, cfg).value == Catch::Approx(1.125).margin(1e-5));
}

TEST_CASE("monte carlo estimates agree with closed forms within four standard errors") {
    DivergenceConfig cfg;
    cfg.method = DivMethod::monte_carlo;
    cfg.n_samples = 100000;
    cfg.seed = 5;
    const GmmDensity g = shifted(2.0);

    const DivergenceEstimate h2 = hellinger_sq(kStd, g, cfg);
    REQUIRE(h2.std_error > 0.0);
    REQUIRE(std::fabs(h2.value - 0.7869386805747332) < 4.0 * h2.std_error);

    const DivergenceEstimate k = kl(kStd, g, cfg);
    REQUIRE(std::fabs(k.value - 2.0) < 4.0 * k.std_error);

    const DivergenceEstimate b = bhattacharyya(kStd, g, cfg);
    REQUIRE(std::fabs(b.value - 0.6065306597126334) < 4.0 * b.std_error);

    // identical seeds give identical estimates
    REQUIRE(hellinger_sq(kStd, g, cfg).value == h2.value);
}

TEST_CASE("divergence input validation") {
    DivergenceConfig mc;
    mc.method = DivMethod::monte_carlo;
    mc.n_samples = 50;
    REQUIRE_THROWS_AS(hellinger_sq(kStd, shifted(1.0), mc), std::invalid_argument);
    REQUIRE_THROWS_AS(tv(kStd, shifted(1.0), mc), std::invalid_argument);

    DivergenceConfig quad;
    quad.method = DivMethod::quadrature;
    const GmmDensity f3(MixingMeasure::delta(Point{0.0, 0.0, 0.0}));
    REQUIRE_THROWS_AS(hellinger_sq(f3, f3, quad), std::invalid_argument);

    const GmmDensity f2(MixingMeasure::delta(Point{0.0, 0.0}));
    REQUIRE_THROWS_AS(hellinger_sq(kStd, f2, quad), std::invalid_argument);
}

TEST_CASE("estimates serialize with method and sample count") {
    DivergenceConfig cfg;
    cfg.method = DivMethod::quadrature;
    const auto j = hellinger_sq(kStd, shifted(1.0), cfg).to_json();
    REQUIRE(j.at("method") == "quadrature");
    REQUIRE(j.at("value").get<double>() == Catch::Approx(0.2350061948308091).margin(1e-6));
}
