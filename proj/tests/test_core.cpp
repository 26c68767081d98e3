#include "catch_amalgamated.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>
#include <unistd.h>
#include <vector>

#include "mixmech/gmm.hpp"
#include "mixmech/measure.hpp"
#include "mixmech/parallel.hpp"
#include "mixmech/quadrature.hpp"
#include "mixmech/rng.hpp"
#include "mixmech/stats.hpp"
#include "mixmech/types.hpp"

using namespace mixmech;

namespace {

std::filesystem::path temp_file(const char* stem) {
    auto dir = std::filesystem::temp_directory_path();
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%d.csv", stem, static_cast<int>(::getpid()));
    return dir / buf;
}

}  // namespace

TEST_CASE("rng streams are deterministic and seed derivation separates indices") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const double u = a.uniform();
        REQUIRE(u == b.uniform());
        REQUIRE(u > 0.0);
        REQUIRE(u <= 1.0);
    }
    REQUIRE(a.normal() == b.normal());
    REQUIRE(a.next_u64() != c.next_u64());

    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(7, i));
    REQUIRE(seen.size() == 1000);
    REQUIRE(derive_seed(7, 1, 2) != derive_seed(7, 2, 1));
    REQUIRE(derive_seed(7, 1, 2) == derive_seed(derive_seed(7, 1), 2));
}

TEST_CASE("normal draws have roughly standard moments") {
    Rng rng(9);
    std::vector<double> z(20000);
    for (double& v : z) v = rng.normal();
    REQUIRE(std::fabs(mean(z)) < 0.03);
    REQUIRE(std::fabs(variance(z) - 1.0) < 0.04);
}

TEST_CASE("summary statistics match hand-computed values") {
    REQUIRE(mean({1.0, 2.0, 6.0}) == Catch::Approx(3.0).epsilon(1e-15));
    REQUIRE(variance({1.0, 2.0, 6.0}) == Catch::Approx(7.0).epsilon(1e-15));
    REQUIRE(median({5.0, 1.0, 3.0}) == 3.0);
    REQUIRE(median({4.0, 1.0, 3.0, 2.0}) == Catch::Approx(2.5).epsilon(1e-15));
    REQUIRE(std_error({1.0, 2.0, 6.0}) ==
            Catch::Approx(std::sqrt(7.0 / 3.0)).epsilon(1e-15));
    REQUIRE(normal_cdf(0.0) == Catch::Approx(0.5).epsilon(1e-15));
    REQUIRE(normal_cdf(1.96) == Catch::Approx(0.9750021048517795).epsilon(1e-12));

    // 5 concordant pairs, 1 discordant out of 6
    REQUIRE(kendall_tau({1, 2, 3, 4}, {1, 3, 2, 4}) ==
            Catch::Approx(4.0 / 6.0).epsilon(1e-15));
    REQUIRE(kendall_tau({1, 2, 3}, {3, 2, 1}) == Catch::Approx(-1.0).epsilon(1e-15));

    REQUIRE(ols_slope({0, 1, 2, 3}, {1, 3, 5, 7}) == Catch::Approx(2.0).epsilon(1e-14));
    REQUIRE_THROWS_AS(ols_slope({1, 1, 1}, {1, 2, 3}), std::invalid_argument);

    REQUIRE(ks_critical(0.01, 1000, 1000) ==
            Catch::Approx(0.07278954160144187).epsilon(1e-14));

    REQUIRE(log_add(std::log(2.0), std::log(3.0)) ==
            Catch::Approx(std::log(5.0)).epsilon(1e-14));
    REQUIRE(log_add(-std::numeric_limits<double>::infinity(), 1.5) == 1.5);
}

TEST_CASE("ks statistic separates shifted samples and vanishes on equal ones") {
    std::vector<double> a{1, 2, 3, 4}, b{1, 2, 3, 4};
    REQUIRE(ks_statistic(a, b) == 0.0);
    REQUIRE(ks_statistic({0, 1}, {10, 11}) == 1.0);
    REQUIRE(ks_statistic({0, 1, 2, 3}, {0.5, 1.5, 2.5, 3.5}) ==
            Catch::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("panel quadrature integrates a gaussian to unit mass") {
    auto phi = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
    const double got = integrate_panels(phi, -12.0, 12.0, 0.5);
    REQUIRE(std::fabs(got - 1.0) < 1e-10);

    // 16-point Gauss-Legendre is exact on low-degree polynomials
    auto poly = [](double x) { return x * x * x * x * x - 3.0 * x * x + 2.0; };
    const double exact = (64.0 / 6.0) - 8.0 + 4.0;
    REQUIRE(integrate_panels(poly, 0.0, 2.0, 2.0) == Catch::Approx(exact).epsilon(1e-13));
}

TEST_CASE("interval merging collapses overlaps") {
    auto merged = merge_intervals({{0.0, 1.0}, {0.5, 2.0}, {3.0, 4.0}});
    REQUIRE(merged.size() == 2);
    REQUIRE(merged[0].first == 0.0);
    REQUIRE(merged[0].second == 2.0);
    REQUIRE(merged[1].first == 3.0);
}

TEST_CASE("box parsing accepts lo,hi lists and rejects malformed input") {
    const Box b = parse_box("-1,1,-2,2");
    REQUIRE(b.dim() == 2);
    REQUIRE(b.contains(Point{0.0, -2.0}));
    REQUIRE_FALSE(b.contains(Point{0.0, 2.5}));
    REQUIRE(b.sup_norm() == Catch::Approx(std::sqrt(5.0)).epsilon(1e-15));
    REQUIRE_THROWS_AS(parse_box("1,2,3"), std::invalid_argument);
    REQUIRE_THROWS_AS(parse_box(""), std::invalid_argument);
    REQUIRE_THROWS_AS(Box({1.0}, {0.0}), std::invalid_argument);
}

TEST_CASE("mixing measure validates input and round-trips through json") {
    REQUIRE_THROWS_AS(MixingMeasure(1, {0.0}, {0.5, 0.5}), std::invalid_argument);
    REQUIRE_THROWS_AS(MixingMeasure(1, {0.0, 1.0}, {0.7, -0.3}), std::invalid_argument);
    REQUIRE_THROWS_AS(MixingMeasure(1, {0.0, 1.0}, {0.7, 0.7}), std::invalid_argument);

    const MixingMeasure mu(2, {0.0, 1.0, -1.0, 2.0}, {0.25, 0.75});
    const MixingMeasure back = MixingMeasure::from_json(mu.to_json());
    REQUIRE(back == mu);
    REQUIRE(back.atom(1)[0] == -1.0);

    const Box theta = parse_box("-0.5,0.5,0,3");
    REQUIRE(mu.restrict_mass(theta) == Catch::Approx(0.25).epsilon(1e-15));

    // near-1 sums renormalize instead of failing
    const MixingMeasure close(1, {0.0, 1.0}, {0.5, 0.5 + 1e-10});
    REQUIRE(close.weight(0) + close.weight(1) == Catch::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("gaussian mixture density matches closed forms") {
    const GmmDensity std1(MixingMeasure::delta(Point{0.0}));
    REQUIRE(std1.log_density(Point{0.0}) ==
            Catch::Approx(std::log(0.3989422804014327)).epsilon(1e-15));
    REQUIRE(std1.log_density(Point{10.0}) ==
            Catch::Approx(-50.918938533204674).epsilon(1e-15));

    const GmmDensity pm1(MixingMeasure::uniform(1, {-1.0, 1.0}));
    REQUIRE(std::exp(pm1.log_density(Point{0.0})) ==
            Catch::Approx(0.24197072451914337).epsilon(1e-14));

    // density() keeps underflowed tails positive via long double
    REQUIRE(std1.density(Point{40.0}) > 0.0L);
    REQUIRE(std1.log_density(Point{40.0}) < -700.0);
}

TEST_CASE("log density equals a directly summed mixture when no scaling is needed") {
    const MixingMeasure mu(1, {-3.0, 0.5, 2.0}, {0.2, 0.5, 0.3});
    const GmmDensity f(mu);
    for (double x : {-4.0, -1.0, 0.0, 0.7, 3.5}) {
        double s = 0.0;
        for (std::size_t k = 0; k < mu.size(); ++k)
            s += mu.weight(k) * std::exp(-0.5 * (x - mu.atom(k)[0]) * (x - mu.atom(k)[0]));
        const double naive = std::log(s) - 0.5 * kLog2Pi;
        REQUIRE(f.log_density(Point{x}) == Catch::Approx(naive).epsilon(1e-12));
    }
}

TEST_CASE("gradient of the log density matches finite differences") {
    const GmmDensity single(MixingMeasure::delta(Point{1.5, -0.5}));
    const Point x{0.25, 2.0};
    const Point g = single.grad_log_density(x);
    REQUIRE(g[0] == Catch::Approx(1.5 - 0.25).epsilon(1e-14));
    REQUIRE(g[1] == Catch::Approx(-0.5 - 2.0).epsilon(1e-14));

    const GmmDensity mix(MixingMeasure(2, {-1.0, 0.0, 2.0, 1.0}, {0.4, 0.6}));
    const double h = 1e-6;
    Point y{0.3, -0.8};
    const Point gy = mix.grad_log_density(y);
    for (std::size_t j = 0; j < 2; ++j) {
        Point lo = y, hi = y;
        lo[j] -= h;
        hi[j] += h;
        const double fd = (mix.log_density(hi) - mix.log_density(lo)) / (2.0 * h);
        REQUIRE(gy[j] == Catch::Approx(fd).margin(1e-7));
    }
}

TEST_CASE("mixture sampling is seeded and lands near the atoms") {
    const GmmDensity f(MixingMeasure::uniform(1, {-2.0, 2.0}));
    const Dataset a = f.sample(500, 11);
    const Dataset b = f.sample(500, 11);
    REQUIRE(a.points_flat() == b.points_flat());
    REQUIRE(a.size() == 500);
    std::vector<double> xs(a.points_flat());
    REQUIRE(std::fabs(mean(xs)) < 0.2);
    REQUIRE(variance(xs) == Catch::Approx(5.0).epsilon(0.15));
}

TEST_CASE("dataset csv round-trip preserves bytes and sidecar metadata") {
    const GmmDensity f(MixingMeasure::uniform(2, {-1.0, 0.0, 1.0, 0.5}));
    const Dataset d = f.sample(40, 123);
    const auto path = temp_file("mixmech_core_ds");
    d.write_csv(path.string());

    const Dataset back = Dataset::read_csv(path.string());
    REQUIRE(back.dim() == 2);
    REQUIRE(back.points_flat() == d.points_flat());
    REQUIRE(back.seed() == d.seed());
    REQUIRE(back.source() == d.source());

    std::ifstream head(path);
    std::string first;
    std::getline(head, first);
    REQUIRE(first == "x1,x2");

    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".json");
}

TEST_CASE("parallel for covers every index and propagates exceptions") {
    std::vector<double> out(500, 0.0);
    parallel_for(out.size(), [&](std::size_t i) { out[i] = static_cast<double>(i); }, 4);
    for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(out[i] == static_cast<double>(i));

    REQUIRE_THROWS_AS(parallel_for(
                          8, [](std::size_t i) {
                              if (i == 5) throw std::runtime_error("boom");
                          },
                          4),
                      std::runtime_error);
}
