#ifndef MIXMECH_DIVERGENCES_HPP
#define MIXMECH_DIVERGENCES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixmech/gmm.hpp"
#include "mixmech/quadrature.hpp"
#include "mixmech/rng.hpp"
#include "mixmech/stats.hpp"
#include "mixmech/types.hpp"

namespace mixmech {

enum class DivMethod { quadrature, monte_carlo };

struct DivergenceConfig {
    DivMethod method = DivMethod::quadrature;
    std::size_t n_samples = 200000;
    std::uint64_t seed = 0;
    double panel_width = 0.5;
    double neighborhood = 12.0;  // atom neighborhoods cover the mass; tails < 1e-12 are dropped
};

struct DivergenceEstimate {
    double value = 0.0;
    double std_error = 0.0;
    DivMethod method = DivMethod::quadrature;
    std::size_t n_samples = 0;

    nlohmann::json to_json() const {
        return nlohmann::json{
            {"value", value},
            {"std_error", std_error},
            {"method", method == DivMethod::quadrature ? "quadrature" : "monte-carlo"},
            {"n_samples", n_samples}};
    }
};

namespace detail {

inline void check_pair(const GmmDensity& f, const GmmDensity& g) {
    if (f.dim() != g.dim()) throw std::invalid_argument("divergence: dimension mismatch");
}

inline std::vector<Interval> axis_cover(const GmmDensity& f, const GmmDensity& g,
                                        std::size_t axis, double radius) {
    std::vector<Interval> iv;
    for (const auto* m : {&f.mixing(), &g.mixing()})
        for (std::size_t k = 0; k < m->size(); ++k) {
            const double c = m->atom(k)[axis];
            iv.emplace_back(c - radius, c + radius);
        }
    return merge_intervals(std::move(iv));
}

// integrate a pointwise functional of (log f, log g) over the joint atom cover
template <typename Fn>
double quad_functional(const GmmDensity& f, const GmmDensity& g, const DivergenceConfig& cfg,
                       Fn&& term) {
    const std::size_t d = f.dim();
    if (d == 1) {
        const auto iv = axis_cover(f, g, 0, cfg.neighborhood);
        return integrate_union(
            [&](double x) {
                const double xs[1] = {x};
                const PointView xv(xs, 1);
                return term(f.log_density(xv), g.log_density(xv));
            },
            iv, cfg.panel_width);
    }
    if (d == 2) {
        std::vector<double> nx, wx, ny, wy;
        union_nodes(axis_cover(f, g, 0, cfg.neighborhood), cfg.panel_width, nx, wx);
        union_nodes(axis_cover(f, g, 1, cfg.neighborhood), cfg.panel_width, ny, wy);
        double total = 0.0;
        for (std::size_t a = 0; a < nx.size(); ++a) {
            double row = 0.0;
            for (std::size_t b = 0; b < ny.size(); ++b) {
                const double xs[2] = {nx[a], ny[b]};
                const PointView xv(xs, 2);
                row += wy[b] * term(f.log_density(xv), g.log_density(xv));
            }
            total += wx[a] * row;
        }
        return total;
    }
    throw std::invalid_argument("divergence: quadrature supports d <= 2 only");
}

// one draw from the equal mixture (f+g)/2
inline void sample_from_mixture_pair(const GmmDensity& f, const GmmDensity& g, Rng& rng,
                                     std::vector<double>& x) {
    const GmmDensity& pick = rng.uniform() <= 0.5 ? f : g;
    const MixingMeasure& m = pick.mixing();
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t k = 0;
    for (; k + 1 < m.size(); ++k) {
        acc += m.weight(k);
        if (u <= acc) break;
    }
    const auto th = m.atom(k);
    x.resize(th.size());
    for (std::size_t j = 0; j < th.size(); ++j) x[j] = th[j] + rng.normal();
}

inline void sample_from(const GmmDensity& f, Rng& rng, std::vector<double>& x) {
    const MixingMeasure& m = f.mixing();
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t k = 0;
    for (; k + 1 < m.size(); ++k) {
        acc += m.weight(k);
        if (u <= acc) break;
    }
    const auto th = m.atom(k);
    x.resize(th.size());
    for (std::size_t j = 0; j < th.size(); ++j) x[j] = th[j] + rng.normal();
}

struct McAccumulator {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t n = 0;

    void add(double v) {
        sum += v;
        sum_sq += v * v;
        ++n;
    }
    double mean() const { return sum / static_cast<double>(n); }
    double se() const {
        const double m = mean();
        const double var = std::max(0.0, (sum_sq / static_cast<double>(n) - m * m)) *
                           static_cast<double>(n) / static_cast<double>(n - 1);
        return std::sqrt(var / static_cast<double>(n));
    }
};

inline void check_mc(const DivergenceConfig& cfg) {
    if (cfg.n_samples < 100)
        throw std::invalid_argument("divergence: monte-carlo needs >= 100 samples");
}

}  // namespace detail

inline DivergenceEstimate hellinger_sq(const GmmDensity& f, const GmmDensity& g,
                                       const DivergenceConfig& cfg = {}) {
    detail::check_pair(f, g);
    DivergenceEstimate est;
    est.method = cfg.method;
    if (cfg.method == DivMethod::quadrature) {
        est.value = detail::quad_functional(f, g, cfg, [](double lf, double lg) {
            const long double a = std::exp(static_cast<long double>(lf) / 2);
            const long double b = std::exp(static_cast<long double>(lg) / 2);
            return static_cast<double>((a - b) * (a - b));
        });
    } else {
        detail::check_mc(cfg);
        Rng rng(derive_seed(cfg.seed, 0x4832));
        detail::McAccumulator acc;
        std::vector<double> x;
        for (std::size_t i = 0; i < cfg.n_samples; ++i) {
            detail::sample_from_mixture_pair(f, g, rng, x);
            const double lf = f.log_density(x), lg = g.log_density(x);
            const double lm = log_add(lf, lg) - std::log(2.0);
            const double a = std::exp(0.5 * (lf - lm)), b = std::exp(0.5 * (lg - lm));
            acc.add((a - b) * (a - b));
        }
        est.value = acc.mean();
        est.std_error = acc.se();
        est.n_samples = cfg.n_samples;
    }
    est.value = std::clamp(est.value, 0.0, 2.0);
    return est;
}

// KL estimates are reported raw (may go slightly negative under MC noise); clamping
// would bias the scaling experiments
inline DivergenceEstimate kl(const GmmDensity& f, const GmmDensity& g,
                             const DivergenceConfig& cfg = {}) {
    detail::check_pair(f, g);
    DivergenceEstimate est;
    est.method = cfg.method;
    if (cfg.method == DivMethod::quadrature) {
        est.value = detail::quad_functional(f, g, cfg, [](double lf, double lg) {
            const long double fx = std::exp(static_cast<long double>(lf));
            return static_cast<double>(fx * (lf - lg));
        });
    } else {
        detail::check_mc(cfg);
        Rng rng(derive_seed(cfg.seed, 0x4b4c));
        detail::McAccumulator acc;
        std::vector<double> x;
        for (std::size_t i = 0; i < cfg.n_samples; ++i) {
            detail::sample_from(f, rng, x);
            acc.add(f.log_density(x) - g.log_density(x));
        }
        est.value = acc.mean();
        est.std_error = acc.se();
        est.n_samples = cfg.n_samples;
    }
    return est;
}

inline DivergenceEstimate bhattacharyya(const GmmDensity& f, const GmmDensity& g,
                                        const DivergenceConfig& cfg = {}) {
    detail::check_pair(f, g);
    DivergenceEstimate est;
    est.method = cfg.method;
    if (cfg.method == DivMethod::quadrature) {
        est.value = 1.0 - 0.5 * hellinger_sq(f, g, cfg).value;
    } else {
        detail::check_mc(cfg);
        Rng rng(derive_seed(cfg.seed, 0x4243));
        detail::McAccumulator acc;
        std::vector<double> x;
        for (std::size_t i = 0; i < cfg.n_samples; ++i) {
            detail::sample_from_mixture_pair(f, g, rng, x);
            const double lf = f.log_density(x), lg = g.log_density(x);
            const double lm = log_add(lf, lg) - std::log(2.0);
            acc.add(std::exp(0.5 * (lf + lg) - lm));
        }
        est.value = acc.mean();
        est.std_error = acc.se();
        est.n_samples = cfg.n_samples;
    }
    est.value = std::clamp(est.value, 0.0, 1.0);
    return est;
}

inline DivergenceEstimate tv(const GmmDensity& f, const GmmDensity& g,
                             const DivergenceConfig& cfg = {}) {
    detail::check_pair(f, g);
    if (cfg.method != DivMethod::quadrature)
        throw std::invalid_argument("divergence: tv supports quadrature only");
    DivergenceEstimate est;
    est.method = DivMethod::quadrature;
    est.value = detail::quad_functional(f, g, cfg, [](double lf, double lg) {
        const long double fx = std::exp(static_cast<long double>(lf));
        const long double gx = std::exp(static_cast<long double>(lg));
        return 0.5 * static_cast<double>(fx > gx ? fx - gx : gx - fx);
    });
    return est;
}

}  // namespace mixmech

#endif
