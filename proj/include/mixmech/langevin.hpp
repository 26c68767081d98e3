#ifndef MIXMECH_LANGEVIN_HPP
#define MIXMECH_LANGEVIN_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixmech/gmm.hpp"
#include "mixmech/rng.hpp"
#include "mixmech/types.hpp"

namespace mixmech {

struct LangevinConfig {
    double t_final = 0.0;
    double dt = 1e-3;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(t_final >= 0.0)) throw std::invalid_argument("langevin: t_final must be >= 0");
        if (!(dt > 0.0) || dt > 0.01)
            throw std::invalid_argument("langevin: dt must be in (0, 0.01]");
        if (t_final > 0.0 && dt > t_final)
            throw std::invalid_argument("langevin: dt must not exceed t_final");
    }
};

// Euler-Maruyama coupling: X <- X + grad log f*(X) dt + sqrt(2 dt) xi, one
// independent Brownian stream per point derived from (seed, point index)
inline Dataset evolve(const Dataset& data, const GmmDensity& f_star, const LangevinConfig& cfg) {
    cfg.validate();
    if (data.dim() != f_star.dim()) throw std::invalid_argument("langevin: dimension mismatch");
    const std::size_t n = data.size(), d = data.dim();
    std::vector<double> pts(data.points_flat());
    if (cfg.t_final > 0.0) {
        const std::size_t full = static_cast<std::size_t>(std::floor(cfg.t_final / cfg.dt + 1e-12));
        const double rem = cfg.t_final - static_cast<double>(full) * cfg.dt;
        for (std::size_t i = 0; i < n; ++i) {
            Rng rng(derive_seed(cfg.seed, i));
            Point x(pts.begin() + i * d, pts.begin() + (i + 1) * d);
            for (std::size_t s = 0; s < full; ++s) {
                const Point g = f_star.grad_log_density(x);
                const double amp = std::sqrt(2.0 * cfg.dt);
                for (std::size_t j = 0; j < d; ++j) x[j] += g[j] * cfg.dt + amp * rng.normal();
            }
            if (rem > 1e-12) {
                const Point g = f_star.grad_log_density(x);
                const double amp = std::sqrt(2.0 * rem);
                for (std::size_t j = 0; j < d; ++j) x[j] += g[j] * rem + amp * rng.normal();
            }
            for (std::size_t j = 0; j < d; ++j) pts[i * d + j] = x[j];
        }
    }
    char label[64];
    std::snprintf(label, sizeof(label), "langevin(t=%.17g,dt=%.17g)", cfg.t_final, cfg.dt);
    return Dataset(d, std::move(pts), cfg.seed, std::string(label) + "<-" + data.source());
}

// exact OU transition G^(t) = e^{-t} G^(0) + sqrt(1 - e^{-2t}) Z; no discretization
inline std::vector<double> ou_evolve(const std::vector<double>& env, double t,
                                     std::uint64_t seed) {
    if (!(t >= 0.0)) throw std::invalid_argument("ou_evolve: t must be >= 0");
    if (t == 0.0) return env;
    const double decay = std::exp(-t);
    const double amp = std::sqrt(-std::expm1(-2.0 * t));
    std::vector<double> out(env.size());
    Rng rng(derive_seed(seed, 0x0u));
    for (std::size_t v = 0; v < env.size(); ++v) out[v] = decay * env[v] + amp * rng.normal();
    return out;
}

}  // namespace mixmech

#endif
