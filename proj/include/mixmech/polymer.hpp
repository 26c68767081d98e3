#ifndef MIXMECH_POLYMER_HPP
#define MIXMECH_POLYMER_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mixmech/langevin.hpp"
#include "mixmech/rng.hpp"
#include "mixmech/stats.hpp"

namespace mixmech {

// site disorder on V_n = {(i, j) : 0 <= i <= n, -n <= j <= n}, row-major with
// column offset +n so weights[i * (2n+1) + (j + n)] is the weight at (i, j)
struct PolymerEnv {
    std::size_t n = 0;
    std::vector<double> weights;
    std::uint64_t seed = 0;

    std::size_t cols() const { return 2 * n + 1; }
    double at(std::size_t i, long j) const {
        return weights[i * cols() + static_cast<std::size_t>(j + static_cast<long>(n))];
    }
    double& at(std::size_t i, long j) {
        return weights[i * cols() + static_cast<std::size_t>(j + static_cast<long>(n))];
    }
};

inline PolymerEnv gen_env(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("polymer: n must be >= 1");
    PolymerEnv env;
    env.n = n;
    env.seed = seed;
    env.weights.resize((n + 1) * (2 * n + 1));
    Rng rng(seed);
    for (double& w : env.weights) w = rng.normal();
    return env;
}

struct GroundState {
    double energy = 0.0;
    std::vector<long> path;  // path[i] = j coordinate at layer i, path[0] = 0
};

namespace detail {

// tie order smallest |j| first, then smaller j, so exact ties pick the path
// closest to the axis
inline bool tie_before(long a, long b) {
    const long aa = a < 0 ? -a : a, ab = b < 0 ? -b : b;
    return aa != ab ? aa < ab : a < b;
}

}  // namespace detail

// minimizes E_n(p) = -sum_i G_(i, p(i)) over paths with p(0) = 0 and unit steps
// |p(i+1) - p(i)| <= 1, by layer-by-layer dynamic programming
inline GroundState ground_state(const PolymerEnv& env) {
    const std::size_t n = env.n, cols = env.cols();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> best((n + 1) * cols, inf);
    std::vector<long> from((n + 1) * cols, 0);
    auto idx = [&](std::size_t i, long j) {
        return i * cols + static_cast<std::size_t>(j + static_cast<long>(n));
    };
    best[idx(0, 0)] = -env.at(0, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        const long lim = static_cast<long>(i);
        for (long j = -lim; j <= lim; ++j) {
            double bv = inf;
            long bj = 0;
            for (long jp = j - 1; jp <= j + 1; ++jp) {
                if (jp < -(lim - 1) || jp > lim - 1) continue;
                const double v = best[idx(i - 1, jp)];
                if (v < bv || (v == bv && detail::tie_before(jp, bj))) {
                    bv = v;
                    bj = jp;
                }
            }
            if (bv == inf) continue;
            best[idx(i, j)] = bv - env.at(i, j);
            from[idx(i, j)] = bj;
        }
    }
    GroundState gs;
    double bv = inf;
    long bj = 0;
    for (long j = -static_cast<long>(n); j <= static_cast<long>(n); ++j) {
        const double v = best[idx(n, j)];
        if (v < bv || (v == bv && detail::tie_before(j, bj))) {
            bv = v;
            bj = j;
        }
    }
    gs.energy = bv;
    gs.path.resize(n + 1);
    gs.path[n] = bj;
    for (std::size_t i = n; i > 0; --i) gs.path[i - 1] = from[idx(i, gs.path[i])];
    return gs;
}

// fraction of layers where the two paths agree
inline double overlap(const std::vector<long>& p, const std::vector<long>& q) {
    if (p.size() != q.size() || p.empty())
        throw std::invalid_argument("overlap: paths must have equal nonzero length");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] == q[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(p.size());
}

struct ChaosRow {
    std::size_t n = 0;
    double t = 0.0;
    std::size_t rep = 0;
    std::uint64_t seed = 0;
    double overlap = 0.0;
    double energy = 0.0;    // ground-state energy of the base environment
    double energy_t = 0.0;  // ground-state energy of the evolved environment
};

struct ChaosSummaryRow {
    std::size_t n = 0;
    double t = 0.0;
    double mean_overlap = 0.0;
    double var_energy_over_n = 0.0;
};

struct ChaosStats {
    std::vector<ChaosRow> rows;
    std::vector<ChaosSummaryRow> summary;
};

// per replicate: draw an environment, evolve it under the OU flow for each t,
// and compare ground states; var_energy_over_n is computed across replicates
// from the base environments
inline ChaosStats chaos_stats(std::size_t n, const std::vector<double>& t_list, std::size_t reps,
                              std::uint64_t seed) {
    if (reps < 2) throw std::invalid_argument("chaos_stats: reps must be >= 2");
    if (t_list.empty()) throw std::invalid_argument("chaos_stats: t_list must be nonempty");
    for (double t : t_list)
        if (!(t >= 0.0)) throw std::invalid_argument("chaos_stats: times must be >= 0");
    ChaosStats out;
    std::vector<double> energies(reps);
    for (std::size_t r = 0; r < reps; ++r) {
        const std::uint64_t rep_seed = derive_seed(seed, r);
        const PolymerEnv env = gen_env(n, rep_seed);
        const GroundState base = ground_state(env);
        energies[r] = base.energy;
        for (std::size_t ti = 0; ti < t_list.size(); ++ti) {
            PolymerEnv evolved = env;
            evolved.weights = ou_evolve(env.weights, t_list[ti], derive_seed(seed, r, ti));
            const GroundState moved = ground_state(evolved);
            ChaosRow row;
            row.n = n;
            row.t = t_list[ti];
            row.rep = r;
            row.seed = rep_seed;
            row.overlap = overlap(base.path, moved.path);
            row.energy = base.energy;
            row.energy_t = moved.energy;
            out.rows.push_back(row);
        }
    }
    const double var_over_n = variance(energies) / static_cast<double>(n);
    for (std::size_t ti = 0; ti < t_list.size(); ++ti) {
        ChaosSummaryRow s;
        s.n = n;
        s.t = t_list[ti];
        double acc = 0.0;
        for (std::size_t r = 0; r < reps; ++r) acc += out.rows[r * t_list.size() + ti].overlap;
        s.mean_overlap = acc / static_cast<double>(reps);
        s.var_energy_over_n = var_over_n;
        out.summary.push_back(s);
    }
    return out;
}

}  // namespace mixmech

#endif
