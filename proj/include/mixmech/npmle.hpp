#ifndef MIXMECH_NPMLE_HPP
#define MIXMECH_NPMLE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mixmech/gmm.hpp"
#include "mixmech/measure.hpp"
#include "mixmech/rng.hpp"
#include "mixmech/stats.hpp"
#include "mixmech/types.hpp"

namespace mixmech {

enum class Algorithm { em, vertex_direction, hybrid };

struct GridSpec {
    bool automatic = true;
    Box box;              // used when !automatic
    double spacing = 0.0; // used when !automatic

    static GridSpec auto_grid() { return {}; }
    static GridSpec explicit_grid(Box b, double spacing) {
        if (!(spacing > 0.0)) throw std::invalid_argument("grid: spacing must be > 0");
        GridSpec g;
        g.automatic = false;
        g.box = std::move(b);
        g.spacing = spacing;
        return g;
    }
};

struct Restriction {
    Box theta;
    double tau = 0.0;
};

struct SolverConfig {
    GridSpec grid;
    // support growth adds one atom per outer round, so this also caps the
    // fitted support; past ~60 rounds the gain is in the fifth decimal
    std::size_t max_iters = 60;
    double rel_tol = 1e-8;
    double gap_tol = 1e-4;
    std::optional<Restriction> restriction;
    Algorithm algorithm = Algorithm::hybrid;

    void validate() const {
        if (!(rel_tol > 0.0) || !(gap_tol > 0.0))
            throw std::invalid_argument("solver: rel_tol and gap_tol must be > 0");
        if (max_iters < 1) throw std::invalid_argument("solver: max_iters must be >= 1");
        if (restriction && !(restriction->tau > 0.0 && restriction->tau <= 1.0))
            throw std::invalid_argument("solver: tau must be in (0, 1]");
    }
};

struct SolverResult {
    MixingMeasure measure;
    double loglik = 0.0;
    double gap = 0.0;
    std::size_t iters = 0;
    std::vector<double> trace;
};

struct AtomGrid {
    std::size_t dim = 0;
    std::vector<double> atoms;    // flat, k-th atom at [k*dim, (k+1)*dim)
    std::vector<double> spacing;  // per axis, refinement bracket for vertex-direction

    std::size_t size() const { return dim ? atoms.size() / dim : 0; }
    PointView atom(std::size_t k) const { return PointView(atoms.data() + k * dim, dim); }
};

inline double loglik(const GmmDensity& f, const Dataset& data) {
    if (data.size() == 0) throw std::invalid_argument("loglik: empty dataset");
    if (f.dim() != data.dim()) throw std::invalid_argument("loglik: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) s += f.log_density(data.point(i));
    return s / static_cast<double>(data.size());
}

inline double loglik(const MixingMeasure& mu, const Dataset& data) {
    return loglik(GmmDensity(mu), data);
}

namespace detail {

// default candidate grids: d=1 uniform over [min-1, max+1] with ceil(10 sqrt(n))
// points capped at 2000; d=2 tensor grid with ceil(4 n^(1/3)) per axis capped at 80
inline AtomGrid default_grid(const Dataset& data) {
    const std::size_t d = data.dim();
    const double n = static_cast<double>(data.size());
    AtomGrid g;
    g.dim = d;
    if (d == 1) {
        double lo = data.point(0)[0], hi = lo;
        for (std::size_t i = 1; i < data.size(); ++i) {
            lo = std::min(lo, data.point(i)[0]);
            hi = std::max(hi, data.point(i)[0]);
        }
        lo -= 1.0;
        hi += 1.0;
        const std::size_t k = std::min<std::size_t>(
            2000, static_cast<std::size_t>(std::ceil(10.0 * std::sqrt(n))));
        const std::size_t count = std::max<std::size_t>(k, 2);
        const double step = (hi - lo) / static_cast<double>(count - 1);
        for (std::size_t i = 0; i < count; ++i)
            g.atoms.push_back(lo + step * static_cast<double>(i));
        g.spacing = {step};
        return g;
    }
    if (d == 2) {
        std::vector<double> lo(d, std::numeric_limits<double>::infinity());
        std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < data.size(); ++i)
            for (std::size_t j = 0; j < d; ++j) {
                lo[j] = std::min(lo[j], data.point(i)[j]);
                hi[j] = std::max(hi[j], data.point(i)[j]);
            }
        const std::size_t per_axis = std::max<std::size_t>(
            2, std::min<std::size_t>(
                   80, static_cast<std::size_t>(std::ceil(4.0 * std::cbrt(n)))));
        std::vector<std::vector<double>> axes(d);
        g.spacing.resize(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double a = lo[j] - 1.0, b = hi[j] + 1.0;
            const double step = (b - a) / static_cast<double>(per_axis - 1);
            g.spacing[j] = step;
            for (std::size_t i = 0; i < per_axis; ++i)
                axes[j].push_back(a + step * static_cast<double>(i));
        }
        for (double x0 : axes[0])
            for (double x1 : axes[1]) {
                g.atoms.push_back(x0);
                g.atoms.push_back(x1);
            }
        return g;
    }
    throw std::invalid_argument("solver: automatic grid supports d <= 2; pass an explicit grid");
}

inline AtomGrid explicit_grid(const GridSpec& spec, std::size_t dim) {
    if (spec.box.dim() != dim) throw std::invalid_argument("grid: box dimension mismatch");
    AtomGrid g;
    g.dim = dim;
    std::vector<std::vector<double>> axes(dim);
    g.spacing.assign(dim, spec.spacing);
    for (std::size_t j = 0; j < dim; ++j) {
        const double lo = spec.box.lo[j], hi = spec.box.hi[j];
        const std::size_t count =
            static_cast<std::size_t>(std::floor((hi - lo) / spec.spacing + 1e-9)) + 1;
        for (std::size_t i = 0; i < count; ++i)
            axes[j].push_back(lo + spec.spacing * static_cast<double>(i));
    }
    std::vector<std::size_t> idx(dim, 0);
    for (;;) {
        for (std::size_t j = 0; j < dim; ++j) g.atoms.push_back(axes[j][idx[j]]);
        std::size_t j = dim;
        while (j > 0) {
            --j;
            if (++idx[j] < axes[j].size()) break;
            idx[j] = 0;
            if (j == 0) return g;
        }
    }
}

inline AtomGrid make_grid(const Dataset& data, const GridSpec& spec) {
    return spec.automatic ? default_grid(data) : explicit_grid(spec, data.dim());
}

// bare per-point log-likelihood of a measure: log sum_k w_k exp(-|X_i-theta_k|^2/2)
// (the (2pi)^{-d/2} factor is left out; it cancels in every ratio used below)
inline std::vector<double> bare_loglik_rows(const MixingMeasure& mu, const Dataset& data) {
    const std::size_t n = data.size(), kc = mu.size();
    std::vector<double> out(n);
    std::vector<double> e(kc);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = data.point(i);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < kc; ++k) {
            const double w = mu.weight(k);
            e[k] = w > 0.0 ? std::log(w) - 0.5 * sq_dist(x, mu.atom(k))
                           : -std::numeric_limits<double>::infinity();
            if (e[k] > best) best = e[k];
        }
        double s = 0.0;
        for (std::size_t k = 0; k < kc; ++k)
            if (e[k] > -std::numeric_limits<double>::infinity()) s += std::exp(e[k] - best);
        out[i] = best + std::log(s);
    }
    return out;
}

inline double loglik_from_bare(const std::vector<double>& bare, std::size_t dim) {
    double s = 0.0;
    for (double v : bare) s += v;
    return s / static_cast<double>(bare.size()) - 0.5 * static_cast<double>(dim) * kLog2Pi;
}

// D(theta) = (1/n) sum_i phi(X_i - theta) / f_mu(X_i) for one probe atom; the
// exponent cap keeps wildly suboptimal measures finite without reordering the max
inline double probe_value(PointView theta, const Dataset& data,
                          const std::vector<double>& bare) {
    const std::size_t n = data.size();
    thread_local Eigen::ArrayXd e;
    e.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        e[static_cast<Eigen::Index>(i)] =
            std::min(-0.5 * sq_dist(data.point(i), theta) - bare[i], 700.0);
    return e.exp().sum() / static_cast<double>(n);
}

inline double golden_max(const std::function<double(double)>& fn, double lo, double hi,
                         int steps) {
    const double phi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = fn(x1), f2 = fn(x2);
    for (int s = 0; s < steps; ++s) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = fn(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = fn(x1);
        }
    }
    return f1 >= f2 ? x1 : x2;
}

// proportional rescaling onto the face {mass(theta_box) >= tau}
inline void project_restriction(std::vector<double>& w, const std::vector<char>& inside,
                                double tau) {
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k)
        if (inside[k]) s += w[k];
    if (s >= tau) return;
    if (s <= 0.0) {
        std::size_t count = 0;
        for (char c : inside) count += c != 0;
        if (count == 0) throw std::runtime_error("solver: restriction box lost all atoms");
        for (std::size_t k = 0; k < w.size(); ++k)
            w[k] = inside[k] ? tau / static_cast<double>(count) : w[k] * (1.0 - tau);
        return;
    }
    const double a = tau / s, b = (1.0 - tau) / (1.0 - s);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] *= inside[k] ? a : b;
}

// EM weight iteration on a fixed atom set; returns per-sweep logliks and the last
// certificate gap over those same atoms
struct EmOutcome {
    std::vector<double> weights;
    std::vector<double> trace;
    double gap = 0.0;
    std::size_t sweeps = 0;
};

inline EmOutcome em_iterate(const Dataset& data, const std::vector<double>& atoms,
                            std::vector<double> w, const SolverConfig& cfg,
                            std::size_t max_sweeps) {
    const std::size_t n = data.size(), d = data.dim();
    const std::size_t kc = w.size();
    std::vector<double> bmat(n * kc);
    std::vector<double> rowoff(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = data.point(i);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < kc; ++k) {
            const double e = -0.5 * sq_dist(x, PointView(atoms.data() + k * d, d));
            bmat[i * kc + k] = e;
            if (e > best) best = e;
        }
        rowoff[i] = best;
        Eigen::Map<Eigen::ArrayXd> row(bmat.data() + i * kc, static_cast<Eigen::Index>(kc));
        row = (row - best).exp();
    }

    std::vector<char> inside;
    if (cfg.restriction) {
        inside.resize(kc);
        bool any = false;
        for (std::size_t k = 0; k < kc; ++k) {
            inside[k] = cfg.restriction->theta.contains(PointView(atoms.data() + k * d, d));
            any = any || inside[k];
        }
        if (!any) throw std::invalid_argument("solver: no grid atom inside the restriction box");
        project_restriction(w, inside, cfg.restriction->tau);
    }

    EmOutcome out;
    std::vector<double> dvals(kc);
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMat> bm(bmat.data(), static_cast<Eigen::Index>(n),
                                      static_cast<Eigen::Index>(kc));
    const Eigen::Map<const Eigen::ArrayXd> off(rowoff.data(), static_cast<Eigen::Index>(n));
    const Eigen::Map<Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(kc));
    Eigen::Map<Eigen::VectorXd> dv(dvals.data(), static_cast<Eigen::Index>(kc));
    Eigen::VectorXd s(static_cast<Eigen::Index>(n));
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t sweep = 0;; ++sweep) {
        s.noalias() = bm * wv;
        if (!((s.array() > 0.0).all()))
            throw std::runtime_error("solver: likelihood underflow, grid too far from data");
        double ll = (s.array().log() + off).sum();
        dv.noalias() = bm.transpose() * s.cwiseInverse();
        ll = ll / static_cast<double>(n) - 0.5 * static_cast<double>(d) * kLog2Pi;
        out.trace.push_back(ll);
        double dmax = 0.0;
        for (std::size_t k = 0; k < kc; ++k) {
            dvals[k] /= static_cast<double>(n);
            dmax = std::max(dmax, dvals[k]);
        }
        out.gap = std::max(0.0, dmax - 1.0);
        if (out.gap <= cfg.gap_tol) break;
        if (sweep > 0 && std::fabs(ll - prev) <= cfg.rel_tol * std::max(1.0, std::fabs(prev)))
            break;
        if (sweep >= max_sweeps) break;
        prev = ll;
        for (std::size_t k = 0; k < kc; ++k) w[k] *= dvals[k];
        if (cfg.restriction) project_restriction(w, inside, cfg.restriction->tau);
        out.sweeps = sweep + 1;
    }
    out.weights = std::move(w);
    return out;
}

inline MixingMeasure drop_tiny_atoms(std::size_t dim, const std::vector<double>& atoms,
                                     const std::vector<double>& w, const SolverConfig& cfg,
                                     double threshold = 1e-10) {
    std::vector<double> a2, w2;
    double sum = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k)
        if (w[k] >= threshold) {
            for (std::size_t j = 0; j < dim; ++j) a2.push_back(atoms[k * dim + j]);
            w2.push_back(w[k]);
            sum += w[k];
        }
    if (w2.empty()) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < w.size(); ++k)
            if (w[k] > w[best]) best = k;
        for (std::size_t j = 0; j < dim; ++j) a2.push_back(atoms[best * dim + j]);
        w2.push_back(1.0);
        sum = 1.0;
    }
    for (double& v : w2) v /= sum;
    // renormalization after the drop can dip the restricted mass below tau; re-project
    if (cfg.restriction) {
        std::vector<char> inside(w2.size());
        for (std::size_t k = 0; k < w2.size(); ++k)
            inside[k] =
                cfg.restriction->theta.contains(PointView(a2.data() + k * dim, dim));
        project_restriction(w2, inside, cfg.restriction->tau);
    }
    return MixingMeasure(dim, std::move(a2), std::move(w2));
}

}  // namespace detail

// one multiplicative weight update on the measure's own atom set
inline MixingMeasure em_step(const MixingMeasure& mu, const Dataset& data) {
    if (mu.dim() != data.dim()) throw std::invalid_argument("em_step: dimension mismatch");
    const auto bare = detail::bare_loglik_rows(mu, data);
    const std::size_t kc = mu.size();
    std::vector<double> w(kc);
    for (std::size_t k = 0; k < kc; ++k)
        w[k] = mu.weight(k) * detail::probe_value(mu.atom(k), data, bare);
    double s = 0.0;
    for (double v : w) s += v;
    for (double& v : w) v /= s;
    return MixingMeasure(mu.dim(), mu.atoms_flat(), std::move(w));
}

// first-order certificate: gap = max(0, sup_grid D(theta) - 1); for any reweighting
// mu' on the same atoms, loglik(mu') <= loglik(mu) + gap since log u <= u - 1
inline double optimality_certificate(const MixingMeasure& mu, const Dataset& data,
                                     const AtomGrid& probe) {
    if (probe.size() == 0) throw std::invalid_argument("certificate: empty probe grid");
    if (probe.dim != mu.dim()) throw std::invalid_argument("certificate: dimension mismatch");
    const auto bare = detail::bare_loglik_rows(mu, data);
    double dmax = 0.0;
    for (std::size_t k = 0; k < probe.size(); ++k)
        dmax = std::max(dmax, detail::probe_value(probe.atom(k), data, bare));
    return std::max(0.0, dmax - 1.0);
}

inline SolverResult fit(const Dataset& data, const SolverConfig& cfg) {
    cfg.validate();
    const std::size_t d = data.dim();
    const AtomGrid grid = detail::make_grid(data, cfg.grid);
    if (grid.size() == 0) throw std::invalid_argument("solver: empty grid");
    if (cfg.restriction) {
        if (cfg.restriction->theta.dim() != d)
            throw std::invalid_argument("solver: restriction dimension mismatch");
        bool any = false;
        for (std::size_t k = 0; k < grid.size() && !any; ++k)
            any = cfg.restriction->theta.contains(grid.atom(k));
        if (!any) throw std::invalid_argument("solver: no grid atom inside the restriction box");
    }

    std::vector<double> trace;
    std::size_t iters = 0;
    MixingMeasure measure = MixingMeasure::delta(Point(d, 0.0));  // replaced below

    if (cfg.algorithm == Algorithm::em) {
        std::vector<double> w(grid.size(), 1.0 / static_cast<double>(grid.size()));
        auto out = detail::em_iterate(data, grid.atoms, std::move(w), cfg, cfg.max_iters);
        trace = std::move(out.trace);
        iters = out.sweeps;
        measure = detail::drop_tiny_atoms(d, grid.atoms, out.weights, cfg);
    } else {
        // vertex direction: grow the support greedily at the certificate argmax,
        // refine off-grid by golden section, then fully reweight with EM
        std::size_t start = 0;
        {
            Point mean(d, 0.0);
            for (std::size_t i = 0; i < data.size(); ++i)
                for (std::size_t j = 0; j < d; ++j) mean[j] += data.point(i)[j];
            for (double& v : mean) v /= static_cast<double>(data.size());
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < grid.size(); ++k) {
                const double dist = sq_dist(grid.atom(k), mean);
                if (dist < best) {
                    best = dist;
                    start = k;
                }
            }
            if (cfg.restriction && !cfg.restriction->theta.contains(grid.atom(start))) {
                best = std::numeric_limits<double>::infinity();
                for (std::size_t k = 0; k < grid.size(); ++k)
                    if (cfg.restriction->theta.contains(grid.atom(k))) {
                        const double dist = sq_dist(grid.atom(k), mean);
                        if (dist < best) {
                            best = dist;
                            start = k;
                        }
                    }
            }
        }
        std::vector<double> atoms(grid.atom(start).begin(), grid.atom(start).end());
        std::vector<double> w{1.0};
        double prev_ll = -std::numeric_limits<double>::infinity();

        for (std::size_t outer = 0; outer < cfg.max_iters; ++outer) {
            const MixingMeasure cur(d, atoms, w);
            const auto bare = detail::bare_loglik_rows(cur, data);
            const double cur_ll = detail::loglik_from_bare(bare, d);
            ++iters;

            double dmax = -std::numeric_limits<double>::infinity();
            std::size_t arg = 0;
            for (std::size_t k = 0; k < grid.size(); ++k) {
                const double v = detail::probe_value(grid.atom(k), data, bare);
                if (v > dmax) {
                    dmax = v;
                    arg = k;
                }
            }
            if (std::max(0.0, dmax - 1.0) <= cfg.gap_tol) break;

            // 20 golden-section steps per coordinate around the grid argmax
            Point theta(grid.atom(arg).begin(), grid.atom(arg).end());
            for (std::size_t j = 0; j < d; ++j) {
                const double h = grid.spacing[j];
                theta[j] = detail::golden_max(
                    [&](double v) {
                        Point p = theta;
                        p[j] = v;
                        return detail::probe_value(p, data, bare);
                    },
                    theta[j] - h, theta[j] + h, 20);
            }

            // initial weight for the new atom by golden search on the concave
            // segment likelihood, then a full EM reweight of the support
            std::vector<double> estar(data.size());
            for (std::size_t i = 0; i < data.size(); ++i)
                estar[i] = -0.5 * sq_dist(data.point(i), theta);
            const auto segment_ll = [&](double a) {
                if (a <= 0.0 || a >= 1.0) return -std::numeric_limits<double>::infinity();
                double s = 0.0;
                for (std::size_t i = 0; i < data.size(); ++i)
                    s += log_add(std::log1p(-a) + bare[i], std::log(a) + estar[i]);
                return s / static_cast<double>(data.size()) -
                       0.5 * static_cast<double>(d) * kLog2Pi;
            };
            const double alpha = detail::golden_max(segment_ll, 0.0, 1.0, 30);

            bool dup = false;
            for (std::size_t k = 0; k < w.size() && !dup; ++k)
                dup = std::equal(theta.begin(), theta.end(), atoms.begin() + k * d);
            const bool improves = segment_ll(alpha) >= cur_ll;
            if (!dup && improves) {
                atoms.insert(atoms.end(), theta.begin(), theta.end());
                for (double& v : w) v *= 1.0 - alpha;
                w.push_back(alpha);
            }

            auto out = detail::em_iterate(data, atoms, std::move(w), cfg, 100);
            w = std::move(out.weights);
            trace.insert(trace.end(), out.trace.begin(), out.trace.end());
            const double new_ll = out.trace.back();

            std::vector<double> a2, w2;
            double sum = 0.0;
            for (std::size_t k = 0; k < w.size(); ++k)
                if (w[k] >= 1e-10) {
                    for (std::size_t j = 0; j < d; ++j) a2.push_back(atoms[k * d + j]);
                    w2.push_back(w[k]);
                    sum += w[k];
                }
            for (double& v : w2) v /= sum;
            atoms = std::move(a2);
            w = std::move(w2);

            // no new atom and no likelihood movement: the grid argmax is exhausted
            if ((dup || !improves) &&
                std::fabs(new_ll - prev_ll) <= cfg.rel_tol * std::max(1.0, std::fabs(prev_ll)))
                break;
            prev_ll = new_ll;
        }

        if (cfg.algorithm == Algorithm::hybrid) {
            auto out = detail::em_iterate(data, atoms, std::move(w), cfg, 200);
            w = std::move(out.weights);
            trace.insert(trace.end(), out.trace.begin(), out.trace.end());
            iters += out.sweeps;
        }
        measure = detail::drop_tiny_atoms(d, atoms, w, cfg);
    }

    SolverResult res{measure, loglik(measure, data),
                     optimality_certificate(measure, data, grid), iters, std::move(trace)};
    return res;
}

// seeded jitter of a fitted result accepted only while the log-likelihood deficit
// stays <= eps; manufactures a near-optimizer for essential-uniqueness experiments
inline SolverResult near_optimal_perturb(const SolverResult& result, const Dataset& data,
                                         double eps, std::uint64_t seed) {
    if (!(eps > 0.0)) throw std::invalid_argument("near_optimal_perturb: eps must be > 0");
    const std::size_t d = result.measure.dim();
    Rng rng(derive_seed(seed, 0x9e72));
    MixingMeasure current = result.measure;
    double cur_ll = result.loglik;
    std::vector<double> trace{cur_ll};
    std::size_t accepted = 0;
    const std::size_t proposals = 200;
    for (std::size_t p = 0; p < proposals; ++p) {
        std::vector<double> atoms(current.atoms_flat());
        std::vector<double> w(current.weights());
        if (p % 2 == 0) {
            for (double& v : w) v *= std::exp(0.05 * rng.normal());
            double s = 0.0;
            for (double v : w) s += v;
            for (double& v : w) v /= s;
        } else {
            for (double& v : atoms) v += 0.02 * rng.normal();
        }
        MixingMeasure cand(d, std::move(atoms), std::move(w));
        const double ll = loglik(cand, data);
        if (result.loglik - ll <= eps) {
            current = std::move(cand);
            cur_ll = ll;
            trace.push_back(ll);
            ++accepted;
        }
    }
    const double deficit = std::max(0.0, result.loglik - cur_ll);
    return SolverResult{std::move(current), cur_ll, deficit, accepted, std::move(trace)};
}

}  // namespace mixmech

#endif
