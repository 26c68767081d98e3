#ifndef MIXMECH_DISCRETIZE_HPP
#define MIXMECH_DISCRETIZE_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixmech/gmm.hpp"
#include "mixmech/measure.hpp"
#include "mixmech/rng.hpp"
#include "mixmech/types.hpp"

namespace mixmech {

// L1 Lipschitz constant of the standard gaussian kernel in one coordinate
inline double gauss_lipschitz(std::size_t d) {
    return std::pow(2.0 * M_PI, -0.5 * static_cast<double>(d)) * std::exp(-0.5);
}

// composed constant for the coverage gap of the reduce-then-project pipeline
inline constexpr double kCoverageC = 5.0;

struct DiscretizeConfig {
    double eps = 0.3;
    std::size_t t = 1;       // Taylor order; moment count is m = (2t)^d
    double R = 0.0;          // evaluation radius
    double delta = 0.0;      // atom lattice pitch
    double gamma = 0.0;      // weight grid pitch
    double member_cap = 1e7; // refuse to materialize families larger than this
    bool materialize = false;

    std::size_t moment_count(std::size_t d) const {
        std::size_t m = 1;
        for (std::size_t j = 0; j < d; ++j) m *= 2 * t;
        return m;
    }

    void validate(std::size_t d) const {
        if (!(eps > 0.0) || !(eps < 1.0))
            throw std::invalid_argument("discretize: eps must be in (0, 1)");
        if (t < 1) throw std::invalid_argument("discretize: t must be >= 1");
        if (!(R > 0.0)) throw std::invalid_argument("discretize: R must be > 0");
        if (!(delta > 0.0)) throw std::invalid_argument("discretize: delta must be > 0");
        if (!(gamma > 0.0) || !(gamma < 1.0))
            throw std::invalid_argument("discretize: gamma must be in (0, 1)");
        if (!(member_cap >= 1.0)) throw std::invalid_argument("discretize: member_cap must be >= 1");
        (void)d;
    }

    // schedule with every pitch linear in eps; keeps m (delta + 2 gamma /
    // lipschitz scale) equal to eps while the family stays enumerable
    static DiscretizeConfig desk(double eps, std::size_t d) {
        if (!(eps > 0.0) || !(eps < 1.0))
            throw std::invalid_argument("discretize: eps must be in (0, 1)");
        DiscretizeConfig cfg;
        cfg.eps = eps;
        const double L = std::log(1.0 / eps);
        cfg.t = static_cast<std::size_t>(std::max(1.0, std::ceil(2.0 * L)));
        cfg.R = std::sqrt(80.0 * L);
        const double m = static_cast<double>(cfg.moment_count(d));
        cfg.delta = eps / (2.0 * gauss_lipschitz(d) * static_cast<double>(d) * m);
        cfg.gamma = eps / (4.0 * m);
        return cfg;
    }

    // conservative schedule with pitches of order eps^81; counts stay finite
    // arithmetically but the family is far beyond materialization
    static DiscretizeConfig conservative(double eps, std::size_t d) {
        if (!(eps > 0.0) || !(eps < 1.0))
            throw std::invalid_argument("discretize: eps must be in (0, 1)");
        DiscretizeConfig cfg;
        cfg.eps = eps;
        const double L = std::log(1.0 / eps);
        const double c1 = std::max(81.0, 160.0 * std::exp(2.0));
        cfg.t = static_cast<std::size_t>(std::max(1.0, std::ceil(c1 * L)));
        cfg.R = std::sqrt(80.0 * L);
        const double m = static_cast<double>(cfg.moment_count(d));
        const double e81 = std::pow(eps, 81.0);
        cfg.delta = std::min(e81 / (2.0 * gauss_lipschitz(d) * static_cast<double>(d) * m), 1.0);
        cfg.gamma = std::min(e81 / (4.0 * m), 1.0);
        return cfg;
    }
};

using MomentFunction = std::function<double(PointView)>;

// exponent tuples k in {0, ..., 2t-1}^d as monomial evaluators
inline std::vector<MomentFunction> monomial_functions(std::size_t d, std::size_t t) {
    if (d < 1 || t < 1) throw std::invalid_argument("monomials: d and t must be >= 1");
    std::vector<MomentFunction> funcs;
    std::vector<std::size_t> k(d, 0);
    const std::size_t deg = 2 * t;
    while (true) {
        funcs.push_back([k](PointView x) {
            double v = 1.0;
            for (std::size_t j = 0; j < k.size(); ++j)
                for (std::size_t p = 0; p < k[j]; ++p) v *= x[j];
            return v;
        });
        std::size_t j = 0;
        for (; j < d; ++j) {
            if (++k[j] < deg) break;
            k[j] = 0;
        }
        if (j == d) break;
    }
    return funcs;
}

namespace detail {

inline Eigen::MatrixXd moment_matrix(const MixingMeasure& mu,
                                     const std::vector<MomentFunction>& funcs) {
    const std::size_t n = mu.size(), rows = funcs.size() + 1;
    Eigen::MatrixXd m(rows, n);
    for (std::size_t c = 0; c < n; ++c) {
        const auto th = mu.atom(c);
        for (std::size_t r = 0; r < funcs.size(); ++r) m(r, c) = funcs[r](th);
        m(rows - 1, c) = 1.0;
    }
    return m;
}

// one kernel vector of m, column-pivoted QR first, complete-pivot LU retry
inline Eigen::VectorXd null_vector(const Eigen::MatrixXd& m) {
    const Eigen::Index n = m.cols();
    const double scale = 1.0 + m.cwiseAbs().maxCoeff();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
    qr.setThreshold(1e-12);
    const Eigen::Index r = qr.rank();
    if (r < n) {
        Eigen::MatrixXd rmat = qr.matrixR().topRows(r);
        Eigen::VectorXd vp = Eigen::VectorXd::Zero(n);
        vp.head(r) =
            rmat.leftCols(r).triangularView<Eigen::Upper>().solve(Eigen::VectorXd(rmat.col(r)));
        vp(r) = -1.0;
        Eigen::VectorXd x = qr.colsPermutation() * vp;
        x /= x.cwiseAbs().maxCoeff();
        if ((m * x).cwiseAbs().maxCoeff() <= 1e-8 * scale) return x;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    lu.setThreshold(1e-12);
    const Eigen::MatrixXd ker = lu.kernel();
    if (ker.cols() > 0) {
        Eigen::VectorXd x = ker.col(0);
        x /= x.cwiseAbs().maxCoeff();
        if ((m * x).cwiseAbs().maxCoeff() <= 1e-8 * scale) return x;
    }
    throw std::runtime_error("caratheodory: null-space search failed");
}

}  // namespace detail

// repeatedly walks along a null direction of the moment map until at most
// funcs.size() + 1 atoms remain; all listed moments and the total mass are
// preserved up to roundoff
inline MixingMeasure caratheodory_reduce(const MixingMeasure& mu,
                                         const std::vector<MomentFunction>& funcs) {
    if (funcs.empty()) throw std::invalid_argument("caratheodory: need at least one function");
    const std::size_t target = funcs.size() + 1;
    std::vector<double> atoms(mu.atoms_flat());
    std::vector<double> w(mu.weights());
    const std::size_t d = mu.dim();
    while (w.size() > target) {
        MixingMeasure cur(d, atoms, w);
        Eigen::VectorXd x = detail::null_vector(detail::moment_matrix(cur, funcs));
        bool has_neg = false;
        for (Eigen::Index k = 0; k < x.size(); ++k) has_neg = has_neg || x(k) < 0.0;
        if (!has_neg) x = -x;
        double s = std::numeric_limits<double>::infinity();
        std::size_t kill = w.size();
        for (std::size_t k = 0; k < w.size(); ++k) {
            if (x(static_cast<Eigen::Index>(k)) >= 0.0) continue;
            const double step = w[k] / -x(static_cast<Eigen::Index>(k));
            if (step < s) {
                s = step;
                kill = k;
            }
        }
        if (kill == w.size()) throw std::runtime_error("caratheodory: degenerate null direction");
        std::vector<double> atoms2;
        std::vector<double> w2;
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double wk = k == kill ? 0.0 : w[k] + s * x(static_cast<Eigen::Index>(k));
            if (wk <= 0.0) continue;
            w2.push_back(wk);
            atoms2.insert(atoms2.end(), atoms.begin() + k * d, atoms.begin() + (k + 1) * d);
        }
        if (w2.size() >= w.size()) throw std::runtime_error("caratheodory: no atom eliminated");
        atoms = std::move(atoms2);
        w = std::move(w2);
    }
    return MixingMeasure(d, atoms, w);
}

// sup-norm error of replacing the gaussian kernel by its degree-(2t-2) Taylor
// truncation when all atoms stay within radius R of the evaluation points
inline double taylor_sup_bound(std::size_t t, double R, std::size_t d) {
    return 2.0 * std::pow(2.0 * M_PI, -0.5 * static_cast<double>(d)) *
           std::pow(std::exp(1.0) * (2.0 * R) * (2.0 * R) / (2.0 * static_cast<double>(t)),
                    static_cast<double>(t));
}

// mixture of the truncated kernel sum_{j<t} (-s/2)^j / j!, s = |x - theta|^2;
// depends on the mixing measure only through moments of degree < 2t per
// coordinate, so it is invariant under the matching moment reduction
inline double gauss_taylor_surrogate(const MixingMeasure& mu, PointView x, std::size_t t) {
    const double norm_const = std::pow(2.0 * M_PI, -0.5 * static_cast<double>(mu.dim()));
    double acc = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        const double s = sq_dist(x, mu.atom(k));
        double term = 1.0, sum = 1.0;
        for (std::size_t j = 1; j < t; ++j) {
            term *= -0.5 * s / static_cast<double>(j);
            sum += term;
        }
        acc += mu.weight(k) * sum;
    }
    return norm_const * acc;
}

// reduces a measure supported on theta to at most (2t)^d + 1 atoms matching
// all mixed moments of per-coordinate degree < 2t
inline MixingMeasure discretize_compact(const MixingMeasure& mu, const Box& theta,
                                        const DiscretizeConfig& cfg) {
    if (mu.dim() != theta.dim()) throw std::invalid_argument("discretize: dimension mismatch");
    for (std::size_t k = 0; k < mu.size(); ++k)
        if (!theta.contains(mu.atom(k)))
            throw std::invalid_argument("discretize: atom outside theta");
    if (cfg.R < 2.0 * theta.sup_norm() - 1e-12)
        throw std::invalid_argument("discretize: R must be at least twice the radius of theta");
    return caratheodory_reduce(mu, monomial_functions(mu.dim(), cfg.t));
}

// snaps atoms to the delta lattice (ties toward the smaller coordinate),
// rounds weights down to multiples of gamma, and rescales so the mass lost to
// rounding is spread proportionally instead of landing on a phantom atom
inline MixingMeasure lattice_project(const MixingMeasure& mu, double delta, double gamma,
                                     const Box& box) {
    if (!(delta > 0.0) || !(gamma > 0.0) || !(gamma < 1.0))
        throw std::invalid_argument("lattice: delta must be > 0 and gamma in (0, 1)");
    if (mu.dim() != box.dim()) throw std::invalid_argument("lattice: dimension mismatch");
    const std::size_t d = mu.dim();
    std::vector<double> atoms;
    std::vector<double> w;
    auto upsert = [&](const Point& y, double q) {
        for (std::size_t k = 0; k < w.size(); ++k) {
            bool same = true;
            for (std::size_t j = 0; j < d; ++j) same = same && atoms[k * d + j] == y[j];
            if (same) {
                w[k] += q;
                return;
            }
        }
        atoms.insert(atoms.end(), y.begin(), y.end());
        w.push_back(q);
    };
    for (std::size_t k = 0; k < mu.size(); ++k) {
        const auto th = mu.atom(k);
        if (!box.contains(th)) throw std::invalid_argument("lattice: atom outside box");
        Point y(d);
        for (std::size_t j = 0; j < d; ++j) y[j] = delta * std::ceil(th[j] / delta - 0.5);
        const double wk = mu.weight(k);
        double q = gamma * std::floor(wk / gamma);
        if (q > wk) q -= gamma;
        if (q < 0.0) q = 0.0;
        upsert(y, q);
    }
    double total = 0.0;
    for (double q : w) total += q;
    if (!(total > 0.0)) throw std::invalid_argument("lattice: all weights rounded to zero");
    // rounding down loses at most gamma per atom; scaling back up keeps the
    // same atom set and shifts every log-weight by the same -log(total)
    for (double& q : w) q /= total;
    return MixingMeasure(d, atoms, w);
}

// uniform snapshot of a box on a tensor grid, per_axis points per coordinate
inline MixingMeasure uniform_grid_measure(const Box& box, std::size_t per_axis) {
    if (per_axis < 2) throw std::invalid_argument("grid measure: need at least 2 points per axis");
    const std::size_t d = box.dim();
    std::size_t total = 1;
    for (std::size_t j = 0; j < d; ++j) total *= per_axis;
    std::vector<double> atoms;
    atoms.reserve(total * d);
    std::vector<std::size_t> idx(d, 0);
    while (true) {
        for (std::size_t j = 0; j < d; ++j)
            atoms.push_back(box.lo[j] + (box.hi[j] - box.lo[j]) * static_cast<double>(idx[j]) /
                                            static_cast<double>(per_axis - 1));
        std::size_t j = 0;
        for (; j < d; ++j) {
            if (++idx[j] < per_axis) break;
            idx[j] = 0;
        }
        if (j == d) break;
    }
    return MixingMeasure(d, atoms, std::vector<double>(total, 1.0 / static_cast<double>(total)));
}

struct BracketFamily {
    std::size_t dim = 1;
    std::size_t m = 0;  // matched moment count (2t)^d
    double eps = 0.0;
    double delta = 0.0;
    double gamma = 0.0;
    double R = 0.0;
    double a = 0.0;               // lattice radius sqrt(81/40) R
    double per_axis_points = 0.0; // 2 floor(a/delta) + 1, kept as a double since
    double weight_levels = 0.0;   // conservative schedules overflow any integer
    double log_count = 0.0;
    double count = 0.0;
    std::vector<double> axis;            // filled only when small enough to enumerate
    std::vector<MixingMeasure> members;  // filled only when cfg.materialize

    Box lattice_box() const {
        return Box(std::vector<double>(dim, -a), std::vector<double>(dim, a));
    }
};

// enumerable family of lattice mixtures: m + 1 slots, each an atom of the
// delta lattice inside the radius-a box paired with a gamma-multiple weight,
// normalized at the end; count is the arithmetic bound
// (|lattice| * |weight grid|)^(m+1), materialized only under the cap
inline BracketFamily build_bracket_family(const Box& theta, double tau,
                                          const DiscretizeConfig& cfg) {
    const std::size_t d = theta.dim();
    cfg.validate(d);
    if (!(tau > 0.0) || tau > 1.0)
        throw std::invalid_argument("bracketing: tau must be in (0, 1]");
    if (cfg.R < 2.0 * theta.sup_norm() - 1e-12)
        throw std::invalid_argument("bracketing: R must be at least twice the radius of theta");
    BracketFamily fam;
    fam.dim = d;
    fam.m = cfg.moment_count(d);
    fam.eps = cfg.eps;
    fam.delta = cfg.delta;
    fam.gamma = cfg.gamma;
    fam.R = cfg.R;
    fam.a = std::sqrt(81.0 / 40.0) * cfg.R;
    fam.per_axis_points = 2.0 * std::floor(fam.a / cfg.delta) + 1.0;
    fam.weight_levels = std::floor(1.0 / cfg.gamma) + 1.0;
    fam.log_count =
        static_cast<double>(fam.m + 1) *
        (static_cast<double>(d) * std::log(fam.per_axis_points) + std::log(fam.weight_levels));
    fam.count = std::exp(fam.log_count);
    if (fam.per_axis_points <= 2e6) {
        const long steps = static_cast<long>(std::floor(fam.a / cfg.delta));
        for (long j = -steps; j <= steps; ++j)
            fam.axis.push_back(cfg.delta * static_cast<double>(j));
    }
    if (!cfg.materialize) return fam;
    if (!(fam.count <= cfg.member_cap)) {
        char msg[160];
        std::snprintf(msg, sizeof(msg),
                      "bracketing: family has %.6g members (log %.6g); raise member_cap to at "
                      "least %.6g to materialize",
                      fam.count, fam.log_count, fam.count);
        throw std::invalid_argument(msg);
    }
    const std::size_t slots = fam.m + 1;
    const std::size_t levels = static_cast<std::size_t>(fam.weight_levels);
    std::size_t atom_count = 1;
    for (std::size_t j = 0; j < d; ++j) atom_count *= fam.axis.size();
    const std::size_t combos = atom_count * levels;
    std::vector<std::size_t> pick(slots, 0);
    std::vector<double> atoms;
    std::vector<double> w;
    auto upsert = [&](const Point& y, double q) {
        for (std::size_t k = 0; k < w.size(); ++k) {
            bool same = true;
            for (std::size_t j = 0; j < d; ++j) same = same && atoms[k * d + j] == y[j];
            if (same) {
                w[k] += q;
                return;
            }
        }
        atoms.insert(atoms.end(), y.begin(), y.end());
        w.push_back(q);
    };
    while (true) {
        double total = 0.0;
        for (std::size_t s : pick) total += cfg.gamma * static_cast<double>(s % levels);
        if (total > 0.0 && total <= 1.0 + 1e-12) {
            atoms.clear();
            w.clear();
            for (std::size_t s : pick) {
                std::size_t aid = s / levels;
                Point y(d);
                for (std::size_t j = 0; j < d; ++j) {
                    y[j] = fam.axis[aid % fam.axis.size()];
                    aid /= fam.axis.size();
                }
                upsert(y, cfg.gamma * static_cast<double>(s % levels));
            }
            for (double& q : w) q /= total;
            fam.members.emplace_back(d, atoms, w);
        }
        std::size_t j = 0;
        for (; j < slots; ++j) {
            if (++pick[j] < combos) break;
            pick[j] = 0;
        }
        if (j == slots) break;
    }
    return fam;
}

// bound on -log f over R^d for any density in the tau-restricted class
inline double envelope_constant(const Box& theta, double tau, std::size_t d) {
    const double s = theta.sup_norm();
    return s * s + std::log(1.0 / tau) + 0.5 * static_cast<double>(d) * std::log(2.0 * M_PI);
}

// glued log-density bracket around a family member: flat data-independent
// envelopes outside the radius-R ball, member log-density plus or minus the
// composed coverage slack inside
inline double bracket_upper(const GmmDensity& member, PointView x, double eps, double R) {
    if (norm(x) > R) return 0.0;
    return member.log_density(x) + kCoverageC * eps;
}

inline double bracket_lower(const GmmDensity& member, PointView x, double eps, double R,
                            double env_const) {
    const double r = norm(x);
    if (r > R) return -r * r - env_const;
    return member.log_density(x) - kCoverageC * eps;
}

struct CoverageOutcome {
    double gap = 0.0;       // sup over the radius-R box of |log f - log member|
    MixingMeasure member;   // the covering family member
};

// reduce-then-project pipeline: condition the inside-theta part down to at
// most m + 1 atoms if needed, snap everything onto the family lattices, and
// measure the worst log-density gap on a fixed grid over [-R, R]^d
inline CoverageOutcome cover_with_member(const GmmDensity& f, const Box& theta,
                                         const DiscretizeConfig& cfg) {
    const std::size_t d = f.dim();
    if (theta.dim() != d) throw std::invalid_argument("coverage: dimension mismatch");
    cfg.validate(d);
    const std::size_t m = cfg.moment_count(d);
    MixingMeasure mu = f.mixing();
    if (mu.size() > m + 1) {
        std::vector<double> in_atoms, in_w, out_atoms, out_w;
        double in_mass = 0.0;
        for (std::size_t k = 0; k < mu.size(); ++k) {
            const auto th = mu.atom(k);
            if (theta.contains(th)) {
                in_atoms.insert(in_atoms.end(), th.begin(), th.end());
                in_w.push_back(mu.weight(k));
                in_mass += mu.weight(k);
            } else {
                out_atoms.insert(out_atoms.end(), th.begin(), th.end());
                out_w.push_back(mu.weight(k));
            }
        }
        if (in_w.empty() || in_mass <= 0.0)
            throw std::invalid_argument("coverage: no mass inside theta");
        std::vector<double> in_norm(in_w);
        for (double& v : in_norm) v /= in_mass;
        const MixingMeasure reduced =
            discretize_compact(MixingMeasure(d, in_atoms, in_norm), theta, cfg);
        std::vector<double> atoms(reduced.atoms_flat());
        std::vector<double> w(reduced.weights());
        for (double& v : w) v *= in_mass;
        atoms.insert(atoms.end(), out_atoms.begin(), out_atoms.end());
        w.insert(w.end(), out_w.begin(), out_w.end());
        mu = MixingMeasure(d, atoms, w);
    }
    if (mu.size() > m + 1)
        throw std::invalid_argument("coverage: measure exceeds m + 1 atoms after reduction");
    const double a = std::sqrt(81.0 / 40.0) * cfg.R;
    const Box lbox(std::vector<double>(d, -a), std::vector<double>(d, a));
    CoverageOutcome out{0.0, lattice_project(mu, cfg.delta, cfg.gamma, lbox)};
    const GmmDensity h(out.member);
    std::size_t per_axis = 2000;
    if (d == 2) per_axis = 45;
    if (d > 2) throw std::invalid_argument("coverage: grids support d <= 2");
    std::vector<std::size_t> idx(d, 0);
    Point x(d);
    while (true) {
        for (std::size_t j = 0; j < d; ++j)
            x[j] = -cfg.R + 2.0 * cfg.R * static_cast<double>(idx[j]) /
                                static_cast<double>(per_axis - 1);
        out.gap = std::max(out.gap, std::fabs(f.log_density(x) - h.log_density(x)));
        std::size_t j = 0;
        for (; j < d; ++j) {
            if (++idx[j] < per_axis) break;
            idx[j] = 0;
        }
        if (j == d) break;
    }
    return out;
}

// envelope exponent fitted once at the eps = 0.3, d = 1, theta = [-1, 1]
// anchor and reused as the predicted log-count bound D (log 1/eps)^(d+1)
inline double entropy_envelope_D() {
    const Box theta(std::vector<double>{-1.0}, std::vector<double>{1.0});
    const DiscretizeConfig cfg = DiscretizeConfig::desk(0.3, 1);
    const BracketFamily fam = build_bracket_family(theta, 0.5, cfg);
    const double L = std::log(1.0 / 0.3);
    return fam.log_count / (L * L);
}

inline double predicted_log_count_bound(double eps, std::size_t d) {
    const double L = std::log(1.0 / eps);
    return entropy_envelope_D() * std::pow(L, static_cast<double>(d) + 1.0);
}

}  // namespace mixmech

#endif
