#ifndef MIXMECH_QUADRATURE_HPP
#define MIXMECH_QUADRATURE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mixmech {

// Gauss-Legendre nodes/weights on [-1, 1], computed once per order by Newton
// iteration on P_n; accurate to ~1e-15 which is plenty below the panel width.
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussLegendre(std::size_t order) {
        if (order < 2) throw std::invalid_argument("gauss-legendre: order >= 2");
        nodes.resize(order);
        weights.resize(order);
        const double pi = 3.14159265358979323846;
        for (std::size_t i = 0; i < order; ++i) {
            double x = std::cos(pi * (static_cast<double>(i) + 0.75) /
                                (static_cast<double>(order) + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (std::size_t k = 2; k <= order; ++k) {
                    const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = pk;
                }
                dp = order * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::fabs(dx) < 1e-15) break;
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
    }
};

inline const GaussLegendre& gl16() {
    static const GaussLegendre g(16);
    return g;
}

using Interval = std::pair<double, double>;

// merge overlapping/touching intervals into a disjoint union
inline std::vector<Interval> merge_intervals(std::vector<Interval> iv) {
    if (iv.empty()) return iv;
    std::sort(iv.begin(), iv.end());
    std::vector<Interval> out{iv.front()};
    for (std::size_t i = 1; i < iv.size(); ++i) {
        if (iv[i].first <= out.back().second) {
            out.back().second = std::max(out.back().second, iv[i].second);
        } else {
            out.push_back(iv[i]);
        }
    }
    return out;
}

// composite Gauss-Legendre over [a, b] with panels of width <= panel_width
template <typename F>
double integrate_panels(F&& f, double a, double b, double panel_width = 0.5) {
    if (!(b > a)) return 0.0;
    const auto& g = gl16();
    const std::size_t panels =
        static_cast<std::size_t>(std::ceil((b - a) / panel_width));
    const double h = (b - a) / static_cast<double>(panels);
    double total = 0.0;
    for (std::size_t p = 0; p < panels; ++p) {
        const double lo = a + h * static_cast<double>(p);
        const double mid = lo + 0.5 * h;
        double s = 0.0;
        for (std::size_t i = 0; i < g.nodes.size(); ++i)
            s += g.weights[i] * f(mid + 0.5 * h * g.nodes[i]);
        total += 0.5 * h * s;
    }
    return total;
}

template <typename F>
double integrate_union(F&& f, const std::vector<Interval>& iv, double panel_width = 0.5) {
    double s = 0.0;
    for (const auto& [a, b] : iv) s += integrate_panels(f, a, b, panel_width);
    return s;
}

// quadrature node/weight list over a disjoint union, for tensorized 2-d integrals
inline void union_nodes(const std::vector<Interval>& iv, double panel_width,
                        std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.clear();
    weights.clear();
    const auto& g = gl16();
    for (const auto& [a, b] : iv) {
        if (!(b > a)) continue;
        const std::size_t panels =
            static_cast<std::size_t>(std::ceil((b - a) / panel_width));
        const double h = (b - a) / static_cast<double>(panels);
        for (std::size_t p = 0; p < panels; ++p) {
            const double mid = a + h * (static_cast<double>(p) + 0.5);
            for (std::size_t i = 0; i < g.nodes.size(); ++i) {
                nodes.push_back(mid + 0.5 * h * g.nodes[i]);
                weights.push_back(0.5 * h * g.weights[i]);
            }
        }
    }
}

}  // namespace mixmech

#endif
