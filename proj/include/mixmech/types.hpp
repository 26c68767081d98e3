#ifndef MIXMECH_TYPES_HPP
#define MIXMECH_TYPES_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixmech {

using Point = std::vector<double>;
using PointView = std::span<const double>;

inline double sq_dist(PointView a, PointView b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double norm(PointView a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

// closed axis-aligned box [lo_1, hi_1] x ... x [lo_d, hi_d]
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    Box() = default;
    Box(std::vector<double> lo_, std::vector<double> hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
        if (lo.size() != hi.size() || lo.empty())
            throw std::invalid_argument("box: lo/hi dimension mismatch");
        for (std::size_t j = 0; j < lo.size(); ++j)
            if (!(lo[j] <= hi[j])) throw std::invalid_argument("box: lo > hi");
    }

    std::size_t dim() const { return lo.size(); }

    bool contains(PointView x) const {
        if (x.size() != lo.size()) throw std::invalid_argument("box: dimension mismatch");
        for (std::size_t j = 0; j < lo.size(); ++j)
            if (x[j] < lo[j] || x[j] > hi[j]) return false;
        return true;
    }

    // sup over the box of the euclidean norm (attained at a corner)
    double sup_norm() const {
        double s = 0.0;
        for (std::size_t j = 0; j < lo.size(); ++j) {
            const double m = std::max(std::fabs(lo[j]), std::fabs(hi[j]));
            s += m * m;
        }
        return std::sqrt(s);
    }
};

// "lo1,hi1[,lo2,hi2,...]" -> Box
inline Box parse_box(const std::string& text) {
    std::vector<double> vals;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        try {
            vals.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw std::invalid_argument("box: bad number '" + tok + "' in '" + text + "'");
        }
    }
    if (vals.empty() || vals.size() % 2 != 0)
        throw std::invalid_argument("box: expected lo1,hi1[,lo2,hi2,...], got '" + text + "'");
    std::vector<double> lo, hi;
    for (std::size_t j = 0; j < vals.size(); j += 2) {
        lo.push_back(vals[j]);
        hi.push_back(vals[j + 1]);
    }
    return Box(std::move(lo), std::move(hi));
}

}  // namespace mixmech

#endif
