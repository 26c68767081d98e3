#ifndef MIXMECH_GMM_HPP
#define MIXMECH_GMM_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mixmech/measure.hpp"
#include "mixmech/rng.hpp"
#include "mixmech/types.hpp"

namespace mixmech {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// n points in R^d plus the RNG provenance that generated them
class Dataset {
public:
    Dataset(std::size_t dim, std::vector<double> points, std::uint64_t seed, std::string source)
        : dim_(dim), points_(std::move(points)), seed_(seed), source_(std::move(source)) {
        if (dim_ == 0) throw std::invalid_argument("dataset: dim must be >= 1");
        if (points_.empty() || points_.size() % dim_ != 0)
            throw std::invalid_argument("dataset: point array not a multiple of dim");
        for (double v : points_)
            if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite entry");
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return points_.size() / dim_; }
    PointView point(std::size_t i) const { return PointView(points_.data() + i * dim_, dim_); }
    const std::vector<double>& points_flat() const { return points_; }
    std::uint64_t seed() const { return seed_; }
    const std::string& source() const { return source_; }

    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("dataset: cannot write " + path);
        for (std::size_t j = 0; j < dim_; ++j) out << (j ? ",x" : "x") << (j + 1);
        out << "\n";
        char buf[32];
        for (std::size_t i = 0; i < size(); ++i) {
            const auto x = point(i);
            for (std::size_t j = 0; j < dim_; ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", x[j]);
                out << (j ? "," : "") << buf;
            }
            out << "\n";
        }
        std::ofstream side(path + ".json");
        side << nlohmann::json{{"seed", seed_}, {"n", size()}, {"source", source_}}.dump(2)
             << "\n";
    }

    static Dataset read_csv(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("dataset: cannot read " + path);
        std::string line;
        if (!std::getline(in, line)) throw std::runtime_error("dataset: empty file " + path);
        std::size_t dim = 1;
        for (char c : line)
            if (c == ',') ++dim;
        std::vector<double> pts;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                try {
                    pts.push_back(std::stod(tok));
                } catch (const std::exception&) {
                    throw std::runtime_error("dataset: bad number \"" + tok + "\" in " + path);
                }
            }
        }
        std::uint64_t seed = 0;
        std::string source = "file:" + path;
        std::ifstream side(path + ".json");
        if (side) {
            nlohmann::json j;
            side >> j;
            seed = j.value("seed", std::uint64_t{0});
            source = j.value("source", source);
        }
        return Dataset(dim, std::move(pts), seed, std::move(source));
    }

private:
    std::size_t dim_;
    std::vector<double> points_;  // flat, i-th point at [i*dim, (i+1)*dim)
    std::uint64_t seed_;
    std::string source_;
};

// Gaussian location mixture f_mu(x) = sum_k pi_k (2pi)^{-d/2} exp(-|x-theta_k|^2/2).
// All evaluations go through log-sum-exp with max subtraction; density() exponentiates
// in long double so far-tail values (|x| <= 40, d <= 3) stay strictly positive.
class GmmDensity {
public:
    explicit GmmDensity(MixingMeasure mixing) : mixing_(std::move(mixing)) {}

    const MixingMeasure& mixing() const { return mixing_; }
    std::size_t dim() const { return mixing_.dim(); }

    double log_density(PointView x) const {
        check_dim(x);
        thread_local std::vector<double> e;
        const std::size_t k_count = mixing_.size();
        e.assign(k_count, -std::numeric_limits<double>::infinity());
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < k_count; ++k) {
            const double w = mixing_.weight(k);
            if (w <= 0.0) continue;
            e[k] = std::log(w) - 0.5 * sq_dist(x, mixing_.atom(k));
            if (e[k] > best) best = e[k];
        }
        double s = 0.0;
        for (std::size_t k = 0; k < k_count; ++k)
            if (e[k] > -std::numeric_limits<double>::infinity()) s += std::exp(e[k] - best);
        return best + std::log(s) - 0.5 * static_cast<double>(dim()) * kLog2Pi;
    }

    long double density(PointView x) const { return std::exp(static_cast<long double>(log_density(x))); }

    // posterior mean minus x: grad log f(x) = sum_k r_k(x) theta_k - x with softmax r
    Point grad_log_density(PointView x) const {
        check_dim(x);
        const std::size_t k_count = mixing_.size();
        const std::size_t d = dim();
        std::vector<double> e(k_count, -std::numeric_limits<double>::infinity());
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < k_count; ++k) {
            const double w = mixing_.weight(k);
            if (w <= 0.0) continue;
            e[k] = std::log(w) - 0.5 * sq_dist(x, mixing_.atom(k));
            if (e[k] > best) best = e[k];
        }
        Point g(d, 0.0);
        double z = 0.0;
        for (std::size_t k = 0; k < k_count; ++k) {
            if (e[k] == -std::numeric_limits<double>::infinity()) continue;
            const double r = std::exp(e[k] - best);
            z += r;
            const auto th = mixing_.atom(k);
            for (std::size_t j = 0; j < d; ++j) g[j] += r * th[j];
        }
        for (std::size_t j = 0; j < d; ++j) g[j] = g[j] / z - x[j];
        return g;
    }

    // theta_K + Z with K ~ weights, Z ~ N(0, I_d); one point per loop step so the
    // stream is a pure function of the seed
    Dataset sample(std::size_t n, std::uint64_t seed) const {
        if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
        const std::size_t d = dim();
        std::vector<double> cum(mixing_.size());
        double acc = 0.0;
        for (std::size_t k = 0; k < mixing_.size(); ++k) {
            acc += mixing_.weight(k);
            cum[k] = acc;
        }
        cum.back() = 1.0;
        Rng rng(seed);
        std::vector<double> pts(n * d);
        for (std::size_t i = 0; i < n; ++i) {
            const double u = rng.uniform();
            std::size_t k = 0;
            while (k + 1 < cum.size() && u > cum[k]) ++k;
            const auto th = mixing_.atom(k);
            for (std::size_t j = 0; j < d; ++j) pts[i * d + j] = th[j] + rng.normal();
        }
        return Dataset(d, std::move(pts), seed, describe());
    }

    std::string describe() const {
        if (mixing_.size() <= 8) return mixing_.to_json().dump();
        return "gmm(K=" + std::to_string(mixing_.size()) + ",d=" + std::to_string(dim()) + ")";
    }

private:
    void check_dim(PointView x) const {
        if (x.size() != dim()) throw std::invalid_argument("gmm: dimension mismatch");
    }

    MixingMeasure mixing_;
};

}  // namespace mixmech

#endif
