#ifndef MIXMECH_MEASURE_HPP
#define MIXMECH_MEASURE_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mixmech/types.hpp"

namespace mixmech {

// finitely supported probability measure on R^d: atoms theta_k with weights pi_k.
// Weights must be nonnegative; sums within 1e-9 of 1 are renormalized, anything
// further off is rejected as a usage error.
class MixingMeasure {
public:
    MixingMeasure(std::size_t dim, std::vector<double> atoms, std::vector<double> weights)
        : dim_(dim), atoms_(std::move(atoms)), weights_(std::move(weights)) {
        if (dim_ == 0) throw std::invalid_argument("mixing measure: dim must be >= 1");
        if (weights_.empty()) throw std::invalid_argument("mixing measure: needs >= 1 atom");
        if (atoms_.size() != weights_.size() * dim_)
            throw std::invalid_argument("mixing measure: atoms/weights length mismatch");
        double sum = 0.0;
        for (double w : weights_) {
            if (!(w >= 0.0)) throw std::invalid_argument("mixing measure: negative weight");
            sum += w;
        }
        for (double a : atoms_)
            if (!std::isfinite(a)) throw std::invalid_argument("mixing measure: non-finite atom");
        if (std::fabs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("mixing measure: weights sum to " + std::to_string(sum));
        if (sum != 1.0)
            for (double& w : weights_) w /= sum;
    }

    static MixingMeasure delta(Point atom) {
        const std::size_t d = atom.size();
        return MixingMeasure(d, std::move(atom), {1.0});
    }

    static MixingMeasure uniform(std::size_t dim, std::vector<double> atoms) {
        const std::size_t k = atoms.size() / dim;
        return MixingMeasure(dim, std::move(atoms),
                             std::vector<double>(k, 1.0 / static_cast<double>(k)));
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return weights_.size(); }
    PointView atom(std::size_t k) const { return PointView(atoms_.data() + k * dim_, dim_); }
    double weight(std::size_t k) const { return weights_[k]; }
    const std::vector<double>& atoms_flat() const { return atoms_; }
    const std::vector<double>& weights() const { return weights_; }

    // total weight inside a closed box; membership in M(Theta;tau) is mass >= tau
    double restrict_mass(const Box& box) const {
        if (box.dim() != dim_) throw std::invalid_argument("restrict_mass: dimension mismatch");
        double s = 0.0;
        for (std::size_t k = 0; k < size(); ++k)
            if (box.contains(atom(k))) s += weights_[k];
        return s;
    }

    bool operator==(const MixingMeasure& o) const {
        return dim_ == o.dim_ && atoms_ == o.atoms_ && weights_ == o.weights_;
    }

    nlohmann::json to_json() const {
        nlohmann::json atoms = nlohmann::json::array();
        for (std::size_t k = 0; k < size(); ++k) {
            nlohmann::json row = nlohmann::json::array();
            for (double c : atom(k)) row.push_back(c);
            atoms.push_back(std::move(row));
        }
        return nlohmann::json{{"dim", dim_}, {"atoms", std::move(atoms)}, {"weights", weights_}};
    }

    static MixingMeasure from_json(const nlohmann::json& j) {
        const std::size_t dim = j.at("dim").get<std::size_t>();
        std::vector<double> atoms;
        for (const auto& row : j.at("atoms")) {
            if (row.size() != dim)
                throw std::invalid_argument("mixing measure json: atom dimension mismatch");
            for (const auto& c : row) atoms.push_back(c.get<double>());
        }
        return MixingMeasure(dim, std::move(atoms), j.at("weights").get<std::vector<double>>());
    }

private:
    std::size_t dim_;
    std::vector<double> atoms_;   // flat, k-th atom at [k*dim, (k+1)*dim)
    std::vector<double> weights_;
};

}  // namespace mixmech

#endif
