#pragma once

#include <algorithm>
#include <vector>

#include <json.hpp>

#include "prae/core.hpp"
#include "prae/rng.hpp"

namespace prae {

enum class HullOrientation { Lower, Upper };

namespace detail {
// a <= b coordinate-wise. Comparisons are exact on purpose: hull membership
// must match the containment MIP bit-for-bit.
inline bool dominated_by(const Vec& a, const Vec& b) {
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (a[i] > b[i]) return false;
    return true;
}
}  // namespace detail

// Orthogonally monotone hull, kept as its maximal antichain of extreme
// points. Lower orientation is H(T0), the union of origin-anchored
// rectangles; Upper is J(T1), the union of +inf-anchored orthants.
class MonotoneHull {
  public:
    MonotoneHull(HullOrientation orientation, int dim)
        : orientation_(orientation), dim_(dim) {}

    static MonotoneHull build(const std::vector<Vec>& points,
                              HullOrientation orientation, int dim) {
        MonotoneHull hull(orientation, dim);
        for (const auto& p : points) hull.check_point(p);
        // For the Lower hull a point survives iff nothing dominates it; a
        // sort by descending coordinate sum lets the scan terminate early in
        // the common case.
        std::vector<Vec> sorted = points;
        std::sort(sorted.begin(), sorted.end(), [&](const Vec& a, const Vec& b) {
            const double sa = a.sum(), sb = b.sum();
            if (sa != sb)
                return orientation == HullOrientation::Lower ? sa > sb : sa < sb;
            return std::lexicographical_compare(a.data(), a.data() + a.size(),
                                                b.data(), b.data() + b.size());
        });
        for (const auto& p : sorted) hull.insert_unchecked(p);
        return hull;
    }

    HullOrientation orientation() const { return orientation_; }
    int dim() const { return dim_; }
    const std::vector<Vec>& extreme() const { return extreme_; }
    bool empty() const { return extreme_.empty(); }

    bool contains(const Vec& x) const {
        for (const auto& e : extreme_) {
            if (orientation_ == HullOrientation::Lower) {
                if (detail::dominated_by(x, e)) return true;
            } else {
                if (detail::dominated_by(e, x)) return true;
            }
        }
        return false;
    }

    // Persistent-structure contract: returns a new snapshot, the receiver is
    // untouched.
    MonotoneHull insert(const Vec& x) const {
        check_point(x);
        MonotoneHull next = *this;
        next.insert_unchecked(x);
        return next;
    }

    // Random thinning of the input points (Appendix-B style reduction knob).
    static std::vector<Vec> thin(const std::vector<Vec>& points, double keep,
                                 CounterRng& rng) {
        if (keep >= 1.0) return points;
        std::vector<Vec> out;
        for (const auto& p : points)
            if (rng.next_uniform() < keep) out.push_back(p);
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["orientation"] =
            orientation_ == HullOrientation::Lower ? "lower" : "upper";
        j["dim"] = dim_;
        auto pts = nlohmann::json::array();
        for (const auto& e : extreme_) {
            auto row = nlohmann::json::array();
            for (Eigen::Index i = 0; i < e.size(); ++i) row.push_back(e[i]);
            pts.push_back(row);
        }
        j["extreme"] = pts;
        return j;
    }

    static MonotoneHull from_json(const nlohmann::json& j) {
        const auto orientation = j.at("orientation").get<std::string>() == "lower"
                                     ? HullOrientation::Lower
                                     : HullOrientation::Upper;
        MonotoneHull hull(orientation, j.at("dim").get<int>());
        for (const auto& row : j.at("extreme")) {
            Vec e(row.size());
            for (std::size_t i = 0; i < row.size(); ++i) e[i] = row[i].get<double>();
            hull = hull.insert(e);
        }
        return hull;
    }

  private:
    void check_point(const Vec& p) const {
        if (p.size() != dim_)
            throw PraeError("MonotoneHull: dimension mismatch");
        for (Eigen::Index i = 0; i < p.size(); ++i)
            if (p[i] < 0.0)
                throw NegativeCoordinate("MonotoneHull: coordinate < 0");
    }

    void insert_unchecked(const Vec& x) {
        const bool lower = orientation_ == HullOrientation::Lower;
        for (const auto& e : extreme_) {
            const bool covered =
                lower ? detail::dominated_by(x, e) : detail::dominated_by(e, x);
            if (covered) return;
        }
        std::erase_if(extreme_, [&](const Vec& e) {
            return lower ? detail::dominated_by(e, x) : detail::dominated_by(x, e);
        });
        extreme_.push_back(x);
    }

    HullOrientation orientation_;
    int dim_;
    std::vector<Vec> extreme_;
};

// Per-coordinate affine re-orientation making a problem's rare direction
// point toward +inf in every coordinate: y_i = flip_i ? shift_i - x_i
//                                              : x_i - shift_i.
struct OrientationMap {
    std::vector<bool> flip;
    Vec shift;

    static OrientationMap identity(int d) {
        return OrientationMap{std::vector<bool>(d, false), Vec::Zero(d)};
    }

    static OrientationMap full_flip(Vec shift_vec) {
        const auto d = static_cast<std::size_t>(shift_vec.size());
        return OrientationMap{std::vector<bool>(d, true), std::move(shift_vec)};
    }

    int dim() const { return static_cast<int>(shift.size()); }

    Vec apply(const Vec& x) const {
        Vec y(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i)
            y[i] = flip[static_cast<std::size_t>(i)] ? shift[i] - x[i]
                                                     : x[i] - shift[i];
        return y;
    }

    Vec invert(const Vec& y) const {
        Vec x(y.size());
        for (Eigen::Index i = 0; i < y.size(); ++i)
            x[i] = flip[static_cast<std::size_t>(i)] ? shift[i] - y[i]
                                                     : y[i] + shift[i];
        return x;
    }

    bool in_positive_quadrant(const Vec& y) const {
        for (Eigen::Index i = 0; i < y.size(); ++i)
            if (y[i] < 0.0) return false;
        return true;
    }
};

}  // namespace prae
