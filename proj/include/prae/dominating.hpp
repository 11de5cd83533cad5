#pragma once

#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prae/core.hpp"
#include "prae/gaussian.hpp"
#include "prae/hull.hpp"
#include "prae/kappa.hpp"
#include "prae/miqp.hpp"
#include "prae/qp.hpp"
#include "prae/rng.hpp"

namespace prae {

enum class DominatingSource { DeepNet, LazyHull };

struct DominatingSet {
    std::vector<Vec> points;
    std::vector<double> weights;  // uniform 1/|A| per Algorithm 1 step 9
    DominatingSource source = DominatingSource::DeepNet;
    double rate_of_a_star = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> objectives;
    long total_nodes = 0;
    double box_m_used = 0.0;

    bool empty() const { return points.empty(); }

    nlohmann::json to_json() const {
        nlohmann::json j;
        auto pts = nlohmann::json::array();
        for (const auto& a : points)
            pts.push_back(std::vector<double>(a.data(), a.data() + a.size()));
        j["points"] = pts;
        j["weights"] = weights;
        j["objectives"] = objectives;
        j["source"] = source == DominatingSource::DeepNet ? "deep" : "lazy";
        j["rate_of_a_star"] = rate_of_a_star;
        j["solver_nodes"] = total_nodes;
        j["box_m"] = box_m_used;
        return j;
    }
};

struct DominatingLimits {
    int max_points = 512;
    MiqpOptions miqp;
    int max_bigm_doublings = 6;
};

// Surfaced when the sequential search passes the configured cap. Truncating
// silently would void the certificate, so the partial set rides along for
// diagnostics only.
struct LimitExceeded : PraeError {
    DominatingSet partial;
    LimitExceeded(const std::string& msg, DominatingSet ds)
        : PraeError(msg), partial(std::move(ds)) {}
};

namespace detail {

inline void finish_weights(DominatingSet& ds) {
    ds.weights.assign(ds.points.size(),
                      1.0 / static_cast<double>(ds.points.size()));
    if (!ds.objectives.empty()) ds.rate_of_a_star = ds.objectives.front();
}

// Sequential cutting-plane loop shared by the deep and lazy searches. The
// solve callback runs one MIQP against the current cut list and is retried
// with a doubled box when the optimum presses against it.
inline DominatingSet sequential_search(
    const GaussianSpec& p, DominatingSource source, DominatingLimits limits,
    const std::function<MiqpSolution(const std::vector<std::pair<Vec, double>>&,
                                     const MiqpOptions&)>& solve) {
    DominatingSet ds;
    ds.source = source;
    std::vector<std::pair<Vec, double>> cuts;
    MiqpOptions opts = limits.miqp;
    while (true) {
        MiqpSolution sol = solve(cuts, opts);
        int doublings = 0;
        while (sol.status == MiqpStatus::BigMViolated) {
            if (++doublings > limits.max_bigm_doublings)
                throw BigMViolated("dominating: box still tight after " +
                                   std::to_string(limits.max_bigm_doublings) +
                                   " doublings");
            opts.box_m *= 2.0;
            sol = solve(cuts, opts);
        }
        ds.total_nodes += sol.nodes_explored;
        if (sol.status == MiqpStatus::Infeasible) break;

        ds.points.push_back(sol.point);
        ds.objectives.push_back(sol.objective);
        cuts.push_back(dominating_cut(p, sol.point, opts.strict_eps));
        if (static_cast<int>(ds.points.size()) > limits.max_points) {
            detail::finish_weights(ds);
            throw LimitExceeded(
                "dominating: more than " + std::to_string(limits.max_points) +
                    " points; RE scales with the mixture size",
                ds);
        }
    }
    ds.box_m_used = opts.box_m;
    detail::finish_weights(ds);
    return ds;
}

}  // namespace detail

// Algorithm-1 Stage 2 over a tuned ReLU set {g >= kappa_hat}.
inline DominatingSet find_all_deep(const ThresholdedSet& set,
                                   const GaussianSpec& p,
                                   const DominatingLimits& limits) {
    return detail::sequential_search(
        p, DominatingSource::DeepNet, limits,
        [&](const std::vector<std::pair<Vec, double>>& cuts,
            const MiqpOptions& opts) {
            MiqpSolver solver(opts);
            return solver.solve_dominating(&set.net, set.kappa_hat, nullptr, p,
                                           cuts);
        });
}

// Same sequential scheme over the complement of H(T0), encoded through the
// max-operation rows.
inline DominatingSet find_all_lazy(const MonotoneHull& hull,
                                   const GaussianSpec& p,
                                   const DominatingLimits& limits) {
    if (hull.orientation() != HullOrientation::Lower)
        throw PraeError("find_all_lazy: expected a Lower hull");
    return detail::sequential_search(
        p, DominatingSource::LazyHull, limits,
        [&](const std::vector<std::pair<Vec, double>>& cuts,
            const MiqpOptions& opts) {
            MiqpSolver solver(opts);
            return solver.solve_dominating(nullptr, 0.0, &hull, p, cuts);
        });
}

// Dominating points of the upper hull J(T1) itself: the region is a union
// of orthants, so the minimum-rate point under cuts is the best of one
// convex QP per extreme orthant.
inline DominatingSet find_all_lazy_upper(const MonotoneHull& hull,
                                         const GaussianSpec& p,
                                         const DominatingLimits& limits) {
    if (hull.orientation() != HullOrientation::Upper)
        throw PraeError("find_all_lazy_upper: expected an Upper hull");
    DominatingSet ds;
    ds.source = DominatingSource::LazyHull;
    if (hull.empty()) return ds;  // nothing rare was seen; empty set

    const int d = p.dim();
    Mat I = Mat::Identity(d, d);
    Mat sigma_inv = p.chol().triangularView<Eigen::Lower>().solve(I);
    sigma_inv =
        p.chol().transpose().triangularView<Eigen::Upper>().solve(sigma_inv);
    const Mat Q = 2.0 * sigma_inv;
    const Vec c = -Q * p.mean();
    const double obj_const = p.mean().dot(sigma_inv * p.mean());

    std::vector<std::pair<Vec, double>> cuts;
    DenseQpSolver qp;
    const double box_m = limits.miqp.box_m;

    while (true) {
        double best = std::numeric_limits<double>::infinity();
        Vec best_x;
        for (const auto& e : hull.extreme()) {
            const Eigen::Index m =
                2 * d + static_cast<Eigen::Index>(cuts.size());
            Mat A = Mat::Zero(m, d);
            Vec b(m);
            for (int j = 0; j < d; ++j) {
                A(j, j) = -1.0;  // x_j >= e_j
                b[j] = -e[j];
                A(d + j, j) = 1.0;
                b[d + j] = box_m;
            }
            for (std::size_t k = 0; k < cuts.size(); ++k) {
                A.row(2 * d + static_cast<Eigen::Index>(k)) = cuts[k].first;
                b[2 * d + static_cast<Eigen::Index>(k)] = cuts[k].second;
            }
            auto r = qp.solve(Q, c, A, b);
            if (r.status != QpStatus::Optimal) continue;
            const double value = r.objective + obj_const;
            if (value < best - 1e-9) {
                best = value;
                best_x = r.x;
            }
        }
        if (!std::isfinite(best)) break;
        ds.points.push_back(best_x);
        ds.objectives.push_back(best);
        ds.total_nodes += 1;
        cuts.push_back(dominating_cut(p, best_x, limits.miqp.strict_eps));
        if (static_cast<int>(ds.points.size()) > limits.max_points) {
            detail::finish_weights(ds);
            throw LimitExceeded("dominating: upper-hull point cap exceeded", ds);
        }
    }
    ds.box_m_used = box_m;
    detail::finish_weights(ds);
    return ds;
}

// Fraction of set members covered by some dominating half-space
// (a_j - lambda)' Sigma^{-1} (x - a_j) >= 0. Probes come from mixture draws
// that land in the set plus short hit-and-run walks started at the points.
inline double coverage_audit(const DominatingSet& ds,
                             const std::function<int(const Vec&)>& indicator,
                             const GaussianSpec& p, long n_probe,
                             CounterRng& rng) {
    if (ds.empty()) throw PraeError("coverage_audit: empty dominating set");
    std::vector<Vec> normals;
    normals.reserve(ds.points.size());
    for (const auto& a : ds.points) normals.push_back(p.cov_solve(a - p.mean()));
    auto covered = [&](const Vec& x) {
        for (std::size_t j = 0; j < ds.points.size(); ++j)
            if (normals[j].dot(x - ds.points[j]) >= -1e-12) return true;
        return false;
    };

    std::vector<std::pair<double, Vec>> comps;
    for (std::size_t j = 0; j < ds.points.size(); ++j)
        comps.emplace_back(ds.weights[j], ds.points[j]);
    MixtureSpec q(std::move(comps), p.cov());

    long inside = 0, hit = 0;
    Vec walker;
    bool have_walker = false;
    for (long i = 0; i < n_probe; ++i) {
        Vec x;
        if (i % 2 == 0 || !have_walker) {
            x = q.sample(rng);
        } else {
            // Random-direction step from the last accepted probe.
            Vec dir(p.dim());
            for (int k = 0; k < p.dim(); ++k) dir[k] = rng.next_normal();
            dir.normalize();
            x = walker + dir * (rng.next_uniform() * 2.0);
        }
        if (indicator(x) != 1) continue;
        walker = x;
        have_walker = true;
        ++inside;
        if (covered(x)) ++hit;
    }
    if (inside == 0)
        throw NoProbesHit("coverage_audit: no probe landed in the set");
    return static_cast<double>(hit) / static_cast<double>(inside);
}

}  // namespace prae
