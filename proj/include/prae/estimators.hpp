#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "prae/core.hpp"
#include "prae/dominating.hpp"
#include "prae/estimate.hpp"
#include "prae/gaussian.hpp"
#include "prae/hull.hpp"
#include "prae/kappa.hpp"
#include "prae/miqp.hpp"
#include "prae/train.hpp"

namespace prae {

// ---------------------------------------------------------------------------
// Naive Monte Carlo. RE is (1 - mu)/mu for a Bernoulli output; zero hits is
// the Prop.-2 failure mode and is visible through hits == 0.
inline Estimate naive_mc(const Problem& problem, long n, std::uint64_t seed) {
    CounterRng rng(seed, /*stream=*/1);
    long hits = 0;
    for (long i = 0; i < n; ++i) {
        const Vec x = problem.law.sample(rng);
        hits += problem.indicator(x);
    }
    const double mu = static_cast<double>(hits) / static_cast<double>(n);
    Estimate est = summarize_runs(static_cast<double>(hits),
                                  static_cast<double>(hits), n, hits);
    est.value = mu;
    est.empirical_re = mu > 0.0 ? (1.0 - mu) / mu
                                : std::numeric_limits<double>::infinity();
    est.meta["estimator"] = "naive_mc";
    est.meta["seed"] = seed;
    return est;
}

// ---------------------------------------------------------------------------
// Certified mixture IS: draws from sum_j alpha_j N(a_j, Sigma) and averages
// L(X) 1{X in set}. Unbiased for P(X in set) under p.
inline Estimate mixture_is(const std::function<int(const Vec&)>& set_indicator,
                           const DominatingSet& ds, const GaussianSpec& p,
                           long n2, std::uint64_t seed) {
    if (ds.empty()) throw PraeError("mixture_is: empty dominating set");
    std::vector<std::pair<double, Vec>> comps;
    for (std::size_t j = 0; j < ds.points.size(); ++j)
        comps.emplace_back(ds.weights[j], ds.points[j]);
    MixtureSpec q(std::move(comps), p.cov());

    CounterRng rng(seed, /*stream=*/2);
    double sum = 0.0, sum_sq = 0.0;
    long hits = 0;
    for (long i = 0; i < n2; ++i) {
        const Vec x = q.sample(rng);
        if (set_indicator(x) == 1) {
            const double z = likelihood_ratio(p, q, x);
            sum += z;
            sum_sq += z * z;
            ++hits;
        }
    }
    Estimate est = summarize_runs(sum, sum_sq, n2, hits);
    est.meta["estimator"] = "mixture_is";
    est.meta["components"] = ds.points.size();
    est.meta["seed"] = seed;
    return est;
}

// ---------------------------------------------------------------------------
// Deep-PrAE pipeline configuration.
struct DeepPraeConfig {
    Stage1Config train;
    double bisection_tol = 1e-3;
    double thin_keep = 1.0;  // hull thinning knob, off by default
    long n2 = 20000;
    DominatingLimits limits;
    double box_m_factor = 10.0;  // outer box = factor x max mapped coordinate
    // The inner (lower-bound) certificate is taken on a tighter box: the
    // classifier extrapolates beyond the data, and J(T1) carries negligible
    // mass out there anyway.
    double inner_box_factor = 1.5;
};

enum class BoundSide { Upper, Lower };

namespace detail {

struct MappedStage1 {
    std::vector<LabeledSample> samples;  // orientation-mapped, positive quadrant
    std::vector<Vec> t0, t1;
    long dropped = 0;
    double max_coord = 1.0;
    double score_lo = 0.0, score_hi = 0.0;
};

inline MappedStage1 map_stage1(const Problem& problem,
                               const std::vector<LabeledSample>& stage1,
                               bool require_both_labels) {
    MappedStage1 out;
    bool any0 = false, any1 = false;
    for (const auto& s : stage1) {
        Vec y = problem.orientation.apply(s.x);
        if (!problem.orientation.in_positive_quadrant(y)) {
            ++out.dropped;
            continue;
        }
        out.max_coord = std::max(out.max_coord, y.maxCoeff());
        out.samples.push_back({y, s.y});
        (s.y == 0 ? out.t0 : out.t1).push_back(y);
        (s.y == 0 ? any0 : any1) = true;
    }
    if (require_both_labels && (!any0 || !any1))
        throw DegenerateLabels("stage 1: both labels must be present after mapping");
    return out;
}

inline void score_range(const ReluNet& net, const MappedStage1& m,
                        MappedStage1* out) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : m.samples) {
        const double g = net.score(s.x);
        lo = std::min(lo, g);
        hi = std::max(hi, g);
    }
    out->score_lo = lo;
    out->score_hi = hi;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Lazy-learner bounds: mixture IS directly on the hull (complement).
inline Estimate lazy_learner(const Problem& problem,
                             const std::vector<LabeledSample>& stage1,
                             const DeepPraeConfig& cfg, BoundSide bound,
                             std::uint64_t seed) {
    // Hull-only estimators tolerate one-sided label sets; the vacuous hull
    // cases degrade to flagged but valid bounds.
    auto mapped = detail::map_stage1(problem, stage1, false);
    const GaussianSpec law = problem.mapped_law();
    DominatingLimits limits = cfg.limits;
    limits.miqp.box_m = cfg.box_m_factor * mapped.max_coord;

    Estimate est;
    if (bound == BoundSide::Upper) {
        std::vector<Vec> t0 = mapped.t0;
        if (cfg.thin_keep < 1.0) {
            CounterRng trng(seed, /*stream=*/7);
            t0 = MonotoneHull::thin(t0, cfg.thin_keep, trng);
        }
        const auto hull = MonotoneHull::build(t0, HullOrientation::Lower,
                                              problem.dim);
        bool degenerate = hull.empty();
        DominatingSet ds = find_all_lazy(hull, law, limits);
        auto in_set = [&](const Vec& y) {
            return problem.orientation.in_positive_quadrant(y) &&
                           !hull.contains(y)
                       ? 1
                       : 0;
        };
        est = mixture_is(in_set, ds, law, cfg.n2, seed);
        est.meta["hull_extremes"] = hull.extreme().size();
        est.meta["degenerate_empty_hull"] = degenerate;
        est.meta["dominating"] = ds.to_json();
    } else {
        const auto hull = MonotoneHull::build(mapped.t1, HullOrientation::Upper,
                                              problem.dim);
        DominatingSet ds = find_all_lazy_upper(hull, law, limits);
        if (ds.empty()) {
            // No rare point seen: J(T1) is empty and the valid lower bound
            // is zero.
            est.value = 0.0;
            est.n_used = cfg.n2;
            est.meta["degenerate_empty_hull"] = true;
        } else {
            auto in_set = [&](const Vec& y) { return hull.contains(y) ? 1 : 0; };
            est = mixture_is(in_set, ds, law, cfg.n2, seed);
            est.meta["dominating"] = ds.to_json();
        }
        est.meta["hull_extremes"] = hull.extreme().size();
    }
    est.meta["estimator"] =
        bound == BoundSide::Upper ? "lazy_ub" : "lazy_lb";
    est.meta["dropped_outside_quadrant"] = mapped.dropped;
    return est;
}

// ---------------------------------------------------------------------------
// Full Deep-PrAE: train, build the hull, certify kappa_hat, search the
// dominating points of the learned set, then run mixture IS on it.
// `true_indicator_stage2` switches to the Deep-PrAE Mod variant, which keeps
// the learned proposal but scores the true black box.
inline Estimate deep_prae(const Problem& problem,
                          const std::vector<LabeledSample>& stage1,
                          const DeepPraeConfig& cfg, BoundSide bound,
                          std::uint64_t seed,
                          bool true_indicator_stage2 = false) {
    auto mapped = detail::map_stage1(problem, stage1, true);
    const GaussianSpec law = problem.mapped_law();

    Stage1Config train_cfg = cfg.train;
    train_cfg.seed = seed;
    const ReluNet net = train_erm(mapped.samples, train_cfg);
    detail::score_range(net, mapped, &mapped);

    DominatingLimits limits = cfg.limits;
    limits.miqp.box_m = bound == BoundSide::Upper
                            ? cfg.box_m_factor * mapped.max_coord
                            : cfg.inner_box_factor * mapped.max_coord;

    ThresholdedSet set{net, 0.0, ThresholdSense::Outer};
    KappaTrace trace;
    try {
        if (bound == BoundSide::Upper) {
            std::vector<Vec> t0 = mapped.t0;
            if (cfg.thin_keep < 1.0) {
                CounterRng trng(seed, /*stream=*/7);
                t0 = MonotoneHull::thin(t0, cfg.thin_keep, trng);
            }
            auto hull =
                MonotoneHull::build(t0, HullOrientation::Lower, problem.dim);
            MiqpOptions tune_opts = limits.miqp;
            tune_opts.decision_only = true;
            set = tune_kappa_outer(net, hull, mapped.score_lo, mapped.score_hi,
                                   cfg.bisection_tol, tune_opts, &trace);
        } else {
            auto hull = MonotoneHull::build(mapped.t1, HullOrientation::Upper,
                                            problem.dim);
            MiqpOptions tune_opts = limits.miqp;
            tune_opts.decision_only = true;
            set = tune_kappa_inner(net, hull, mapped.score_lo, mapped.score_hi,
                                   cfg.bisection_tol, tune_opts, &trace);
        }
    } catch (const ContainmentNeverHolds&) {
        // Weak classifier: fall back to the lazy learner, which is always
        // correct, just conservative.
        Estimate est = lazy_learner(problem, stage1, cfg, bound, seed);
        est.meta["fallback_lazy"] = true;
        return est;
    }

    DominatingSet ds = find_all_deep(set, law, limits);
    Estimate est;
    if (ds.empty()) {
        // Learned set is empty above kappa_hat; the lower bound degenerates
        // to zero (cannot happen for the outer tuning with rare samples).
        est.value = 0.0;
        est.n_used = cfg.n2;
        est.meta["degenerate_empty_set"] = true;
    } else {
        std::function<int(const Vec&)> stage2;
        if (true_indicator_stage2) {
            stage2 = [&](const Vec& y) {
                return problem.indicator(problem.orientation.invert(y));
            };
        } else {
            stage2 = [&](const Vec& y) { return set.member(y) ? 1 : 0; };
        }
        est = mixture_is(stage2, ds, law, cfg.n2, seed);
        est.meta["dominating"] = ds.to_json();
    }

    est.meta["estimator"] = true_indicator_stage2
                                ? "deep_prae_mod"
                                : (bound == BoundSide::Upper ? "deep_prae_ub"
                                                             : "deep_prae_lb");
    est.meta["kappa_hat"] = set.kappa_hat;
    est.meta["kappa_bisection_steps"] = trace.steps.size();
    est.meta["dropped_outside_quadrant"] = mapped.dropped;
    est.meta["score_range"] = {mapped.score_lo, mapped.score_hi};
    return est;
}

// Deep-PrAE Mod: learned proposal, true indicator in the last step.
inline Estimate deep_prae_mod(const Problem& problem,
                              const std::vector<LabeledSample>& stage1,
                              const DeepPraeConfig& cfg, std::uint64_t seed) {
    return deep_prae(problem, stage1, cfg, BoundSide::Upper, seed,
                     /*true_indicator_stage2=*/true);
}

}  // namespace prae
