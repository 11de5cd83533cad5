#pragma once

#include <cmath>
#include <functional>
#include <utility>

#include "prae/core.hpp"
#include "prae/hull.hpp"
#include "prae/miqp.hpp"
#include "prae/relu_net.hpp"
#include "prae/rng.hpp"

namespace prae {

enum class ThresholdSense { Outer, Inner };

// Classifier plus the certified threshold: Outer means {g < kappa_hat} is
// contained in H(T0) (so the positive region is an outer approximation of
// the rare set), Inner means {g >= kappa_hat} is contained in J(T1).
//
// The inner certificate only covers the certification box [0, box_m]^d (the
// net extrapolates freely beyond the data), so Inner membership excludes
// points outside it; that truncation can only make the lower bound more
// conservative.
struct ThresholdedSet {
    ReluNet net;
    double kappa_hat;
    ThresholdSense sense;
    double box_m = 0.0;  // 0 = unbounded (Outer)

    bool member(const Vec& x) const {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            if (x[i] < 0.0) return false;
            if (sense == ThresholdSense::Inner && box_m > 0.0 && x[i] > box_m)
                return false;
        }
        return net.score(x) >= kappa_hat;
    }
};

struct KappaTrace {
    struct Step {
        double kappa;
        bool contained;
        long nodes;
    };
    std::vector<Step> steps;
    double kappa_hat = 0.0;
};

// kappa_hat = max{kappa : {g < kappa} subset of H(T0)}, located by bisection
// over [score_lo, score_hi]. Containment is monotone in kappa, so keeping
// the certified end of the bracket makes the final kappa_hat itself
// MIP-verified.
inline ThresholdedSet tune_kappa_outer(const ReluNet& net,
                                       const MonotoneHull& hull,
                                       double score_lo, double score_hi,
                                       double bisection_tol,
                                       const MiqpOptions& opts,
                                       KappaTrace* trace = nullptr) {
    if (hull.orientation() != HullOrientation::Lower)
        throw PraeError("tune_kappa_outer: expected a Lower hull");
    if (hull.empty())
        throw PraeError("tune_kappa_outer: hull is empty");

    auto contained = [&](double kappa) {
        auto r = check_containment(net, kappa, hull, opts);
        if (trace) trace->steps.push_back({kappa, r.contained, r.nodes_explored});
        return r.contained;
    };

    double lo = score_lo;
    if (!contained(lo))
        throw ContainmentNeverHolds(
            "tune_kappa_outer: containment fails even at the minimum score");
    double hi = score_hi + bisection_tol;
    if (contained(hi)) {
        if (trace) trace->kappa_hat = hi;
        return {net, hi, ThresholdSense::Outer, opts.box_m};
    }
    while (hi - lo > bisection_tol) {
        const double mid = 0.5 * (lo + hi);
        if (contained(mid))
            lo = mid;
        else
            hi = mid;
    }
    if (trace) trace->kappa_hat = lo;
    return {net, lo, ThresholdSense::Outer, opts.box_m};
}

// kappa_hat = min{kappa : {g >= kappa} subset of J(T1)} - the mirror image.
inline ThresholdedSet tune_kappa_inner(const ReluNet& net,
                                       const MonotoneHull& hull,
                                       double score_lo, double score_hi,
                                       double bisection_tol,
                                       const MiqpOptions& opts,
                                       KappaTrace* trace = nullptr) {
    if (hull.orientation() != HullOrientation::Upper)
        throw PraeError("tune_kappa_inner: expected an Upper hull");
    if (hull.empty())
        throw PraeError("tune_kappa_inner: hull is empty");

    auto contained = [&](double kappa) {
        auto r = check_containment(net, kappa, hull, opts);
        if (trace) trace->steps.push_back({kappa, r.contained, r.nodes_explored});
        return r.contained;
    };

    double hi = score_hi + bisection_tol;
    if (!contained(hi))
        throw ContainmentNeverHolds(
            "tune_kappa_inner: containment fails even above the maximum score");
    double lo = score_lo;
    if (contained(lo)) {
        if (trace) trace->kappa_hat = lo;
        return {net, lo, ThresholdSense::Inner, opts.box_m};
    }
    while (hi - lo > bisection_tol) {
        const double mid = 0.5 * (lo + hi);
        if (contained(mid))
            hi = mid;
        else
            lo = mid;
    }
    if (trace) trace->kappa_hat = hi;
    return {net, hi, ThresholdSense::Inner, opts.box_m};
}

struct RateWithCi {
    double rate;
    double lo, hi;  // 95% Wilson interval
    long n;
};

// Monte Carlo false-positive rate P_q(x in set, truth(x) = 0).
inline RateWithCi measure_fpr(const ThresholdedSet& set,
                              const std::function<int(const Vec&)>& truth,
                              const std::function<Vec(CounterRng&)>& sampler,
                              long n, CounterRng& rng) {
    long hits = 0;
    for (long i = 0; i < n; ++i) {
        const Vec x = sampler(rng);
        if (set.member(x) && truth(x) == 0) ++hits;
    }
    const double phat = static_cast<double>(hits) / static_cast<double>(n);
    const double z = 1.959963984540054;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / static_cast<double>(n);
    const double center = (phat + z2 / (2.0 * n)) / denom;
    const double half =
        z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
    return {phat, std::max(0.0, center - half), std::min(1.0, center + half), n};
}

}  // namespace prae
