#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include <json.hpp>

#include "prae/core.hpp"
#include "prae/gaussian.hpp"
#include "prae/hull.hpp"

namespace prae {

struct Estimate {
    double value = 0.0;
    double per_run_variance = 0.0;
    long n_used = 0;
    double empirical_re = std::numeric_limits<double>::infinity();
    double ci_lo = 0.0, ci_hi = 0.0;
    long hits = 0;
    nlohmann::json meta = nlohmann::json::object();

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["value"] = value;
        j["per_run_variance"] = per_run_variance;
        j["n"] = n_used;
        j["empirical_re"] = empirical_re;
        j["ci95"] = {ci_lo, ci_hi};
        j["hits"] = hits;
        j["meta"] = meta;
        return j;
    }
};

// Assembles the summary statistics from per-run outputs already reduced to
// (sum, sum of squares, hits).
inline Estimate summarize_runs(double sum, double sum_sq, long n, long hits) {
    Estimate est;
    est.n_used = n;
    est.hits = hits;
    const double mean = sum / static_cast<double>(n);
    const double var =
        n > 1 ? std::max(0.0, (sum_sq - sum * mean) / static_cast<double>(n - 1))
              : 0.0;
    est.value = mean;
    est.per_run_variance = var;
    est.empirical_re = mean > 0.0 ? var / (mean * mean)
                                  : std::numeric_limits<double>::infinity();
    const double half = 1.959963984540054 * std::sqrt(var / static_cast<double>(n));
    est.ci_lo = std::max(0.0, mean - half);
    est.ci_hi = mean + half;
    return est;
}

// A rare-event estimation problem: input law, black-box indicator (pure and
// deterministic), the re-orientation into the positive quadrant, and the
// continuous score the CE/AMS ladders climb (rare iff score > target_level).
struct Problem {
    int dim;
    GaussianSpec law;
    std::function<int(const Vec&)> indicator;
    OrientationMap orientation;
    double gamma;  // rarity tag
    std::function<double(const Vec&)> score;
    double target_level;

    // The input law seen in orientation-mapped coordinates. The map is a
    // per-coordinate reflection plus shift, so Gaussians map to Gaussians.
    GaussianSpec mapped_law() const {
        Vec mean = orientation.apply(law.mean());
        Mat flip = Mat::Identity(dim, dim);
        for (int i = 0; i < dim; ++i)
            if (orientation.flip[static_cast<std::size_t>(i)]) flip(i, i) = -1.0;
        return GaussianSpec(mean, flip * law.cov() * flip);
    }
};

}  // namespace prae
