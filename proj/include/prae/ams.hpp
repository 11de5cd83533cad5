#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "prae/core.hpp"
#include "prae/cross_entropy.hpp"
#include "prae/estimate.hpp"
#include "prae/rng.hpp"

namespace prae {

struct AmsConfig {
    int n_particles = 1000;
    double rho = 0.1;  // per-level survival fraction
    int mh_steps = 5;
    double step_scale = 0.5;  // proposal std = scale x survivor std
    int max_levels = 10000;
};

// Adaptive multilevel splitting / subset simulation. Levels sit at the
// empirical (1-rho) quantile of the scores; survivors are resampled and
// mutated by a random-walk Metropolis kernel targeting p conditioned on
// exceeding the level.
inline Estimate ams(const Problem& problem, const AmsConfig& cfg,
                    std::uint64_t seed) {
    CounterRng rng(seed, /*stream=*/6);
    const int n = cfg.n_particles;
    std::vector<Vec> xs(static_cast<std::size_t>(n));
    std::vector<double> scores(xs.size());
    for (int i = 0; i < n; ++i) {
        xs[static_cast<std::size_t>(i)] = problem.law.sample(rng);
        scores[static_cast<std::size_t>(i)] =
            problem.score(xs[static_cast<std::size_t>(i)]);
    }

    double log_factor = 0.0;
    std::vector<double> level_path;
    for (int lvl = 0; lvl < cfg.max_levels; ++lvl) {
        const double level = ce_detail::quantile(scores, 1.0 - cfg.rho);
        if (level >= problem.target_level) {
            long hits = 0;
            for (double s : scores)
                if (s > problem.target_level) ++hits;
            const double frac = static_cast<double>(hits) / n;
            Estimate est;
            est.value = std::exp(log_factor) * frac;
            est.n_used = static_cast<long>(n) * (lvl + 1);
            est.hits = hits;
            // Delta-method RE over the product of level fractions.
            double re = 0.0;
            const double rho_term = (1.0 - cfg.rho) / (cfg.rho * n);
            re += rho_term * lvl;
            if (hits > 0)
                re += (1.0 - frac) / (frac * n);
            est.per_run_variance = est.value * est.value * re * n;
            est.empirical_re = hits > 0
                                   ? re * n
                                   : std::numeric_limits<double>::infinity();
            const double half = 1.959963984540054 * est.value * std::sqrt(re);
            est.ci_lo = std::max(0.0, est.value - half);
            est.ci_hi = est.value + half;
            level_path.push_back(problem.target_level);
            est.meta["estimator"] = "ams";
            est.meta["levels"] = level_path;
            est.meta["seed"] = seed;
            est.meta["final_fraction"] = frac;
            return est;
        }
        level_path.push_back(level);

        std::vector<std::size_t> survivors;
        for (std::size_t i = 0; i < xs.size(); ++i)
            if (scores[i] > level) survivors.push_back(i);
        if (survivors.empty())
            throw Extinction("ams: all particles died at level " +
                             std::to_string(level));
        log_factor += std::log(static_cast<double>(survivors.size()) /
                               static_cast<double>(n));

        // Per-coordinate std of survivors drives the proposal.
        Vec mean = Vec::Zero(problem.dim);
        for (auto i : survivors) mean += xs[i];
        mean /= static_cast<double>(survivors.size());
        Vec var = Vec::Zero(problem.dim);
        for (auto i : survivors) {
            Vec r = xs[i] - mean;
            var += r.cwiseProduct(r);
        }
        var /= std::max<double>(1.0, static_cast<double>(survivors.size() - 1));
        Vec step = cfg.step_scale * var.cwiseSqrt().cwiseMax(1e-8);

        std::vector<Vec> next(xs.size());
        std::vector<double> next_scores(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const std::size_t pick =
                survivors[rng.next_below(survivors.size())];
            Vec x = xs[pick];
            double sc = scores[pick];
            for (int m = 0; m < cfg.mh_steps; ++m) {
                Vec prop = x;
                for (int j = 0; j < problem.dim; ++j)
                    prop[j] += step[j] * rng.next_normal();
                const double log_alpha =
                    problem.law.log_density(prop) - problem.law.log_density(x);
                const double u = rng.next_uniform();
                if (std::log(u) <= log_alpha) {
                    const double prop_score = problem.score(prop);
                    if (prop_score > level) {
                        x = prop;
                        sc = prop_score;
                    }
                }
            }
            next[i] = x;
            next_scores[i] = sc;
        }
        xs = std::move(next);
        scores = std::move(next_scores);
    }
    throw Stalled("ams: level budget exhausted before target");
}

}  // namespace prae
