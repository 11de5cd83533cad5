#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <utility>
#include <vector>

#include "prae/core.hpp"
#include "prae/estimate.hpp"
#include "prae/gaussian.hpp"
#include "prae/rng.hpp"
#include "prae/train.hpp"

namespace prae {

// Gaussian mixture with per-component covariance, used as the CE parametric
// family (unlike MixtureSpec, whose covariance is shared by construction).
class GmmModel {
  public:
    struct Component {
        double weight;
        Vec mean;
        Mat chol;
        double log_det;
    };

    static GmmModel single(const Vec& mean, const Mat& cov) {
        GmmModel m;
        m.push(1.0, mean, cov);
        return m;
    }

    void push(double weight, const Vec& mean, const Mat& cov) {
        Mat L = chol_factor(cov);
        comps_.push_back({weight, mean, L, L.diagonal().array().log().sum()});
    }

    std::size_t size() const { return comps_.size(); }
    const std::vector<Component>& components() const { return comps_; }

    double log_density(const Vec& x) const {
        const double norm =
            -0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi);
        double best = -std::numeric_limits<double>::infinity();
        std::vector<double> terms(comps_.size());
        for (std::size_t j = 0; j < comps_.size(); ++j) {
            const auto& c = comps_[j];
            Vec r = c.chol.triangularView<Eigen::Lower>().solve(x - c.mean);
            terms[j] = std::log(c.weight) + norm - c.log_det - 0.5 * r.squaredNorm();
            best = std::max(best, terms[j]);
        }
        double acc = 0.0;
        for (double t : terms) acc += std::exp(t - best);
        return best + std::log(acc);
    }

    Vec sample(CounterRng& rng) const {
        double u = rng.next_uniform();
        std::size_t pick = comps_.size() - 1;
        double cum = 0.0;
        for (std::size_t j = 0; j < comps_.size(); ++j) {
            cum += comps_[j].weight;
            if (u <= cum) {
                pick = j;
                break;
            }
        }
        const auto& c = comps_[pick];
        Vec z(c.mean.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.next_normal();
        return c.mean + c.chol * z;
    }

  private:
    std::vector<Component> comps_;
};

enum class CeFamily { SingleGaussian, Gmm };

struct CeConfig {
    CeFamily family = CeFamily::SingleGaussian;
    int gmm_k = 2;
    double rho = 0.1;  // elite fraction: levels at the (1-rho) quantile
    int n_per_level = 2000;
    int max_levels = 40;
    long n_final = 10000;
    int em_iters = 50;
    double cov_ridge = 1e-6;
    // Importance weights degenerate once the proposal narrows; the floor
    // (relative to the input law's per-coordinate std) and the smoothed
    // update keep the mixture from collapsing onto single points.
    double var_floor_frac = 1.0;
    double gmm_smoothing = 0.7;
};

namespace ce_detail {

inline double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const auto n = static_cast<long>(v.size());
    long k = static_cast<long>(std::ceil(q * static_cast<double>(n)));
    k = std::clamp(k, 1L, n);
    return v[static_cast<std::size_t>(k - 1)];
}

inline GmmModel fit_single_gaussian(const std::vector<Vec>& xs,
                                    const std::vector<double>& weights,
                                    double ridge, const Vec* var_floor = nullptr) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    const int d = static_cast<int>(xs[0].size());
    Vec mean = Vec::Zero(d);
    for (std::size_t i = 0; i < xs.size(); ++i) mean += weights[i] * xs[i];
    mean /= total;
    Mat cov = Mat::Zero(d, d);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        Vec r = xs[i] - mean;
        cov += weights[i] * r * r.transpose();
    }
    cov /= total;
    cov.diagonal().array() += ridge * (1.0 + cov.trace() / d);
    if (var_floor)
        for (int j = 0; j < d; ++j)
            cov(j, j) = std::max(cov(j, j), (*var_floor)[j]);
    return GmmModel::single(mean, cov);
}

// Weighted EM, warm-started from the previous mixture when its size
// matches, otherwise seeded k-means style.
inline GmmModel fit_gmm(const std::vector<Vec>& xs,
                        const std::vector<double>& weights, int k, int em_iters,
                        double ridge, CounterRng& rng,
                        const Vec* var_floor = nullptr,
                        const GmmModel* warm = nullptr) {
    const auto n = xs.size();
    const int d = static_cast<int>(xs[0].size());
    if (static_cast<int>(n) <= k)
        return fit_single_gaussian(xs, weights, ridge, var_floor);

    // k-means++ style seeding, then a few Lloyd rounds.
    std::vector<Vec> centers;
    centers.push_back(xs[rng.next_below(n)]);
    while (static_cast<int>(centers.size()) < k) {
        std::vector<double> d2(n);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers)
                best = std::min(best, (xs[i] - c).squaredNorm());
            d2[i] = best * weights[i];
            total += d2[i];
        }
        double u = rng.next_uniform() * total;
        std::size_t pick = n - 1;
        double cum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cum += d2[i];
            if (u <= cum) {
                pick = i;
                break;
            }
        }
        centers.push_back(xs[pick]);
    }
    std::vector<int> assign(n, 0);
    for (int round = 0; round < 10; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < k; ++j) {
                const double v =
                    (xs[i] - centers[static_cast<std::size_t>(j)]).squaredNorm();
                if (v < best) {
                    best = v;
                    assign[i] = j;
                }
            }
        }
        for (int j = 0; j < k; ++j) {
            Vec m = Vec::Zero(d);
            double w = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (assign[i] == j) {
                    m += weights[i] * xs[i];
                    w += weights[i];
                }
            if (w > 0.0) centers[static_cast<std::size_t>(j)] = m / w;
        }
    }

    std::vector<double> pi(static_cast<std::size_t>(k), 1.0 / k);
    std::vector<Vec> mu = centers;
    std::vector<Mat> cov(static_cast<std::size_t>(k));
    {
        GmmModel init = fit_single_gaussian(xs, weights, ridge, var_floor);
        for (int j = 0; j < k; ++j)
            cov[static_cast<std::size_t>(j)] =
                init.components()[0].chol * init.components()[0].chol.transpose();
    }
    if (warm && static_cast<int>(warm->size()) == k) {
        for (int j = 0; j < k; ++j) {
            const auto& c = warm->components()[static_cast<std::size_t>(j)];
            pi[static_cast<std::size_t>(j)] = c.weight;
            mu[static_cast<std::size_t>(j)] = c.mean;
            cov[static_cast<std::size_t>(j)] = c.chol * c.chol.transpose();
        }
    }
    Mat resp(static_cast<Eigen::Index>(n), k);
    for (int it = 0; it < em_iters; ++it) {
        GmmModel cur;
        for (int j = 0; j < k; ++j)
            cur.push(pi[static_cast<std::size_t>(j)],
                     mu[static_cast<std::size_t>(j)],
                     cov[static_cast<std::size_t>(j)]);
        const double norm = -0.5 * d * std::log(2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < n; ++i) {
            Vec logp(k);
            double best = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < k; ++j) {
                const auto& c = cur.components()[static_cast<std::size_t>(j)];
                Vec r = c.chol.triangularView<Eigen::Lower>().solve(xs[i] - c.mean);
                logp[j] =
                    std::log(c.weight) + norm - c.log_det - 0.5 * r.squaredNorm();
                best = std::max(best, logp[j]);
            }
            double z = 0.0;
            for (int j = 0; j < k; ++j) z += std::exp(logp[j] - best);
            for (int j = 0; j < k; ++j)
                resp(static_cast<Eigen::Index>(i), j) = std::exp(logp[j] - best) / z;
        }
        for (int j = 0; j < k; ++j) {
            double wj = 0.0, wtot = 0.0;
            Vec m = Vec::Zero(d);
            for (std::size_t i = 0; i < n; ++i) {
                const double w = weights[i] * resp(static_cast<Eigen::Index>(i), j);
                wj += w;
                wtot += weights[i];
                m += w * xs[i];
            }
            if (wj <= 1e-12 * wtot) {
                // Dead component: reseed on the heaviest sample.
                std::size_t heavy = 0;
                for (std::size_t i = 1; i < n; ++i)
                    if (weights[i] > weights[heavy]) heavy = i;
                mu[static_cast<std::size_t>(j)] = xs[heavy];
                pi[static_cast<std::size_t>(j)] = 1.0 / static_cast<double>(k);
                continue;
            }
            m /= wj;
            Mat c = Mat::Zero(d, d);
            for (std::size_t i = 0; i < n; ++i) {
                const double w = weights[i] * resp(static_cast<Eigen::Index>(i), j);
                Vec r = xs[i] - m;
                c += w * r * r.transpose();
            }
            c /= wj;
            c.diagonal().array() += ridge * (1.0 + c.trace() / d);
            if (var_floor)
                for (int jj = 0; jj < d; ++jj)
                    c(jj, jj) = std::max(c(jj, jj), (*var_floor)[jj]);
            pi[static_cast<std::size_t>(j)] = wj / wtot;
            mu[static_cast<std::size_t>(j)] = m;
            cov[static_cast<std::size_t>(j)] = c;
        }
        const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
        for (auto& w : pi) w /= total;
    }
    GmmModel out;
    for (int j = 0; j < k; ++j)
        out.push(pi[static_cast<std::size_t>(j)], mu[static_cast<std::size_t>(j)],
                 cov[static_cast<std::size_t>(j)]);
    return out;
}

}  // namespace ce_detail

struct CeOutcome {
    Estimate estimate;
    GmmModel final_family;
    std::vector<double> level_path;
    std::vector<LabeledSample> all_samples;  // level-stage draws with labels
    bool stalled = false;
};

namespace ce_detail {

inline CeOutcome run(const Problem& problem, const CeConfig& cfg,
                     std::uint64_t seed, bool throw_on_stall) {
    CounterRng rng(seed, /*stream=*/3);
    GmmModel q = GmmModel::single(problem.law.mean(), problem.law.cov());
    CeOutcome out;
    out.final_family = q;
    Vec var_floor(problem.dim);
    for (int j = 0; j < problem.dim; ++j) {
        const double sd = std::sqrt(problem.law.cov()(j, j));
        var_floor[j] = (cfg.var_floor_frac * sd) * (cfg.var_floor_frac * sd);
    }

    double prev_level = -std::numeric_limits<double>::infinity();
    int stall = 0;
    bool reached = false;
    for (int level_idx = 0; level_idx < cfg.max_levels && !reached; ++level_idx) {
        std::vector<Vec> xs(static_cast<std::size_t>(cfg.n_per_level));
        std::vector<double> scores(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) {
            xs[i] = q.sample(rng);
            scores[i] = problem.score(xs[i]);
            out.all_samples.push_back(
                {xs[i], scores[i] > problem.target_level ? 1 : 0});
        }
        double level = quantile(scores, 1.0 - cfg.rho);
        if (level >= problem.target_level) {
            level = problem.target_level;
            reached = true;
        }
        out.level_path.push_back(level);

        std::vector<Vec> elites;
        std::vector<double> weights;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (scores[i] >= level) {
                elites.push_back(xs[i]);
                weights.push_back(std::exp(problem.law.log_density(xs[i]) -
                                           q.log_density(xs[i])));
            }
        }
        if (!elites.empty()) {
            if (cfg.family == CeFamily::SingleGaussian) {
                q = fit_single_gaussian(elites, weights, cfg.cov_ridge,
                                        &var_floor);
            } else {
                GmmModel fit = fit_gmm(elites, weights, cfg.gmm_k, cfg.em_iters,
                                       cfg.cov_ridge, rng, &var_floor);
                // Smoothed update against the nearest previous component,
                // the standard guard against premature concentration.
                const double a = cfg.gmm_smoothing;
                if (static_cast<int>(q.size()) == cfg.gmm_k && a < 1.0) {
                    GmmModel blend;
                    std::vector<bool> used(q.size(), false);
                    for (int j = 0; j < cfg.gmm_k; ++j) {
                        const auto& f = fit.components()[static_cast<std::size_t>(j)];
                        std::size_t pick = 0;
                        double best = std::numeric_limits<double>::infinity();
                        for (std::size_t o = 0; o < q.size(); ++o) {
                            if (used[o]) continue;
                            const double dist =
                                (q.components()[o].mean - f.mean).squaredNorm();
                            if (dist < best) {
                                best = dist;
                                pick = o;
                            }
                        }
                        used[pick] = true;
                        const auto& o = q.components()[pick];
                        Mat cf = f.chol * f.chol.transpose();
                        Mat co = o.chol * o.chol.transpose();
                        blend.push(a * f.weight + (1.0 - a) * o.weight,
                                   a * f.mean + (1.0 - a) * o.mean,
                                   a * cf + (1.0 - a) * co);
                    }
                    q = blend;
                } else {
                    q = fit;
                }
            }
        }
        if (reached) break;
        if (level <= prev_level + 1e-12) {
            if (++stall >= 3) {
                if (throw_on_stall)
                    throw Stalled("cross_entropy: level failed to increase 3 times");
                out.stalled = true;
                break;
            }
        } else {
            stall = 0;
        }
        prev_level = level;
    }
    if (!reached && !out.stalled) {
        if (throw_on_stall)
            throw Stalled("cross_entropy: level budget exhausted before target");
        out.stalled = true;
    }
    out.final_family = q;

    if (cfg.n_final > 0) {
        double sum = 0.0, sum_sq = 0.0;
        long hits = 0;
        for (long i = 0; i < cfg.n_final; ++i) {
            const Vec x = q.sample(rng);
            if (problem.indicator(x) == 1) {
                const double z =
                    std::exp(problem.law.log_density(x) - q.log_density(x));
                sum += z;
                sum_sq += z * z;
                ++hits;
            }
        }
        out.estimate = summarize_runs(sum, sum_sq, cfg.n_final, hits);
        out.estimate.meta["estimator"] =
            cfg.family == CeFamily::SingleGaussian
                ? "ce_naive"
                : "ce_gmm" + std::to_string(cfg.gmm_k);
        out.estimate.meta["levels"] = out.level_path;
        out.estimate.meta["seed"] = seed;
    }
    return out;
}

}  // namespace ce_detail

// Cross-entropy method: adaptive tilting toward the rare level, weighted MLE
// on the elites at each rung, then a final IS pass from the fitted family.
inline CeOutcome cross_entropy(const Problem& problem, const CeConfig& cfg,
                               std::uint64_t seed) {
    return ce_detail::run(problem, cfg, seed, /*throw_on_stall=*/true);
}

// Stage-1 sample source per the experiments: the CE SingleGaussian
// trajectory itself, labeled by the black box. Tops up from the final fitted
// family when the ladder finished early.
inline std::vector<LabeledSample> stage1_from_ce(const Problem& problem,
                                                 long n1, const CeConfig& base,
                                                 std::uint64_t seed) {
    CeConfig cfg = base;
    cfg.family = CeFamily::SingleGaussian;
    cfg.n_final = 0;
    CeOutcome ce = ce_detail::run(problem, cfg, seed, /*throw_on_stall=*/false);
    CounterRng rng(seed, /*stream=*/4);
    while (static_cast<long>(ce.all_samples.size()) < n1) {
        const Vec x = ce.final_family.sample(rng);
        ce.all_samples.push_back(
            {x, problem.score(x) > problem.target_level ? 1 : 0});
    }
    ce.all_samples.resize(static_cast<std::size_t>(n1));
    return ce.all_samples;
}

// Uniform-box Stage 1 alternative.
inline std::vector<LabeledSample> stage1_uniform_box(const Problem& problem,
                                                     long n1, const Vec& lo,
                                                     const Vec& hi,
                                                     std::uint64_t seed) {
    CounterRng rng(seed, /*stream=*/5);
    std::vector<LabeledSample> out;
    out.reserve(static_cast<std::size_t>(n1));
    for (long i = 0; i < n1; ++i) {
        Vec x(problem.dim);
        for (int j = 0; j < problem.dim; ++j)
            x[j] = lo[j] + (hi[j] - lo[j]) * rng.next_uniform();
        out.push_back({x, problem.indicator(x)});
    }
    return out;
}

}  // namespace prae
