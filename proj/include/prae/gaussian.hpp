#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "prae/core.hpp"
#include "prae/rng.hpp"

namespace prae {

// Cholesky factor L (lower triangular) of an SPD matrix. Fails loudly when a
// pivot drops to 1e-12 or below; no jitter is ever added.
inline Mat chol_factor(const Mat& cov) {
    if (cov.rows() != cov.cols())
        throw NotPositiveDefinite("chol_factor: matrix not square");
    const Eigen::Index d = cov.rows();
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < i; ++j)
            if (std::abs(cov(i, j) - cov(j, i)) > 1e-10)
                throw NotPositiveDefinite("chol_factor: matrix not symmetric");

    Mat L = Mat::Zero(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        double pivot = cov(j, j) - L.row(j).head(j).squaredNorm();
        if (pivot <= 1e-12)
            throw NotPositiveDefinite("chol_factor: pivot <= 1e-12 at column " +
                                      std::to_string(j));
        L(j, j) = std::sqrt(pivot);
        for (Eigen::Index i = j + 1; i < d; ++i) {
            L(i, j) = (cov(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) /
                      L(j, j);
        }
    }
    return L;
}

// Input law N(mean, cov), stored with its Cholesky factor. Immutable after
// construction and safe to share across threads.
class GaussianSpec {
  public:
    GaussianSpec(Vec mean, Mat cov)
        : mean_(std::move(mean)), cov_(std::move(cov)), chol_(chol_factor(cov_)) {
        if (mean_.size() != cov_.rows())
            throw NotPositiveDefinite("GaussianSpec: mean/cov dimension mismatch");
        log_det_chol_ = chol_.diagonal().array().log().sum();
    }

    static GaussianSpec standard(int d) {
        return GaussianSpec(Vec::Zero(d), Mat::Identity(d, d));
    }

    int dim() const { return static_cast<int>(mean_.size()); }
    const Vec& mean() const { return mean_; }
    const Mat& cov() const { return cov_; }
    const Mat& chol() const { return chol_; }

    // Solves cov * r = v through the two triangular factors.
    Vec cov_solve(const Vec& v) const {
        Vec y = chol_.triangularView<Eigen::Lower>().solve(v);
        return chol_.transpose().triangularView<Eigen::Upper>().solve(y);
    }

    // (x - mean)' cov^{-1} (x - mean), the large-deviations rate up to 1/2.
    double rate(const Vec& x) const {
        Vec w = chol_.triangularView<Eigen::Lower>().solve(x - mean_);
        return w.squaredNorm();
    }

    double log_density(const Vec& x) const {
        const double d = static_cast<double>(dim());
        return -0.5 * d * std::log(2.0 * std::numbers::pi) - log_det_chol_ -
               0.5 * rate(x);
    }

    Vec sample(CounterRng& rng) const {
        Vec z(dim());
        for (int i = 0; i < dim(); ++i) z[i] = rng.next_normal();
        return mean_ + chol_ * z;
    }

    std::vector<Vec> sample_n(CounterRng& rng, int n) const {
        std::vector<Vec> out;
        out.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) out.push_back(sample(rng));
        return out;
    }

  private:
    Vec mean_;
    Mat cov_;
    Mat chol_;
    double log_det_chol_ = 0.0;
};

// IS mixture sum_j alpha_j N(a_j, Sigma) with the covariance shared across
// components (the Theorem-1 form).
class MixtureSpec {
  public:
    MixtureSpec(std::vector<std::pair<double, Vec>> components, Mat shared_cov)
        : components_(std::move(components)),
          cov_(std::move(shared_cov)),
          chol_(chol_factor(cov_)) {
        if (components_.empty())
            throw PraeError("MixtureSpec: at least one component required");
        double total = 0.0;
        for (const auto& [w, m] : components_) {
            if (w <= 0.0 || w > 1.0)
                throw PraeError("MixtureSpec: weight outside (0,1]");
            if (m.size() != cov_.rows())
                throw PraeError("MixtureSpec: component dimension mismatch");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw PraeError("MixtureSpec: weights must sum to 1");
        log_det_chol_ = chol_.diagonal().array().log().sum();
    }

    int dim() const { return static_cast<int>(cov_.rows()); }
    std::size_t size() const { return components_.size(); }
    const std::vector<std::pair<double, Vec>>& components() const {
        return components_;
    }
    const Mat& shared_cov() const { return cov_; }

    double log_density(const Vec& x) const {
        double best = -std::numeric_limits<double>::infinity();
        std::vector<double> terms(components_.size());
        const double norm_const =
            -0.5 * dim() * std::log(2.0 * std::numbers::pi) - log_det_chol_;
        for (std::size_t j = 0; j < components_.size(); ++j) {
            const auto& [w, m] = components_[j];
            Vec r = chol_.triangularView<Eigen::Lower>().solve(x - m);
            terms[j] = std::log(w) + norm_const - 0.5 * r.squaredNorm();
            best = std::max(best, terms[j]);
        }
        double acc = 0.0;
        for (double t : terms) acc += std::exp(t - best);
        return best + std::log(acc);
    }

    Vec sample(CounterRng& rng) const {
        double u = rng.next_uniform();
        std::size_t pick = components_.size() - 1;
        double cum = 0.0;
        for (std::size_t j = 0; j < components_.size(); ++j) {
            cum += components_[j].first;
            if (u <= cum) {
                pick = j;
                break;
            }
        }
        Vec z(dim());
        for (int i = 0; i < dim(); ++i) z[i] = rng.next_normal();
        return components_[pick].second + chol_ * z;
    }

  private:
    std::vector<std::pair<double, Vec>> components_;
    Mat cov_;
    Mat chol_;
    double log_det_chol_ = 0.0;
};

// dp/dq at x, computed in log space and exponentiated at the last step.
// Probabilities down to 1e-24 make direct density quotients useless.
inline double likelihood_ratio(const GaussianSpec& p, const MixtureSpec& q,
                               const Vec& x) {
    const double lr = std::exp(p.log_density(x) - q.log_density(x));
    if (std::isnan(lr))
        throw PraeError("likelihood_ratio: NaN");
    // Clamp both ends of the double range so the ratio stays strictly
    // positive and finite; the extremes only occur far outside q's support.
    if (lr == 0.0) return std::numeric_limits<double>::denorm_min();
    if (std::isinf(lr)) return std::numeric_limits<double>::max();
    return lr;
}

}  // namespace prae
