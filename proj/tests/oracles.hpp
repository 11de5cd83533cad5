#pragma once

// Independent oracles for the test suites. Everything here recomputes the
// quantity under test by a different route than the library: dense inverses
// instead of Cholesky solves, brute-force rectangle unions instead of
// antichains, full activation-pattern enumeration instead of branch and
// bound, and erfc for Gaussian tails.

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "prae/core.hpp"
#include "prae/gaussian.hpp"
#include "prae/qp.hpp"
#include "prae/relu_net.hpp"

namespace oracle {

using prae::Mat;
using prae::Vec;

inline double phi_bar(double x) {
    return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

// Multivariate normal log-density via an explicit dense inverse and
// determinant.
inline double log_density_dense(const Vec& mean, const Mat& cov, const Vec& x) {
    const Mat inv = cov.inverse();
    const double det = cov.determinant();
    const Vec r = x - mean;
    return -0.5 * static_cast<double>(mean.size()) *
               std::log(2.0 * std::numbers::pi) -
           0.5 * std::log(det) - 0.5 * r.dot(inv * r);
}

// Brute-force union-of-rectangles membership.
inline bool hull_contains_brute(const std::vector<Vec>& points, const Vec& x,
                                bool lower) {
    for (const auto& p : points) {
        bool inside = true;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const bool ok = lower ? x[i] <= p[i] : x[i] >= p[i];
            if (!ok) {
                inside = false;
                break;
            }
        }
        if (inside) return true;
    }
    return false;
}

// Enumerates every ReLU activation pattern of a small net and solves the
// per-pattern convex QP
//   min (x-lambda)' Sigma^{-1} (x-lambda)
//   s.t. pattern sign constraints, score(x) >= kappa (affine on the
//        pattern), cuts, 0 <= x <= box
// returning the global minimum. Exponential in the neuron count on purpose.
struct EnumResult {
    bool feasible = false;
    double objective = std::numeric_limits<double>::infinity();
    Vec argmin;
};

// Affine forward pass under a fixed pattern: returns per-layer output
// expressions as matrices [W | b] over the input x.
inline void pattern_affine(const prae::ReluNet& net,
                           const std::vector<int>& pattern, Mat* score_w,
                           double* score_b, std::vector<Vec>* pre_w,
                           std::vector<double>* pre_b) {
    const int d = net.input_dim();
    Mat W = Mat::Identity(d, d);
    Vec b = Vec::Zero(d);
    int flat = 0;
    pre_w->clear();
    pre_b->clear();
    for (const auto& layer : net.hidden()) {
        Mat Wp = layer.w * W;
        Vec bp = layer.w * b + layer.b;
        for (Eigen::Index r = 0; r < Wp.rows(); ++r, ++flat) {
            pre_w->push_back(Wp.row(r).transpose());
            pre_b->push_back(bp[r]);
            if (pattern[static_cast<std::size_t>(flat)] == 0) {
                Wp.row(r).setZero();
                bp[r] = 0.0;
            }
        }
        W = Wp;
        b = bp;
    }
    const Vec wdiff =
        (net.output().w.row(1) - net.output().w.row(0)).transpose();
    *score_w = (wdiff.transpose() * W).transpose();
    *score_b = wdiff.dot(b) + net.output().b[1] - net.output().b[0];
}

inline EnumResult enumerate_dominating(
    const prae::ReluNet& net, double kappa, const prae::GaussianSpec& p,
    const std::vector<std::pair<Vec, double>>& cuts, double box_m) {
    const int d = p.dim();
    const int n_relu = net.relu_count();
    const Mat sigma_inv = p.cov().inverse();
    const Mat Q = 2.0 * sigma_inv;
    const Vec c = -Q * p.mean();
    const double c0 = p.mean().dot(sigma_inv * p.mean());
    prae::DenseQpSolver qp;

    EnumResult best;
    for (long mask = 0; mask < (1L << n_relu); ++mask) {
        std::vector<int> pattern(static_cast<std::size_t>(n_relu));
        for (int k = 0; k < n_relu; ++k) pattern[static_cast<std::size_t>(k)] = (mask >> k) & 1;
        Mat score_w;
        double score_b;
        std::vector<Vec> pre_w;
        std::vector<double> pre_b;
        pattern_affine(net, pattern, &score_w, &score_b, &pre_w, &pre_b);

        const Eigen::Index m = 2 * d + n_relu + 1 + static_cast<Eigen::Index>(cuts.size());
        Mat A = Mat::Zero(m, d);
        Vec bb(m);
        Eigen::Index row = 0;
        for (int j = 0; j < d; ++j) {
            A(row, j) = 1.0;
            bb[row++] = box_m;
            A(row, j) = -1.0;
            bb[row++] = 0.0;
        }
        for (int k = 0; k < n_relu; ++k) {
            // active: pre >= 0  -> -pre <= 0 ; inactive: pre <= 0
            const double s = pattern[static_cast<std::size_t>(k)] == 1 ? -1.0 : 1.0;
            A.row(row) = s * pre_w[static_cast<std::size_t>(k)].transpose();
            bb[row++] = -s * pre_b[static_cast<std::size_t>(k)];
        }
        A.row(row) = -score_w.col(0).transpose();
        bb[row++] = score_b - kappa;
        for (const auto& [a, rhs] : cuts) {
            A.row(row) = a.transpose();
            bb[row++] = rhs;
        }

        auto r = qp.solve(Q, c, A, bb);
        if (r.status != prae::QpStatus::Optimal) continue;
        const double v = r.objective + c0;
        if (v < best.objective - 1e-12) {
            best.feasible = true;
            best.objective = v;
            best.argmin = r.x;
        }
    }
    return best;
}

// Containment oracle: max over activation patterns and per-extreme
// coordinate assignments of beta subject to g(x) <= kappa (Lower hull).
inline EnumResult enumerate_containment(const prae::ReluNet& net, double kappa,
                                        const std::vector<Vec>& extremes,
                                        double box_m) {
    const int d = net.input_dim();
    const int n_relu = net.relu_count();
    const auto n_rows = extremes.size();
    prae::DenseQpSolver qp;

    EnumResult best;
    best.objective = -std::numeric_limits<double>::infinity();

    long assignments = 1;
    for (std::size_t i = 0; i < n_rows; ++i) assignments *= d;

    for (long mask = 0; mask < (1L << n_relu); ++mask) {
        std::vector<int> pattern(static_cast<std::size_t>(n_relu));
        for (int k = 0; k < n_relu; ++k)
            pattern[static_cast<std::size_t>(k)] = (mask >> k) & 1;
        Mat score_w;
        double score_b;
        std::vector<Vec> pre_w;
        std::vector<double> pre_b;
        pattern_affine(net, pattern, &score_w, &score_b, &pre_w, &pre_b);

        for (long assign = 0; assign < assignments; ++assign) {
            std::vector<int> pick(n_rows);
            long a = assign;
            for (std::size_t i = 0; i < n_rows; ++i) {
                pick[i] = static_cast<int>(a % d);
                a /= d;
            }
            // Variables (x, beta).
            const Eigen::Index m = 2 * d + n_relu + 1 +
                                   static_cast<Eigen::Index>(n_rows) + 2;
            Mat A = Mat::Zero(m, d + 1);
            Vec bb(m);
            Eigen::Index row = 0;
            for (int j = 0; j < d; ++j) {
                A(row, j) = 1.0;
                bb[row++] = box_m;
                A(row, j) = -1.0;
                bb[row++] = 0.0;
            }
            for (int k = 0; k < n_relu; ++k) {
                const double s =
                    pattern[static_cast<std::size_t>(k)] == 1 ? -1.0 : 1.0;
                A.row(row).head(d) = s * pre_w[static_cast<std::size_t>(k)].transpose();
                bb[row++] = -s * pre_b[static_cast<std::size_t>(k)];
            }
            A.row(row).head(d) = score_w.col(0).transpose();
            bb[row++] = kappa - score_b;
            for (std::size_t i = 0; i < n_rows; ++i) {
                // beta <= x_j - e_j
                A(row, d) = 1.0;
                A(row, pick[i]) = -1.0;
                bb[row++] = -extremes[i][pick[i]];
            }
            A(row, d) = 1.0;
            bb[row++] = 2.0 * box_m + 2.0;
            A(row, d) = -1.0;
            bb[row++] = 2.0 * box_m + 2.0;

            Vec c = Vec::Zero(d + 1);
            c[d] = -1.0;
            auto r = qp.solve(Mat::Zero(d + 1, d + 1), c, A, bb);
            if (r.status != prae::QpStatus::Optimal) continue;
            const double beta = -r.objective;
            if (beta > best.objective + 1e-12) {
                best.feasible = true;
                best.objective = beta;
                best.argmin = r.x.head(d);
            }
        }
    }
    return best;
}

// Small random ReLU net with the given widths.
inline prae::ReluNet random_net(int input_dim, const std::vector<int>& widths,
                                prae::CounterRng& rng, double scale = 1.0) {
    std::vector<prae::ReluNet::Layer> hidden;
    int in = input_dim;
    auto u = [&](double s) { return (2.0 * rng.next_uniform() - 1.0) * s; };
    for (int w : widths) {
        prae::ReluNet::Layer l{Mat(w, in), Vec(w)};
        for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.w.cols(); ++c) l.w(r, c) = u(scale);
            l.b[r] = u(scale);
        }
        hidden.push_back(std::move(l));
        in = w;
    }
    prae::ReluNet::Layer out{Mat(2, in), Vec(2)};
    for (Eigen::Index r = 0; r < 2; ++r) {
        for (Eigen::Index c = 0; c < in; ++c) out.w(r, c) = u(scale);
        out.b[r] = u(scale);
    }
    return prae::ReluNet(std::move(hidden), std::move(out));
}

}  // namespace oracle
