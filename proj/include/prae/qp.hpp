#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "prae/core.hpp"

namespace prae {

enum class QpStatus { Optimal, Infeasible, NumericalTrouble };

struct QpResult {
    QpStatus status = QpStatus::NumericalTrouble;
    Vec x;
    double objective = std::numeric_limits<double>::quiet_NaN();
    // Residual duality gap at exit; zero when fully converged. Objective -
    // gap is a safe lower bound on the true minimum over the feasible set.
    double gap = 0.0;
    int iterations = 0;
};

// Dense convex QP
//     minimize 0.5 u'Qu + c'u   subject to  Au <= b
// solved with a Mehrotra predictor-corrector interior point method. Q may be
// positive semidefinite (including zero, i.e. an LP). Every variable must be
// bounded by the constraint rows; the encoders in this project always add
// explicit boxes.
class DenseQpSolver {
  public:
    struct Options {
        double tol = 1e-9;
        double feas_tol = 1e-7;
        int max_iters = 120;
    };

    DenseQpSolver() = default;
    explicit DenseQpSolver(const Options& opts) : opts_(opts) {}

    QpResult solve(const Mat& Q, const Vec& c, const Mat& A, const Vec& b) const {
        // Phase 1: minimize t subject to Au - t <= b, -t <= 1. The start
        // u = 0, t = max(0, max(Au - b)) + 1 is strictly feasible, so this
        // LP is always solvable and gives a reliable feasibility verdict.
        const Eigen::Index n = c.size();
        const Eigen::Index m = b.size();

        Mat A1(m + 1, n + 1);
        A1.topLeftCorner(m, n) = A;
        A1.topRightCorner(m, 1).setConstant(-1.0);
        A1.bottomLeftCorner(1, n).setZero();
        A1(m, n) = -1.0;
        Vec b1(m + 1);
        b1.head(m) = b;
        b1[m] = 1.0;
        Vec c1 = Vec::Zero(n + 1);
        c1[n] = 1.0;

        Vec u1 = Vec::Zero(n + 1);
        u1[n] = std::max(0.0, (-b).maxCoeff()) + 1.0;
        Vec s1 = b1 - A1 * u1;  // >= 1 by construction of u1
        QpResult phase1 = ipm(Mat::Zero(n + 1, n + 1), c1, A1, b1, &u1, &s1);
        if (phase1.status == QpStatus::NumericalTrouble) return phase1;
        if (phase1.x[n] > opts_.feas_tol) {
            QpResult r;
            r.status = QpStatus::Infeasible;
            r.iterations = phase1.iterations;
            return r;
        }

        // Phase 2 on constraints relaxed by the certified phase-1 residual
        // plus a hair: tangent cuts can leave the region a measure-zero
        // sliver with no central path. The perturbation is bounded by
        // feas_tol and absorbed by the callers' bound margins.
        const double relax = std::max(0.0, phase1.x[n]) + 1e-9;
        Vec b2 = b.array() + relax;
        Vec u0 = phase1.x.head(n);
        Vec s0 = (b2 - A * u0).cwiseMax(1e-9);
        QpResult r = ipm(Q, c, A, b2, &u0, &s0);
        if (r.status == QpStatus::Optimal) {
            const double viol = (A * r.x - b).maxCoeff();
            if (viol > opts_.feas_tol + relax) r.status = QpStatus::NumericalTrouble;
            r.gap += relax * (1.0 + r.x.cwiseAbs().maxCoeff());
        }
        return r;
    }

  private:
    QpResult ipm(const Mat& Q, const Vec& c, const Mat& A, const Vec& b,
                 const Vec* start, const Vec* start_slacks = nullptr) const {
        const Eigen::Index m = b.size();

        Vec u = start ? *start : Vec::Zero(c.size());
        Vec s = start_slacks ? *start_slacks : (b - A * u).cwiseMax(1.0);
        Vec z = Vec::Ones(m);

        QpResult res;
        const double b_scale = 1.0 + b.cwiseAbs().maxCoeff();
        const double c_scale = 1.0 + c.cwiseAbs().maxCoeff() +
                               (A.cwiseAbs().rowwise().sum()).maxCoeff();
        // Fixed Tikhonov shift for the KKT solves, scaled by the problem
        // data, never by the barrier-inflated diagonal.
        const double reg =
            1e-12 * (1.0 + Q.diagonal().cwiseAbs().maxCoeff() +
                     A.cwiseAbs().maxCoeff());
        int stall = 0;
        int no_progress = 0;
        double best_mu = std::numeric_limits<double>::infinity();
        bool force_center = false;

        // Best near-feasible iterate seen, used for the graded exit.
        bool have_best = false;
        Vec best_u;
        double best_rd = std::numeric_limits<double>::infinity();

        for (int it = 0; it < opts_.max_iters; ++it) {
            Vec rd = Q * u + c + A.transpose() * z;
            Vec rp = A * u + s - b;
            const double mu = s.dot(z) / static_cast<double>(m);
            const double obj = 0.5 * u.dot(Q * u) + c.dot(u);
            const double rp_norm = rp.cwiseAbs().maxCoeff();
            const double rd_norm = rd.cwiseAbs().maxCoeff();
#ifdef PRAE_QP_TRACE
            fprintf(stderr, "ipm it %d rp %.3e rd %.3e mu %.3e obj %.9g\n", it,
                    rp_norm, rd_norm, mu, obj);
#endif

            if (rp_norm <= opts_.tol * b_scale && rd_norm <= opts_.tol * c_scale &&
                mu <= opts_.tol * (1.0 + std::abs(obj))) {
                res.status = QpStatus::Optimal;
                res.x = u;
                res.objective = obj;
                res.iterations = it;
                return res;
            }
            if (rp_norm <= opts_.feas_tol * b_scale &&
                mu <= 1e-11 * (1.0 + std::abs(obj)) && rd_norm < best_rd) {
                // Primal-feasible with a closed gap; remember it in case the
                // dual residual refuses to drop further (degenerate faces).
                best_rd = rd_norm;
                best_u = u;
                have_best = true;
            }
            if (have_best && mu <= 1e-14 * (1.0 + std::abs(obj))) {
                // The barrier is exhausted; pushing further only corrupts
                // the KKT systems.
                break;
            }

            Vec d(m);
            for (Eigen::Index i = 0; i < m; ++i)
                d[i] = std::clamp(z[i] / s[i], 1e-14, 1e14);

            Mat K = Q + A.transpose() * d.asDiagonal() * A;
            K.diagonal().array() += reg;
            Eigen::LDLT<Mat> ldlt(K);
            if (ldlt.info() != Eigen::Success) break;

            auto solve_step = [&](const Vec& rc) {
                // rc is the complementarity target residual: Z ds + S dz = -rc.
                Vec rhs = -rd;
                for (Eigen::Index i = 0; i < m; ++i)
                    rhs -= A.row(i).transpose() * ((z[i] * rp[i] - rc[i]) / s[i]);
                Vec du = ldlt.solve(rhs);
                Vec ds = -rp - A * du;
                Vec dz(m);
                for (Eigen::Index i = 0; i < m; ++i)
                    dz[i] = (-rc[i] - z[i] * ds[i]) / s[i];
                return std::make_pair(du, std::make_pair(ds, dz));
            };

            // Affine (predictor) direction.
            Vec rc_aff(m);
            for (Eigen::Index i = 0; i < m; ++i) rc_aff[i] = s[i] * z[i];
            auto [du_a, rest_a] = solve_step(rc_aff);
            auto& [ds_a, dz_a] = rest_a;

            auto max_step = [&](const Vec& v, const Vec& dv) {
                double a = 1.0;
                for (Eigen::Index i = 0; i < m; ++i)
                    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
                return a;
            };
            const double ap_a = max_step(s, ds_a);
            const double ad_a = max_step(z, dz_a);
            double mu_aff = 0.0;
            for (Eigen::Index i = 0; i < m; ++i)
                mu_aff += (s[i] + ap_a * ds_a[i]) * (z[i] + ad_a * dz_a[i]);
            mu_aff /= static_cast<double>(m);
            // Degenerate faces can trap the predictor-corrector in a limit
            // cycle; a pure centering step breaks it.
            if (mu < 0.9 * best_mu) {
                best_mu = mu;
                no_progress = 0;
            } else if (++no_progress >= 8) {
                force_center = !force_center;
                no_progress = 0;
            }
            const double sigma =
                force_center
                    ? 1.0
                    : std::clamp(std::pow(mu_aff / std::max(mu, 1e-300), 3.0),
                                 1e-8, 1.0);

            // Corrector.
            Vec rc(m);
            for (Eigen::Index i = 0; i < m; ++i)
                rc[i] = s[i] * z[i] + ds_a[i] * dz_a[i] - sigma * mu;
            auto [du, rest] = solve_step(rc);
            auto& [ds, dz] = rest;

            const double ap = std::min(1.0, 0.995 * max_step(s, ds));
            const double ad = std::min(1.0, 0.995 * max_step(z, dz));
            if (ap < 1e-11 && ad < 1e-11) {
                if (++stall >= 3) break;
            } else {
                stall = 0;
            }
            u += ap * du;
            s += ap * ds;
            z += ad * dz;
            for (Eigen::Index i = 0; i < m; ++i) {
                s[i] = std::max(s[i], 1e-300);
                z[i] = std::max(z[i], 1e-300);
            }
        }

        // Rescue phase: short-step path following with a fixed centering
        // parameter and equal primal-dual steps. Slower than Mehrotra but
        // immune to the corrector limit cycles seen on degenerate nodes.
        for (int it = 0; it < 2 * opts_.max_iters; ++it) {
            Vec rd = Q * u + c + A.transpose() * z;
            Vec rp = A * u + s - b;
            const double mu = s.dot(z) / static_cast<double>(m);
            const double obj = 0.5 * u.dot(Q * u) + c.dot(u);
            if (rp.cwiseAbs().maxCoeff() <= opts_.tol * b_scale &&
                rd.cwiseAbs().maxCoeff() <= opts_.tol * c_scale &&
                mu <= opts_.tol * (1.0 + std::abs(obj))) {
                res.status = QpStatus::Optimal;
                res.x = u;
                res.objective = obj;
                res.iterations = opts_.max_iters + it;
                return res;
            }
            if (rp.cwiseAbs().maxCoeff() <= opts_.feas_tol * b_scale &&
                mu <= 1e-11 * (1.0 + std::abs(obj)) &&
                rd.cwiseAbs().maxCoeff() < best_rd) {
                best_rd = rd.cwiseAbs().maxCoeff();
                best_u = u;
                have_best = true;
            }
            if (have_best && mu <= 1e-14 * (1.0 + std::abs(obj))) break;

            Vec d(m);
            for (Eigen::Index i = 0; i < m; ++i)
                d[i] = std::clamp(z[i] / s[i], 1e-14, 1e14);
            Mat K = Q + A.transpose() * d.asDiagonal() * A;
            K.diagonal().array() += reg;
            Eigen::LDLT<Mat> ldlt(K);
            if (ldlt.info() != Eigen::Success) break;
            Vec rc(m);
            for (Eigen::Index i = 0; i < m; ++i) rc[i] = s[i] * z[i] - 0.5 * mu;
            Vec rhs = -rd;
            for (Eigen::Index i = 0; i < m; ++i)
                rhs -= A.row(i).transpose() * ((z[i] * rp[i] - rc[i]) / s[i]);
            Vec du = ldlt.solve(rhs);
            Vec ds = -rp - A * du;
            Vec dz(m);
            for (Eigen::Index i = 0; i < m; ++i)
                dz[i] = (-rc[i] - z[i] * ds[i]) / s[i];
            auto max_step = [&](const Vec& v, const Vec& dv) {
                double a = 1.0;
                for (Eigen::Index i = 0; i < m; ++i)
                    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
                return a;
            };
            const double a =
                std::min(1.0, 0.9 * std::min(max_step(s, ds), max_step(z, dz)));
            if (a < 1e-12) break;
            u += a * du;
            s += a * ds;
            z += a * dz;
            for (Eigen::Index i = 0; i < m; ++i) {
                s[i] = std::max(s[i], 1e-300);
                z[i] = std::max(z[i], 1e-300);
            }
        }

        // Graded exit: a primal-feasible point with a closed complementarity
        // gap is a usable optimum even when the dual residual plateaus on a
        // degenerate face. Callers absorb the slack via bound margins.
        if (have_best && best_rd <= 1e-5 * c_scale) {
            res.status = QpStatus::Optimal;
            res.x = best_u;
            res.objective = 0.5 * best_u.dot(Q * best_u) + c.dot(best_u);
            res.gap = 1e-5 * c_scale * (1.0 + best_u.cwiseAbs().maxCoeff());
            res.iterations = opts_.max_iters;
            return res;
        }
        Vec rp = A * u + s - b;
        const double mu = s.dot(z) / static_cast<double>(m);
        if (rp.cwiseAbs().maxCoeff() <= opts_.feas_tol * b_scale) {
            // Unconverged but primal-feasible: return the point with an
            // honest duality gap so branch-and-bound keeps its bound valid.
            // Divergent duals (pinned single-point regions) cap the gap's
            // dual-residual term; the primal value itself stays exact.
            res.status = QpStatus::Optimal;
            res.x = u;
            res.objective = 0.5 * u.dot(Q * u) + c.dot(u);
            Vec rd = Q * u + c + A.transpose() * z;
            res.gap = std::min(mu * static_cast<double>(m),
                               1.0 + std::abs(res.objective)) +
                      std::min(rd.cwiseAbs().maxCoeff(), 1.0) *
                          (1.0 + u.cwiseAbs().maxCoeff());
            res.iterations = opts_.max_iters;
            return res;
        }
        res.status = QpStatus::NumericalTrouble;
        res.iterations = opts_.max_iters;
        return res;
    }

    Options opts_{};
};

}  // namespace prae
