#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prae/core.hpp"
#include "prae/gaussian.hpp"
#include "prae/hull.hpp"
#include "prae/qp.hpp"
#include "prae/relu_net.hpp"

namespace prae {

struct MiqpOptions {
    double box_m = 100.0;        // practical upper bound on every coordinate
    long max_nodes = 1'000'000;  // reported via IterationLimit, never truncated
    double feas_tol = 1e-7;
    double int_tol = 1e-8;       // ReLU consistency threshold at a relaxation point
    bool decision_only = false;  // containment: stop at the first positive margin
    double strict_eps = kStrictEps;
    std::string debug_dump_path;  // when set, root instances are dumped as JSON
};

enum class MiqpStatus { Optimal, Infeasible, BigMViolated };

struct MiqpSolution {
    MiqpStatus status = MiqpStatus::Infeasible;
    Vec point;
    double objective = std::numeric_limits<double>::quiet_NaN();
    long nodes_explored = 0;
};

struct ContainmentResult {
    bool contained = true;
    Vec witness;
    double margin = -std::numeric_limits<double>::infinity();
    long nodes_explored = 0;
};

namespace miqp_detail {

struct Interval {
    double lo, hi;
};

enum : std::int8_t { kFree = 0, kActive = 1, kInactive = 2 };

// Flat neuron indexing across hidden layers.
inline std::vector<std::pair<int, int>> flat_index(const ReluNet& net) {
    std::vector<std::pair<int, int>> idx;
    for (int l = 0; l < static_cast<int>(net.hidden().size()); ++l)
        for (int r = 0; r < net.hidden()[l].w.rows(); ++r) idx.emplace_back(l, r);
    return idx;
}

// Interval propagation from the box [0, box_m]^d under the node's fixings.
// Neurons whose pre-activation interval has a definite sign are fixed in
// place, which tightens downstream intervals for the whole subtree.
inline std::vector<Interval> propagate_intervals(const ReluNet& net,
                                                 double box_m,
                                                 std::vector<std::int8_t>& fix) {
    std::vector<Interval> pre;
    std::vector<Interval> out_prev(static_cast<std::size_t>(net.input_dim()),
                                   Interval{0.0, box_m});
    int flat = 0;
    for (const auto& layer : net.hidden()) {
        std::vector<Interval> out_cur(static_cast<std::size_t>(layer.w.rows()));
        for (Eigen::Index r = 0; r < layer.w.rows(); ++r, ++flat) {
            double lo = layer.b[r], hi = layer.b[r];
            for (Eigen::Index c = 0; c < layer.w.cols(); ++c) {
                const double w = layer.w(r, c);
                const auto& iv = out_prev[static_cast<std::size_t>(c)];
                lo += w * (w >= 0.0 ? iv.lo : iv.hi);
                hi += w * (w >= 0.0 ? iv.hi : iv.lo);
            }
            pre.push_back({lo, hi});
            auto& f = fix[static_cast<std::size_t>(flat)];
            if (f == kFree) {
                if (lo >= 0.0) f = kActive;
                else if (hi <= 0.0) f = kInactive;
            }
            if (f == kActive)
                out_cur[static_cast<std::size_t>(r)] = {std::max(lo, 0.0), std::max(hi, 0.0)};
            else if (f == kInactive)
                out_cur[static_cast<std::size_t>(r)] = {0.0, 0.0};
            else
                out_cur[static_cast<std::size_t>(r)] = {0.0, std::max(hi, 0.0)};
        }
        out_prev = std::move(out_cur);
    }
    return pre;
}

struct Aff {
    Vec w;
    double k = 0.0;
    double eval(const Vec& u) const { return w.dot(u) + k; }
};

struct RowSet {
    // Hull containment / complement rows over extreme points. Kind selects
    // the inequality family from the big-M formulations.
    enum Kind { None, ComplementGe, OuterBeta, InnerBeta } kind = None;
    std::vector<Vec> points;
};

struct NodeProblem {
    Mat A;
    Vec b;
    Mat Q;
    Vec c;
    int n_vars = 0;
    int dim = 0;
    int beta_var = -1;
    std::vector<Aff> neuron_pre;  // per flat neuron, over node variables
    std::vector<int> y_var;       // node variable of a free neuron, else -1
    double obj_const = 0.0;
};

struct BnbNode {
    std::vector<std::int8_t> neuron_fix;
    std::vector<std::int16_t> row_fix;  // -1 free, else certifying coordinate
    double bound;
    long id;
};

class RowBucket {
  public:
    RowBucket(int n_vars) : n_vars_(n_vars) {}
    void add(const std::vector<std::pair<int, double>>& coeffs, double rhs) {
        rows_.emplace_back(coeffs, rhs);
    }
    Mat matrix() const {
        Mat A = Mat::Zero(static_cast<Eigen::Index>(rows_.size()), n_vars_);
        for (std::size_t i = 0; i < rows_.size(); ++i)
            for (const auto& [j, v] : rows_[i].first)
                A(static_cast<Eigen::Index>(i), j) += v;
        return A;
    }
    Vec rhs() const {
        Vec b(static_cast<Eigen::Index>(rows_.size()));
        for (std::size_t i = 0; i < rows_.size(); ++i)
            b[static_cast<Eigen::Index>(i)] = rows_[i].second;
        return b;
    }
    void add_aff_le(const Aff& a, double rhs) {
        // a.w u + a.k <= rhs
        std::vector<std::pair<int, double>> coeffs;
        for (Eigen::Index j = 0; j < a.w.size(); ++j)
            if (a.w[j] != 0.0) coeffs.emplace_back(static_cast<int>(j), a.w[j]);
        add(coeffs, rhs - a.k);
    }

  private:
    int n_vars_;
    std::vector<std::pair<std::vector<std::pair<int, double>>, double>> rows_;
};

}  // namespace miqp_detail

// Exact solver for the two Appendix-B problem shapes: the dominating-point
// QP over a ReLU superlevel set (or a hull-complement region) with linear
// cuts, and the hull-containment feasibility problem. Branch-and-bound on
// the ReLU activations and on the per-extreme-point max rows; node
// relaxations are convex QPs handed to DenseQpSolver.
class MiqpSolver {
  public:
    explicit MiqpSolver(MiqpOptions opts = MiqpOptions()) : opts_(opts) {}

    // minimize (x - lambda)' Sigma^{-1} (x - lambda)
    //   s.t.  g(x) >= kappa            (when net given)
    //         x outside `outside` hull (when given; strictified by strict_eps)
    //         cuts: a'x <= rhs
    //         0 <= x <= box_m
    MiqpSolution solve_dominating(const ReluNet* net, double kappa,
                                  const MonotoneHull* outside,
                                  const GaussianSpec& p,
                                  const std::vector<std::pair<Vec, double>>& cuts) {
        mode_ = Mode::Dominating;
        net_ = net;
        kappa_ = kappa;
        score_ge_ = true;
        p_ = &p;
        cuts_ = &cuts;
        rows_.kind = outside ? miqp_detail::RowSet::ComplementGe
                             : miqp_detail::RowSet::None;
        rows_.points = outside ? outside->extreme() : std::vector<Vec>{};
        dim_ = p.dim();
        return run_min();
    }

    // max beta over {x in [0,box_m]^d : g(x) <= kappa} of the hull distance
    // (Lower hull), or over {g(x) >= kappa} against an Upper hull. Optimal
    // beta > 0 is a containment violation.
    ContainmentResult check_containment(const ReluNet& net, double kappa,
                                        const MonotoneHull& hull) {
        mode_ = Mode::Containment;
        net_ = &net;
        kappa_ = kappa;
        p_ = nullptr;
        cuts_ = nullptr;
        dim_ = net.input_dim();
        if (hull.orientation() == HullOrientation::Lower) {
            score_ge_ = false;  // probe the negative decision region {g <= kappa}
            rows_.kind = miqp_detail::RowSet::OuterBeta;
        } else {
            score_ge_ = true;  // probe the positive region {g >= kappa}
            rows_.kind = miqp_detail::RowSet::InnerBeta;
        }
        rows_.points = hull.extreme();

        ContainmentResult res;
        if (rows_.points.empty()) {
            // Empty hull contains nothing; any feasible point violates.
            MiqpSolution root = run_max_empty_hull();
            res.nodes_explored = root.nodes_explored;
            if (root.status == MiqpStatus::Optimal) {
                res.contained = false;
                res.witness = root.point;
                res.margin = std::numeric_limits<double>::infinity();
            }
            return res;
        }

        MiqpSolution sol = run_max();
        res.nodes_explored = sol.nodes_explored;
        // A maximizer pressed against the box still answers the containment
        // question: the certificate is relative to [0, box_m]^d throughout.
        if (sol.status == MiqpStatus::Optimal ||
            sol.status == MiqpStatus::BigMViolated) {
            res.margin = sol.objective;
            // The beta = 0 boundary resolves to Contained; margins inside
            // the solver's feasibility tolerance count as the boundary.
            res.contained = sol.objective <= opts_.feas_tol;
            if (!res.contained) res.witness = sol.point;
        }
        return res;
    }

    const MiqpOptions& options() const { return opts_; }

  private:
    enum class Mode { Dominating, Containment };

    using Node = miqp_detail::BnbNode;

    int relu_count() const { return net_ ? net_->relu_count() : 0; }

    // ---- node assembly -------------------------------------------------

    miqp_detail::NodeProblem assemble(const Node& node,
                                      std::vector<std::int8_t>& fix) const {
        using namespace miqp_detail;
        fix = node.neuron_fix;
        std::vector<Interval> pre_iv;
        if (net_) pre_iv = propagate_intervals(*net_, opts_.box_m, fix);

        NodeProblem np;
        np.dim = dim_;
        const int n_relu = relu_count();
        np.y_var.assign(static_cast<std::size_t>(n_relu), -1);
        int nv = dim_;
        for (int k = 0; k < n_relu; ++k)
            if (fix[static_cast<std::size_t>(k)] == kFree)
                np.y_var[static_cast<std::size_t>(k)] = nv++;
        const bool has_beta = mode_ == Mode::Containment;
        if (has_beta) np.beta_var = nv++;
        np.n_vars = nv;

        RowBucket rows(nv);
        // Box on x. The lower side is the positive-quadrant constraint.
        for (int j = 0; j < dim_; ++j) {
            rows.add({{j, 1.0}}, opts_.box_m);
            rows.add({{j, -1.0}}, 0.0);
        }

        // Net encoding: propagate affine expressions layer by layer.
        Aff score_expr;
        if (net_) {
            std::vector<Aff> prev(static_cast<std::size_t>(dim_));
            for (int j = 0; j < dim_; ++j) {
                prev[static_cast<std::size_t>(j)].w = Vec::Zero(nv);
                prev[static_cast<std::size_t>(j)].w[j] = 1.0;
            }
            int flat = 0;
            np.neuron_pre.resize(static_cast<std::size_t>(n_relu));
            for (const auto& layer : net_->hidden()) {
                std::vector<Aff> cur(static_cast<std::size_t>(layer.w.rows()));
                for (Eigen::Index r = 0; r < layer.w.rows(); ++r, ++flat) {
                    Aff pre;
                    pre.w = Vec::Zero(nv);
                    pre.k = layer.b[r];
                    for (Eigen::Index c = 0; c < layer.w.cols(); ++c) {
                        const double w = layer.w(r, c);
                        if (w == 0.0) continue;
                        pre.w += w * prev[static_cast<std::size_t>(c)].w;
                        pre.k += w * prev[static_cast<std::size_t>(c)].k;
                    }
                    np.neuron_pre[static_cast<std::size_t>(flat)] = pre;
                    const auto f = fix[static_cast<std::size_t>(flat)];
                    const auto& iv = pre_iv[static_cast<std::size_t>(flat)];
                    auto& out = cur[static_cast<std::size_t>(r)];
                    if (f == kActive) {
                        // y = pre, pre >= 0
                        out = pre;
                        rows.add_aff_le({-pre.w, -pre.k}, 0.0);
                    } else if (f == kInactive) {
                        // y = 0, pre <= 0
                        out.w = Vec::Zero(nv);
                        out.k = 0.0;
                        rows.add_aff_le(pre, 0.0);
                    } else {
                        const int yv = np.y_var[static_cast<std::size_t>(flat)];
                        out.w = Vec::Zero(nv);
                        out.w[yv] = 1.0;
                        out.k = 0.0;
                        // y >= 0, y >= pre, y <= slope (pre - lo); the
                        // projection of the big-M binaries onto (pre, y).
                        rows.add({{yv, -1.0}}, 0.0);
                        Aff ge = pre;
                        ge.w[yv] -= 1.0;  // pre - y <= 0
                        rows.add_aff_le(ge, 0.0);
                        const double slope = iv.hi / (iv.hi - iv.lo);
                        Aff le;
                        le.w = -slope * pre.w;
                        le.w[yv] += 1.0;
                        le.k = -slope * (pre.k - iv.lo);
                        rows.add_aff_le(le, 0.0);  // y - slope(pre - lo) <= 0
                    }
                }
                prev = std::move(cur);
            }
            // score = (w1 - w0) h + (b1 - b0)
            score_expr.w = Vec::Zero(nv);
            score_expr.k = net_->output().b[1] - net_->output().b[0];
            for (Eigen::Index c = 0; c < net_->output().w.cols(); ++c) {
                const double w = net_->output().w(1, c) - net_->output().w(0, c);
                if (w == 0.0) continue;
                score_expr.w += w * prev[static_cast<std::size_t>(c)].w;
                score_expr.k += w * prev[static_cast<std::size_t>(c)].k;
            }
            if (score_ge_) {
                rows.add_aff_le({-score_expr.w, -score_expr.k}, -kappa_);
            } else {
                rows.add_aff_le(score_expr, kappa_);
            }
        }

        // Cuts: a'x <= rhs.
        if (cuts_) {
            for (const auto& [a, rhs] : *cuts_) {
                std::vector<std::pair<int, double>> coeffs;
                for (int j = 0; j < dim_; ++j)
                    if (a[j] != 0.0) coeffs.emplace_back(j, a[j]);
                rows.add(coeffs, rhs);
            }
        }

        // Hull rows.
        using RS = miqp_detail::RowSet;
        for (std::size_t i = 0; i < rows_.points.size(); ++i) {
            const Vec& e = rows_.points[i];
            const int j_fix = node.row_fix.empty() ? -1 : node.row_fix[i];
            if (rows_.kind == RS::ComplementGe) {
                if (j_fix >= 0) {
                    // x_j >= e_j + eps
                    rows.add({{j_fix, -1.0}}, -(e[j_fix] + opts_.strict_eps));
                } else {
                    // Aggregated form of the 2M max-operation rows: any
                    // integral selection implies sum_j (x_j - e_j) + 2M(d-1)
                    // >= d eps.
                    std::vector<std::pair<int, double>> coeffs;
                    double rhs = -static_cast<double>(dim_) * opts_.strict_eps +
                                 2.0 * opts_.box_m * (dim_ - 1) - e.sum();
                    for (int j = 0; j < dim_; ++j) coeffs.emplace_back(j, -1.0);
                    rows.add(coeffs, rhs);
                }
            } else if (rows_.kind == RS::OuterBeta) {
                if (j_fix >= 0) {
                    // beta <= x_j - e_j
                    rows.add({{np.beta_var, 1.0}, {j_fix, -1.0}}, -e[j_fix]);
                } else {
                    // Valid caps implied by the 4M rows with sum z >= 1:
                    // beta <= max_j (box_m - e_j), and the aggregate
                    // d beta <= sum_j (x_j - e_j) + 4M(d-1).
                    double cap = -std::numeric_limits<double>::infinity();
                    for (int j = 0; j < dim_; ++j)
                        cap = std::max(cap, opts_.box_m - e[j]);
                    rows.add({{np.beta_var, 1.0}}, cap);
                    std::vector<std::pair<int, double>> coeffs;
                    coeffs.emplace_back(np.beta_var, static_cast<double>(dim_));
                    for (int j = 0; j < dim_; ++j) coeffs.emplace_back(j, -1.0);
                    rows.add(coeffs, 4.0 * opts_.box_m * (dim_ - 1) - e.sum());
                }
            } else if (rows_.kind == RS::InnerBeta) {
                if (j_fix >= 0) {
                    // beta <= e_j - x_j
                    rows.add({{np.beta_var, 1.0}, {j_fix, 1.0}}, e[j_fix]);
                } else {
                    double cap = -std::numeric_limits<double>::infinity();
                    for (int j = 0; j < dim_; ++j) cap = std::max(cap, e[j]);
                    rows.add({{np.beta_var, 1.0}}, cap);
                    std::vector<std::pair<int, double>> coeffs;
                    coeffs.emplace_back(np.beta_var, static_cast<double>(dim_));
                    for (int j = 0; j < dim_; ++j) coeffs.emplace_back(j, 1.0);
                    rows.add(coeffs, 4.0 * opts_.box_m * (dim_ - 1) + e.sum());
                }
            }
        }
        if (mode_ == Mode::Containment) {
            // Keep beta in a harmless explicit range so the relaxations stay
            // bounded in every direction (the upper side matters when the
            // hull has no rows at all).
            const double bscale = 2.0 * opts_.box_m + 2.0;
            rows.add({{np.beta_var, -1.0}}, bscale);
            rows.add({{np.beta_var, 1.0}}, bscale);
        }

        np.A = rows.matrix();
        np.b = rows.rhs();
        np.Q = Mat::Zero(nv, nv);
        np.c = Vec::Zero(nv);
        if (mode_ == Mode::Dominating) {
            const Mat prec_x = 2.0 * sigma_inv_;
            np.Q.topLeftCorner(dim_, dim_) = prec_x;
            np.c.head(dim_) = -prec_x * p_->mean();
            np.obj_const = p_->mean().dot(sigma_inv_ * p_->mean());
        } else {
            np.c[np.beta_var] = -1.0;  // maximize beta
        }
        return np;
    }

    // ---- true-space checks ----------------------------------------------

    double row_value(const Vec& x, const Vec& e) const {
        using RS = miqp_detail::RowSet;
        double best = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < dim_; ++j) {
            const double v = rows_.kind == RS::InnerBeta ? e[j] - x[j] : x[j] - e[j];
            best = std::max(best, v);
        }
        return best;
    }

    double true_margin(const Vec& x) const {
        if (rows_.points.empty()) return 2.0 * opts_.box_m + 2.0;
        double m = std::numeric_limits<double>::infinity();
        for (const auto& e : rows_.points) m = std::min(m, row_value(x, e));
        return m;
    }

    bool true_score_ok(const Vec& x) const {
        if (!net_) return true;
        const double g = net_->score(x);
        return score_ge_ ? g >= kappa_ - opts_.feas_tol
                         : g <= kappa_ + opts_.feas_tol;
    }

    bool cuts_ok(const Vec& x) const {
        if (!cuts_) return true;
        for (const auto& [a, rhs] : *cuts_)
            if (a.dot(x) > rhs + opts_.feas_tol) return false;
        return true;
    }

    static bool lex_less(const Vec& a, const Vec& b) {
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            if (a[i] < b[i] - 1e-9) return true;
            if (a[i] > b[i] + 1e-9) return false;
        }
        return false;
    }

    // ---- search ----------------------------------------------------------

    struct Incumbent {
        bool valid = false;
        Vec x;
        double value = 0.0;
    };

    MiqpSolution run_min() { return run(false); }
    MiqpSolution run_max() { return run(true); }

    MiqpSolution run_max_empty_hull() {
        // Only the score region and the box; a single relaxation tells us
        // whether any point at all lies in {g <= kappa} (resp. >= kappa).
        mode_ = Mode::Containment;
        return run(true);
    }

    MiqpSolution run(bool maximize) {
        sigma_inv_.resize(0, 0);
        if (mode_ == Mode::Dominating) {
            Mat I = Mat::Identity(dim_, dim_);
            sigma_inv_ = p_->chol().triangularView<Eigen::Lower>().solve(I);
            sigma_inv_ = p_->chol()
                             .transpose()
                             .triangularView<Eigen::Upper>()
                             .solve(sigma_inv_);
        }

        const int n_relu = relu_count();
        Node root;
        root.neuron_fix.assign(static_cast<std::size_t>(n_relu), miqp_detail::kFree);
        root.row_fix.assign(rows_.points.size(), -1);
        root.bound = maximize ? std::numeric_limits<double>::infinity()
                              : -std::numeric_limits<double>::infinity();
        root.id = 0;

        auto cmp = [maximize](const Node& a, const Node& b) {
            if (a.bound != b.bound)
                return maximize ? a.bound < b.bound : a.bound > b.bound;
            return a.id > b.id;  // earlier nodes first on ties
        };
        std::priority_queue<Node, std::vector<Node>, decltype(cmp)> open(cmp);
        open.push(root);

        Incumbent inc;
        long nodes = 0;
        long next_id = 1;
        const double tie = 1e-9;
        DenseQpSolver qp(DenseQpSolver::Options{1e-9, opts_.feas_tol, 120});

        bool dumped = false;
        while (!open.empty()) {
            Node node = open.top();
            open.pop();

            if (inc.valid) {
                if (!maximize && node.bound > inc.value + tie) continue;
                if (maximize && node.bound < inc.value - tie) continue;
            }
            if (maximize && opts_.decision_only) {
                // Only the sign of the optimum matters for the caller. Stop
                // as soon as a positive margin is certified or no open node
                // can still produce one.
                if (inc.valid && inc.value > 0.0) break;
                if (node.bound <= 0.0) break;
            }

            if (++nodes > opts_.max_nodes)
                throw IterationLimit("miqp: node limit " +
                                     std::to_string(opts_.max_nodes) +
                                     " exceeded");

            std::vector<std::int8_t> fix;
            miqp_detail::NodeProblem np = assemble(node, fix);
            if (!dumped && !opts_.debug_dump_path.empty()) {
                dump_instance(np);
                dumped = true;
            }
            QpResult rel = qp.solve(np.Q, np.c, np.A, np.b);
            if (rel.status == QpStatus::Infeasible) continue;
            if (rel.status == QpStatus::NumericalTrouble) {
                // Unresolvable relaxation: push the node through its first
                // free entity with the inherited bound. Children carry more
                // fixings and solve cleanly; only a fully fixed leaf that
                // still fails is fatal.
                int free_neuron = -1, free_row = -1;
                for (int k = 0; k < n_relu && free_neuron < 0; ++k)
                    if (node.neuron_fix[static_cast<std::size_t>(k)] ==
                        miqp_detail::kFree)
                        free_neuron = k;
                for (std::size_t i = 0;
                     i < rows_.points.size() && free_neuron < 0 && free_row < 0;
                     ++i)
                    if (node.row_fix[i] < 0) free_row = static_cast<int>(i);
                if (free_neuron < 0 && free_row < 0) {
#ifdef PRAE_MIQP_DUMP_FAILURES
                    std::ofstream f("/tmp/failqp.txt");
                    f.precision(17);
                    f << np.n_vars << " " << np.A.rows() << "\n"
                      << np.Q << "\n" << np.c.transpose() << "\n" << np.A
                      << "\n" << np.b.transpose() << "\n";
#endif
                    throw PraeError("miqp: leaf relaxation failed numerically");
                }
                if (free_neuron >= 0) {
                    for (std::int8_t dir :
                         {miqp_detail::kActive, miqp_detail::kInactive}) {
                        Node child = node;
                        child.neuron_fix[static_cast<std::size_t>(free_neuron)] =
                            dir;
                        child.id = next_id++;
                        open.push(std::move(child));
                    }
                } else {
                    for (int j = 0; j < dim_; ++j) {
                        Node child = node;
                        child.row_fix[static_cast<std::size_t>(free_row)] =
                            static_cast<std::int16_t>(j);
                        child.id = next_id++;
                        open.push(std::move(child));
                    }
                }
                continue;
            }

            // Relaxation value with a safety margin absorbing the QP solver's
            // residual tolerance and duality gap, so bound pruning never cuts
            // a true optimum.
            double v = maximize ? -rel.objective : rel.objective + np.obj_const;
            const double slack = 1e-7 * (1.0 + std::abs(v)) + rel.gap;
            v += maximize ? slack : -slack;
            if (inc.valid) {
                if (!maximize && v > inc.value + tie) continue;
                if (maximize && v < inc.value - tie) continue;
            }
            if (maximize && opts_.decision_only && v <= 0.0) continue;

            const Vec x = rel.x.head(dim_);

            // Most violated free entity at the relaxation point.
            int worst_neuron = -1, worst_row = -1;
            double worst_violation = opts_.int_tol;
            for (int k = 0; k < n_relu; ++k) {
                if (fix[static_cast<std::size_t>(k)] != miqp_detail::kFree) continue;
                const double pre =
                    np.neuron_pre[static_cast<std::size_t>(k)].eval(rel.x);
                const double y = rel.x[np.y_var[static_cast<std::size_t>(k)]];
                const double viol = std::abs(y - std::max(pre, 0.0));
                if (viol > worst_violation) {
                    worst_violation = viol;
                    worst_neuron = k;
                }
            }
            if (rows_.kind != miqp_detail::RowSet::None) {
                const double beta_or_eps =
                    mode_ == Mode::Containment ? rel.x[np.beta_var]
                                               : opts_.strict_eps;
                for (std::size_t i = 0; i < rows_.points.size(); ++i) {
                    if (node.row_fix[i] >= 0) continue;
                    const double viol =
                        beta_or_eps - row_value(x, rows_.points[i]);
                    if (viol > worst_violation) {
                        worst_violation = viol;
                        worst_neuron = -1;
                        worst_row = static_cast<int>(i);
                    }
                }
            }

            if (worst_neuron < 0 && worst_row < 0) {
                // Relaxation point is integral; certify it in true space.
                if (true_score_ok(x) && cuts_ok(x)) {
                    double value;
                    bool rows_ok = true;
                    if (mode_ == Mode::Dominating) {
                        value = p_->rate(x);
                        if (rows_.kind == miqp_detail::RowSet::ComplementGe)
                            rows_ok = true_margin(x) >=
                                      opts_.strict_eps - opts_.feas_tol;
                    } else {
                        value = true_margin(x);
                    }
                    if (rows_ok) {
                        const bool better =
                            !inc.valid ||
                            (maximize ? value > inc.value + tie
                                      : value < inc.value - tie) ||
                            (std::abs(value - inc.value) <= tie &&
                             lex_less(x, inc.x));
                        if (better) {
                            inc.valid = true;
                            inc.x = x;
                            inc.value = value;
                        }
                    }
                }
                // A sloppy relaxation (nonzero duality gap) may hide a
                // better completion in this subtree: push it through the
                // first still-free entity instead of closing the node.
                if (rel.gap > 1e-7 * (1.0 + std::abs(v))) {
                    for (int k = 0; k < n_relu && worst_neuron < 0; ++k)
                        if (fix[static_cast<std::size_t>(k)] == miqp_detail::kFree &&
                            node.neuron_fix[static_cast<std::size_t>(k)] ==
                                miqp_detail::kFree)
                            worst_neuron = k;
                    if (worst_neuron < 0)
                        for (std::size_t i = 0; i < rows_.points.size(); ++i)
                            if (!node.row_fix.empty() && node.row_fix[i] < 0) {
                                worst_row = static_cast<int>(i);
                                break;
                            }
                }
                if (worst_neuron < 0 && worst_row < 0) continue;
            }

            // Branch.
            if (worst_neuron >= 0) {
                for (std::int8_t dir : {miqp_detail::kActive, miqp_detail::kInactive}) {
                    Node child = node;
                    child.neuron_fix[static_cast<std::size_t>(worst_neuron)] = dir;
                    child.bound = v;
                    child.id = next_id++;
                    open.push(std::move(child));
                }
            } else {
                for (int j = 0; j < dim_; ++j) {
                    Node child = node;
                    child.row_fix[static_cast<std::size_t>(worst_row)] =
                        static_cast<std::int16_t>(j);
                    child.bound = v;
                    child.id = next_id++;
                    open.push(std::move(child));
                }
            }
        }

        MiqpSolution sol;
        sol.nodes_explored = nodes;
        if (!inc.valid) {
            sol.status = MiqpStatus::Infeasible;
            return sol;
        }
        sol.point = inc.x;
        sol.objective = inc.value;
        sol.status = MiqpStatus::Optimal;
        for (int j = 0; j < dim_; ++j) {
            if (inc.x[j] >= opts_.box_m * (1.0 - 1e-6)) {
                sol.status = MiqpStatus::BigMViolated;
                break;
            }
        }
        return sol;
    }

    void dump_instance(const miqp_detail::NodeProblem& np) const {
        nlohmann::json j;
        j["mode"] = mode_ == Mode::Dominating ? "dominating" : "containment";
        j["n_vars"] = np.n_vars;
        j["dim"] = np.dim;
        j["kappa"] = kappa_;
        j["box_m"] = opts_.box_m;
        j["binaries"] = relu_count() + static_cast<int>(rows_.points.size());
        auto rows = nlohmann::json::array();
        for (Eigen::Index i = 0; i < np.A.rows(); ++i) {
            nlohmann::json row;
            row["a"] = std::vector<double>(np.A.row(i).begin(), np.A.row(i).end());
            row["rhs"] = np.b[i];
            rows.push_back(row);
        }
        j["rows"] = rows;
        j["c"] = std::vector<double>(np.c.data(), np.c.data() + np.c.size());
        std::ofstream out(opts_.debug_dump_path);
        out << j.dump(2) << "\n";
    }

    MiqpOptions opts_;
    Mode mode_ = Mode::Dominating;
    const ReluNet* net_ = nullptr;
    double kappa_ = 0.0;
    bool score_ge_ = true;
    const GaussianSpec* p_ = nullptr;
    const std::vector<std::pair<Vec, double>>* cuts_ = nullptr;
    miqp_detail::RowSet rows_;
    int dim_ = 0;
    Mat sigma_inv_;
};

// Spec-shaped convenience wrappers -----------------------------------------

inline MiqpSolution solve_dominating_qp(const ReluNet& net, double kappa,
                                        const GaussianSpec& p,
                                        const std::vector<std::pair<Vec, double>>& cuts,
                                        const MiqpOptions& opts) {
    MiqpSolver solver(opts);
    return solver.solve_dominating(&net, kappa, nullptr, p, cuts);
}

inline ContainmentResult check_containment(const ReluNet& net, double kappa,
                                           const MonotoneHull& hull,
                                           const MiqpOptions& opts) {
    MiqpSolver solver(opts);
    return solver.check_containment(net, kappa, hull);
}

// Builds the half-space cut (a_j - lambda)' Sigma^{-1} (x - a_j) <= -eps used
// by the sequential dominating-point search.
inline std::pair<Vec, double> dominating_cut(const GaussianSpec& p, const Vec& a,
                                             double strict_eps = kStrictEps) {
    Vec normal = p.cov_solve(a - p.mean());
    return {normal, normal.dot(a) - strict_eps};
}

}  // namespace prae
