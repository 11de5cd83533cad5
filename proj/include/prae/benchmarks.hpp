#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "prae/core.hpp"
#include "prae/estimate.hpp"
#include "prae/estimators.hpp"
#include "prae/hull.hpp"

namespace prae {

// ---------------------------------------------------------------------------
// 2D sigmoid benchmark: g(x) = || sum_i theta_i psi(x - c_i - gamma) || with
// psi the logistic function applied coordinate-wise; x is rare iff
// g(x) > gamma, under N([5,5]', 0.25 I).
//
// The paper leaves theta and c unspecified ("some constant vectors"). The
// shipped constants were calibrated with tools/prae calibrate-benchmark so
// that the set keeps exactly two well-separated dominating points near
// (t,5) and (5,t) and the gamma = 1.8 probability lands at the 1e-24 scale.
struct Sigmoid2DSpec {
    std::array<Vec, 4> thetas;
    std::array<Vec, 4> centers;
    double gamma = 1.8;

    static Sigmoid2DSpec make(double gamma) {
        Sigmoid2DSpec s;
        s.gamma = gamma;
        const double amp = 3.6;
        const double c = 9.22, stagger = 0.3;
        auto v = [](double a, double b) {
            Vec x(2);
            x << a, b;
            return x;
        };
        s.thetas = {v(amp, 0.0), v(amp, 0.0), v(0.0, amp), v(0.0, amp)};
        s.centers = {v(c, c), v(c + stagger, c + stagger), v(c, c),
                     v(c + stagger, c + stagger)};
        return s;
    }

    static double psi(double t) {
        // exp(t)/(1+exp(t)), evaluated stably on both tails.
        return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
    }

    double score(const Vec& x) const {
        Vec acc = Vec::Zero(2);
        for (int i = 0; i < 4; ++i) {
            for (int k = 0; k < 2; ++k)
                acc[k] += thetas[i][k] * psi(x[k] - centers[i][k] - gamma);
        }
        return acc.norm();
    }

    int indicator(const Vec& x) const { return score(x) > gamma ? 1 : 0; }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["gamma"] = gamma;
        for (int i = 0; i < 4; ++i) {
            j["theta"].push_back({thetas[i][0], thetas[i][1]});
            j["c"].push_back({centers[i][0], centers[i][1]});
        }
        return j;
    }

    static Sigmoid2DSpec from_json(const nlohmann::json& j) {
        Sigmoid2DSpec s = make(j.at("gamma").get<double>());
        if (j.contains("theta")) {
            for (int i = 0; i < 4; ++i) {
                s.thetas[i][0] = j["theta"][i][0];
                s.thetas[i][1] = j["theta"][i][1];
                s.centers[i][0] = j["c"][i][0];
                s.centers[i][1] = j["c"][i][1];
            }
        }
        return s;
    }
};

inline Problem sigmoid2d_problem(double gamma) {
    auto spec = Sigmoid2DSpec::make(gamma);
    Vec mean(2);
    mean << 5.0, 5.0;
    Problem p{2,
              GaussianSpec(mean, 0.25 * Mat::Identity(2, 2)),
              [spec](const Vec& x) { return spec.indicator(x); },
              OrientationMap::identity(2),
              gamma,
              [spec](const Vec& x) { return spec.score(x); },
              gamma};
    return p;
}

// Coordinate of the slab face f(t) = level along one axis, by bisection over
// the monotone one-dimensional profile.
inline double sigmoid2d_face(const Sigmoid2DSpec& spec, double level) {
    auto f = [&](double t) {
        Vec x(2);
        x << t, 0.0;
        Vec acc = Vec::Zero(2);
        for (int i = 0; i < 4; ++i)
            acc[0] += spec.thetas[i][0] *
                      Sigmoid2DSpec::psi(t - spec.centers[i][0] - spec.gamma);
        return acc[0];
    };
    double lo = 0.0, hi = 40.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < level ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Known-set dominating points of the shipped benchmark: the two slab faces
// plus the diagonal notch corner (a minor third region; including it keeps
// the truth oracle's mixture covering).
inline DominatingSet sigmoid2d_known_dominating(double gamma) {
    auto spec = Sigmoid2DSpec::make(gamma);
    const double t = sigmoid2d_face(spec, gamma);
    const double s = sigmoid2d_face(spec, gamma / std::numbers::sqrt2);
    DominatingSet ds;
    Vec a1(2), a2(2), a3(2);
    a1 << t, 5.0;
    a2 << 5.0, t;
    a3 << s, s;
    ds.points = {a1, a2, a3};
    ds.objectives = {4.0 * (t - 5.0) * (t - 5.0), 4.0 * (t - 5.0) * (t - 5.0),
                     8.0 * (s - 5.0) * (s - 5.0)};
    ds.weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    ds.rate_of_a_star = ds.objectives[0];
    ds.source = DominatingSource::DeepNet;
    return ds;
}

// Truth oracle: proper mixture IS with full knowledge of the set.
inline Estimate sigmoid2d_truth(double gamma, long n = 50000,
                                std::uint64_t seed = 777) {
    Problem p = sigmoid2d_problem(gamma);
    DominatingSet ds = sigmoid2d_known_dominating(gamma);
    return mixture_is(p.indicator, ds, p.law, n, seed);
}

// ---------------------------------------------------------------------------
// Theorem-2 problem: mu = P(X >= gamma or X <= -k gamma) under N(0,1).
inline Problem two_sided_problem(double gamma, double k) {
    if (k <= 0.0 || k >= 3.0)
        throw PraeError("two_sided_problem: k must lie in (0,3)");
    Problem p{1,
              GaussianSpec::standard(1),
              nullptr,
              OrientationMap::identity(1),
              gamma,
              [k](const Vec& x) { return std::max(x[0], -x[0] / k); },
              gamma};
    p.indicator = [gamma, k](const Vec& x) {
        return std::max(x[0], -x[0] / k) > gamma ? 1 : 0;
    };
    return p;
}

// ---------------------------------------------------------------------------
// Intelligent Driver Model car following. The AV (follower) runs IDM; the
// human lead vehicle's acceleration follows a random-walk action sequence.
struct IdmParams {
    double s0 = 2.0;        // safety distance [m]
    double v0 = 30.0;       // free-traffic speed [m/s]
    double b = 1.67;        // comfortable deceleration [m/s^2]
    double t_headway = 1.5; // safe time headway [s]
    double delta = 4.0;     // acceleration exponent
    double car_len = 4.0;   // [m]
    double gamma = 1.0;     // pedal-range rarity knob

    double a_max() const { return 2.0 * gamma; }
    double d_max() const { return 2.0 * gamma; }
};

struct LvActionLaw {
    double u0 = 10.0;         // unitless initial action, zero acceleration
    double epoch_s = 4.0;     // action change cadence [s]
    int epochs = 15;          // => 60 s horizon at the default cadence
    double sigma = 0.8;       // increment scale (calibrated, see README)
    double accel_scale = 0.4; // affine action-to-acceleration map
    double lv_decel_cap = 8.0;
    double lv_accel_cap = 2.0;
    double v_init = 25.0;     // both vehicles' initial speed [m/s]
    double gap_init = 40.0;   // initial bumper gap [m]
    bool iid_actions = false; // i.i.d. actions instead of the random walk

    double horizon() const { return epoch_s * epochs; }
};

struct IdmTrajectory {
    std::vector<double> t, gap, v_follow, v_lead, a_follow, a_lead;
    bool crash = false;
    double crash_time = -1.0;
    double min_gap = std::numeric_limits<double>::infinity();
    double score() const { return -min_gap; }  // crash iff score > 0
};

inline IdmTrajectory idm_simulate(const IdmParams& params,
                                  const LvActionLaw& law, const Vec& input,
                                  double dt = 0.1) {
    if (input.size() != law.epochs)
        throw PraeError("idm_simulate: input dimension != epochs");
    const long steps_per_epoch = std::lround(law.epoch_s / dt);
    if (steps_per_epoch <= 0 ||
        std::abs(steps_per_epoch * dt - law.epoch_s) > 1e-9)
        throw PraeError("idm_simulate: dt must divide the epoch evenly");
    for (Eigen::Index i = 0; i < input.size(); ++i)
        if (!std::isfinite(input[i]))
            throw PraeError("idm_simulate: non-finite action input");

    // Action sequence: random-walk accumulation (or i.i.d. behind the flag).
    std::vector<double> u(static_cast<std::size_t>(law.epochs));
    double prev = law.u0;
    for (int k = 0; k < law.epochs; ++k) {
        u[static_cast<std::size_t>(k)] =
            law.iid_actions ? law.u0 + law.sigma * input[k]
                            : prev + law.sigma * input[k];
        prev = u[static_cast<std::size_t>(k)];
    }

    IdmTrajectory traj;
    double x_f = 0.0, x_l = law.gap_init + params.car_len;
    double v_f = law.v_init, v_l = law.v_init;
    const double sqrt_ab = std::sqrt(params.a_max() * params.b);

    const long total = steps_per_epoch * law.epochs;
    traj.t.reserve(static_cast<std::size_t>(total) + 1);
    for (long step = 0; step <= total; ++step) {
        const double time = static_cast<double>(step) * dt;
        const double gap = x_l - x_f - params.car_len;
        const int epoch = std::min<long>(step / steps_per_epoch, law.epochs - 1);
        const double a_l =
            std::clamp(law.accel_scale * (u[static_cast<std::size_t>(epoch)] - law.u0),
                       -law.lv_decel_cap, law.lv_accel_cap);
        const double dv = v_f - v_l;
        const double s_star = params.s0 + v_f * params.t_headway +
                              v_f * dv / (2.0 * sqrt_ab);
        double a_f;
        if (gap <= 0.0) {
            a_f = -params.d_max();
        } else {
            a_f = params.a_max() *
                  (1.0 - std::pow(v_f / params.v0, params.delta) -
                   (s_star / gap) * (s_star / gap));
            a_f = std::max(a_f, -params.d_max());
        }

        traj.t.push_back(time);
        traj.gap.push_back(gap);
        traj.v_follow.push_back(v_f);
        traj.v_lead.push_back(v_l);
        traj.a_follow.push_back(a_f);
        traj.a_lead.push_back(a_l);
        traj.min_gap = std::min(traj.min_gap, gap);

        if (gap < 0.0) {
            traj.crash = true;
            traj.crash_time = time;
            break;
        }
        if (std::abs(x_f) > 1e9 || std::abs(x_l) > 1e9 || std::abs(v_f) > 1e9)
            throw NumericalBlowup("idm_simulate: state exceeded 1e9");

        x_f += dt * v_f;
        x_l += dt * v_l;
        v_f = std::max(0.0, v_f + dt * a_f);
        v_l = std::max(0.0, v_l + dt * a_l);
    }
    return traj;
}

inline void dump_trajectory_csv(const IdmTrajectory& traj, std::ostream& out) {
    out << "t,gap,v_follow,v_lead,a_follow,a_lead\n";
    for (std::size_t i = 0; i < traj.t.size(); ++i)
        out << traj.t[i] << ',' << traj.gap[i] << ',' << traj.v_follow[i] << ','
            << traj.v_lead[i] << ',' << traj.a_follow[i] << ',' << traj.a_lead[i]
            << "\n";
}

// Crash-probability problem over the 15-dimensional (or reduced) standard
// normal action-increment space. Harder braking means more-negative inputs,
// so the orientation flips every coordinate around `flip_shift`.
inline Problem idm_problem(double gamma, double sigma, int epochs = 15,
                           double dt = 0.1, double flip_shift = 6.0,
                           bool iid_actions = false) {
    IdmParams params;
    params.gamma = gamma;
    LvActionLaw law;
    law.sigma = sigma;
    law.epochs = epochs;
    law.iid_actions = iid_actions;

    auto score = [params, law, dt](const Vec& x) {
        return idm_simulate(params, law, x, dt).score();
    };
    Problem p{epochs,
              GaussianSpec::standard(epochs),
              [score](const Vec& x) { return score(x) > 0.0 ? 1 : 0; },
              OrientationMap::full_flip(Vec::Constant(epochs, flip_shift)),
              gamma,
              score,
              0.0};
    return p;
}

}  // namespace prae
