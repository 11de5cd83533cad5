#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "prae/ams.hpp"
#include "prae/benchmarks.hpp"
#include "prae/certificate.hpp"
#include "prae/cross_entropy.hpp"
#include "prae/estimators.hpp"

using namespace prae;

namespace {

Problem halfspace_problem(double gamma) {
    Problem p{2,
              GaussianSpec::standard(2),
              [gamma](const Vec& x) { return x[0] >= gamma ? 1 : 0; },
              OrientationMap::identity(2),
              gamma,
              [](const Vec& x) { return x[0]; },
              gamma};
    return p;
}

DominatingSet single_point_ds(const Vec& a) {
    DominatingSet ds;
    ds.points = {a};
    ds.weights = {1.0};
    ds.objectives = {0.0};
    return ds;
}

}  // namespace

TEST_CASE("naive MC recovers a coin flip") {
    auto p = halfspace_problem(0.0);
    auto est = naive_mc(p, 100000, 1);
    REQUIRE_THAT(est.value, Catch::Matchers::WithinAbs(0.5, 0.005));
    REQUIRE(est.hits > 0);
    REQUIRE_THAT(est.empirical_re,
                 Catch::Matchers::WithinAbs((1.0 - est.value) / est.value, 1e-12));
}

TEST_CASE("naive MC fails to hit the deep rare event") {
    auto p = sigmoid2d_problem(1.8);
    auto est = naive_mc(p, 100000, 3);
    REQUIRE(est.hits == 0);
    REQUIRE(est.value == 0.0);
    REQUIRE(std::isinf(est.empirical_re));
}

TEST_CASE("mixture IS hits the 6-sigma half-space tail") {
    auto p = halfspace_problem(6.0);
    Vec a(2);
    a << 6.0, 0.0;
    auto est = mixture_is(p.indicator, single_point_ds(a), p.law, 10000, 5);
    const double truth = oracle::phi_bar(6.0);  // 9.866e-10
    const double half_width = est.ci_hi - est.value;
    REQUIRE(std::abs(est.value - truth) < 3.0 * half_width);
    REQUIRE(est.empirical_re < 10.0);
}

TEST_CASE("mixture IS of the whole space at the mean is exactly 1") {
    auto p = GaussianSpec::standard(2);
    auto everything = [](const Vec&) { return 1; };
    auto est = mixture_is(everything, single_point_ds(Vec::Zero(2)), p, 2000, 7);
    REQUIRE_THAT(est.value, Catch::Matchers::WithinRel(1.0, 1e-12));
    REQUIRE(est.per_run_variance < 1e-20);
}

TEST_CASE("two-sided problem with both dominating points matches the oracle") {
    const double gamma = 3.0, k = 1.0;
    auto problem = two_sided_problem(gamma, k);
    DominatingSet ds;
    Vec a1(1), a2(1);
    a1 << gamma;
    a2 << -k * gamma;
    ds.points = {a1, a2};
    ds.weights = {0.5, 0.5};
    auto est = mixture_is(problem.indicator, ds, problem.law, 20000, 9);
    const double truth = oracle::phi_bar(gamma) + oracle::phi_bar(k * gamma);
    const double half_width = est.ci_hi - est.value;
    REQUIRE(std::abs(est.value - truth) < 3.0 * half_width);
}

TEST_CASE("one-point IS on the two-sided problem reproduces the trap") {
    // Missing the -k gamma dominating point concentrates at phi_bar(gamma)
    // with a deceptively small empirical RE.
    const double gamma = 4.0, k = 0.5;
    auto problem = two_sided_problem(gamma, k);
    Vec a(1);
    a << gamma;
    auto est =
        mixture_is(problem.indicator, single_point_ds(a), problem.law, 10000, 11);
    const double wrong = oracle::phi_bar(gamma);
    const double truth = wrong + oracle::phi_bar(k * gamma);
    REQUIRE(std::abs(est.value - wrong) < 0.1 * wrong);
    REQUIRE(est.empirical_re < 5.0);
    REQUIRE(est.value < 0.05 * truth);  // under-estimation by >95%
}

TEST_CASE("IS is unbiased against a long naive MC run at a non-rare level") {
    auto p = halfspace_problem(1.5);
    Vec a(2);
    a << 1.5, 0.0;
    auto ds = single_point_ds(a);
    double sum = 0.0, sum_sq = 0.0;
    const int reps = 100;
    for (int r = 0; r < reps; ++r) {
        auto est = mixture_is(p.indicator, ds, p.law, 2000,
                              1000 + static_cast<std::uint64_t>(r));
        sum += est.value;
        sum_sq += est.value * est.value;
    }
    const double mean = sum / reps;
    const double sem = std::sqrt(
        std::max(0.0, (sum_sq / reps - mean * mean)) / static_cast<double>(reps));
    auto mc = naive_mc(p, 1000000, 999);
    const double mc_sem = std::sqrt(mc.value * (1.0 - mc.value) / 1e6);
    const double pooled = std::sqrt(sem * sem + mc_sem * mc_sem);
    REQUIRE(std::abs(mean - mc.value) < 3.0 * pooled);
}

TEST_CASE("CE single Gaussian on the two-sided problem stays at one tail") {
    // In one dimension the fitted variance stretches to cover both tails,
    // so the trap does not bite: the estimate tracks the truth. The
    // systematic halving shows on the 2D benchmark below, where the lobes
    // are isolated corners.
    const double gamma = 2.5;
    auto problem = two_sided_problem(gamma, 1.0);
    CeConfig cfg;
    cfg.n_per_level = 4000;
    cfg.n_final = 20000;
    auto out = cross_entropy(problem, cfg, 21);
    const double truth = 2.0 * oracle::phi_bar(gamma);
    REQUIRE(out.estimate.value > 0.25 * truth);
    REQUIRE(out.estimate.value < 1.5 * truth);
    REQUIRE_FALSE(out.level_path.empty());
}

TEST_CASE("CE GMM-2 covers both sides of the two-sided problem") {
    const double gamma = 2.5;
    auto problem = two_sided_problem(gamma, 1.0);
    CeConfig cfg;
    cfg.family = CeFamily::Gmm;
    cfg.gmm_k = 2;
    cfg.n_per_level = 4000;
    cfg.n_final = 20000;
    auto out = cross_entropy(problem, cfg, 23);
    const double truth = 2.0 * oracle::phi_bar(gamma);
    REQUIRE_THAT(out.estimate.value, Catch::Matchers::WithinRel(truth, 0.25));
}

TEST_CASE("CE naive under-estimates the 2D benchmark by about half") {
    // The two rare lobes sit in isolated corners; the single Gaussian
    // commits to one of them, reproducing the systematic ~50% (or worse)
    // under-estimation with a plausible-looking RE.
    const double gamma = 1.6;
    auto problem = sigmoid2d_problem(gamma);
    auto truth = sigmoid2d_truth(gamma, 50000, 777);
    CeConfig cfg;
    cfg.n_per_level = 1000;
    cfg.n_final = 10000;
    cfg.max_levels = 80;
    int under = 0;
    for (std::uint64_t seed : {2, 3, 4, 5, 6}) {
        auto out = cross_entropy(problem, cfg, seed);
        if (out.estimate.value < 0.7 * truth.value) ++under;
    }
    REQUIRE(under >= 4);

    // The well-chosen parametric class recovers the truth.
    cfg.family = CeFamily::Gmm;
    cfg.gmm_k = 2;
    auto gmm = cross_entropy(problem, cfg, 2);
    REQUIRE_THAT(gmm.estimate.value,
                 Catch::Matchers::WithinRel(truth.value, 0.3));
}

TEST_CASE("CE stalls when the ladder cannot move") {
    // Constant score: the quantile never increases.
    Problem p{1,
              GaussianSpec::standard(1),
              [](const Vec&) { return 0; },
              OrientationMap::identity(1),
              5.0,
              [](const Vec&) { return 0.0; },
              5.0};
    CeConfig cfg;
    cfg.n_per_level = 100;
    REQUIRE_THROWS_AS(cross_entropy(p, cfg, 1), Stalled);
}

TEST_CASE("AMS estimates a 3-sigma tail within 20 percent") {
    Problem p = halfspace_problem(3.0);
    AmsConfig cfg;
    cfg.n_particles = 1000;
    auto est = ams(p, cfg, 31);
    REQUIRE_THAT(est.value,
                 Catch::Matchers::WithinRel(oracle::phi_bar(3.0), 0.2));
}

TEST_CASE("AMS with rho near 1 collapses to naive MC on the first level") {
    // Non-rare target below the 0.1th percentile: a single level suffices
    // and the estimate is the plain hit fraction of the initial particles.
    Problem p = halfspace_problem(-3.6);
    AmsConfig cfg;
    cfg.n_particles = 2000;
    cfg.rho = 0.999;
    auto est = ams(p, cfg, 33);
    REQUIRE(est.meta["levels"].size() == 1);
    REQUIRE_THAT(est.value, Catch::Matchers::WithinAbs(
                                1.0 - oracle::phi_bar(3.6), 0.01));
    REQUIRE(est.value ==
            static_cast<double>(est.hits) / static_cast<double>(cfg.n_particles));
}

TEST_CASE("certificate probe: flat RE for certified IS, hits die for naive MC") {
    auto run_is = [](double gamma, std::uint64_t seed) {
        auto p = halfspace_problem(gamma);
        Vec a(2);
        a << gamma, 0.0;
        return mixture_is(p.indicator, single_point_ds(a), p.law, 4000, seed);
    };
    auto table = certificate_probe(run_is, {2.0, 3.0, 4.0, 5.0, 6.0}, 3, 41);
    REQUIRE(table.rows.size() == 5);
    // Certified IS: empirical RE grows at most polynomially; on this range
    // the log-RE slope stays small.
    REQUIRE(table.log_re_slope < 1.0);
    for (const auto& row : table.rows) REQUIRE(row.mean_empirical_re < 10.0);

    auto run_mc = [](double gamma, std::uint64_t seed) {
        return naive_mc(halfspace_problem(gamma), 2000, seed);
    };
    auto mc_table = certificate_probe(run_mc, {1.0, 2.0, 3.0, 4.0}, 2, 43);
    REQUIRE(mc_table.rows.front().mean_estimate > 0.0);
    REQUIRE(mc_table.rows.back().mean_estimate == 0.0);  // hits vanish
}

TEST_CASE("certificate probe rejects a non-increasing gamma grid") {
    auto run = [](double, std::uint64_t) { return Estimate{}; };
    REQUIRE_THROWS_AS(certificate_probe(run, {1.0, 1.0}, 1, 1), PraeError);
}

TEST_CASE("degenerate stage-1 labels surface through the pipeline") {
    auto problem = halfspace_problem(20.0);  // nothing will be rare
    std::vector<LabeledSample> stage1;
    CounterRng rng(51, 0);
    for (int i = 0; i < 100; ++i)
        stage1.push_back({problem.law.sample(rng), 0});
    DeepPraeConfig cfg;
    REQUIRE_THROWS_AS(deep_prae(problem, stage1, cfg, BoundSide::Upper, 1),
                      DegenerateLabels);
}

TEST_CASE("deep and lazy bounds bracket a synthetic monotone problem") {
    // S = {x1 + x2 >= c} under N([1,1], I), mapped already to the positive
    // quadrant; exact truth via the rotated 1D tail.
    const double c = 6.0;
    Vec mean(2);
    mean << 1.0, 1.0;
    Problem problem{2,
                    GaussianSpec(mean, Mat::Identity(2, 2)),
                    [c](const Vec& x) { return x.sum() >= c ? 1 : 0; },
                    OrientationMap::identity(2),
                    c,
                    [](const Vec& x) { return x.sum(); },
                    c};
    // Truth: sum ~ N(2, 2) => P = phi_bar((c-2)/sqrt(2)).
    const double truth = oracle::phi_bar((c - 2.0) / std::numbers::sqrt2);

    auto stage1 = stage1_uniform_box(problem, 4000, Vec::Zero(2),
                                     Vec::Constant(2, 8.0), 61);
    DeepPraeConfig cfg;
    cfg.train.hidden_widths = {16, 16};
    cfg.train.epochs = 30;
    cfg.n2 = 10000;

    auto ub = deep_prae(problem, stage1, cfg, BoundSide::Upper, 71);
    auto lb = deep_prae(problem, stage1, cfg, BoundSide::Lower, 71);
    auto lazy_ub = lazy_learner(problem, stage1, cfg, BoundSide::Upper, 71);
    auto lazy_lb = lazy_learner(problem, stage1, cfg, BoundSide::Lower, 71);

    REQUIRE(ub.value >= truth * 0.8);
    REQUIRE(lb.value <= truth * 1.2);
    REQUIRE(lazy_ub.value >= ub.value * 0.5);
    REQUIRE(lazy_lb.value <= lb.value * 2.0);
    REQUIRE(lb.value > 0.0);

    // Mod variant scores the true indicator and lands near the truth.
    auto mod = deep_prae_mod(problem, stage1, cfg, 71);
    REQUIRE_THAT(mod.value, Catch::Matchers::WithinRel(truth, 0.5));
}

TEST_CASE("lazy learner flags an empty hull as degenerate") {
    auto problem = halfspace_problem(1.0);
    std::vector<LabeledSample> stage1;
    CounterRng rng(81, 0);
    // All-rare stage 1 set: T0 empty (labels still both present? no -
    // construct rare labels plus one synthetic non-rare... the lazy UB path
    // needs only T0; feed labels of both kinds with T0 outside the quadrant).
    Vec neg(2);
    neg << -1.0, -1.0;
    stage1.push_back({neg, 0});  // dropped by the quadrant filter
    for (int i = 0; i < 50; ++i) {
        Vec x(2);
        x << 1.5 + rng.next_uniform(), rng.next_uniform();
        stage1.push_back({x, 1});
    }
    DeepPraeConfig cfg;
    cfg.n2 = 2000;
    auto est = lazy_learner(problem, stage1, cfg, BoundSide::Upper, 1);
    REQUIRE(est.meta["degenerate_empty_hull"].get<bool>());
    // The vacuous hull makes the bound the whole positive quadrant, which
    // carries a quarter of the mass under the origin-centered law.
    REQUIRE_THAT(est.value, Catch::Matchers::WithinAbs(0.25, 0.05));
}
