#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "prae/gaussian.hpp"

using namespace prae;

TEST_CASE("chol_factor identity and scaled identity") {
    Mat I2 = Mat::Identity(2, 2);
    REQUIRE(chol_factor(I2).isApprox(I2, 1e-14));
    // The 2D experiment covariance 0.25 I has factor 0.5 I.
    REQUIRE(chol_factor(0.25 * I2).isApprox(0.5 * I2, 1e-14));
}

TEST_CASE("chol_factor recomposition") {
    Mat cov(2, 2);
    cov << 4, 2, 2, 3;
    Mat L = chol_factor(cov);
    REQUIRE((L * L.transpose() - cov).cwiseAbs().maxCoeff() < 1e-8 * 4.0);
    REQUIRE(L(0, 1) == 0.0);
    REQUIRE(L(0, 0) > 0.0);
    REQUIRE(L(1, 1) > 0.0);
}

TEST_CASE("chol_factor rejects non-SPD") {
    Mat bad(2, 2);
    bad << 1, 2, 2, 1;  // indefinite
    REQUIRE_THROWS_AS(chol_factor(bad), NotPositiveDefinite);
    Mat asym(2, 2);
    asym << 1, 0.5, 0.1, 1;
    REQUIRE_THROWS_AS(chol_factor(asym), NotPositiveDefinite);
}

TEST_CASE("sampling moments") {
    CounterRng rng(123, 0);
    auto p1 = GaussianSpec::standard(1);
    const int n = 10000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += p1.sample(rng)[0];
    REQUIRE(std::abs(sum / n) < 4.0 / std::sqrt(static_cast<double>(n)));

    Vec mean(2);
    mean << 5, 5;
    GaussianSpec p2(mean, 0.25 * Mat::Identity(2, 2));
    Mat scatter = Mat::Zero(2, 2);
    Vec avg = Vec::Zero(2);
    std::vector<Vec> xs = p2.sample_n(rng, n);
    for (const auto& x : xs) avg += x;
    avg /= n;
    for (const auto& x : xs) scatter += (x - avg) * (x - avg).transpose();
    scatter /= n - 1;
    REQUIRE((scatter - 0.25 * Mat::Identity(2, 2)).cwiseAbs().maxCoeff() <
            0.1 * 0.25);
}

TEST_CASE("sampling is deterministic given the seed") {
    auto p = GaussianSpec::standard(3);
    CounterRng a(99, 5), b(99, 5);
    for (int i = 0; i < 50; ++i) {
        Vec xa = p.sample(a), xb = p.sample(b);
        REQUIRE(xa == xb);
    }
    // Different stream, different draws.
    CounterRng c(99, 6);
    REQUIRE(p.sample(c) != p.sample(b));
}

TEST_CASE("log_density closed forms") {
    auto p1 = GaussianSpec::standard(1);
    Vec zero1 = Vec::Zero(1);
    REQUIRE_THAT(p1.log_density(zero1),
                 Catch::Matchers::WithinAbs(-0.5 * std::log(2.0 * std::numbers::pi),
                                            1e-12));
    auto p2 = GaussianSpec::standard(2);
    Vec ones = Vec::Ones(2);
    REQUIRE_THAT(p2.log_density(ones),
                 Catch::Matchers::WithinAbs(-std::log(2.0 * std::numbers::pi) - 1.0,
                                            1e-12));
}

TEST_CASE("log_density matches the dense-inverse oracle") {
    CounterRng rng(7, 0);
    for (int rep = 0; rep < 20; ++rep) {
        const int d = 1 + static_cast<int>(rng.next_below(4));
        Mat A(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) A(i, j) = rng.next_normal();
        Mat cov = A * A.transpose() + 0.5 * Mat::Identity(d, d);
        Vec mean(d), x(d);
        for (int i = 0; i < d; ++i) {
            mean[i] = rng.next_normal();
            x[i] = rng.next_normal() * 2.0;
        }
        GaussianSpec p(mean, cov);
        REQUIRE_THAT(p.log_density(x),
                     Catch::Matchers::WithinAbs(
                         oracle::log_density_dense(mean, cov, x), 1e-9));
    }
}

TEST_CASE("likelihood ratio identities") {
    auto p = GaussianSpec::standard(2);
    MixtureSpec at_mean({{1.0, Vec::Zero(2)}}, Mat::Identity(2, 2));
    CounterRng rng(11, 0);
    for (int i = 0; i < 20; ++i) {
        Vec x = p.sample(rng);
        REQUIRE_THAT(likelihood_ratio(p, at_mean, x),
                     Catch::Matchers::WithinRel(1.0, 1e-12));
    }
}

TEST_CASE("likelihood ratio 1D shifted form") {
    // p = N(0,1), q = N(gamma,1): L(x) = exp(gamma^2/2 - gamma x).
    const double gamma = 2.5;
    auto p = GaussianSpec::standard(1);
    Vec m(1);
    m << gamma;
    MixtureSpec q({{1.0, m}}, Mat::Identity(1, 1));
    for (double x : {-1.0, 0.0, 1.0, 3.0, 6.0}) {
        Vec xv(1);
        xv << x;
        REQUIRE_THAT(likelihood_ratio(p, q, xv),
                     Catch::Matchers::WithinRel(
                         std::exp(gamma * gamma / 2.0 - gamma * x), 1e-10));
    }
}

TEST_CASE("two-component mixture ratio matches the direct quotient") {
    Vec mean(2);
    mean << 1.0, -0.5;
    Mat cov(2, 2);
    cov << 1.0, 0.3, 0.3, 2.0;
    GaussianSpec p(mean, cov);
    Vec a1(2), a2(2);
    a1 << 2.0, 1.0;
    a2 << -1.0, 0.5;
    MixtureSpec q({{0.3, a1}, {0.7, a2}}, cov);
    CounterRng rng(5, 1);
    for (int i = 0; i < 10; ++i) {
        Vec x = p.sample(rng);
        const double direct =
            std::exp(oracle::log_density_dense(mean, cov, x)) /
            (0.3 * std::exp(oracle::log_density_dense(a1, cov, x)) +
             0.7 * std::exp(oracle::log_density_dense(a2, cov, x)));
        REQUIRE_THAT(likelihood_ratio(p, q, x),
                     Catch::Matchers::WithinRel(direct, 1e-9));
    }
}

TEST_CASE("likelihood ratio stays positive and finite far out") {
    auto p = GaussianSpec::standard(2);
    Vec shift(2);
    shift << 30.0, 0.0;
    MixtureSpec q({{1.0, shift}}, Mat::Identity(2, 2));
    Vec far(2);
    far << 60.0, 0.0;  // deep underflow territory in linear space
    const double lr = likelihood_ratio(p, q, far);
    REQUIRE(lr > 0.0);
    REQUIRE(std::isfinite(lr));
    Vec other(2);
    other << -40.0, 17.0;
    const double lr2 = likelihood_ratio(p, q, other);
    REQUIRE(lr2 > 0.0);
    REQUIRE(std::isfinite(lr2));
}

TEST_CASE("IS over a mixture is unbiased for a half-space probability") {
    // P(x1 >= 1.2) under N(0, I2) against erfc, 1e5 draws, 3 SE tolerance.
    auto p = GaussianSpec::standard(2);
    Vec a(2);
    a << 1.2, 0.0;
    Vec b(2);
    b << 2.0, 1.0;
    MixtureSpec q({{0.5, a}, {0.5, b}}, Mat::Identity(2, 2));
    CounterRng rng(21, 0);
    const long n = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (long i = 0; i < n; ++i) {
        Vec x = q.sample(rng);
        const double z = x[0] >= 1.2 ? likelihood_ratio(p, q, x) : 0.0;
        sum += z;
        sum_sq += z * z;
    }
    const double mean = sum / n;
    const double se =
        std::sqrt((sum_sq / n - mean * mean) / static_cast<double>(n));
    REQUIRE(std::abs(mean - oracle::phi_bar(1.2)) < 3.0 * se);
}

TEST_CASE("importance-weighted integral of 1 equals 1") {
    auto p = GaussianSpec::standard(2);
    Vec shift(2);
    shift << 1.0, -1.0;
    MixtureSpec q({{1.0, shift}}, Mat::Identity(2, 2));
    CounterRng rng(31, 0);
    const long n = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (long i = 0; i < n; ++i) {
        Vec x = q.sample(rng);
        const double z = likelihood_ratio(p, q, x);
        sum += z;
        sum_sq += z * z;
    }
    const double mean = sum / n;
    const double se =
        std::sqrt((sum_sq / n - mean * mean) / static_cast<double>(n));
    REQUIRE(std::abs(mean - 1.0) < 3.0 * se);
}

TEST_CASE("mixture weight validation") {
    REQUIRE_THROWS_AS(
        MixtureSpec({{0.5, Vec::Zero(1)}, {0.6, Vec::Ones(1)}},
                    Mat::Identity(1, 1)),
        PraeError);
    REQUIRE_THROWS_AS(MixtureSpec({}, Mat::Identity(1, 1)), PraeError);
}
