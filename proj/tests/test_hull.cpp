#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "prae/hull.hpp"

using namespace prae;

namespace {
Vec v2(double a, double b) {
    Vec x(2);
    x << a, b;
    return x;
}
}  // namespace

TEST_CASE("build reduces to the maximal antichain") {
    auto hull = MonotoneHull::build({v2(1, 2), v2(2, 1), v2(1, 1)},
                                    HullOrientation::Lower, 2);
    REQUIRE(hull.extreme().size() == 2);  // (1,1) dominated
    REQUIRE(hull.contains(v2(1, 1)));
    REQUIRE(hull.contains(v2(1, 2)));
    REQUIRE_FALSE(hull.contains(v2(1.5, 1.5)));
}

TEST_CASE("empty hull contains nothing") {
    auto hull = MonotoneHull::build({}, HullOrientation::Lower, 2);
    REQUIRE(hull.empty());
    REQUIRE_FALSE(hull.contains(v2(0, 0)));
    REQUIRE_FALSE(hull.contains(v2(1, 1)));
}

TEST_CASE("negative coordinates rejected") {
    REQUIRE_THROWS_AS(
        MonotoneHull::build({v2(-0.1, 1)}, HullOrientation::Lower, 2),
        NegativeCoordinate);
    auto hull = MonotoneHull::build({v2(1, 1)}, HullOrientation::Lower, 2);
    REQUIRE_THROWS_AS(hull.insert(v2(1, -1)), NegativeCoordinate);
}

TEST_CASE("contains matches the rectangle definition") {
    auto hull = MonotoneHull::build({v2(2, 3)}, HullOrientation::Lower, 2);
    REQUIRE(hull.contains(v2(1, 1)));
    REQUIRE_FALSE(hull.contains(v2(3, 1)));
    REQUIRE(hull.contains(Vec::Zero(2)));  // origin in any nonempty Lower hull
}

TEST_CASE("membership agrees with brute force on random instances") {
    CounterRng rng(17, 0);
    for (int rep = 0; rep < 20; ++rep) {
        const int d = 3;
        std::vector<Vec> pts;
        for (int i = 0; i < 200; ++i) {
            Vec p(d);
            for (int j = 0; j < d; ++j) p[j] = rng.next_uniform();
            pts.push_back(p);
        }
        const bool lower = rep % 2 == 0;
        auto hull = MonotoneHull::build(
            pts, lower ? HullOrientation::Lower : HullOrientation::Upper, d);
        for (int probe = 0; probe < 1000; ++probe) {
            Vec x(d);
            for (int j = 0; j < d; ++j) x[j] = rng.next_uniform() * 1.2;
            REQUIRE(hull.contains(x) ==
                    oracle::hull_contains_brute(pts, x, lower));
        }
    }
}

TEST_CASE("extreme-point reduction never changes membership") {
    CounterRng rng(23, 0);
    const int d = 4;
    std::vector<Vec> pts;
    for (int i = 0; i < 300; ++i) {
        Vec p(d);
        for (int j = 0; j < d; ++j) p[j] = rng.next_uniform() * 2.0;
        pts.push_back(p);
    }
    auto hull = MonotoneHull::build(pts, HullOrientation::Lower, d);
    REQUIRE(hull.extreme().size() < pts.size());
    for (int probe = 0; probe < 10000; ++probe) {
        Vec x(d);
        for (int j = 0; j < d; ++j) x[j] = rng.next_uniform() * 2.4;
        REQUIRE(hull.contains(x) == oracle::hull_contains_brute(pts, x, true));
    }
}

TEST_CASE("insert keeps the antichain and membership semantics") {
    auto hull = MonotoneHull::build({v2(2, 2)}, HullOrientation::Lower, 2);
    auto same = hull.insert(v2(1, 1));  // dominated
    REQUIRE(same.extreme().size() == 1);
    auto bigger = hull.insert(v2(3, 3));  // evicts (2,2)
    REQUIRE(bigger.extreme().size() == 1);
    REQUIRE(bigger.contains(v2(2.5, 2.5)));
    // Persistent contract: the original snapshot is untouched.
    REQUIRE_FALSE(hull.contains(v2(2.5, 2.5)));
}

TEST_CASE("incremental inserts equal batch build") {
    CounterRng rng(29, 0);
    const int d = 3;
    std::vector<Vec> pts;
    for (int i = 0; i < 120; ++i) {
        Vec p(d);
        for (int j = 0; j < d; ++j) p[j] = rng.next_uniform();
        pts.push_back(p);
    }
    auto batch = MonotoneHull::build(pts, HullOrientation::Upper, d);
    MonotoneHull inc(HullOrientation::Upper, d);
    for (const auto& p : pts) inc = inc.insert(p);
    REQUIRE(inc.extreme().size() == batch.extreme().size());
    for (int probe = 0; probe < 2000; ++probe) {
        Vec x(d);
        for (int j = 0; j < d; ++j) x[j] = rng.next_uniform() * 1.3;
        REQUIRE(inc.contains(x) == batch.contains(x));
    }
}

TEST_CASE("membership is monotone") {
    CounterRng rng(31, 0);
    std::vector<Vec> pts;
    for (int i = 0; i < 60; ++i) {
        Vec p(2);
        p << rng.next_uniform() * 3, rng.next_uniform() * 3;
        pts.push_back(p);
    }
    auto lower = MonotoneHull::build(pts, HullOrientation::Lower, 2);
    auto upper = MonotoneHull::build(pts, HullOrientation::Upper, 2);
    for (int probe = 0; probe < 500; ++probe) {
        Vec x(2);
        x << rng.next_uniform() * 3.5, rng.next_uniform() * 3.5;
        if (lower.contains(x)) {
            Vec y = x * rng.next_uniform();  // y <= x
            REQUIRE(lower.contains(y));
        }
        if (upper.contains(x)) {
            Vec y = x * (1.0 + rng.next_uniform());  // y >= x
            REQUIRE(upper.contains(y));
        }
    }
}

TEST_CASE("outer approximation of a synthetic monotone set has no false negatives") {
    // S = {x : sum x_i >= c}; hull of sampled non-rare points must avoid S
    // entirely, i.e. the hull complement keeps every rare grid point.
    CounterRng rng(37, 0);
    for (int d : {2, 3}) {
        const double c = 0.6 * d;
        std::vector<Vec> t0;
        for (int i = 0; i < 500; ++i) {
            Vec x(d);
            for (int j = 0; j < d; ++j) x[j] = rng.next_uniform();
            if (x.sum() < c) t0.push_back(x);
        }
        auto hull = MonotoneHull::build(t0, HullOrientation::Lower, d);
        const int grid = d == 2 ? 60 : 20;
        std::vector<int> idx(static_cast<std::size_t>(d), 0);
        while (true) {
            Vec x(d);
            for (int j = 0; j < d; ++j)
                x[j] = static_cast<double>(idx[static_cast<std::size_t>(j)]) /
                       (grid - 1);
            if (x.sum() >= c) REQUIRE_FALSE(hull.contains(x));
            int j = 0;
            for (; j < d; ++j) {
                if (++idx[static_cast<std::size_t>(j)] < grid) break;
                idx[static_cast<std::size_t>(j)] = 0;
            }
            if (j == d) break;
        }
    }
}

TEST_CASE("orientation map behaviors") {
    auto id = OrientationMap::identity(3);
    Vec x(3);
    x << 1.0, -2.0, 0.5;
    REQUIRE(id.apply(x) == x);

    Vec shift(2);
    shift << 4.0, 6.0;
    auto flip = OrientationMap::full_flip(shift);
    REQUIRE(flip.apply(v2(1, 2)) == v2(3, 4));

    CounterRng rng(41, 0);
    OrientationMap mixed{{true, false, true}, Vec::Zero(3)};
    mixed.shift << 2.0, -1.0, 0.5;
    for (int i = 0; i < 100; ++i) {
        Vec r(3);
        for (int j = 0; j < 3; ++j) r[j] = rng.next_normal() * 3.0;
        // Involution on flipped coordinates.
        Vec twice = mixed.apply(mixed.apply(r));
        REQUIRE_THAT(twice[0], Catch::Matchers::WithinAbs(r[0], 1e-12));
        REQUIRE_THAT(twice[2], Catch::Matchers::WithinAbs(r[2], 1e-12));
        // Round trip through the inverse everywhere.
        REQUIRE((mixed.invert(mixed.apply(r)) - r).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("hull JSON round trip") {
    auto hull = MonotoneHull::build({v2(1, 2), v2(2, 1)},
                                    HullOrientation::Lower, 2);
    auto back = MonotoneHull::from_json(hull.to_json());
    REQUIRE(back.orientation() == hull.orientation());
    REQUIRE(back.extreme().size() == hull.extreme().size());
    CounterRng rng(43, 0);
    for (int i = 0; i < 200; ++i) {
        Vec x(2);
        x << rng.next_uniform() * 3, rng.next_uniform() * 3;
        REQUIRE(back.contains(x) == hull.contains(x));
    }
}
