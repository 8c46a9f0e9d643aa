// Deterministic stream derivation and the hand-rolled distributions.

#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "cadiff/error.hpp"
#include "cadiff/rng.hpp"

using namespace cadiff;

TEST_SUITE("rng") {

TEST_CASE("same seed reproduces the exact sequence") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(42), d(42);
    for (int i = 0; i < 100; ++i) CHECK(c.normal() == d.normal());
}

TEST_CASE("different seeds diverge") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += (a.next_u64() == b.next_u64());
    CHECK(same == 0);
}

TEST_CASE("children derive from the seed, not the engine state") {
    Rng fresh(7);
    Rng drained(7);
    for (int i = 0; i < 1000; ++i) drained.next_u64();

    Rng c1 = fresh.child("stream");
    Rng c2 = drained.child("stream");
    for (int i = 0; i < 20; ++i) CHECK(c1.next_u64() == c2.next_u64());
}

TEST_CASE("child labels and indices give distinct streams") {
    Rng root(9);
    std::set<uint64_t> seeds;
    seeds.insert(root.derive_seed("a"));
    seeds.insert(root.derive_seed("b"));
    seeds.insert(root.derive_seed("a", 1));
    seeds.insert(root.derive_seed("a", 2));
    seeds.insert(root.derive_seed("b", 1));
    CHECK(seeds.size() == 5);
    CHECK(root.derive_seed("a", 1) == root.child("a", 1).seed());
}

TEST_CASE("uniform01 stays in [0,1) and has the right mean") {
    Rng r(1234);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform01();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    // SE of the mean is 1/sqrt(12n) ~ 0.0009; 0.01 is ~11 sigma.
    CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("below covers the range without bias") {
    Rng r(55);
    std::vector<int> counts(3, 0);
    const int n = 30000;
    for (int i = 0; i < n; ++i) {
        const uint64_t x = r.below(3);
        REQUIRE(x < 3);
        counts[static_cast<int>(x)]++;
    }
    for (int k = 0; k < 3; ++k) {
        CHECK(std::abs(counts[k] / static_cast<double>(n) - 1.0 / 3.0) < 0.02);
    }
    CHECK_THROWS_AS(r.below(0), ContractError);
}

TEST_CASE("int_in hits both inclusive endpoints") {
    Rng r(8);
    bool lo_seen = false, hi_seen = false;
    for (int i = 0; i < 2000; ++i) {
        const int64_t x = r.int_in(-2, 5);
        REQUIRE(x >= -2);
        REQUIRE(x <= 5);
        lo_seen |= (x == -2);
        hi_seen |= (x == 5);
    }
    CHECK(lo_seen);
    CHECK(hi_seen);
    CHECK(r.int_in(3, 3) == 3);
    CHECK_THROWS_AS(r.int_in(4, 3), ContractError);
}

TEST_CASE("normal moments match a standard Gaussian") {
    Rng r(99);
    const int n = 100000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        REQUIRE(std::isfinite(x));
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);

    CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("the cached Box-Muller spare is part of the stream state") {
    Rng a(31);
    (void)a.normal();
    Rng b = a;
    for (int i = 0; i < 5; ++i) CHECK(a.normal() == b.normal());
}

}  // TEST_SUITE
