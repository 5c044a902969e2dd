#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sbfm/rng.hpp"

using namespace sbfm;

TEST_CASE("substreams are deterministic and label-separated") {
    RandomStream a(42, "alpha"), a2(42, "alpha"), b(42, "beta");
    bool any_diff = false;
    for (int i = 0; i < 64; ++i) {
        const std::uint64_t x = a.next_u64();
        CHECK(x == a2.next_u64());
        any_diff |= x != b.next_u64();
    }
    CHECK(any_diff);
}

TEST_CASE("uniform stays in [0,1) and uniform_below in range") {
    RandomStream rng(1, "uniform");
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(rng.uniform_below(7) < 7);
    }
}

TEST_CASE("normal moments are sane") {
    RandomStream rng(5, "normal");
    const int n = 200000;
    double mean = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        mean += z;
        sq += z * z;
    }
    mean /= n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("truncated normal stays in [-2,2]") {
    RandomStream rng(9, "trunc");
    for (int i = 0; i < 5000; ++i) {
        const double z = rng.truncated_normal();
        CHECK(z >= -2.0);
        CHECK(z <= 2.0);
    }
}
