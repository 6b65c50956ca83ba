#include <doctest.h>

#include <cmath>

#include "gasketlab/rng.hpp"

using gasketlab::Rng;

TEST_CASE("streams are deterministic and independent of draw schedule") {
    Rng a(42, "tag", 7, 1);
    Rng b(42, "tag", 7, 1);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng c(42, "tag", 8, 1);
    Rng d(42, "other", 7, 1);
    CHECK(Rng(42, "tag", 7, 1).next_u64() != c.next_u64());
    CHECK(Rng(42, "tag", 7, 1).next_u64() != d.next_u64());
}

TEST_CASE("uniform moments") {
    Rng r(1, "unif");
    const int N = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < N; ++i) {
        double u = r.uniform();
        CHECK(u > 0.0);
        CHECK(u < 1.0);
        s += u;
        s2 += u * u;
    }
    double mean = s / N, var = s2 / N - mean * mean;
    CHECK(std::abs(mean - 0.5) < 0.005);
    CHECK(std::abs(var - 1.0 / 12.0) < 0.005);
}

TEST_CASE("poisson mean and variance") {
    Rng r(3, "pois");
    const int N = 20000;
    const double lam = 7.5;
    double s = 0, s2 = 0;
    for (int i = 0; i < N; ++i) {
        double k = static_cast<double>(r.poisson(lam));
        s += k;
        s2 += k * k;
    }
    double mean = s / N, var = s2 / N - mean * mean;
    CHECK(std::abs(mean - lam) < 3.0 * std::sqrt(lam / N) + 0.05);
    CHECK(std::abs(var - lam) < 0.3);
}

TEST_CASE("below is roughly uniform over residues") {
    Rng r(9, "below");
    const int K = 13, N = 130000;
    int counts[K] = {0};
    for (int i = 0; i < N; ++i) ++counts[r.below(K)];
    double chi2 = 0, exp = double(N) / K;
    for (int k = 0; k < K; ++k) chi2 += (counts[k] - exp) * (counts[k] - exp) / exp;
    CHECK(chi2 < 40.0);  // 12 dof, generous
}
