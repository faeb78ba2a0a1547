#include <catch2/catch_amalgamated.hpp>

#include <pufem/pufem.hpp>

#include "oracles.hpp"

#include <cmath>

using namespace pufem;

namespace {
const PartitionFunction& table() {
    static PartitionFunction pf;
    return pf;
}
} // namespace

TEST_CASE("phihat anchor values") {
    const auto& pf = table();
    CHECK(pf.value(0.0) == Catch::Approx(1.0).margin(1e-12));
    CHECK(pf.value(1.0) == 0.0);
    CHECK(pf.value(-1.0) == 0.0);
    CHECK(pf.value(0.5) == Catch::Approx(0.5).margin(1e-12));
    CHECK(pf.value(-0.5) == Catch::Approx(0.5).margin(1e-12));
    CHECK(pf.value(1.7) == 0.0);
}

TEST_CASE("phihat matches the convolution oracle") {
    const auto& pf = table();
    oracles::Rng rng(5);
    for (int i = 0; i < 60; ++i) {
        double t = rng.uniform(-1.1, 1.1);
        CHECK(pf.value(t) == Catch::Approx(oracles::phihat(t)).margin(1e-12));
    }
}

TEST_CASE("integer shifts of phihat form a partition of unity on the line") {
    const auto& pf = table();
    oracles::Rng rng(17);
    for (int i = 0; i < 500; ++i) {
        double x = rng.uniform(-4.0, 4.0);
        double sum = 0;
        for (int j = -5; j <= 5; ++j) sum += pf.value(x - j);
        CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("phihat(x) + phihat(1-x) = 1 on the overlap") {
    const auto& pf = table();
    oracles::Rng rng(23);
    for (int i = 0; i < 200; ++i) {
        double x = rng.uniform(0.0, 1.0);
        CHECK(pf.value(x) + pf.value(1.0 - x) == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("phihat is even") {
    const auto& pf = table();
    for (double x : {0.1, 0.33, 0.72, 0.95})
        CHECK(pf.value(x) == Catch::Approx(pf.value(-x)).margin(1e-14));
}

TEST_CASE("derivative anchor values") {
    const auto& pf = table();
    CHECK(pf.derivative(0.0, 1) == Catch::Approx(0.0).margin(1e-13));
    // d/dx phihat = zeta(x+1/2) - zeta(x-1/2)
    CHECK(pf.derivative(0.5, 1) ==
          Catch::Approx(-oracles::kZetaAtZero).epsilon(1e-13));
    CHECK(pf.derivative(1.0, 1) == 0.0);
}

TEST_CASE("derivatives match the boundary-difference oracle") {
    const auto& pf = table();
    oracles::Rng rng(29);
    for (int q = 1; q <= 2; ++q)
        for (int i = 0; i < 50; ++i) {
            double t = rng.uniform(-1.1, 1.1);
            CHECK(pf.derivative(t, q) ==
                  Catch::Approx(oracles::phihat_deriv(t, q)).margin(1e-12));
        }
}

TEST_CASE("derivatives are consistent with finite differences") {
    // each order against a first central difference of the order below it
    const auto& pf = table();
    oracles::Rng rng(31);
    for (int k = 1; k <= 3; ++k)
        for (int i = 0; i < 100; ++i) {
            double x = rng.uniform(-1.0, 1.0);
            double fd = oracles::central_diff(
                [&](double t) { return pf.derivative(t, k - 1); }, x, 1, 3e-6);
            double got = pf.derivative(x, k);
            double scale = std::max({1.0, std::abs(got), std::abs(fd)});
            CHECK(std::abs(got - fd) < 1e-6 * scale);
        }
}

TEST_CASE("squared and cross integrals match the frozen constants") {
    const auto& pf = table();
    double sq = adaptive_integrate([&](double t) { return pf.value(t) * pf.value(t); },
                                   0.0, 1.0);
    double cross = adaptive_integrate(
        [&](double t) { return pf.value(t) * pf.value(t - 1.0); }, 0.0, 1.0);
    CHECK(sq == Catch::Approx(oracles::kPhiHatSquare).margin(1e-12));
    CHECK(cross == Catch::Approx(oracles::kPhiHatCross).margin(1e-12));
    // the two add up to the squared-sum identity int_0^1 phihat (phihat + shift) = int phihat
    CHECK(sq + cross == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("coarse tables refuse to build") {
    CHECK_THROWS(PartitionFunction(PartitionConfig{8, 1e-14, 6}));
}

TEST_CASE("max_derivative bounds the derivative query order") {
    PartitionFunction pf(PartitionConfig{256, 1e-12, 2});
    CHECK_NOTHROW(pf.derivative(0.3, 2));
    CHECK_THROWS(pf.derivative(0.3, 3));
}
