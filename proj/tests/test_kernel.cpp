#include <catch_amalgamated.hpp>

#include "locbayes/kernel.hpp"
#include "oracles.hpp"

using namespace locbayes;

TEST_CASE("uniform kernel gives weight 1 on its support") {
    Kernel k = Kernel::uniform();
    CHECK(k.influence(1.0, 0.5, 0.3) == 1.0);
    CHECK(k.influence(1.0, 0.0, 0.5) == 1.0); // boundary
    CHECK(k.influence(1.0, 0.0, 0.6) == 0.0);
}

TEST_CASE("epanechnikov influence weights") {
    Kernel k = Kernel::epanechnikov();
    CHECK(k.influence(2.0, 1.0, 1.0) == Catch::Approx(1.0));
    // at (xi - x)/h = 1/4 the rescaled kernel is 1 - (2 * 0.25)^2
    CHECK(k.influence(1.0, 0.25, 0.0) == Catch::Approx(0.75));
    CHECK(k.influence(1.0, 0.5, 0.0) == Catch::Approx(0.0).margin(1e-15));
    CHECK(k.influence(1.0, 0.51, 0.0) == 0.0);
    CHECK_THROWS_AS(k.influence(0.0, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("kernel constants") {
    Kernel u = Kernel::uniform();
    CHECK(u.r_k / u.k0 == Catch::Approx(1.0));
    CHECK(u.k2 == Catch::Approx(1.0 / 12.0));

    Kernel e = Kernel::epanechnikov();
    CHECK(e.r_k / e.k0 == Catch::Approx(0.80));
    CHECK(e.k0 == Catch::Approx(1.5));
}

TEST_CASE("kernel constants agree with quadrature") {
    for (Kernel k : {Kernel::uniform(), Kernel::epanechnikov()}) {
        auto f = [&](double z) { return k.density(z); };
        CHECK(oracles::simpson(f, -0.5, 0.5, 4000) == Catch::Approx(1.0).margin(1e-10));
        auto f2 = [&](double z) { return k.density(z) * k.density(z); };
        CHECK(oracles::simpson(f2, -0.5, 0.5, 4000) ==
              Catch::Approx(k.r_k).margin(1e-8));
        auto z2 = [&](double z) { return z * z * k.density(z); };
        CHECK(oracles::simpson(z2, -0.5, 0.5, 4000) == Catch::Approx(k.k2).margin(1e-10));
        auto z4 = [&](double z) { return z * z * z * z * k.density(z); };
        CHECK(oracles::simpson(z4, -0.5, 0.5, 4000) == Catch::Approx(k.k4).margin(1e-10));
        CHECK(k.sigma_k == Catch::Approx(std::sqrt(k.k2)));
    }
}

TEST_CASE("influence is symmetric and nonincreasing in distance") {
    for (Kernel k : {Kernel::uniform(), Kernel::epanechnikov()}) {
        double h = 0.7;
        double prev = 2.0;
        for (int i = 0; i <= 40; ++i) {
            double d = 0.6 * h * i / 40.0;
            double w = k.influence(h, d, 0.0);
            CHECK(w == k.influence(h, 0.0, d));
            CHECK(w <= prev + 1e-15);
            prev = w;
        }
    }
}

TEST_CASE("kernel parse") {
    CHECK(Kernel::parse("uniform").type == KernelType::Uniform);
    CHECK(Kernel::parse("epanechnikov").type == KernelType::Epanechnikov);
    CHECK_THROWS_AS(Kernel::parse("gaussian"), std::invalid_argument);
}
