#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "mems/boundary_data.hpp"

using namespace mems;

namespace {
PermittivityProfile constant_sigma(double s, double L, double H) {
    return make_permittivity([s](double, double) { return s; }, L, H);
}
}  // namespace

TEST_CASE("default_grounded_family") {
    const double H = 1.0, L = 1.0;
    const PermittivityProfile sigma = constant_sigma(2.0, L, H);

    SECTION("V = 0 gives identically zero evaluators") {
        const BoundaryData bd = default_grounded_family(0.0, sigma, H);
        for (double x : {-0.5, 0.3})
            for (double w : {-0.4, 0.8}) {
                CHECK(bd.h.f(x, 0.2, w) == 0.0);
                CHECK(bd.h_b.f(x, -1.5, w) == 0.0);
                CHECK(bd.frak_h(x, w, H) == 0.0);
            }
    }

    SECTION("flux matching: sigma dz h_b = dz h at the interface") {
        const BoundaryData bd = default_grounded_family(1.0, sigma, H);
        // V = 1, H = 1, sigma = 2, w = 0: dz h = 1, sigma dz h_b = 1
        CHECK(bd.h.fz(0.0, -H, 0.0) == Catch::Approx(1.0));
        CHECK(2.0 * bd.h_b.fz(0.0, -H, 0.0) == Catch::Approx(1.0));
    }

    SECTION("frak_h vanishes for every deflection value") {
        const BoundaryData bd = default_grounded_family(1.0, sigma, H);
        for (double w : {-0.9, -0.2, 0.0, 1.7}) {
            CHECK(bd.frak_h(0.3, w, H) == Catch::Approx(0.0).margin(1e-15));
        }
    }

    SECTION("plate trace: h(x, w, w) = V") {
        const BoundaryData bd = default_grounded_family(2.5, sigma, H);
        for (double w : {-0.5, 0.0, 1.0}) CHECK(bd.h.f(0.1, w, w) == Catch::Approx(2.5));
    }
}

TEST_CASE("validate_compatibility") {
    const double H = 1.0, L = 1.0;
    const PermittivityProfile sigma = constant_sigma(2.0, L, H);

    SECTION("default family passes with zero violation up to roundoff") {
        const BoundaryData bd = default_grounded_family(1.0, sigma, H);
        const ValidationReport rep = validate_compatibility(bd, sigma, L, H);
        CHECK(rep.passed);
        CHECK(rep.max_continuity_violation <= 1e-12);
        CHECK(rep.max_flux_violation <= 1e-12);
        CHECK(rep.max_bottom_w_violation <= 1e-12);
        CHECK(rep.max_partial_mismatch <= 1e-7);  // central-difference cross-check
    }

    SECTION("x-dependent permittivity still passes") {
        const PermittivityProfile sx = make_permittivity(
            [](double x, double z) { return 2.0 + 0.5 * std::cos(x) - 0.1 * (z + 1.0); }, L, H);
        const BoundaryData bd = default_grounded_family(1.0, sx, H);
        const ValidationReport rep = validate_compatibility(bd, sx, L, H);
        CHECK(rep.passed);
    }

    SECTION("perturbed h_b fails the bottom-plate condition") {
        BoundaryData bd = default_grounded_family(1.0, sigma, H);
        const Field3 orig = bd.h_b;
        // additive +0.1 w keeps a nonzero w-dependence at the bottom z = -H-1
        bd.h_b.f = [orig](double x, double z, double w) {
            return orig.f(x, z, w) + 0.1 * w;
        };
        bd.h_b.fw = [orig](double x, double z, double w) {
            return orig.fw(x, z, w) + 0.1;
        };
        const ValidationReport rep = validate_compatibility(bd, sigma, 1.0, H);
        CHECK_FALSE(rep.passed);
        CHECK(rep.max_bottom_w_violation > 1e-3);
    }

    SECTION("mismatched sigma fails flux matching") {
        const BoundaryData bd = default_grounded_family(1.0, sigma, H);
        const PermittivityProfile doubled = constant_sigma(4.0, L, H);
        const ValidationReport rep = validate_compatibility(bd, doubled, L, H);
        CHECK_FALSE(rep.passed);
        CHECK(rep.max_flux_violation > 1e-3);
    }
}

TEST_CASE("certify_growth_constants") {
    const double H = 1.0, L = 1.0;
    const PermittivityProfile sigma = constant_sigma(2.0, L, H);

    SECTION("V = 0 gives (0, 0)") {
        BoundaryData bd = default_grounded_family(0.0, sigma, H);
        const auto [m, K] = certify_growth_constants(bd, {-0.5, 1.0}, L, H);
        CHECK(m == 0.0);
        CHECK(K == 0.0);
    }

    SECTION("default family: K = 0 by algebraic cancellation, m finite") {
        BoundaryData bd = default_grounded_family(1.0, sigma, H);
        const auto [m, K] = certify_growth_constants(bd, {-0.5, 1.0}, L, H);
        CHECK(K <= 1e-14);
        CHECK(m > 0.0);
        // grid maximization oracle at a denser resolution agrees
        BoundaryData bd2 = default_grounded_family(1.0, sigma, H);
        const auto [m2, K2] = certify_growth_constants(bd2, {-0.5, 1.0}, L, H, 64);
        CHECK(m2 == Catch::Approx(m).epsilon(0.05));
        CHECK(K2 <= 1e-14);
    }

    SECTION("w_range touching -H is rejected") {
        BoundaryData bd = default_grounded_family(1.0, sigma, H);
        CHECK_THROWS_AS(certify_growth_constants(bd, {-H, 1.0}, L, H), DegenerateRange);
    }
}

TEST_CASE("eval_h_delta") {
    const double H = 1.0, L = 1.0;
    const PermittivityProfile sigma = constant_sigma(2.0, L, H);
    const BoundaryData bd = default_grounded_family(1.0, sigma, H);
    const double delta = 0.25;

    SECTION("continuity at the interface") {
        for (double x : {-0.7, 0.2})
            for (double w : {-0.3, 0.5}) {
                const double above = eval_h_delta(bd, delta, H, x, -H + 1e-13, w);
                const double below = eval_h_delta(bd, delta, H, x, -H - 1e-13, w);
                CHECK(above == Catch::Approx(below).margin(1e-11));
            }
    }

    SECTION("layer endpoint maps to the bottom plate value frak_h") {
        for (double w : {-0.3, 0.5}) {
            CHECK(eval_h_delta(bd, delta, H, 0.1, -H - delta, w) ==
                  Catch::Approx(bd.frak_h(0.1, w, H)).margin(1e-14));
        }
    }

    SECTION("layer midpoint is the affine rescaling of h_b") {
        const double w = 0.4;
        CHECK(eval_h_delta(bd, delta, H, 0.1, -H - delta / 2, w) ==
              Catch::Approx(bd.h_b.f(0.1, -H - 0.5, w)).margin(1e-14));
    }

    SECTION("below the layer throws") {
        CHECK_THROWS_AS(eval_h_delta(bd, delta, H, 0.0, -H - delta - 0.1, 0.0), OutOfDomain);
    }
}

TEST_CASE("sigma_delta scaling") {
    const double H = 1.0, L = 1.0;
    const PermittivityProfile sigma = constant_sigma(2.0, L, H);
    CHECK(sigma_delta(sigma, 0.1, H, 0.0, -0.5) == 1.0);
    CHECK(sigma_delta(sigma, 0.1, H, 0.0, -1.05) == Catch::Approx(0.2));
    // linear homogeneity in delta inside the layer
    CHECK(sigma_delta(sigma, 0.05, H, 0.0, -1.02) ==
          Catch::Approx(0.5 * sigma_delta(sigma, 0.1, H, 0.0, -1.02)));
}

TEST_CASE("sigma_max cache") {
    const double H = 1.0, L = 1.0;
    const PermittivityProfile sigma = constant_sigma(2.0, L, H);
    CHECK(sigma.sigma_max == Catch::Approx(3.0));
    CHECK_THROWS_AS(make_permittivity([](double, double) { return -1.0; }, L, H), ConfigError);
}
