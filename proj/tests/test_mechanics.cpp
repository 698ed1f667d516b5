#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

#include "mems/mechanics.hpp"

using namespace mems;

namespace {

DeviceConfig unit_config() {
    DeviceConfig c;
    c.L = 1.0;
    c.H = 1.0;
    c.beta = 1.0;
    c.tau = 1.0;
    c.a = 1.0;
    c.nx = 16;
    c.nz_free = 8;
    c.nz_layer = 4;
    return c;
}

Deflection quartic_bump(int n, const DeviceConfig& c, double amp = 1.0) {
    std::vector<DeflectionSample> s;
    for (int i = 0; i <= n; ++i) {
        const double x = -c.L + 2.0 * c.L * i / n;
        const double q = 1.0 - (x / c.L) * (x / c.L);
        s.push_back({x, amp * q * q, -amp * 4.0 * x / (c.L * c.L) * q});
    }
    return build_deflection_from_samples(s, c);
}

Deflection random_clamped(std::mt19937_64& rng, const DeviceConfig& c, double amp = 0.2,
                          int n = 16) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::vector<DeflectionSample> s;
    for (int i = 0; i <= n; ++i) {
        const double x = -c.L + 2.0 * c.L * i / n;
        if (i == 0 || i == n)
            s.push_back({x, 0.0, 0.0});
        else
            s.push_back({x, amp * d(rng), amp * d(rng)});
    }
    return build_deflection_from_samples(s, c);
}

}  // namespace

TEST_CASE("mechanical_energy oracles") {
    DeviceConfig c = unit_config();

    SECTION("zero profile") {
        CHECK(mechanical_energy(zero_deflection(c, 8), c) == 0.0);
    }

    SECTION("quartic bump, beta = tau = a = 1") {
        // 128/10 + (1/2 + 64/105)(256/105) = 15.50512...
        const Deflection u = quartic_bump(128, c);
        const double expected = 128.0 / 10.0 + (0.5 + 64.0 / 105.0) * (256.0 / 105.0);
        CHECK(mechanical_energy(u, c) == Catch::Approx(expected).epsilon(1e-6));
        CHECK(expected == Catch::Approx(15.5051247).margin(1e-7));
    }

    SECTION("quartic bump, a = 0") {
        c.a = 0.0;
        const Deflection u = quartic_bump(128, c);
        CHECK(mechanical_energy(u, c) == Catch::Approx(14.0190476).margin(1e-5));
    }
}

TEST_CASE("mechanical_gradient") {
    DeviceConfig c = unit_config();

    SECTION("zero profile gives the zero functional") {
        const Eigen::VectorXd g = mechanical_gradient(zero_deflection(c, 8), c);
        CHECK(g.cwiseAbs().maxCoeff() == 0.0);
    }

    SECTION("quadratic-form identity for a = 0: <grad, u> = 2 E_m") {
        c.a = 0.0;
        const Deflection u = quartic_bump(32, c);
        const Eigen::VectorXd g = mechanical_gradient(u, c);
        const Eigen::VectorXd p = beam::dofs_of(u);
        CHECK(g.dot(p) == Catch::Approx(2.0 * mechanical_energy(u, c)).epsilon(1e-9));
    }

    SECTION("quartic correction for a > 0: <grad, u> = 2 E_m + (a/2)||u'||^4") {
        const Deflection u = quartic_bump(32, c);
        const auto [l2, h1, h2] = sobolev_norms(u, c.quadrature_order);
        (void)l2;
        (void)h2;
        const Eigen::VectorXd g = mechanical_gradient(u, c);
        const Eigen::VectorXd p = beam::dofs_of(u);
        CHECK(g.dot(p) ==
              Catch::Approx(2.0 * mechanical_energy(u, c) + 0.5 * c.a * h1 * h1).epsilon(1e-9));
    }

    SECTION("matches central differences on random clamped profiles") {
        std::mt19937_64 rng(11);
        const double eps = 1e-5;
        for (int trial = 0; trial < 5; ++trial) {
            const Deflection u = random_clamped(rng, c);
            const Deflection v = random_clamped(rng, c);
            const Eigen::VectorXd g = mechanical_gradient(u, c);
            const Eigen::VectorXd pu = beam::dofs_of(u);
            const Eigen::VectorXd pv = beam::dofs_of(v);
            const double ep = mechanical_energy(beam::from_dofs(u, pu + eps * pv), c);
            const double em = mechanical_energy(beam::from_dofs(u, pu - eps * pv), c);
            const double fd = (ep - em) / (2.0 * eps);
            CHECK(g.dot(pv) == Catch::Approx(fd).margin(1e-6 * (1.0 + std::abs(fd))));
        }
    }
}

TEST_CASE("electrostatic_force") {
    DeviceConfig c = unit_config();
    const PermittivityProfile sigma =
        make_permittivity([](double, double) { return 2.0; }, c.L, c.H);

    SECTION("V = 0 gives the zero force") {
        const BoundaryData bd = default_grounded_family(0.0, sigma, c.H);
        const Deflection u = zero_deflection(c, c.nx);
        const PotentialField f = solve_transmission(u, 0.1, bd, sigma, c);
        const ForceProfile fp = electrostatic_force(u, f, bd, sigma, 0.1, c.H);
        for (double g : fp.g) CHECK(g == Catch::Approx(0.0).margin(1e-12));
    }

    SECTION("series-capacitor profile: g = -2/9 at every node") {
        // frak_g = 0 (the trace matches the lift slope), correction = (cs)^2/2
        const BoundaryData bd = two_layer_family(1.0, 2.0, c.H);
        const Deflection u = zero_deflection(c, c.nx);
        const PotentialField f = solve_transmission(u, 0.1, bd, sigma, c);
        const ForceProfile fp = electrostatic_force(u, f, bd, sigma, 0.1, c.H);
        for (double g : fp.g) CHECK(g == Catch::Approx(-2.0 / 9.0).margin(1e-8));
    }

    SECTION("grounded family: the correction cancels, g >= 0") {
        const BoundaryData bd = default_grounded_family(1.0, sigma, c.H);
        const Deflection u = quartic_bump(24, c, -0.3);
        const PotentialField f = solve_transmission(u, 0.1, bd, sigma, c);
        const ForceProfile fp = electrostatic_force(u, f, bd, sigma, 0.1, c.H);
        for (std::size_t i = 0; i < fp.g.size(); ++i) {
            CHECK(fp.g[i] >= -1e-12);
            CHECK_FALSE(fp.coincidence_branch[i]);
        }
    }

    SECTION("force bound g >= -K^2 with the certified K") {
        BoundaryData bd = two_layer_family(1.0, 2.0, c.H);
        const auto [m, K] = certify_growth_constants(bd, {-0.5, 1.0}, c.L, c.H);
        (void)m;
        const Deflection u = quartic_bump(24, c, -0.3);
        const PotentialField f = solve_transmission(u, 0.1, bd, sigma, c);
        const ForceProfile fp = electrostatic_force(u, f, bd, sigma, 0.1, c.H);
        for (double g : fp.g) CHECK(g >= -K * K - 1e-9);
    }

    SECTION("coincidence branch needs a caller-supplied trace") {
        const BoundaryData bd = default_grounded_family(1.0, sigma, c.H);
        const Deflection u = quartic_bump(24, c, -0.3);
        const PotentialField f = solve_transmission(u, 0.1, bd, sigma, c);
        // a coincidence tolerance large enough to capture the dip at x = 0
        CHECK_THROWS_AS(
            electrostatic_force_at(0.0, u, f, bd, c.H, 0.8),
            TraceUnavailable);
        const std::function<double(double)> trace = [](double) { return 0.5; };
        bool used = false;
        const double g = electrostatic_force_at(0.0, u, f, bd, c.H, 0.8, &trace, &used);
        CHECK(used);
        CHECK(std::isfinite(g));
    }

    SECTION("reduced-model field is rejected") {
        const BoundaryData bd = default_grounded_family(1.0, sigma, c.H);
        const Deflection u = zero_deflection(c, c.nx);
        const PotentialField f = solve_robin(u, bd, sigma, c);
        CHECK_THROWS_AS(electrostatic_force(u, f, bd, sigma, 0.1, c.H), ModelMismatch);
    }
}

TEST_CASE("total_energy") {
    DeviceConfig c = unit_config();
    const PermittivityProfile sigma =
        make_permittivity([](double, double) { return 2.0; }, c.L, c.H);

    SECTION("u = 0, V = 0 gives (0, 0, 0)") {
        const BoundaryData bd = default_grounded_family(0.0, sigma, c.H);
        const Deflection u = zero_deflection(c, c.nx);
        for (FieldModel m : {FieldModel::Delta, FieldModel::Reduced}) {
            const EnergyBreakdown e = total_energy(u, m, 0.1, bd, sigma, c);
            CHECK(e.e_mech == 0.0);
            CHECK(e.e_elec == Catch::Approx(0.0).margin(1e-14));
            CHECK(e.e_total == Catch::Approx(0.0).margin(1e-14));
        }
    }

    SECTION("series-capacitor profile: e_total = -2/3 for both models") {
        const BoundaryData bd = two_layer_family(1.0, 2.0, c.H);
        const Deflection u = zero_deflection(c, c.nx);
        for (FieldModel m : {FieldModel::Delta, FieldModel::Reduced}) {
            const EnergyBreakdown e = total_energy(u, m, 0.1, bd, sigma, c);
            CHECK(e.e_mech == 0.0);
            CHECK(e.e_total == Catch::Approx(-2.0 / 3.0).margin(1e-8));
        }
    }

    SECTION("e_total = e_mech + e_elec and e_elec <= 0") {
        const BoundaryData bd = default_grounded_family(1.0, sigma, c.H);
        const Deflection u = quartic_bump(24, c, -0.2);
        const EnergyBreakdown e = total_energy(u, FieldModel::Delta, 0.1, bd, sigma, c);
        CHECK(e.e_total == Catch::Approx(e.e_mech + e.e_elec).epsilon(1e-14));
        CHECK(e.e_elec <= 0.0);
        // variational lower bound: E_e >= -(1/2) lift energy
        CHECK(e.e_elec >= -0.5 * lift_energy(u, true, 0.1, bd, sigma, c) - 1e-12);
    }
}

TEST_CASE("total_gradient") {
    DeviceConfig c = unit_config();
    const PermittivityProfile sigma =
        make_permittivity([](double, double) { return 2.0; }, c.L, c.H);

    SECTION("V = 0 equals the mechanical gradient") {
        const BoundaryData bd = default_grounded_family(0.0, sigma, c.H);
        const Deflection u = quartic_bump(24, c, -0.2);
        const Eigen::VectorXd gt = total_gradient(u, FieldModel::Delta, 0.1, bd, sigma, c);
        const Eigen::VectorXd gm = mechanical_gradient(u, c);
        CHECK((gt - gm).cwiseAbs().maxCoeff() <= 1e-12);
    }
}
