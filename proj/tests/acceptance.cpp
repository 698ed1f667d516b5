// Acceptance gate: one pass/fail line per criterion, nonzero exit on failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mems/harness.hpp"

using namespace mems;

namespace {

int g_failures = 0;

void report(int id, bool pass, const std::string& detail) {
    std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
    if (!pass) ++g_failures;
}

DeviceConfig manufactured_config() {
    DeviceConfig c;
    c.L = 1.0;
    c.H = 1.0;
    c.nx = 64;
    c.nz_free = 64;
    c.nz_layer = 4;
    return c;
}

Deflection bump(const DeviceConfig& c, double amp, int n = 24) {
    std::vector<DeflectionSample> s;
    for (int i = 0; i <= n; ++i) {
        const double x = -c.L + 2.0 * c.L * i / n;
        const double q = 1.0 - (x / c.L) * (x / c.L);
        s.push_back({x, amp * q * q, -amp * 4.0 * x / (c.L * c.L) * q});
    }
    return build_deflection_from_samples(s, c);
}

Deflection random_noncontact(std::mt19937_64& rng, const DeviceConfig& c) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    const int n = 16;
    std::vector<DeflectionSample> s;
    for (int i = 0; i <= n; ++i) {
        const double x = -c.L + 2.0 * c.L * i / n;
        if (i == 0 || i == n)
            s.push_back({x, 0.0, 0.0});
        else
            s.push_back({x, 0.2 * d(rng), 0.2 * d(rng)});
    }
    return build_deflection_from_samples(s, c);
}

bool strictly_decreasing(const std::vector<double>& v) {
    for (std::size_t k = 1; k < v.size(); ++k)
        if (!(v[k] < v[k - 1])) return false;
    return true;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_1_2() {
    const DeviceConfig c = manufactured_config();
    const PermittivityProfile sigma =
        make_permittivity([](double, double) { return 2.0; }, c.L, c.H);
    const BoundaryData bd = two_layer_family(1.0, 2.0, c.H);
    const Deflection u = zero_deflection(c, 16);

    bool ok1 = true;
    std::string d1;
    double worst_e = 0.0, worst_nodal = 0.0, worst_ms = 0.0;
    for (double delta : {0.2, 0.1, 0.05}) {
        const auto t0 = std::chrono::steady_clock::now();
        const PotentialField f = solve_transmission(u, delta, bd, sigma, c);
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        const double e = energy_transmission(f, bd, sigma, c);
        const double nodal =
            std::max(f.theta_free.cwiseAbs().maxCoeff(), f.theta_layer.cwiseAbs().maxCoeff());
        worst_e = std::max(worst_e, std::abs(e + 2.0 / 3.0));
        worst_nodal = std::max(worst_nodal, nodal);
        worst_ms = std::max(worst_ms, ms);
        if (std::abs(e + 2.0 / 3.0) > 1e-8 || nodal > 1e-10 || ms > 1000.0) ok1 = false;
    }
    {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "manufactured transmission |E+2/3|=%.2e nodal=%.2e max %.0f ms", worst_e,
                      worst_nodal, worst_ms);
        report(1, ok1, buf);
    }

    const PotentialField fr = solve_robin(u, bd, sigma, c);
    const double e0 = energy_reduced(fr, bd, sigma, c);
    double worst_trace = 0.0;
    for (int i = 0; i <= 20; ++i) {
        const double x = -0.99 + 1.98 * i / 20.0;
        worst_trace = std::max(worst_trace, std::abs(robin_trace(fr, bd, x, c.H) - 1.0 / 3.0));
    }
    const bool ok2 = std::abs(e0 + 2.0 / 3.0) <= 1e-8 && worst_trace <= 1e-8;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "manufactured Robin |E+2/3|=%.2e trace err=%.2e",
                  std::abs(e0 + 2.0 / 3.0), worst_trace);
    report(2, ok2, buf);
}

void criterion_3() {
    DeviceConfig c;
    c.L = 1.0;
    c.H = 1.0;
    c.nx = 64;
    c.nz_free = 32;
    c.nz_layer = 16;
    const PermittivityProfile sigma =
        make_permittivity([](double, double) { return 2.0; }, c.L, c.H);
    const BoundaryData bd = default_grounded_family(1.0, sigma, c.H);

    bool ok = true;
    std::string detail;
    for (const auto& [tag, u] :
         std::vector<std::pair<std::string, Deflection>>{{"zero", zero_deflection(c, 16)},
                                                         {"bump", bump(c, -0.5)}}) {
        const PotentialField fr = solve_robin(u, bd, sigma, c);
        const double e0 = energy_reduced(fr, bd, sigma, c);
        std::vector<double> gaps;
        for (double delta : {0.2, 0.1, 0.05, 0.025}) {
            const PotentialField f = solve_transmission(u, delta, bd, sigma, c);
            gaps.push_back(std::abs(energy_transmission(f, bd, sigma, c) - e0));
        }
        const bool mono = strictly_decreasing(gaps) && gaps.back() <= 0.5 * gaps.front();
        if (!mono) ok = false;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s: %.3e -> %.3e%s ", tag.c_str(), gaps.front(),
                      gaps.back(), mono ? "" : " (NOT monotone/halved)");
        detail += buf;
    }
    report(3, ok, "reinforced limit " + detail);
}

void criterion_4() {
    DeviceConfig c;
    c.L = 1.0;
    c.H = 1.0;
    c.nx = 32;
    c.nz_free = 16;
    c.nz_layer = 4;
    const PermittivityProfile sigma =
        make_permittivity([](double, double) { return 2.0; }, c.L, c.H);
    const BoundaryData bd = default_grounded_family(1.0, sigma, c.H);
    const Deflection u = bump(c, -0.5);
    const PotentialField fr = solve_robin(u, bd, sigma, c);
    const double g0 = functional_value_of(fr, bd, sigma, c);
    std::vector<double> gaps;
    for (double delta : {0.2, 0.1, 0.05, 0.025})
        gaps.push_back(std::abs(build_recovery_sequence(fr, u, delta, bd, sigma, c) - g0));
    const bool ok = strictly_decreasing(gaps);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "recovery sequence |G_d - G| = %.3e, %.3e, %.3e, %.3e",
                  gaps[0], gaps[1], gaps[2], gaps[3]);
    report(4, ok, buf);
}

void criterion_5() {
    DeviceConfig c;
    c.L = 1.0;
    c.H = 1.0;
    c.nx = 64;
    c.nz_free = 32;
    c.nz_layer = 16;
    const PermittivityProfile sigma =
        make_permittivity([](double, double) { return 2.0; }, c.L, c.H);
    const BoundaryData bd = default_grounded_family(1.0, sigma, c.H);
    const BoundaryData bd0 = default_grounded_family(0.0, sigma, c.H);

    std::mt19937_64 rng(314);
    double worst_delta = 0.0, worst_mech = 0.0;
    for (int s = 0; s < 3; ++s) {
        const Deflection u = random_noncontact(rng, c);
        worst_delta = std::max(
            worst_delta,
            fd_gradient_check(u, FieldModel::Delta, 0.1, bd, sigma, c, 5, 1e-4, 100 + s));
        worst_mech = std::max(
            worst_mech,
            fd_gradient_check(u, FieldModel::Delta, 0.1, bd0, sigma, c, 5, 1e-5, 200 + s));
    }
    const bool ok = worst_delta <= 1e-3 && worst_mech <= 1e-6;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "gradient oracle: delta-model %.2e (<=1e-3), mech %.2e (<=1e-6)",
                  worst_delta, worst_mech);
    report(5, ok, buf);
}

HarnessConfig sweep_config() {
    nlohmann::json j = {
        {"device",
         {{"L", 1.0},
          {"H", 1.0},
          {"beta", 1.0},
          {"tau", 0.1},
          {"a", 1.0},
          {"delta_list", {0.2, 0.1, 0.05}},
          {"nx", 48},
          {"nz_free", 16},
          {"nz_layer", 4}}},
        {"voltage", 1.0},
        {"sigma", {{"kind", "constant"}, {"value", 2.0}}},
        {"family", "default"},
        {"optimizer", {{"max_iters", 120}, {"grad_tol", 1e-7}}},
        {"seed", 1}};
    return parse_config(j);
}

void criterion_6() {
    const HarnessConfig cfg = sweep_config();
    const PermittivityProfile sigma = cfg.sigma.make(cfg.device.L, cfg.device.H);
    const BoundaryData bd = make_boundary_data(cfg, sigma);
    const Deflection z = zero_deflection(cfg.device, cfg.device.nx);

    const auto t0 = std::chrono::steady_clock::now();
    const SweepReport rep = run_delta_sweep(cfg);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<double> eh2, ee;
    bool energies_ok = rep.reduced.e_total <= 0.0;
    for (const auto& r : rep.rows) {
        eh2.push_back(r.err_u_h2);
        ee.push_back(r.err_e);
        const double e_rest = total_energy(z, FieldModel::Delta, r.delta, bd, sigma,
                                           cfg.device).e_total;
        if (!(r.e_total <= e_rest + 1e-12 && e_rest <= 0.0)) energies_ok = false;
    }
    const bool ok = strictly_decreasing(eh2) && strictly_decreasing(ee) && energies_ok &&
                    secs <= 600.0;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "sweep: err_u_h2 %.2e/%.2e/%.2e err_e %.2e/%.2e/%.2e energies_ok=%d %.0f s",
                  eh2[0], eh2[1], eh2[2], ee[0], ee[1], ee[2], energies_ok ? 1 : 0, secs);
    report(6, ok, buf);
}

void criterion_7() {
    nlohmann::json j = {
        {"device",
         {{"L", 1.0},
          {"H", 1.0},
          {"beta", 1.0},
          {"tau", 0.1},
          {"a", 1.0},
          {"delta_list", {0.2, 0.1, 0.05}},
          {"nx", 16},
          {"nz_free", 8},
          {"nz_layer", 4}}},
        {"voltage", 1.0},
        {"sigma", {{"kind", "constant"}, {"value", 2.0}}},
        {"family", "default"},
        {"optimizer", {{"max_iters", 40}, {"grad_tol", 1e-6}}},
        {"seed", 1}};
    const AuditReport rep = verify_inequalities(parse_config(j), 50, 2026);
    int failed = 0;
    std::string first_fail;
    for (const auto& r : rep.rows)
        if (!r.pass) {
            ++failed;
            if (first_fail.empty()) first_fail = r.name + "/" + r.sample;
        }
    char buf[200];
    std::snprintf(buf, sizeof(buf), "inequality audit: %zu rows, %d failed%s%s", rep.rows.size(),
                  failed, first_fail.empty() ? "" : " first=",
                  first_fail.c_str());
    report(7, rep.all_passed, buf);
}

void criterion_8() {
    nlohmann::json j = {
        {"device",
         {{"L", 1.0},
          {"H", 1.0},
          {"beta", 1.0},
          {"tau", 0.1},
          {"a", 1.0},
          {"delta_list", {0.2, 0.1}},
          {"nx", 12},
          {"nz_free", 6},
          {"nz_layer", 4}}},
        {"voltage", 1.0},
        {"sigma", {{"kind", "constant"}, {"value", 2.0}}},
        {"family", "default"},
        {"optimizer", {{"max_iters", 10}, {"grad_tol", 1e-6}}},
        {"seed", 9}};
    const HarnessConfig cfg = parse_config(j);
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "mems_acceptance_det";
    fs::remove_all(base);
    const fs::path d1 = base / "run1", d2 = base / "run2";

    export_report(run_delta_sweep(cfg), d1.string());
    export_report(run_delta_sweep(cfg), d2.string());
    export_report(verify_inequalities(cfg, 10, 5), d1.string());
    export_report(verify_inequalities(cfg, 10, 5), d2.string());

    const bool sweep_same = slurp(d1 / "sweep.csv") == slurp(d2 / "sweep.csv");
    const bool audit_same = slurp(d1 / "audit.csv") == slurp(d2 / "audit.csv");
    fs::remove_all(base);
    report(8, sweep_same && audit_same,
           std::string("determinism: sweep.csv ") + (sweep_same ? "identical" : "DIFFERS") +
               ", audit.csv " + (audit_same ? "identical" : "DIFFERS"));
}

}  // namespace

int main() {
    try {
        criterion_1_2();
        criterion_3();
        criterion_4();
        criterion_5();
        criterion_6();
        criterion_7();
        criterion_8();
    } catch (const std::exception& e) {
        std::printf("FAIL acceptance: unhandled exception: %s\n", e.what());
        return 1;
    }
    return g_failures == 0 ? 0 : 1;
}
