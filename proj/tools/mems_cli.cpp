#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mems/harness.hpp"

namespace {

// deflection CSV: header "x,value,slope" then one sample per line
mems::Deflection load_deflection(const std::string& path, const mems::DeviceConfig& dev) {
    std::ifstream in(path);
    if (!in) throw mems::ConfigError("solve: cannot open deflection file " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("x,value,slope", 0) != 0)
        throw mems::ConfigError("solve: deflection file must start with header x,value,slope");
    std::vector<mems::DeflectionSample> samples;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        mems::DeflectionSample s{};
        char c1 = 0, c2 = 0;
        if (!(ss >> s.x >> c1 >> s.value >> c2 >> s.slope) || c1 != ',' || c2 != ',')
            throw mems::ConfigError("solve: bad deflection row: " + line);
        samples.push_back(s);
    }
    return mems::build_deflection_from_samples(samples, dev);
}

int run_sweep(const std::string& config_path, const std::string& out_dir, int jobs) {
    const mems::HarnessConfig cfg = mems::load_config(config_path);
    const mems::SweepReport rep = mems::run_delta_sweep(cfg, jobs);
    mems::export_report(rep, out_dir);
    mems::log_msg(mems::LogLevel::Info, "sweep: wrote " + out_dir);
    return 0;
}

int run_audit(const std::string& config_path, int samples, std::uint64_t seed,
              const std::string& out_dir) {
    const mems::HarnessConfig cfg = mems::load_config(config_path);
    const mems::AuditReport rep = mems::verify_inequalities(cfg, samples, seed);
    mems::export_report(rep, out_dir);
    mems::log_msg(mems::LogLevel::Info,
                  std::string("audit: ") + (rep.all_passed ? "all passed" : "FAILURES"));
    if (!rep.all_passed) return 3;
    return 0;
}

int run_solve(const std::string& config_path, const std::string& model,
              const std::string& deflection_path) {
    const mems::HarnessConfig cfg = mems::load_config(config_path);
    const mems::PermittivityProfile sigma = cfg.sigma.make(cfg.device.L, cfg.device.H);
    const mems::BoundaryData bd = mems::make_boundary_data(cfg, sigma);
    const mems::Deflection u = load_deflection(deflection_path, cfg.device);

    mems::PotentialField field;
    if (model == "reduced") {
        field = mems::solve_robin(u, bd, sigma, cfg.device);
    } else if (model.rfind("delta:", 0) == 0) {
        const double delta = std::stod(model.substr(6));
        if (!(delta > 0.0 && delta < 1.0))
            throw mems::ConfigError("solve: delta must lie in (0,1)");
        field = mems::solve_transmission(u, delta, bd, sigma, cfg.device);
    } else {
        throw mems::ConfigError("solve: model must be 'reduced' or 'delta:<d>'");
    }

    // potential on the comparison grid D x (-H, M), M = max(u) gap top
    double M = cfg.device.H;
    for (double v : u.values()) M = std::max(M, v + cfg.device.H);
    const int n = 64;
    std::printf("x,z,psi\n");
    for (int i = 0; i <= n; ++i) {
        const double x = -cfg.device.L + 2.0 * cfg.device.L * i / n;
        const double top = u.eval(x)[0];
        for (int j = 0; j <= n; ++j) {
            const double z = -cfg.device.H + M * j / n;
            double psi = 0.0;
            if (z <= top)
                psi = mems::eval_psi_free(field, bd, x, std::min(z, top));
            std::printf("%s,%s,%s\n", mems::detail::fmt_g17(x).c_str(),
                        mems::detail::fmt_g17(z).c_str(), mems::detail::fmt_g17(psi).c_str());
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MEMS beam/dielectric-layer variational simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", model, deflection_path;
    int jobs = 1, samples = 50;
    std::uint64_t seed = 1;

    auto* sweep = app.add_subcommand("sweep", "delta-sweep minimization experiment");
    sweep->add_option("--config", config_path, "JSON config path")->required();
    sweep->add_option("--out", out_dir, "output directory")->required();
    sweep->add_option("--jobs", jobs, "parallel minimizations");

    auto* audit = app.add_subcommand("audit", "inequality audit suite");
    audit->add_option("--config", config_path, "JSON config path")->required();
    audit->add_option("--samples", samples, "number of random profiles");
    audit->add_option("--seed", seed, "RNG seed");
    audit->add_option("--out", out_dir, "output directory")->required();

    auto* solve = app.add_subcommand("solve", "one-shot field solve, CSV to stdout");
    solve->add_option("--config", config_path, "JSON config path")->required();
    solve->add_option("--model", model, "reduced or delta:<d>")->required();
    solve->add_option("--deflection", deflection_path, "deflection CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (sweep->parsed()) return run_sweep(config_path, out_dir, jobs);
        if (audit->parsed()) return run_audit(config_path, samples, seed, out_dir);
        return run_solve(config_path, model, deflection_path);
    } catch (const mems::ConfigError& e) {
        mems::log_msg(mems::LogLevel::Error, e.what());
        return 2;
    } catch (const mems::IoError& e) {
        mems::log_msg(mems::LogLevel::Error, e.what());
        return 2;
    } catch (const mems::Error& e) {
        mems::log_msg(mems::LogLevel::Error, e.what());
        return 3;
    } catch (const std::exception& e) {
        mems::log_msg(mems::LogLevel::Error, e.what());
        return 3;
    }
}
