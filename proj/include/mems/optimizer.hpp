#ifndef MEMS_OPTIMIZER_HPP
#define MEMS_OPTIMIZER_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mems/errors.hpp"
#include "mems/mechanics.hpp"

namespace mems {

struct MinimizeOptions {
    int max_iters = 200;
    double grad_tol = 1e-6;  // scaled by 1 + |E(init)|
    double step0 = 1e-2;
    double backtrack_factor = 0.5;
    double armijo_c = 1e-4;
    std::uint64_t seed = 0;
    double fd_eps = 1e-5;

    void validate() const {
        if (max_iters < 1) throw ConfigError("MinimizeOptions: max_iters must be >= 1");
        if (!(grad_tol > 0.0)) throw ConfigError("MinimizeOptions: grad_tol must be positive");
        if (!(step0 > 0.0)) throw ConfigError("MinimizeOptions: step0 must be positive");
        if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0))
            throw ConfigError("MinimizeOptions: backtrack_factor must be in (0,1)");
        if (!(armijo_c > 0.0 && armijo_c < 1.0))
            throw ConfigError("MinimizeOptions: armijo_c must be in (0,1)");
    }
};

struct MinimizeResult {
    Deflection u_star;
    EnergyBreakdown energy;
    int iterations = 0;
    double projected_grad_norm = 0.0;
    bool touched = false;
    bool converged = false;
};

/// Nodal obstacle projection: values clamped to >= -H, slopes zeroed at
/// newly active nodes, boundary DOFs untouched. Idempotent.
inline Deflection project_obstacle(const Deflection& u, double H, double floor_offset = 0.0) {
    const double floor = -H + floor_offset;
    std::vector<double> values = u.values();
    std::vector<double> slopes = u.slopes();
    for (std::size_t i = 1; i + 1 < values.size(); ++i) {
        if (values[i] < floor) {
            values[i] = floor;
            slopes[i] = 0.0;
        }
    }
    return Deflection(u.nodes(), std::move(values), std::move(slopes));
}

namespace detail {

/// H^2-metric Gram on the free (interior) DOFs: mass + first + second
/// derivative Gram matrices.
struct DescentMetric {
    Eigen::MatrixXd M;
    Eigen::LDLT<Eigen::MatrixXd> fact;
    std::vector<Eigen::Index> free_dofs;

    explicit DescentMetric(const Deflection& u, int qorder) {
        const auto G = beam::gram_matrices(u, qorder);
        const Eigen::Index n = beam::dof_count(u);
        for (Eigen::Index k = 2; k < n - 2; ++k) free_dofs.push_back(k);
        const Eigen::Index nf = static_cast<Eigen::Index>(free_dofs.size());
        M.resize(nf, nf);
        for (Eigen::Index a = 0; a < nf; ++a)
            for (Eigen::Index b = 0; b < nf; ++b)
                M(a, b) = G[0](free_dofs[static_cast<std::size_t>(a)], free_dofs[static_cast<std::size_t>(b)]) +
                          G[1](free_dofs[static_cast<std::size_t>(a)], free_dofs[static_cast<std::size_t>(b)]) +
                          G[2](free_dofs[static_cast<std::size_t>(a)], free_dofs[static_cast<std::size_t>(b)]);
        fact.compute(M);
    }

    Eigen::VectorXd riesz(const Eigen::VectorXd& grad_full) const {
        Eigen::VectorXd g(free_dofs.size());
        for (std::size_t a = 0; a < free_dofs.size(); ++a) g(static_cast<Eigen::Index>(a)) = grad_full(free_dofs[a]);
        return fact.solve(g);
    }

    double norm(const Eigen::VectorXd& d) const { return std::sqrt(d.dot(M * d)); }
};

}  // namespace detail

/// Projected gradient descent with Armijo backtracking on the total energy.
/// Iterates are kept at gap >= eps_gap*H (the gap floor) so every field
/// solve stays well-posed; touching the floor is reported, not hidden.
inline MinimizeResult minimize_total(FieldModel model, double delta, const DeviceConfig& config,
                                     const BoundaryData& bd, const PermittivityProfile& sigma,
                                     const Deflection& init, const MinimizeOptions& opts) {
    opts.validate();
    const double floor_offset = config.eps_gap * config.H;
    auto energy_of = [&](const Deflection& v) {
        return total_energy(v, model, delta, bd, sigma, config);
    };

    MinimizeResult res;
    Deflection u = project_obstacle(init, config.H, floor_offset);
    detail::DescentMetric metric(u, config.quadrature_order);
    EnergyBreakdown e = energy_of(u);
    const double tol = opts.grad_tol * (1.0 + std::abs(e.e_total));

    Eigen::VectorXd p = beam::dofs_of(u);
    const double floor = -config.H + floor_offset;
    int iter = 0;
    double pg_norm = 0.0;
    for (; iter < opts.max_iters; ++iter) {
        const Eigen::VectorXd grad = total_gradient(u, model, delta, bd, sigma, config, opts.fd_eps);
        Eigen::VectorXd d = metric.riesz(grad);

        // projected gradient: zero the components that push an active node
        // further into the obstacle
        Eigen::VectorXd d_proj = d;
        for (std::size_t a = 0; a < metric.free_dofs.size(); ++a) {
            const Eigen::Index k = metric.free_dofs[a];
            if (k % 2 == 0 && p(k) <= floor + 1e-14 && d(static_cast<Eigen::Index>(a)) > 0.0)
                d_proj(static_cast<Eigen::Index>(a)) = 0.0;
        }
        pg_norm = metric.norm(d_proj);
        if (pg_norm <= tol) {
            res.converged = true;
            break;
        }

        // Armijo backtracking along the projected-descent arc
        const double slope = d.dot(metric.M * d);
        double step = opts.step0;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            Eigen::VectorXd q = p;
            for (std::size_t a = 0; a < metric.free_dofs.size(); ++a)
                q(metric.free_dofs[a]) -= step * d(static_cast<Eigen::Index>(a));
            Deflection cand = project_obstacle(beam::from_dofs(u, q), config.H, floor_offset);
            EnergyBreakdown ec;
            try {
                ec = energy_of(cand);
            } catch (const TouchdownGeometry&) {
                step *= opts.backtrack_factor;
                continue;
            }
            if (ec.e_total <= e.e_total - opts.armijo_c * step * slope) {
                u = cand;
                p = beam::dofs_of(u);
                e = ec;
                accepted = true;
                break;
            }
            step *= opts.backtrack_factor;
        }
        if (!accepted) {
            // no admissible decrease along this direction; report as converged
            // only if the projected gradient is already small
            res.converged = pg_norm <= 10.0 * tol;
            break;
        }
    }

    res.u_star = u;
    res.energy = e;
    res.iterations = iter;
    res.projected_grad_norm = pg_norm;
    for (std::size_t i = 1; i + 1 < u.values().size(); ++i)
        if (u.values()[i] <= floor + 1e-14) res.touched = true;
    return res;
}

/// Max relative mismatch between the assembled total gradient and central
/// differences of the total energy along random clamped directions.
inline double fd_gradient_check(const Deflection& u, FieldModel model, double delta,
                                const BoundaryData& bd, const PermittivityProfile& sigma,
                                const DeviceConfig& config, int directions, double eps,
                                std::uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    const Eigen::VectorXd grad = total_gradient(u, model, delta, bd, sigma, config);
    const Eigen::VectorXd p = beam::dofs_of(u);
    const Eigen::Index n = p.size();
    double worst = 0.0;
    for (int d = 0; d < directions; ++d) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
        for (Eigen::Index k = 2; k < n - 2; ++k) v(k) = dist(rng);
        v /= v.norm();
        auto energy_at = [&](double t) {
            const Deflection w = beam::from_dofs(u, p + t * v);
            return total_energy(w, model, delta, bd, sigma, config).e_total;
        };
        const double fd = (energy_at(eps) - energy_at(-eps)) / (2.0 * eps);
        const double an = grad.dot(v);
        worst = std::max(worst, std::abs(an - fd) / std::max(1e-12, std::abs(fd)));
    }
    return worst;
}

}  // namespace mems

#endif
