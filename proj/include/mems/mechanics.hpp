#ifndef MEMS_MECHANICS_HPP
#define MEMS_MECHANICS_HPP

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "mems/boundary_data.hpp"
#include "mems/errors.hpp"
#include "mems/field_solver.hpp"
#include "mems/geometry.hpp"

namespace mems {

struct EnergyBreakdown {
    double e_mech = 0.0;
    double e_elec = 0.0;
    double e_total = 0.0;
    FieldModel model = FieldModel::Reduced;
};

struct ForceProfile {
    std::vector<double> x;
    std::vector<double> g;
    std::vector<bool> coincidence_branch;
};

namespace beam {

/// DOF layout: 2*i is the value at node i, 2*i+1 the slope.
inline Eigen::Index dof_count(const Deflection& u) {
    return static_cast<Eigen::Index>(2 * u.node_count());
}

inline Eigen::VectorXd dofs_of(const Deflection& u) {
    Eigen::VectorXd p(dof_count(u));
    for (std::size_t i = 0; i < u.node_count(); ++i) {
        p(static_cast<Eigen::Index>(2 * i)) = u.values()[i];
        p(static_cast<Eigen::Index>(2 * i + 1)) = u.slopes()[i];
    }
    return p;
}

inline Deflection from_dofs(const Deflection& like, const Eigen::VectorXd& p) {
    std::vector<double> values(like.node_count()), slopes(like.node_count());
    for (std::size_t i = 0; i < like.node_count(); ++i) {
        values[i] = p(static_cast<Eigen::Index>(2 * i));
        slopes[i] = p(static_cast<Eigen::Index>(2 * i + 1));
    }
    return Deflection(like.nodes(), std::move(values), std::move(slopes));
}

/// Hermite basis on [0,h], DOF order (v0, s0, v1, s1); derivative level
/// 0, 1 or 2 at local coordinate t in [0,1].
inline std::array<double, 4> basis(double t, double h, int level) {
    switch (level) {
        case 0:
            return {1 - 3 * t * t + 2 * t * t * t, h * (t - 2 * t * t + t * t * t),
                    3 * t * t - 2 * t * t * t, h * (-t * t + t * t * t)};
        case 1:
            return {(-6 * t + 6 * t * t) / h, 1 - 4 * t + 3 * t * t,
                    (6 * t - 6 * t * t) / h, -2 * t + 3 * t * t};
        default:
            return {(-6 + 12 * t) / (h * h), (-4 + 6 * t) / h, (6 - 12 * t) / (h * h),
                    (-2 + 6 * t) / h};
    }
}

/// Gram matrices int phi^(k) phi^(k) for k = 0, 1, 2 on the full DOF set.
inline std::array<Eigen::MatrixXd, 3> gram_matrices(const Deflection& u, int qorder = 4) {
    const Eigen::Index n = dof_count(u);
    std::array<Eigen::MatrixXd, 3> G{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n),
                                     Eigen::MatrixXd::Zero(n, n)};
    const GaussRule g1 = gauss_legendre(std::max(qorder, 4));
    const auto& nodes = u.nodes();
    for (std::size_t e = 0; e + 1 < nodes.size(); ++e) {
        const double h = nodes[e + 1] - nodes[e];
        const std::array<Eigen::Index, 4> gd = {
            static_cast<Eigen::Index>(2 * e), static_cast<Eigen::Index>(2 * e + 1),
            static_cast<Eigen::Index>(2 * e + 2), static_cast<Eigen::Index>(2 * e + 3)};
        for (std::size_t q = 0; q < g1.points.size(); ++q) {
            const double t = 0.5 * (g1.points[q] + 1.0);
            const double w = 0.5 * g1.weights[q] * h;
            for (int k = 0; k < 3; ++k) {
                const auto b = basis(t, h, k);
                for (int a = 0; a < 4; ++a)
                    for (int c = 0; c < 4; ++c) G[static_cast<std::size_t>(k)](gd[static_cast<std::size_t>(a)], gd[static_cast<std::size_t>(c)]) += w * b[static_cast<std::size_t>(a)] * b[static_cast<std::size_t>(c)];
            }
        }
    }
    return G;
}

/// Load vector int f(x) phi_k(x) dx on the full DOF set.
inline Eigen::VectorXd load_vector(const Deflection& u, const std::function<double(double)>& f,
                                   int qorder = 4) {
    const Eigen::Index n = dof_count(u);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    const GaussRule g1 = gauss_legendre(std::max(qorder, 4));
    const auto& nodes = u.nodes();
    for (std::size_t e = 0; e + 1 < nodes.size(); ++e) {
        const double h = nodes[e + 1] - nodes[e];
        for (std::size_t q = 0; q < g1.points.size(); ++q) {
            const double t = 0.5 * (g1.points[q] + 1.0);
            const double x = nodes[e] + t * h;
            const double w = 0.5 * g1.weights[q] * h * f(x);
            const auto bas = basis(t, h, 0);
            b(static_cast<Eigen::Index>(2 * e)) += w * bas[0];
            b(static_cast<Eigen::Index>(2 * e + 1)) += w * bas[1];
            b(static_cast<Eigen::Index>(2 * e + 2)) += w * bas[2];
            b(static_cast<Eigen::Index>(2 * e + 3)) += w * bas[3];
        }
    }
    return b;
}

}  // namespace beam

/// E_m(u) = (beta/2)||u''||^2 + (tau/2 + (a/4)||u'||^2) ||u'||^2
inline double mechanical_energy(const Deflection& u, const DeviceConfig& config) {
    const auto [l2, h1, h2] = sobolev_norms(u, config.quadrature_order);
    (void)l2;
    return 0.5 * config.beta * h2 + (0.5 * config.tau + 0.25 * config.a * h1) * h1;
}

/// Dual vector of E_m on the Hermite basis:
///   v -> beta int u'' v'' + (tau + a ||u'||^2) int u' v'
inline Eigen::VectorXd mechanical_gradient(const Deflection& u, const DeviceConfig& config) {
    const auto G = beam::gram_matrices(u, config.quadrature_order);
    const Eigen::VectorXd p = beam::dofs_of(u);
    const double h1 = p.dot(G[1] * p);
    return config.beta * (G[2] * p) + (config.tau + config.a * h1) * (G[1] * p);
}

/// Pointwise electrostatic force from the solved delta-model field.
/// layer_trace, when given, supplies sigma_delta dz(psi_1) on the
/// coincidence set (only reachable in unit tests; PDE solves need a gap).
inline double electrostatic_force_at(double x, const Deflection& u,
                                     const PotentialField& field, const BoundaryData& bd,
                                     double H, double coincidence_tol = 0.0,
                                     const std::function<double(double)>* layer_trace = nullptr,
                                     bool* used_coincidence = nullptr) {
    const auto uv = u.eval(x);
    const double w = uv[0];
    const double hz = bd.h.fz(x, w, w);
    const double hw = bd.h.fw(x, w, w);
    const double hx = bd.h.fx(x, w, w);
    double frak_g;
    const bool on_coincidence = (w + H) <= coincidence_tol;
    if (used_coincidence) *used_coincidence = on_coincidence;
    if (on_coincidence) {
        if (!layer_trace)
            throw TraceUnavailable("electrostatic_force: coincidence branch needs a layer trace");
        const double t = (*layer_trace)(x);
        frak_g = 0.5 * (t - hz - hw) * (t - hz - hw);
    } else {
        const double dzpsi = trace_dz_psi_plate(field, bd, x, H);
        const double d = dzpsi - hz - hw;
        frak_g = 0.5 * (1.0 + uv[1] * uv[1]) * d * d;
    }
    return frak_g - 0.5 * (hx * hx + (hz + hw) * (hz + hw));
}

inline ForceProfile electrostatic_force(const Deflection& u, const PotentialField& field,
                                        const BoundaryData& bd, const PermittivityProfile&,
                                        double delta, double H,
                                        const std::function<double(double)>* layer_trace = nullptr,
                                        double coincidence_tol = 0.0) {
    if (field.model != FieldModel::Delta)
        throw ModelMismatch("electrostatic_force: needs a delta-model field");
    (void)delta;
    ForceProfile fp;
    fp.x = u.nodes();
    fp.g.resize(fp.x.size());
    fp.coincidence_branch.resize(fp.x.size());
    for (std::size_t i = 0; i < fp.x.size(); ++i) {
        bool used = false;
        fp.g[i] = electrostatic_force_at(fp.x[i], u, field, bd, H, coincidence_tol, layer_trace,
                                         &used);
        fp.coincidence_branch[i] = used;
    }
    return fp;
}

/// Solves the appropriate field problem and assembles (E_m, E_e, E_total).
inline EnergyBreakdown total_energy(const Deflection& u, FieldModel model, double delta,
                                    const BoundaryData& bd, const PermittivityProfile& sigma,
                                    const DeviceConfig& config) {
    EnergyBreakdown e;
    e.model = model;
    e.e_mech = mechanical_energy(u, config);
    if (model == FieldModel::Delta) {
        const PotentialField f = solve_transmission(u, delta, bd, sigma, config);
        e.e_elec = energy_transmission(f, bd, sigma, config);
    } else {
        const PotentialField f = solve_robin(u, bd, sigma, config);
        e.e_elec = energy_reduced(f, bd, sigma, config);
    }
    e.e_total = e.e_mech + e.e_elec;
    return e;
}

/// Total-energy dual vector on the Hermite basis.
/// Delta model: mechanical gradient plus the pairing of g_delta(u) with the
/// basis. Reduced model: central differences of E_{e,0} per basis direction
/// (the paper states no reduced-model force formula).
inline Eigen::VectorXd total_gradient(const Deflection& u, FieldModel model, double delta,
                                      const BoundaryData& bd, const PermittivityProfile& sigma,
                                      const DeviceConfig& config, double fd_eps = 1e-5) {
    Eigen::VectorXd grad = mechanical_gradient(u, config);
    if (model == FieldModel::Delta) {
        const PotentialField f = solve_transmission(u, delta, bd, sigma, config);
        auto g_at = [&](double x) {
            return electrostatic_force_at(x, u, f, bd, config.H);
        };
        grad += beam::load_vector(u, g_at, config.quadrature_order);
    } else {
        const Eigen::VectorXd p = beam::dofs_of(u);
        const Eigen::Index n = p.size();
        auto e_elec = [&](const Eigen::VectorXd& q) {
            const Deflection v = beam::from_dofs(u, q);
            const PotentialField f = solve_robin(v, bd, sigma, config);
            return energy_reduced(f, bd, sigma, config);
        };
        // boundary DOFs are clamped; skip them
        for (Eigen::Index k = 2; k < n - 2; ++k) {
            Eigen::VectorXd q = p;
            q(k) = p(k) + fd_eps;
            const double ep = e_elec(q);
            q(k) = p(k) - fd_eps;
            const double em = e_elec(q);
            grad(k) += (ep - em) / (2.0 * fd_eps);
        }
    }
    return grad;
}

}  // namespace mems

#endif
