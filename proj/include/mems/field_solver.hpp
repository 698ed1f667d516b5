#ifndef MEMS_FIELD_SOLVER_HPP
#define MEMS_FIELD_SOLVER_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "mems/boundary_data.hpp"
#include "mems/errors.hpp"
#include "mems/geometry.hpp"
#include "mems/quadrature.hpp"

namespace mems {

enum class FieldModel { Delta, Reduced };

/// A solved electrostatic state. theta_* hold the homogeneous part
/// (theta = psi - lift) as full nodal vectors per region; Dirichlet
/// entries are zero by construction.
struct PotentialField {
    FieldModel model = FieldModel::Reduced;
    double delta = 0.0;
    MeshPair mesh;
    Deflection u;
    Eigen::VectorXd theta_free;
    Eigen::VectorXd theta_layer;  // empty for the reduced model
    double functional_value = 0.0;  // G_delta[theta] or G[theta]
    double residual_rel = 0.0;
};

namespace fem {

/// Bilinear shape functions on [-1,1]^2, vertex order SW, SE, NE, NW.
inline void shape(double xi, double eta, std::array<double, 4>& N,
                  std::array<double, 4>& dNxi, std::array<double, 4>& dNeta) {
    N = {0.25 * (1 - xi) * (1 - eta), 0.25 * (1 + xi) * (1 - eta),
         0.25 * (1 + xi) * (1 + eta), 0.25 * (1 - xi) * (1 + eta)};
    dNxi = {-0.25 * (1 - eta), 0.25 * (1 - eta), 0.25 * (1 + eta), -0.25 * (1 + eta)};
    dNeta = {-0.25 * (1 - xi), -0.25 * (1 + xi), 0.25 * (1 + xi), 0.25 * (1 - xi)};
}

inline std::array<std::size_t, 4> element_nodes(const TensorMesh& m, int i, int j) {
    return {m.node_id(i, j), m.node_id(i + 1, j), m.node_id(i + 1, j + 1), m.node_id(i, j + 1)};
}

inline void element_coords(const TensorMesh& m, int i, int j,
                           std::array<double, 4>& xs, std::array<double, 4>& zs) {
    const std::size_t il = static_cast<std::size_t>(i), ir = il + 1;
    const std::size_t jl = static_cast<std::size_t>(j), ju = jl + 1;
    xs = {m.x[il], m.x[ir], m.x[ir], m.x[il]};
    zs = {m.z[il][jl], m.z[ir][jl], m.z[ir][ju], m.z[il][ju]};
}

/// Per-element stiffness and lift load:
///   K_ab = int c grad N_a . grad N_b,   b_a = -int c (gx,gz) . grad N_a
template <typename Coef, typename LiftGrad>
inline void element_system(const std::array<double, 4>& xs, const std::array<double, 4>& zs,
                           const Coef& c, const LiftGrad& lift_grad, const GaussRule& g1,
                           Eigen::Matrix4d& K, Eigen::Vector4d& b) {
    K.setZero();
    b.setZero();
    std::array<double, 4> N, dNxi, dNeta;
    for (std::size_t qa = 0; qa < g1.points.size(); ++qa) {
        for (std::size_t qb = 0; qb < g1.points.size(); ++qb) {
            const double xi = g1.points[qa], eta = g1.points[qb];
            const double w = g1.weights[qa] * g1.weights[qb];
            shape(xi, eta, N, dNxi, dNeta);
            double x = 0, z = 0, J00 = 0, J01 = 0, J10 = 0, J11 = 0;
            for (int k = 0; k < 4; ++k) {
                x += N[k] * xs[k];
                z += N[k] * zs[k];
                J00 += dNxi[k] * xs[k];
                J01 += dNxi[k] * zs[k];
                J10 += dNeta[k] * xs[k];
                J11 += dNeta[k] * zs[k];
            }
            const double detJ = J00 * J11 - J01 * J10;
            const double inv = 1.0 / detJ;
            std::array<double, 4> gx, gz;
            for (int k = 0; k < 4; ++k) {
                gx[k] = inv * (J11 * dNxi[k] - J01 * dNeta[k]);
                gz[k] = inv * (-J10 * dNxi[k] + J00 * dNeta[k]);
            }
            const double coef = c(x, z) * w * detJ;
            const auto lg = lift_grad(x, z);
            for (int a = 0; a < 4; ++a) {
                b(a) -= coef * (lg.first * gx[a] + lg.second * gz[a]);
                for (int bidx = 0; bidx < 4; ++bidx)
                    K(a, bidx) += coef * (gx[a] * gx[bidx] + gz[a] * gz[bidx]);
            }
        }
    }
}

/// Evaluate a nodal field (value, grad) at a physical point. Elements
/// have vertical left/right edges, so the reference-coordinate inversion
/// is closed-form.
inline std::array<double, 3> eval_nodal(const TensorMesh& m, const Eigen::VectorXd& v,
                                        double x, double z) {
    const double x0 = m.x.front(), x1 = m.x.back();
    const double hx = (x1 - x0) / m.nx;
    int i = static_cast<int>(std::floor((x - x0) / hx));
    i = std::max(0, std::min(m.nx - 1, i));
    const double tx = (x - m.x[static_cast<std::size_t>(i)]) /
                      (m.x[static_cast<std::size_t>(i) + 1] - m.x[static_cast<std::size_t>(i)]);
    // column-interpolated vertical node positions at this x
    auto zcol = [&](int j) {
        const std::size_t jj = static_cast<std::size_t>(j);
        return (1.0 - tx) * m.z[static_cast<std::size_t>(i)][jj] +
               tx * m.z[static_cast<std::size_t>(i) + 1][jj];
    };
    int j = 0;
    {
        int lo = 0, hi = m.nz;
        while (hi - lo > 1) {
            const int mid = (lo + hi) / 2;
            if (zcol(mid) <= z)
                lo = mid;
            else
                hi = mid;
        }
        j = std::min(lo, m.nz - 1);
    }
    std::array<double, 4> xs, zs;
    element_coords(m, i, j, xs, zs);
    const auto ids = element_nodes(m, i, j);
    const double xi = 2.0 * tx - 1.0;
    const double zb = zcol(j), zt = zcol(j + 1);
    double tz = (z - zb) / (zt - zb);
    tz = std::max(0.0, std::min(1.0, tz));
    const double eta = 2.0 * tz - 1.0;
    std::array<double, 4> N, dNxi, dNeta;
    shape(xi, eta, N, dNxi, dNeta);
    double J00 = 0, J01 = 0, J10 = 0, J11 = 0, val = 0;
    for (int k = 0; k < 4; ++k) {
        J00 += dNxi[k] * xs[k];
        J01 += dNxi[k] * zs[k];
        J10 += dNeta[k] * xs[k];
        J11 += dNeta[k] * zs[k];
        val += N[k] * v(static_cast<Eigen::Index>(ids[static_cast<std::size_t>(k)]));
    }
    const double detJ = J00 * J11 - J01 * J10;
    const double inv = 1.0 / detJ;
    double gxv = 0, gzv = 0;
    for (int k = 0; k < 4; ++k) {
        const double gx = inv * (J11 * dNxi[k] - J01 * dNeta[k]);
        const double gz = inv * (-J10 * dNxi[k] + J00 * dNeta[k]);
        const double c = v(static_cast<Eigen::Index>(ids[static_cast<std::size_t>(k)]));
        gxv += gx * c;
        gzv += gz * c;
    }
    return {val, gxv, gzv};
}

}  // namespace fem

/// Gradient of the lift in the free region: d/dx h(x,z,u(x)) and d/dz.
inline std::pair<double, double> lift_grad_free(const BoundaryData& bd, const Deflection& u,
                                                double x, double z) {
    const auto uv = u.eval(x);
    return {bd.h.fx(x, z, uv[0]) + bd.h.fw(x, z, uv[0]) * uv[1], bd.h.fz(x, z, uv[0])};
}

/// Gradient of the rescaled lift inside the layer.
inline std::pair<double, double> lift_grad_layer(const BoundaryData& bd, const Deflection& u,
                                                 double delta, double H, double x, double z) {
    const auto uv = u.eval(x);
    const double zeta = -H + (z + H) / delta;
    return {bd.h_b.fx(x, zeta, uv[0]) + bd.h_b.fw(x, zeta, uv[0]) * uv[1],
            bd.h_b.fz(x, zeta, uv[0]) / delta};
}

namespace fem {

struct CompositeNumbering {
    // global id for free-mesh nodes is the free node id itself; layer nodes
    // below the interface get ids offset by the free node count.
    std::size_t n_free = 0;
    std::size_t n_layer_extra = 0;
    int nx = 0, nz_free = 0, nz_layer = 0;

    std::size_t free_node(int i, int j) const {
        return static_cast<std::size_t>(j) * (nx + 1) + i;
    }
    std::size_t layer_node(int i, int j) const {
        // layer row nz_layer coincides with free row 0
        if (j == nz_layer) return free_node(i, 0);
        return n_free + static_cast<std::size_t>(j) * (nx + 1) + i;
    }
    std::size_t total() const { return n_free + n_layer_extra; }
};

inline CompositeNumbering make_numbering(const MeshPair& mp) {
    CompositeNumbering cn;
    cn.nx = mp.free_mesh.nx;
    cn.nz_free = mp.free_mesh.nz;
    cn.nz_layer = mp.layer_mesh.nz;
    cn.n_free = mp.free_mesh.node_count();
    cn.n_layer_extra = static_cast<std::size_t>(cn.nx + 1) * cn.nz_layer;
    return cn;
}

struct LinearSystem {
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::VectorXd rhs;
    std::vector<Eigen::Index> free_index;  // global -> condensed (-1 if Dirichlet)
    std::size_t n_unknowns = 0;
};

inline LinearSystem make_system(std::size_t n_total, const std::vector<bool>& dirichlet) {
    LinearSystem sys;
    sys.free_index.assign(n_total, -1);
    Eigen::Index k = 0;
    for (std::size_t g = 0; g < n_total; ++g)
        if (!dirichlet[g]) sys.free_index[g] = k++;
    sys.n_unknowns = static_cast<std::size_t>(k);
    sys.rhs = Eigen::VectorXd::Zero(k);
    return sys;
}

inline void scatter(LinearSystem& sys, const std::array<std::size_t, 4>& gids,
                    const Eigen::Matrix4d& K, const Eigen::Vector4d& b) {
    for (int a = 0; a < 4; ++a) {
        const Eigen::Index ia = sys.free_index[gids[static_cast<std::size_t>(a)]];
        if (ia < 0) continue;
        sys.rhs(ia) += b(a);
        for (int c = 0; c < 4; ++c) {
            const Eigen::Index ic = sys.free_index[gids[static_cast<std::size_t>(c)]];
            if (ic < 0) continue;
            sys.triplets.emplace_back(ia, ic, K(a, c));
        }
    }
}

inline std::pair<Eigen::VectorXd, double> solve_spd(const LinearSystem& sys) {
    Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(sys.n_unknowns),
                                  static_cast<Eigen::Index>(sys.n_unknowns));
    A.setFromTriplets(sys.triplets.begin(), sys.triplets.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
    if (solver.info() != Eigen::Success)
        throw SingularSystem("field solve: factorization failed");
    Eigen::VectorXd x = solver.solve(sys.rhs);
    if (solver.info() != Eigen::Success)
        throw SingularSystem("field solve: back-substitution failed");
    const double res = (A * x - sys.rhs).norm() / (1.0 + sys.rhs.norm());
    return {std::move(x), res};
}

}  // namespace fem

/// Minimizes G_delta over the zero-boundary space on the composite mesh.
/// The transmission conditions hold weakly through the shared interface
/// nodes and the sigma_delta-weighted stiffness.
inline PotentialField solve_transmission(const Deflection& u, double delta,
                                         const BoundaryData& bd,
                                         const PermittivityProfile& sigma,
                                         const DeviceConfig& config) {
    PotentialField f;
    f.model = FieldModel::Delta;
    f.delta = delta;
    f.u = u;
    f.mesh = build_meshes(u, delta, config);
    const auto cn = fem::make_numbering(f.mesh);

    std::vector<bool> dirichlet(cn.total(), false);
    for (int i = 0; i <= cn.nx; ++i) {
        dirichlet[cn.free_node(i, cn.nz_free)] = true;  // plate graph
        dirichlet[cn.layer_node(i, 0)] = true;          // ground plate
    }
    for (int j = 0; j <= cn.nz_free; ++j) {
        dirichlet[cn.free_node(0, j)] = true;
        dirichlet[cn.free_node(cn.nx, j)] = true;
    }
    for (int j = 0; j <= cn.nz_layer; ++j) {
        dirichlet[cn.layer_node(0, j)] = true;
        dirichlet[cn.layer_node(cn.nx, j)] = true;
    }

    auto sys = fem::make_system(cn.total(), dirichlet);
    const GaussRule g1 = gauss_legendre(std::max(2, std::min(config.quadrature_order, 6)));
    Eigen::Matrix4d K;
    Eigen::Vector4d b;
    std::array<double, 4> xs, zs;

    auto one = [](double, double) { return 1.0; };
    auto free_lift = [&](double x, double z) { return lift_grad_free(bd, u, x, z); };
    for (int j = 0; j < cn.nz_free; ++j)
        for (int i = 0; i < cn.nx; ++i) {
            fem::element_coords(f.mesh.free_mesh, i, j, xs, zs);
            fem::element_system(xs, zs, one, free_lift, g1, K, b);
            const auto local = fem::element_nodes(f.mesh.free_mesh, i, j);
            std::array<std::size_t, 4> gids = local;  // free ids are global ids
            fem::scatter(sys, gids, K, b);
        }

    auto layer_coef = [&](double x, double z) { return delta * sigma(x, z); };
    auto layer_lift = [&](double x, double z) {
        return lift_grad_layer(bd, u, delta, config.H, x, z);
    };
    for (int j = 0; j < cn.nz_layer; ++j)
        for (int i = 0; i < cn.nx; ++i) {
            fem::element_coords(f.mesh.layer_mesh, i, j, xs, zs);
            fem::element_system(xs, zs, layer_coef, layer_lift, g1, K, b);
            std::array<std::size_t, 4> gids = {cn.layer_node(i, j), cn.layer_node(i + 1, j),
                                               cn.layer_node(i + 1, j + 1), cn.layer_node(i, j + 1)};
            fem::scatter(sys, gids, K, b);
        }

    auto [x, res] = fem::solve_spd(sys);
    f.residual_rel = res;

    f.theta_free = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cn.n_free));
    f.theta_layer =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f.mesh.layer_mesh.node_count()));
    for (int j = 0; j <= cn.nz_free; ++j)
        for (int i = 0; i <= cn.nx; ++i) {
            const std::size_t g = cn.free_node(i, j);
            if (sys.free_index[g] >= 0)
                f.theta_free(static_cast<Eigen::Index>(g)) = x(sys.free_index[g]);
        }
    for (int j = 0; j <= cn.nz_layer; ++j)
        for (int i = 0; i <= cn.nx; ++i) {
            const std::size_t g = cn.layer_node(i, j);
            const std::size_t local = f.mesh.layer_mesh.node_id(i, j);
            if (sys.free_index[g] >= 0)
                f.theta_layer(static_cast<Eigen::Index>(local)) = x(sys.free_index[g]);
            else if (j == cn.nz_layer)  // interface value may be an unknown stored in free row 0
                f.theta_layer(static_cast<Eigen::Index>(local)) =
                    f.theta_free(static_cast<Eigen::Index>(cn.free_node(i, 0)));
        }
    return f;
}

/// Minimizes G over the discrete H^1_B space (zero trace on the plate graph
/// and lateral walls, free on Sigma(u)) with the Robin boundary term.
inline PotentialField solve_robin(const Deflection& u, const BoundaryData& bd,
                                  const PermittivityProfile& sigma,
                                  const DeviceConfig& config) {
    PotentialField f;
    f.model = FieldModel::Reduced;
    f.u = u;
    // reuse the composite mesh builder; the layer mesh is ignored
    f.mesh = build_meshes(u, 0.5, config);
    const TensorMesh& m = f.mesh.free_mesh;

    std::vector<bool> dirichlet(m.node_count(), false);
    for (int i = 0; i <= m.nx; ++i) dirichlet[m.node_id(i, m.nz)] = true;
    for (int j = 0; j <= m.nz; ++j) {
        dirichlet[m.node_id(0, j)] = true;
        dirichlet[m.node_id(m.nx, j)] = true;
    }

    auto sys = fem::make_system(m.node_count(), dirichlet);
    const GaussRule g1 = gauss_legendre(std::max(2, std::min(config.quadrature_order, 6)));
    Eigen::Matrix4d K;
    Eigen::Vector4d b;
    std::array<double, 4> xs, zs;
    auto one = [](double, double) { return 1.0; };
    auto free_lift = [&](double x, double z) { return lift_grad_free(bd, u, x, z); };
    for (int j = 0; j < m.nz; ++j)
        for (int i = 0; i < m.nx; ++i) {
            fem::element_coords(m, i, j, xs, zs);
            fem::element_system(xs, zs, one, free_lift, g1, K, b);
            fem::scatter(sys, fem::element_nodes(m, i, j), K, b);
        }

    // Robin boundary term along Sigma(u): 1/2 int_D sigma |theta + h - frak_h|^2
    const double H = config.H;
    for (int i = 0; i < m.nx; ++i) {
        const double x0 = m.x[static_cast<std::size_t>(i)];
        const double x1 = m.x[static_cast<std::size_t>(i) + 1];
        const GaussRule ge = gauss_legendre(std::max(2, config.quadrature_order), x0, x1);
        Eigen::Matrix2d Me = Eigen::Matrix2d::Zero();
        Eigen::Vector2d be = Eigen::Vector2d::Zero();
        for (std::size_t q = 0; q < ge.points.size(); ++q) {
            const double x = ge.points[q];
            const double w = ge.weights[q];
            const double s = sigma(x, -H);
            const double t = (x - x0) / (x1 - x0);
            const double phi0 = 1.0 - t, phi1 = t;
            const double uv = u.eval(x)[0];
            const double mismatch = bd.h.f(x, -H, uv) - bd.frak_h(x, uv, H);
            Me(0, 0) += w * s * phi0 * phi0;
            Me(0, 1) += w * s * phi0 * phi1;
            Me(1, 0) += w * s * phi1 * phi0;
            Me(1, 1) += w * s * phi1 * phi1;
            be(0) -= w * s * mismatch * phi0;
            be(1) -= w * s * mismatch * phi1;
        }
        const std::array<std::size_t, 2> gids = {m.node_id(i, 0), m.node_id(i + 1, 0)};
        for (int a = 0; a < 2; ++a) {
            const Eigen::Index ia = sys.free_index[gids[static_cast<std::size_t>(a)]];
            if (ia < 0) continue;
            sys.rhs(ia) += be(a);
            for (int c = 0; c < 2; ++c) {
                const Eigen::Index ic = sys.free_index[gids[static_cast<std::size_t>(c)]];
                if (ic < 0) continue;
                sys.triplets.emplace_back(ia, ic, Me(a, c));
            }
        }
    }

    auto [x, res] = fem::solve_spd(sys);
    f.residual_rel = res;
    f.theta_free = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.node_count()));
    for (std::size_t g = 0; g < m.node_count(); ++g)
        if (sys.free_index[g] >= 0) f.theta_free(static_cast<Eigen::Index>(g)) = x(sys.free_index[g]);
    return f;
}

namespace detail {

/// 1/2 int c |grad(theta + lift)|^2 over one tensor mesh region.
template <typename Coef, typename LiftGrad>
inline double half_dirichlet_energy(const TensorMesh& m, const Eigen::VectorXd& theta,
                                    const Coef& c, const LiftGrad& lift_grad, int qorder) {
    const GaussRule g1 = gauss_legendre(std::max(2, std::min(qorder, 6)));
    std::array<double, 4> N, dNxi, dNeta, xs, zs;
    double total = 0.0;
    for (int j = 0; j < m.nz; ++j)
        for (int i = 0; i < m.nx; ++i) {
            fem::element_coords(m, i, j, xs, zs);
            const auto ids = fem::element_nodes(m, i, j);
            for (std::size_t qa = 0; qa < g1.points.size(); ++qa)
                for (std::size_t qb = 0; qb < g1.points.size(); ++qb) {
                    const double xi = g1.points[qa], eta = g1.points[qb];
                    const double w = g1.weights[qa] * g1.weights[qb];
                    fem::shape(xi, eta, N, dNxi, dNeta);
                    double x = 0, z = 0, J00 = 0, J01 = 0, J10 = 0, J11 = 0;
                    for (int k = 0; k < 4; ++k) {
                        x += N[k] * xs[k];
                        z += N[k] * zs[k];
                        J00 += dNxi[k] * xs[k];
                        J01 += dNxi[k] * zs[k];
                        J10 += dNeta[k] * xs[k];
                        J11 += dNeta[k] * zs[k];
                    }
                    const double detJ = J00 * J11 - J01 * J10;
                    const double inv = 1.0 / detJ;
                    double gxv = 0, gzv = 0;
                    for (int k = 0; k < 4; ++k) {
                        const double gx = inv * (J11 * dNxi[k] - J01 * dNeta[k]);
                        const double gz = inv * (-J10 * dNxi[k] + J00 * dNeta[k]);
                        const double coef =
                            theta(static_cast<Eigen::Index>(ids[static_cast<std::size_t>(k)]));
                        gxv += gx * coef;
                        gzv += gz * coef;
                    }
                    const auto lg = lift_grad(x, z);
                    gxv += lg.first;
                    gzv += lg.second;
                    total += 0.5 * c(x, z) * w * detJ * (gxv * gxv + gzv * gzv);
                }
        }
    return total;
}

/// 1/2 int_D sigma |theta(x,-H) + h(x,-H,u) - frak_h|^2 dx
inline double half_robin_boundary_energy(const TensorMesh& m, const Eigen::VectorXd& theta,
                                         const Deflection& u, const BoundaryData& bd,
                                         const PermittivityProfile& sigma, double H,
                                         int qorder) {
    double total = 0.0;
    for (int i = 0; i < m.nx; ++i) {
        const double x0 = m.x[static_cast<std::size_t>(i)];
        const double x1 = m.x[static_cast<std::size_t>(i) + 1];
        const GaussRule ge = gauss_legendre(std::max(2, qorder), x0, x1);
        const double t0 = theta(static_cast<Eigen::Index>(m.node_id(i, 0)));
        const double t1 = theta(static_cast<Eigen::Index>(m.node_id(i + 1, 0)));
        for (std::size_t q = 0; q < ge.points.size(); ++q) {
            const double x = ge.points[q];
            const double t = (x - x0) / (x1 - x0);
            const double th = (1.0 - t) * t0 + t * t1;
            const double uv = u.eval(x)[0];
            const double v = th + bd.h.f(x, -H, uv) - bd.frak_h(x, uv, H);
            total += 0.5 * ge.weights[q] * sigma(x, -H) * v * v;
        }
    }
    return total;
}

}  // namespace detail

/// E_{e,delta}(u) = -1/2 int sigma_delta |grad psi|^2, integrated directly
/// from psi = theta + lift by element quadrature.
inline double energy_transmission(const PotentialField& field, const BoundaryData& bd,
                                  const PermittivityProfile& sigma,
                                  const DeviceConfig& config) {
    if (field.model != FieldModel::Delta)
        throw ModelMismatch("energy_transmission: field is not a delta-model solve");
    const double delta = field.delta;
    auto one = [](double, double) { return 1.0; };
    auto free_lift = [&](double x, double z) { return lift_grad_free(bd, field.u, x, z); };
    auto layer_coef = [&](double x, double z) { return delta * sigma(x, z); };
    auto layer_lift = [&](double x, double z) {
        return lift_grad_layer(bd, field.u, delta, config.H, x, z);
    };
    const double efree = detail::half_dirichlet_energy(field.mesh.free_mesh, field.theta_free,
                                                       one, free_lift, config.quadrature_order);
    const double elayer = detail::half_dirichlet_energy(field.mesh.layer_mesh, field.theta_layer,
                                                        layer_coef, layer_lift,
                                                        config.quadrature_order);
    return -(efree + elayer);
}

/// E_{e,0}(u) = -1/2 int |grad psi|^2 - 1/2 int_D sigma |psi(.,-H) - frak_h|^2.
inline double energy_reduced(const PotentialField& field, const BoundaryData& bd,
                             const PermittivityProfile& sigma, const DeviceConfig& config) {
    if (field.model != FieldModel::Reduced)
        throw ModelMismatch("energy_reduced: field is not a reduced-model solve");
    auto one = [](double, double) { return 1.0; };
    auto free_lift = [&](double x, double z) { return lift_grad_free(bd, field.u, x, z); };
    const double ebulk = detail::half_dirichlet_energy(field.mesh.free_mesh, field.theta_free,
                                                       one, free_lift, config.quadrature_order);
    const double ebnd = detail::half_robin_boundary_energy(field.mesh.free_mesh, field.theta_free,
                                                           field.u, bd, sigma, config.H,
                                                           config.quadrature_order);
    return -(ebulk + ebnd);
}

/// G_delta[theta] or G[theta] for a solved field (used to set
/// functional_value and by the recovery-sequence check).
inline double functional_value_of(const PotentialField& field, const BoundaryData& bd,
                                  const PermittivityProfile& sigma, const DeviceConfig& config) {
    if (field.model == FieldModel::Delta)
        return -energy_transmission(field, bd, sigma, config);
    return -energy_reduced(field, bd, sigma, config);
}

/// int sigma_delta |grad h_{u,delta}|^2 (delta model) or the free-region
/// integral int |grad h_u|^2 (reduced), by quadrature with the analytic lift.
inline double lift_energy(const Deflection& u, bool delta_model, double delta,
                          const BoundaryData& bd, const PermittivityProfile& sigma,
                          const DeviceConfig& config) {
    const MeshPair mp = build_meshes(u, delta_model ? delta : 0.5, config);
    const Eigen::VectorXd zero_free =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mp.free_mesh.node_count()));
    auto one = [](double, double) { return 1.0; };
    auto free_lift = [&](double x, double z) { return lift_grad_free(bd, u, x, z); };
    double total = 2.0 * detail::half_dirichlet_energy(mp.free_mesh, zero_free, one, free_lift,
                                                       config.quadrature_order);
    if (delta_model) {
        const Eigen::VectorXd zero_layer =
            Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mp.layer_mesh.node_count()));
        auto layer_coef = [&](double x, double z) { return delta * sigma(x, z); };
        auto layer_lift = [&](double x, double z) {
            return lift_grad_layer(bd, u, delta, config.H, x, z);
        };
        total += 2.0 * detail::half_dirichlet_energy(mp.layer_mesh, zero_layer, layer_coef,
                                                     layer_lift, config.quadrature_order);
    }
    return total;
}

/// Trace psi(x, -H) of a reduced solve.
inline double robin_trace(const PotentialField& field, const BoundaryData& bd, double x,
                          double H) {
    if (field.model != FieldModel::Reduced)
        throw TraceUnavailable("robin_trace: needs a reduced-model field");
    const TensorMesh& m = field.mesh.free_mesh;
    const double hx = (m.x.back() - m.x.front()) / m.nx;
    int i = static_cast<int>(std::floor((x - m.x.front()) / hx));
    i = std::max(0, std::min(m.nx - 1, i));
    const double t = (x - m.x[static_cast<std::size_t>(i)]) / hx;
    const double th = (1.0 - t) * field.theta_free(static_cast<Eigen::Index>(m.node_id(i, 0))) +
                      t * field.theta_free(static_cast<Eigen::Index>(m.node_id(i + 1, 0)));
    return th + bd.h.f(x, -H, field.u.eval(x)[0]);
}

/// psi at an interior point of the free region.
inline double eval_psi_free(const PotentialField& field, const BoundaryData& bd, double x,
                            double z) {
    const auto fe = fem::eval_nodal(field.mesh.free_mesh, field.theta_free, x, z);
    return fe[0] + bd.h.f(x, z, field.u.eval(x)[0]);
}

/// Homogeneous part theta at a point of D x (-H, M); zero above the plate
/// (the trivial-extension convention).
inline double eval_theta_extended(const PotentialField& field, double x, double z, double H) {
    const double top = field.u.eval(x)[0];
    if (z >= top) return 0.0;
    if (z < -H) return 0.0;
    return fem::eval_nodal(field.mesh.free_mesh, field.theta_free, x, z)[0];
}

/// Plate trace of dz(psi) of the free-region restriction: FE gradient
/// sampled at the centers of the top two element rows and extrapolated
/// linearly to the plate.
inline double trace_dz_psi_plate(const PotentialField& field, const BoundaryData& bd, double x,
                                 double H) {
    const TensorMesh& m = field.mesh.free_mesh;
    const auto uv = field.u.eval(x);
    const double gap = uv[0] + H;
    const double eta1 = 1.0 - 0.5 / m.nz;
    const double eta2 = 1.0 - 1.5 / m.nz;
    const double z1 = -H + eta1 * gap;
    const double z2 = -H + eta2 * gap;
    const double d1 = fem::eval_nodal(m, field.theta_free, x, z1)[2] +
                      lift_grad_free(bd, field.u, x, z1).second;
    const double d2 = fem::eval_nodal(m, field.theta_free, x, z2)[2] +
                      lift_grad_free(bd, field.u, x, z2).second;
    return d1 + 0.5 * (d1 - d2);
}

/// Recovery-sequence value: builds theta_delta on the composite geometry
/// exactly per the cutoff construction (fixed deflection, trivial
/// reflection extension of theta) and returns G_delta[theta_delta].
inline double build_recovery_sequence(const PotentialField& reduced, const Deflection& u,
                                      double delta, const BoundaryData& bd,
                                      const PermittivityProfile& sigma,
                                      const DeviceConfig& config) {
    if (reduced.model != FieldModel::Reduced)
        throw ModelMismatch("build_recovery_sequence: needs a reduced-model field");
    const double H = config.H;
    const double L = config.L;
    if (u.min_value() + H <= delta)
        throw TouchdownGeometry("build_recovery_sequence: reflection leaves the free region");

    // Free-region part: theta_delta = theta there, and h_{u,delta} = h_u.
    auto one = [](double, double) { return 1.0; };
    auto free_lift = [&](double x, double z) { return lift_grad_free(bd, u, x, z); };
    double gdelta = detail::half_dirichlet_energy(reduced.mesh.free_mesh, reduced.theta_free,
                                                  one, free_lift, config.quadrature_order);

    const double sqrt_delta = std::sqrt(delta);
    auto tau = [&](double x) {
        const double d = L - std::abs(x);
        return d > sqrt_delta ? 1.0 : d / sqrt_delta;
    };
    auto dtau = [&](double x) {
        const double d = L - std::abs(x);
        if (d > sqrt_delta) return 0.0;
        return (x >= 0.0 ? -1.0 : 1.0) / sqrt_delta;
    };

    auto theta_hat = [&](double x, double z) {
        // reflection across the interface
        return fem::eval_nodal(reduced.mesh.free_mesh, reduced.theta_free, x, -2.0 * H - z);
    };
    auto lift_layer_val = [&](double x, double z) {
        return eval_h_delta(bd, delta, H, x, z, u.eval(x)[0]);
    };

    // Layer part of G_delta[theta_delta] by quadrature; the x-grid is split
    // at the cutoff breakpoints so the ramp is integrated exactly in x.
    std::vector<double> xb;
    for (double x : reduced.mesh.free_mesh.x) xb.push_back(x);
    if (L - sqrt_delta > -L) {
        xb.push_back(-(L - sqrt_delta));
        xb.push_back(L - sqrt_delta);
    }
    std::sort(xb.begin(), xb.end());
    xb.erase(std::unique(xb.begin(), xb.end(),
                         [](double a, double b) { return std::abs(a - b) < 1e-14; }),
             xb.end());

    const GaussRule gz = gauss_legendre(std::max(3, config.quadrature_order));
    const GaussRule gxr = gauss_legendre(std::max(3, config.quadrature_order));
    const int nzl = config.nz_layer;
    for (std::size_t ix = 0; ix + 1 < xb.size(); ++ix) {
        const double xa = xb[ix], xc = xb[ix + 1];
        const double hx = 0.5 * (xc - xa), xm = 0.5 * (xa + xc);
        for (int j = 0; j < nzl; ++j) {
            const double za = -H - delta + delta * j / nzl;
            const double zc = -H - delta + delta * (j + 1.0) / nzl;
            const double hz = 0.5 * (zc - za), zm = 0.5 * (za + zc);
            for (std::size_t qa = 0; qa < gxr.points.size(); ++qa)
                for (std::size_t qb = 0; qb < gz.points.size(); ++qb) {
                    const double x = xm + hx * gxr.points[qa];
                    const double z = zm + hz * gz.points[qb];
                    const double w = hx * gxr.weights[qa] * hz * gz.weights[qb];
                    const auto uv = u.eval(x);
                    const double ramp = (z + H + delta) / delta;
                    const auto th = theta_hat(x, z);
                    const double hat_v = th[0];
                    const double hat_x = th[1];
                    const double hat_z = -th[2];
                    const double h_top = bd.h.f(x, -H, uv[0]);
                    const double frak = bd.frak_h(x, uv[0], H);
                    const double dh = h_top - frak;  // interface data gap
                    const double dh_x = bd.h.fx(x, -H, uv[0]) + bd.h.fw(x, -H, uv[0]) * uv[1] -
                                        (bd.h_b.fx(x, -H - 1.0, uv[0]) +
                                         bd.h_b.fw(x, -H - 1.0, uv[0]) * uv[1]);
                    const double frak_x = bd.h_b.fx(x, -H - 1.0, uv[0]) +
                                          bd.h_b.fw(x, -H - 1.0, uv[0]) * uv[1];
                    const auto lg = lift_grad_layer(bd, u, delta, H, x, z);
                    const double hl = lift_layer_val(x, z);
                    const double tv = tau(x), td = dtau(x);
                    // theta_delta and its gradient inside the layer
                    const double gz_theta = (hat_v + dh * tv) / delta + ramp * hat_z -
                                            lg.second * tv;
                    const double gx_theta = ramp * (hat_x + dh_x * tv + dh * td) -
                                            (lg.first - frak_x) * tv - (hl - frak) * td;
                    const double px = gx_theta + lg.first;
                    const double pz = gz_theta + lg.second;
                    gdelta += 0.5 * w * delta * sigma(x, z) * (px * px + pz * pz);
                }
        }
    }
    return gdelta;
}

}  // namespace mems

#endif
