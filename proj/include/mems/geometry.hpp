#ifndef MEMS_GEOMETRY_HPP
#define MEMS_GEOMETRY_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <tuple>
#include <vector>

#include "mems/errors.hpp"
#include "mems/quadrature.hpp"

namespace mems {

/// Device geometry, material constants and discretization resolutions.
/// All values are immutable after validate().
struct DeviceConfig {
    double L = 1.0;     // half-width of D = (-L, L)
    double H = 1.0;     // gap height
    double beta = 1.0;  // bending modulus
    double tau = 0.1;   // tension
    double a = 1.0;     // stretching coefficient
    std::vector<double> delta_list{0.2, 0.1, 0.05};
    double eps_gap = 1e-3;  // minimum admissible gap, as a fraction of H
    int nx = 32;
    int nz_free = 16;
    int nz_layer = 4;
    int quadrature_order = 4;

    void validate() const {
        if (!(L > 0.0)) throw ConfigError("DeviceConfig: L must be positive");
        if (!(H > 0.0)) throw ConfigError("DeviceConfig: H must be positive");
        if (!(beta > 0.0)) throw ConfigError("DeviceConfig: beta must be positive");
        if (tau < 0.0) throw ConfigError("DeviceConfig: tau must be nonnegative");
        if (a < 0.0) throw ConfigError("DeviceConfig: a must be nonnegative");
        for (double d : delta_list)
            if (!(d > 0.0 && d < 1.0))
                throw ConfigError("DeviceConfig: every delta must lie in (0,1)");
        if (!(eps_gap > 0.0)) throw ConfigError("DeviceConfig: eps_gap must be positive");
        if (nx < 2 || nz_free < 2 || nz_layer < 2)
            throw ConfigError("DeviceConfig: mesh resolutions must be >= 2");
        if (quadrature_order < 1)
            throw ConfigError("DeviceConfig: quadrature_order must be positive");
    }
};

/// Clamped H^2-conforming beam profile: cubic Hermite on a strictly
/// increasing grid over [-L, L], value and slope zero at both ends,
/// nodal values >= -H.
class Deflection {
  public:
    Deflection() = default;

    Deflection(std::vector<double> nodes, std::vector<double> values,
               std::vector<double> slopes)
        : nodes_(std::move(nodes)), values_(std::move(values)), slopes_(std::move(slopes)) {
        if (nodes_.size() < 2 || nodes_.size() != values_.size() ||
            nodes_.size() != slopes_.size())
            throw Error("Deflection: inconsistent nodal data");
        for (std::size_t i = 1; i < nodes_.size(); ++i)
            if (!(nodes_[i] > nodes_[i - 1]))
                throw Error("Deflection: nodes must be strictly increasing");
    }

    const std::vector<double>& nodes() const { return nodes_; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<double>& slopes() const { return slopes_; }
    std::size_t node_count() const { return nodes_.size(); }
    double xmin() const { return nodes_.front(); }
    double xmax() const { return nodes_.back(); }

    /// Hermite evaluation: (value, u', u''). Exact for cubics.
    std::array<double, 3> eval(double x) const {
        const double tol = 1e-12 * (xmax() - xmin());
        if (x < xmin() - tol || x > xmax() + tol)
            throw OutOfDomain("eval_deflection: x outside [-L, L]");
        x = std::clamp(x, xmin(), xmax());
        std::size_t e = find_element(x);
        const double x0 = nodes_[e], x1 = nodes_[e + 1];
        const double h = x1 - x0;
        const double t = (x - x0) / h;
        const double v0 = values_[e], v1 = values_[e + 1];
        const double s0 = slopes_[e], s1 = slopes_[e + 1];
        // Hermite basis and its first two derivatives in t.
        const double h00 = 1.0 - 3.0 * t * t + 2.0 * t * t * t;
        const double h10 = t - 2.0 * t * t + t * t * t;
        const double h01 = 3.0 * t * t - 2.0 * t * t * t;
        const double h11 = -t * t + t * t * t;
        const double d00 = -6.0 * t + 6.0 * t * t;
        const double d10 = 1.0 - 4.0 * t + 3.0 * t * t;
        const double d01 = 6.0 * t - 6.0 * t * t;
        const double d11 = -2.0 * t + 3.0 * t * t;
        const double c00 = -6.0 + 12.0 * t;
        const double c10 = -4.0 + 6.0 * t;
        const double c01 = 6.0 - 12.0 * t;
        const double c11 = -2.0 + 6.0 * t;
        const double val = h00 * v0 + h * h10 * s0 + h01 * v1 + h * h11 * s1;
        const double der = (d00 * v0 + h * d10 * s0 + d01 * v1 + h * d11 * s1) / h;
        const double der2 = (c00 * v0 + h * c10 * s0 + c01 * v1 + h * c11 * s1) / (h * h);
        return {val, der, der2};
    }

    double min_value() const {
        return *std::min_element(values_.begin(), values_.end());
    }

  private:
    std::size_t find_element(double x) const {
        auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
        std::size_t e = static_cast<std::size_t>(it - nodes_.begin());
        if (e == 0) return 0;
        if (e >= nodes_.size()) return nodes_.size() - 2;
        return e - 1;
    }

    std::vector<double> nodes_;
    std::vector<double> values_;
    std::vector<double> slopes_;
};

struct DeflectionSample {
    double x;
    double value;
    double slope;
};

/// Interpolates the samples; rejects profiles that are not clamped at
/// x = +-L or dip below the obstacle z = -H.
inline Deflection build_deflection_from_samples(const std::vector<DeflectionSample>& samples,
                                                const DeviceConfig& config) {
    if (samples.size() < 2) throw Error("build_deflection_from_samples: need >= 2 samples");
    std::vector<double> nodes, values, slopes;
    nodes.reserve(samples.size());
    for (const auto& s : samples) {
        nodes.push_back(s.x);
        values.push_back(s.value);
        slopes.push_back(s.slope);
    }
    const double tol = 1e-12 * config.L;
    if (std::abs(nodes.front() + config.L) > tol || std::abs(nodes.back() - config.L) > tol)
        throw NotClamped("build_deflection_from_samples: samples must cover [-L, L]");
    if (values.front() != 0.0 || values.back() != 0.0 ||
        slopes.front() != 0.0 || slopes.back() != 0.0)
        throw NotClamped("build_deflection_from_samples: boundary value/slope must be 0");
    for (double v : values)
        if (v < -config.H)
            throw BelowObstacle("build_deflection_from_samples: value below -H");
    return Deflection(std::move(nodes), std::move(values), std::move(slopes));
}

/// Zero profile on a uniform grid with n elements.
inline Deflection zero_deflection(const DeviceConfig& config, int n) {
    std::vector<double> nodes(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i)
        nodes[static_cast<std::size_t>(i)] = -config.L + 2.0 * config.L * i / n;
    std::vector<double> zeros(nodes.size(), 0.0);
    return Deflection(std::move(nodes), zeros, zeros);
}

/// (||u||^2, ||u'||^2, ||u''||^2) by per-element Gauss quadrature.
inline std::tuple<double, double, double> sobolev_norms(const Deflection& u,
                                                        int quadrature_order = 4) {
    const GaussRule base = gauss_legendre(quadrature_order);
    double l2 = 0.0, h1 = 0.0, h2 = 0.0;
    const auto& nodes = u.nodes();
    for (std::size_t e = 0; e + 1 < nodes.size(); ++e) {
        const double x0 = nodes[e], x1 = nodes[e + 1];
        const double half = 0.5 * (x1 - x0), mid = 0.5 * (x0 + x1);
        for (std::size_t q = 0; q < base.points.size(); ++q) {
            const double x = mid + half * base.points[q];
            const double w = half * base.weights[q];
            const auto v = u.eval(x);
            l2 += w * v[0] * v[0];
            h1 += w * v[1] * v[1];
            h2 += w * v[2] * v[2];
        }
    }
    return {l2, h1, h2};
}

/// Maximal intervals where u + H <= tol, detected on a grid 10x denser
/// than the nodes. Degenerate intervals are reported with lo == hi.
inline std::vector<std::pair<double, double>> coincidence_set(const Deflection& u,
                                                              double tol, double H) {
    const int per_element = 10;
    const auto& nodes = u.nodes();
    std::vector<double> xs;
    for (std::size_t e = 0; e + 1 < nodes.size(); ++e)
        for (int k = 0; k < per_element; ++k)
            xs.push_back(nodes[e] + (nodes[e + 1] - nodes[e]) * k / per_element);
    xs.push_back(nodes.back());

    std::vector<std::pair<double, double>> intervals;
    bool in = false;
    double lo = 0.0, hi = 0.0;
    for (double x : xs) {
        const bool touching = u.eval(x)[0] + H <= tol;
        if (touching && !in) {
            in = true;
            lo = hi = x;
        } else if (touching) {
            hi = x;
        } else if (in) {
            intervals.emplace_back(lo, hi);
            in = false;
        }
    }
    if (in) intervals.emplace_back(lo, hi);
    return intervals;
}

/// Structured quadrilateral mesh stored as tensor grids. The free mesh
/// lives on the reference rectangle D x (0,1) with the vertical map
/// z = -H + eta * (u(x) + H); the layer mesh covers R_delta.
struct TensorMesh {
    std::vector<double> x;           // nx+1 nodes
    std::vector<std::vector<double>> z;  // z[i][j]: per-column vertical nodes
    int nx = 0;
    int nz = 0;

    std::size_t node_id(int i, int j) const {
        return static_cast<std::size_t>(j) * (nx + 1) + i;
    }
    std::size_t node_count() const {
        return static_cast<std::size_t>(nx + 1) * (nz + 1);
    }
};

struct MeshPair {
    TensorMesh free_mesh;   // mapped free region Omega(u)
    TensorMesh layer_mesh;  // rectangle R_delta
    std::vector<double> interface_x;  // shared x-nodes on Sigma(u)
    double delta = 0.0;
};

/// Conforming composite mesh for Omega_delta(u). Requires a strictly
/// positive gap: min(u) + H >= eps_gap * H.
inline MeshPair build_meshes(const Deflection& u, double delta, const DeviceConfig& config) {
    MeshPair mp;
    mp.delta = delta;
    std::vector<double> xs(static_cast<std::size_t>(config.nx) + 1);
    for (int i = 0; i <= config.nx; ++i)
        xs[static_cast<std::size_t>(i)] = -config.L + 2.0 * config.L * i / config.nx;

    // gap check on the mesh columns and on the nodal values
    const double floor = config.eps_gap * config.H;
    for (double x : xs)
        if (u.eval(x)[0] + config.H < floor)
            throw TouchdownGeometry("build_meshes: gap below eps_gap*H at x=" + std::to_string(x));
    if (u.min_value() + config.H < floor)
        throw TouchdownGeometry("build_meshes: nodal gap below eps_gap*H");

    mp.free_mesh.x = xs;
    mp.free_mesh.nx = config.nx;
    mp.free_mesh.nz = config.nz_free;
    mp.free_mesh.z.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double top = u.eval(xs[i])[0];
        mp.free_mesh.z[i].resize(static_cast<std::size_t>(config.nz_free) + 1);
        for (int j = 0; j <= config.nz_free; ++j) {
            const double eta = static_cast<double>(j) / config.nz_free;
            mp.free_mesh.z[i][static_cast<std::size_t>(j)] =
                -config.H + eta * (top + config.H);
        }
    }

    mp.layer_mesh.x = xs;
    mp.layer_mesh.nx = config.nx;
    mp.layer_mesh.nz = config.nz_layer;
    mp.layer_mesh.z.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mp.layer_mesh.z[i].resize(static_cast<std::size_t>(config.nz_layer) + 1);
        for (int j = 0; j <= config.nz_layer; ++j)
            mp.layer_mesh.z[i][static_cast<std::size_t>(j)] =
                -config.H - delta + delta * j / config.nz_layer;
    }

    mp.interface_x = xs;
    return mp;
}

}  // namespace mems

#endif
