#ifndef MEMS_BOUNDARY_DATA_HPP
#define MEMS_BOUNDARY_DATA_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mems/errors.hpp"
#include "mems/geometry.hpp"

namespace mems {

/// Scalar permittivity profile sigma(x,z) > 0 on D x [-H-1, -H].
struct PermittivityProfile {
    std::function<double(double, double)> sigma;
    double sigma_max = 1.0;  // 1 + max sigma, cached on a validation grid

    double operator()(double x, double z) const { return sigma(x, z); }
};

inline PermittivityProfile make_permittivity(std::function<double(double, double)> sigma,
                                             double L, double H, int grid_density = 64) {
    PermittivityProfile p;
    p.sigma = std::move(sigma);
    double max_sigma = 0.0;
    for (int i = 0; i <= grid_density; ++i) {
        const double x = -L + 2.0 * L * i / grid_density;
        for (int j = 0; j <= grid_density; ++j) {
            const double z = -H - 1.0 + static_cast<double>(j) / grid_density;
            const double s = p.sigma(x, z);
            if (!(s > 0.0))
                throw ConfigError("PermittivityProfile: sigma must be positive");
            max_sigma = std::max(max_sigma, s);
        }
    }
    p.sigma_max = 1.0 + max_sigma;
    return p;
}

/// Evaluator with analytic partials for a scalar field f(x, z, w).
struct Field3 {
    std::function<double(double, double, double)> f;
    std::function<double(double, double, double)> fx;
    std::function<double(double, double, double)> fz;
    std::function<double(double, double, double)> fw;
};

/// The boundary-data family (h_b on the layer block, h on the free block)
/// together with the growth constants certified on w_range.
struct BoundaryData {
    Field3 h_b;  // on D x [-H-1, -H] x [-H, inf)
    Field3 h;    // on D x [-H, inf) x [-H, inf)
    double m_const = 0.0;
    double K_const = 0.0;
    std::pair<double, double> w_range{0.0, 0.0};  // interval on which constants hold
    std::string name;

    /// frak_h(x, w) = h_b(x, -H-1, w), the Robin datum.
    double frak_h(double x, double w, double H) const { return h_b.f(x, -H - 1.0, w); }
};

/// Rescaled device lift h_delta(x,z,w): the layer block is the affine
/// rescaling of h_b onto thickness delta, the free block is h itself.
inline double eval_h_delta(const BoundaryData& bd, double delta, double H,
                           double x, double z, double w) {
    if (z < -H - delta - 1e-12 * (1.0 + H))
        throw OutOfDomain("eval_h_delta: z below -H-delta");
    if (z < -H) return bd.h_b.f(x, -H + (z + H) / delta, w);
    return bd.h.f(x, z, w);
}

/// Permittivity of the device: delta*sigma inside the layer, 1 above.
inline double sigma_delta(const PermittivityProfile& sigma, double delta,
                          double H, double x, double z) {
    if (z < -H) return delta * sigma(x, z);
    return 1.0;
}

/// Grounded default family:
///   h(x,z,w)   = V (H+z) / (H+w)
///   h_b(x,z,w) = V (z+H)(z+H+1) / (sigma(x,-H) (H+w))
/// Satisfies the continuity, flux-matching and bottom-plate identities
/// exactly, with frak_h == 0.
inline BoundaryData default_grounded_family(double V, const PermittivityProfile& sigma,
                                            double H) {
    BoundaryData bd;
    bd.name = "default_grounded";
    auto sig_i = [sigma, H](double x) { return sigma(x, -H); };

    bd.h.f = [V, H](double, double z, double w) { return V * (H + z) / (H + w); };
    bd.h.fx = [](double, double, double) { return 0.0; };
    bd.h.fz = [V, H](double, double, double w) { return V / (H + w); };
    bd.h.fw = [V, H](double, double z, double w) {
        return -V * (H + z) / ((H + w) * (H + w));
    };

    // sigma enters h_b only through its interface trace; the x-partial
    // therefore needs d/dx sigma(x,-H), obtained by central differences.
    auto dsig_i = [sig_i, H](double x) {
        const double step = 1e-6 * (1.0 + std::abs(x));
        return (sig_i(x + step) - sig_i(x - step)) / (2.0 * step);
    };
    bd.h_b.f = [V, H, sig_i](double x, double z, double w) {
        return V * (z + H) * (z + H + 1.0) / (sig_i(x) * (H + w));
    };
    bd.h_b.fx = [V, H, sig_i, dsig_i](double x, double z, double w) {
        const double s = sig_i(x);
        return -V * (z + H) * (z + H + 1.0) * dsig_i(x) / (s * s * (H + w));
    };
    bd.h_b.fz = [V, H, sig_i](double x, double z, double w) {
        return V * (2.0 * (z + H) + 1.0) / (sig_i(x) * (H + w));
    };
    bd.h_b.fw = [V, H, sig_i](double x, double z, double w) {
        return -V * (z + H) * (z + H + 1.0) / (sig_i(x) * (H + w) * (H + w));
    };
    return bd;
}

/// Two-layer family with x-independent data for a constant permittivity s:
///   h(x,z,w)   = V (1 + s(z+H)) / (1 + sH)
///   h_b(x,z,w) = V (z+H+1) / (1 + sH)
/// For u == 0 the lift itself solves both the transmission and the reduced
/// problem (series-capacitor profile), making expected energies closed-form.
inline BoundaryData two_layer_family(double V, double s, double H) {
    BoundaryData bd;
    bd.name = "two_layer";
    const double c = V / (1.0 + s * H);
    bd.h.f = [c, s, H](double, double z, double) { return c * (1.0 + s * (z + H)); };
    bd.h.fx = [](double, double, double) { return 0.0; };
    bd.h.fz = [c, s](double, double, double) { return c * s; };
    bd.h.fw = [](double, double, double) { return 0.0; };
    bd.h_b.f = [c, H](double, double z, double) { return c * (z + H + 1.0); };
    bd.h_b.fx = [](double, double, double) { return 0.0; };
    bd.h_b.fz = [c](double, double, double) { return c; };
    bd.h_b.fw = [](double, double, double) { return 0.0; };
    return bd;
}

struct ValidationReport {
    double max_continuity_violation = 0.0;   // h_b(x,-H,w) - h(x,-H,w)
    double max_flux_violation = 0.0;         // sigma dz h_b - dz h at z=-H
    double max_bottom_w_violation = 0.0;     // dw h_b(x,-H-1,w)
    double max_partial_mismatch = 0.0;       // supplied partials vs central FD
    bool passed = false;
};

namespace detail {
inline double central_fd(const std::function<double(double, double, double)>& f,
                         double x, double z, double w, int arg) {
    const double scale = 1.0 + std::abs(arg == 0 ? x : (arg == 1 ? z : w));
    const double step = 1e-6 * scale;
    auto at = [&](double d) {
        return f(x + (arg == 0 ? d : 0.0), z + (arg == 1 ? d : 0.0), w + (arg == 2 ? d : 0.0));
    };
    return (at(step) - at(-step)) / (2.0 * step);
}
}  // namespace detail

/// Checks the transmission-compatibility identities and the bottom-plate
/// condition on a dense grid over D x w_range; also cross-checks the
/// supplied analytic partials against central differences.
inline ValidationReport validate_compatibility(const BoundaryData& bd,
                                               const PermittivityProfile& sigma,
                                               double L, double H,
                                               int grid_density = 32) {
    ValidationReport rep;
    const double w_lo = bd.w_range.first, w_hi = bd.w_range.second;
    const double wl = (w_hi > w_lo) ? w_lo : -H + 0.25 * H;
    const double wh = (w_hi > w_lo) ? w_hi : H;
    for (int i = 0; i <= grid_density; ++i) {
        const double x = -L + 2.0 * L * i / grid_density;
        for (int k = 0; k <= grid_density; ++k) {
            const double w = wl + (wh - wl) * k / grid_density;
            rep.max_continuity_violation = std::max(
                rep.max_continuity_violation,
                std::abs(bd.h_b.f(x, -H, w) - bd.h.f(x, -H, w)));
            rep.max_flux_violation = std::max(
                rep.max_flux_violation,
                std::abs(sigma(x, -H) * bd.h_b.fz(x, -H, w) - bd.h.fz(x, -H, w)));
            rep.max_bottom_w_violation = std::max(
                rep.max_bottom_w_violation, std::abs(bd.h_b.fw(x, -H - 1.0, w)));
        }
    }
    // FD cross-check of the analytic partials at interior sample points.
    const int n = 8;
    for (int i = 0; i <= n; ++i) {
        const double x = -0.9 * L + 1.8 * L * i / n;
        for (int k = 0; k <= n; ++k) {
            const double w = wl + (wh - wl) * k / n;
            const double zb = -H - 0.5;
            const double zf = w > -H ? 0.5 * (w - H) : -H;  // midpoint of (-H, w)
            auto check = [&rep](const Field3& f, double x_, double z_, double w_) {
                rep.max_partial_mismatch = std::max(
                    rep.max_partial_mismatch,
                    std::abs(f.fx(x_, z_, w_) - detail::central_fd(f.f, x_, z_, w_, 0)));
                rep.max_partial_mismatch = std::max(
                    rep.max_partial_mismatch,
                    std::abs(f.fz(x_, z_, w_) - detail::central_fd(f.f, x_, z_, w_, 1)));
                rep.max_partial_mismatch = std::max(
                    rep.max_partial_mismatch,
                    std::abs(f.fw(x_, z_, w_) - detail::central_fd(f.f, x_, z_, w_, 2)));
            };
            check(bd.h_b, x, zb, w);
            check(bd.h, x, zf, w);
        }
    }
    rep.passed = rep.max_continuity_violation <= 1e-10 &&
                 rep.max_flux_violation <= 1e-10 &&
                 rep.max_bottom_w_violation <= 1e-10;
    return rep;
}

/// Smallest (m, K) making the growth bounds hold on the sampled grid over
/// D x [-H-1,-H] (resp. D x [-H, M_w]) x w_range. Stores them in bd.
inline std::pair<double, double> certify_growth_constants(BoundaryData& bd,
                                                          std::pair<double, double> w_range,
                                                          double L, double H,
                                                          int grid_density = 32) {
    if (!(w_range.first > -H))
        throw DegenerateRange("certify_growth_constants: w_range must stay away from -H");
    if (!(w_range.second >= w_range.first))
        throw DegenerateRange("certify_growth_constants: empty w_range");
    double m = 0.0, K = 0.0;
    const double wl = w_range.first, wh = w_range.second;
    for (int i = 0; i <= grid_density; ++i) {
        const double x = -L + 2.0 * L * i / grid_density;
        for (int k = 0; k <= grid_density; ++k) {
            const double w = wl + (wh - wl) * k / grid_density;
            // layer block
            for (int j = 0; j <= grid_density; ++j) {
                const double z = -H - 1.0 + static_cast<double>(j) / grid_density;
                const double g1 = std::abs(bd.h_b.fx(x, z, w)) + std::abs(bd.h_b.fz(x, z, w));
                m = std::max(m, g1 * g1 / (1.0 + w * w));
                const double g2 = bd.h_b.fw(x, z, w);
                m = std::max(m, g2 * g2);
            }
            // free block, z in [-H, max(w_range)]
            for (int j = 0; j <= grid_density; ++j) {
                const double z = -H + (wh + H) * j / grid_density;
                const double g1 = std::abs(bd.h.fx(x, z, w)) + std::abs(bd.h.fz(x, z, w));
                m = std::max(m, g1 * g1 * (H + w) / (1.0 + w * w));
                const double g2 = bd.h.fw(x, z, w);
                m = std::max(m, g2 * g2 * (H + w));
            }
            // plate-trace bound
            const double kb = std::abs(bd.h.fx(x, w, w)) +
                              std::abs(bd.h.fz(x, w, w) + bd.h.fw(x, w, w));
            K = std::max(K, kb);
        }
    }
    bd.m_const = m;
    bd.K_const = K;
    bd.w_range = w_range;
    return {m, K};
}

}  // namespace mems

#endif
