#ifndef MEMS_QUADRATURE_HPP
#define MEMS_QUADRATURE_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mems {

/// Gauss-Legendre rule on [-1, 1], exact for polynomials of degree 2n-1.
struct GaussRule {
    std::vector<double> points;
    std::vector<double> weights;
};

/// Nodes via Newton iteration on Legendre polynomials; stable up to n ~ 64.
inline GaussRule gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
    GaussRule rule;
    rule.points.resize(n);
    rule.weights.resize(n);
    const double pi = 3.14159265358979323846;
    for (int i = 0; i < n; ++i) {
        // Chebyshev-based initial guess for the i-th root.
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            // Legendre recurrence for P_n(x) and P'_n(x).
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.points[n - 1 - i] = x;
        rule.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
}

/// Rule mapped to [a, b].
inline GaussRule gauss_legendre(int n, double a, double b) {
    GaussRule r = gauss_legendre(n);
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    for (std::size_t i = 0; i < r.points.size(); ++i) {
        r.points[i] = mid + half * r.points[i];
        r.weights[i] *= half;
    }
    return r;
}

}  // namespace mems

#endif
