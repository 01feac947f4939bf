#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <utility>
#include <vector>

namespace pnlt {

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton iteration on P_n).
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussLegendre(std::size_t n) : nodes(n), weights(n) {
        const std::size_t half = (n + 1) / 2;
        for (std::size_t i = 0; i < half; ++i) {
            double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                const auto [p, d] = legendre(n, x);
                dp = d;
                const double dx = p / d;
                x -= dx;
                if (std::abs(dx) < 1e-16) break;
            }
            dp = legendre(n, x).second;
            const double w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
    }

    /// (P_n(x), P_n'(x)) by the three-term recurrence.
    static std::pair<double, double> legendre(std::size_t n, double x) {
        double p0 = 1.0, p1 = x;
        for (std::size_t k = 2; k <= n; ++k) {
            const double pk = ((2.0 * static_cast<double>(k) - 1.0) * x * p1 - (static_cast<double>(k) - 1.0) * p0) /
                              static_cast<double>(k);
            p0 = p1;
            p1 = pk;
        }
        return {p1, static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0)};
    }

    /// Integral of f over [a, b].
    template <class F>
    double integrate(F&& f, double a, double b) const {
        const double mid = 0.5 * (a + b), rad = 0.5 * (b - a);
        double s = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(mid + rad * nodes[i]);
        return s * rad;
    }
};

} // namespace pnlt
