#pragma once

// Dense two-phase primal simplex with Bland's rule for
//   minimize c.x  subject to  A x = r,  x >= 0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "pnlt/error.hpp"
#include "pnlt/kernel.hpp"

namespace pnlt {

enum class LpStatus { optimal, infeasible, unbounded };

struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    double value = 0.0;
    std::vector<double> x;
};

inline LpSolution solve_lp(const Matrix& a, const Vector& r, const Vector& c) {
    const auto m = static_cast<std::size_t>(a.rows());
    const auto n = static_cast<std::size_t>(a.cols());
    const std::size_t width = n + m + 1;  // structural | artificial | rhs
    double scale = 1.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) scale = std::max(scale, std::abs(a(i, j)));
    const double tol = 1e-11 * scale;

    std::vector<double> t((m + 1) * width, 0.0);
    auto at = [&](std::size_t i, std::size_t j) -> double& { return t[i * width + j]; };
    std::vector<std::size_t> basis(m);
    double rhs_scale = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double sign = r(static_cast<Eigen::Index>(i)) < 0.0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < n; ++j) at(i, j) = sign * a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        at(i, n + i) = 1.0;
        at(i, width - 1) = sign * r(static_cast<Eigen::Index>(i));
        rhs_scale = std::max(rhs_scale, std::abs(r(static_cast<Eigen::Index>(i))));
        basis[i] = n + i;
    }
    const double feas_tol = 1e-10 * std::max(1.0, rhs_scale);

    std::vector<bool> allowed(width - 1, true);
    std::vector<bool> active_row(m, true);

    auto pivot = [&](std::size_t row, std::size_t col) {
        const double p = at(row, col);
        for (std::size_t j = 0; j < width; ++j) at(row, j) /= p;
        for (std::size_t i = 0; i <= m; ++i) {
            if (i == row) continue;
            const double f = at(i, col);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < width; ++j) at(i, j) -= f * at(row, j);
            at(i, col) = 0.0;
        }
        basis[row] = col;
    };

    // Objective row holds reduced costs; rhs entry holds -objective.
    auto run = [&]() -> bool {
        for (std::size_t iter = 0; iter < 50000; ++iter) {
            std::size_t enter = width;
            for (std::size_t j = 0; j + 1 < width; ++j)
                if (allowed[j] && at(m, j) < -tol) {
                    enter = j;
                    break;
                }
            if (enter == width) return true;
            std::size_t leave = m;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < m; ++i) {
                if (!active_row[i] || at(i, enter) <= tol) continue;
                const double ratio = at(i, width - 1) / at(i, enter);
                const double slack = 1e-15 * std::max(1.0, std::abs(best));
                if (leave == m || ratio < best - slack || (ratio <= best + slack && basis[i] < basis[leave])) {
                    best = ratio;
                    leave = i;
                }
            }
            if (leave == m) return false;
            pivot(leave, enter);
        }
        throw ConvergenceError("simplex iteration limit reached", 0.0);
    };

    // Phase 1: minimize the sum of artificials.
    for (std::size_t j = 0; j < width; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += at(i, j);
        at(m, j) = (j >= n && j < n + m) ? 0.0 : -s;
    }
    run();
    LpSolution out;
    if (-at(m, width - 1) > feas_tol) {
        out.status = LpStatus::infeasible;
        return out;
    }
    // Drive artificials out of the basis; rows where that is impossible are redundant.
    for (std::size_t i = 0; i < m; ++i) {
        if (basis[i] < n) continue;
        std::size_t col = n;
        for (std::size_t j = 0; j < n; ++j)
            if (std::abs(at(i, j)) > tol) {
                col = j;
                break;
            }
        if (col < n)
            pivot(i, col);
        else
            active_row[i] = false;
    }
    for (std::size_t j = n; j < n + m; ++j) allowed[j] = false;

    // Phase 2.
    for (std::size_t j = 0; j < width; ++j) at(m, j) = 0.0;
    for (std::size_t j = 0; j < n; ++j) at(m, j) = c(static_cast<Eigen::Index>(j));
    for (std::size_t i = 0; i < m; ++i) {
        if (!active_row[i]) continue;
        const double cb = basis[i] < n ? c(static_cast<Eigen::Index>(basis[i])) : 0.0;
        if (cb == 0.0) continue;
        for (std::size_t j = 0; j < width; ++j) at(m, j) -= cb * at(i, j);
    }
    if (!run()) {
        out.status = LpStatus::unbounded;
        return out;
    }
    out.status = LpStatus::optimal;
    out.x.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        if (active_row[i] && basis[i] < n) out.x[basis[i]] = std::max(0.0, at(i, width - 1));
    double v = 0.0;
    for (std::size_t j = 0; j < n; ++j) v += c(static_cast<Eigen::Index>(j)) * out.x[j];
    out.value = v;
    return out;
}

} // namespace pnlt
