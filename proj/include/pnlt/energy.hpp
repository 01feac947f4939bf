#pragma once

// Discrete phase-field energy
//   E_eps(u) = (1/eps) sum_x W(u(x)) h1 h2 + sum_{x != y} G(x - y)(u(x) - u(y)).(u(x) - u(y)) (h1 h2)^2
// with W(xi) = dist^2(xi, Z^N), plus truncated energies, gradients and a descent minimizer.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "pnlt/error.hpp"
#include "pnlt/fields.hpp"
#include "pnlt/kernel.hpp"
#include "pnlt/lattice.hpp"
#include "pnlt/parallel.hpp"

namespace pnlt {

/// dist^2(xi, Z^N); ties round to even.
inline double w_potential(const double* xi, int n) {
    double s = 0.0;
    for (int c = 0; c < n; ++c) {
        const double d = xi[c] - std::nearbyint(xi[c]);
        s += d * d;
    }
    return s;
}

inline double w_potential(const Vector& xi) { return w_potential(xi.data(), static_cast<int>(xi.size())); }

struct EnergyBreakdown {
    double w_term = 0.0;
    double nonlocal_term = 0.0;
    double total = 0.0;
    double eps = 0.0;

    double log_scale() const { return std::log(1.0 / eps); }
    double per_log() const { return total / log_scale(); }
    double per_log2() const { return total / (log_scale() * log_scale()); }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["eps"] = eps;
        j["w_term"] = w_term;
        j["nonlocal_term"] = nonlocal_term;
        j["total"] = total;
        j["per_log"] = per_log();
        j["per_log2"] = per_log2();
        return j;
    }
};

enum class EnergyMethod { direct, convolution };

namespace detail {

inline void check_eps(double eps) {
    if (!(eps > 0.0) || !std::isfinite(eps)) throw DomainError("eps must be positive");
}

inline void check_kernel_field(const AnisotropyKernel& kernel, int n) {
    if (kernel.components() != n)
        throw DomainError("kernel has " + std::to_string(kernel.components()) + " components, field has " +
                          std::to_string(n));
}

inline double w_sum(const std::vector<double>& u, int n) {
    double s = 0.0;
    for (std::size_t p = 0; p < u.size() / static_cast<std::size_t>(n); ++p) s += w_potential(u.data() + p * n, n);
    return s;
}

inline EnergyBreakdown make_breakdown(double w, double nl, double eps) {
    return {w, nl, w + nl, eps};
}

} // namespace detail

/// Nonlocal term only, using a prebuilt lattice.
inline double nonlocal_energy(const GridField& f, const PairLattice& l, EnergyMethod method = EnergyMethod::convolution) {
    const double h4 = f.cell_area() * f.cell_area();
    if (method == EnergyMethod::direct) return pair_sum_direct(f, l) * h4;
    if (!f.domain().periodic()) throw DomainError("convolution method requires a torus domain");
    return pair_sum_from_residual(f.values(), pair_residual(f, l)) * h4;
}

inline double nonlocal_energy(const GridField& f, const AnisotropyKernel& kernel,
                              EnergyMethod method = EnergyMethod::convolution) {
    detail::check_kernel_field(kernel, f.components());
    if (method == EnergyMethod::convolution && !f.domain().periodic())
        throw DomainError("convolution method requires a torus domain");
    return nonlocal_energy(f, kernel_lattice(kernel, f.domain(), f.m1(), f.m2()), method);
}

inline EnergyBreakdown energy_eps(const GridField& f, const PairLattice& l, double eps,
                                  EnergyMethod method = EnergyMethod::convolution) {
    detail::check_eps(eps);
    const double w = detail::w_sum(f.values(), f.components()) * f.cell_area() / eps;
    return detail::make_breakdown(w, nonlocal_energy(f, l, method), eps);
}

inline EnergyBreakdown energy_eps(const GridField& f, const AnisotropyKernel& kernel, double eps,
                                  EnergyMethod method = EnergyMethod::convolution) {
    detail::check_eps(eps);
    detail::check_kernel_field(kernel, f.components());
    if (method == EnergyMethod::convolution && !f.domain().periodic())
        throw DomainError("convolution method requires a torus domain");
    return energy_eps(f, kernel_lattice(kernel, f.domain(), f.m1(), f.m2()), eps, method);
}

/// Strip fields: the same double sum over the full m1 x m2 torus grid, reduced along the first axis.
inline double nonlocal_energy(const StripField& f, const PairLattice& strip) {
    const double h4 = f.h1() * f.h2() * f.h1() * f.h2();
    return pair_sum_from_residual(f.profile(), strip_residual(f, strip)) * f.m1() * h4;
}

inline EnergyBreakdown energy_eps(const StripField& f, const PairLattice& strip, double eps) {
    detail::check_eps(eps);
    const double w = detail::w_sum(f.profile(), f.components()) * f.m1() * f.h1() * f.h2() / eps;
    return detail::make_breakdown(w, nonlocal_energy(f, strip), eps);
}

inline EnergyBreakdown energy_eps(const StripField& f, const AnisotropyKernel& kernel, double eps) {
    detail::check_kernel_field(kernel, f.components());
    return energy_eps(f, kernel_strip_lattice(kernel, f.domain(), f.m1(), f.m2()), eps);
}

/// E*_k: the double sum with the band kernel Gamma_k, supported on |x - y| <= 2^-k.
inline double truncated_energy(const GridField& f, const AnisotropyKernel& kernel, int k) {
    detail::check_kernel_field(kernel, f.components());
    if (k < 0) throw DomainError("truncation level must be >= 0");
    const TruncatedKernel tk(kernel, k);
    const double radius = tk.support_radius();
    if (radius < std::max(f.h1(), f.h2())) throw DomainError("band 2^-k is not resolved by the grid spacing");
    const int n = f.components();
    const PairLattice l = PairLattice::build(f.domain(), f.m1(), f.m2(), n, [&](double z1, double z2, double* out) {
        const double r = std::hypot(z1, z2);
        const double w = tk.radial_weight(r);
        if (w == 0.0) {
            std::fill(out, out + n * n, 0.0);
            return;
        }
        kernel.gammahat_into(z1 / r, z2 / r, out);
        for (int q = 0; q < n * n; ++q) out[q] *= w;
    });
    // Sparse offset list: the band only reaches |d| <= 2^-k / h.
    const int r1 = std::min(f.m1() - 1, static_cast<int>(std::ceil(radius / f.h1()))),
              r2 = std::min(f.m2() - 1, static_cast<int>(std::ceil(radius / f.h2())));
    struct Off {
        int d1, d2;
        const double* g;
    };
    std::vector<Off> offs;
    const bool torus = f.domain().periodic();
    const int nn = n * n;
    auto nonzero = [&](const double* g) {
        for (int q = 0; q < nn; ++q)
            if (g[q] != 0.0) return true;
        return false;
    };
    if (torus) {
        // Distinct residues only, so wrap-around offsets are not counted twice.
        std::vector<char> seen(static_cast<std::size_t>(f.m1()) * f.m2(), 0);
        for (int a = -r1; a <= r1; ++a)
            for (int b = -r2; b <= r2; ++b) {
                const int ia = ((a % f.m1()) + f.m1()) % f.m1(), ib = ((b % f.m2()) + f.m2()) % f.m2();
                char& s = seen[static_cast<std::size_t>(ia) * f.m2() + ib];
                if (s) continue;
                s = 1;
                const double* g = l.block(ia, ib);
                if (nonzero(g)) offs.push_back({ia, ib, g});
            }
    } else {
        for (int a = -r1; a <= r1; ++a)
            for (int b = -r2; b <= r2; ++b) {
                const double* g = l.block(a, b);
                if (nonzero(g)) offs.push_back({a, b, g});
            }
    }
    const int m1 = f.m1(), m2 = f.m2();
    std::vector<double> rows(static_cast<std::size_t>(m1), 0.0);
    parallel_for(static_cast<std::size_t>(m1), [&](std::size_t iu) {
        const int i = static_cast<int>(iu);
        std::vector<double> d(static_cast<std::size_t>(n));
        double acc = 0.0;
        for (int j = 0; j < m2; ++j)
            for (const auto& o : offs) {
                int i2 = i - o.d1, j2 = j - o.d2;
                if (torus) {
                    i2 = ((i2 % m1) + m1) % m1;
                    j2 = ((j2 % m2) + m2) % m2;
                } else if (i2 < 0 || i2 >= m1 || j2 < 0 || j2 >= m2) {
                    continue;
                }
                for (int c = 0; c < n; ++c) d[static_cast<std::size_t>(c)] = f.at(i, j, c) - f.at(i2, j2, c);
                acc += detail::block_form(o.g, d.data(), n);
            }
        rows[iu] = acc;
    });
    double s = 0.0;
    for (double v : rows) s += v;
    return s * f.cell_area() * f.cell_area();
}

/// dE/du(x): (2/eps)(u - round u) h1 h2 + 4 [S u - G * u](x) h1^2 h2^2.
inline GridField energy_gradient(const GridField& f, const PairLattice& l, double eps) {
    detail::check_eps(eps);
    const auto r = pair_residual(f, l);
    GridField g(f.domain(), f.m1(), f.m2(), f.components());
    const double h2 = f.cell_area(), h4 = h2 * h2;
    const auto& u = f.values();
    auto& out = g.values();
    for (std::size_t k = 0; k < u.size(); ++k)
        out[k] = 2.0 / eps * (u[k] - std::nearbyint(u[k])) * h2 + 4.0 * r[k] * h4;
    return g;
}

inline GridField energy_gradient(const GridField& f, const AnisotropyKernel& kernel, double eps) {
    detail::check_kernel_field(kernel, f.components());
    return energy_gradient(f, kernel_lattice(kernel, f.domain(), f.m1(), f.m2()), eps);
}

struct MinimizerStep {
    int iteration;
    double energy;
    double grad_norm;
    double step;
};

struct MinimizerTrace {
    std::vector<MinimizerStep> steps;
    bool converged = false;
};

struct MinimizeOptions {
    int max_iter = 500;
    double grad_tol = 1e-10;
    double initial_step = 0.0;  // 0: 1 / (curvature estimate)
    double growth = 2.0;        // step multiplier after an accepted step
    int max_halvings = 60;
};

struct MinimizeResult {
    GridField field;
    MinimizerTrace trace;
};

/// Gradient descent with Armijo backtracking (constant 1e-4, halving).
inline MinimizeResult minimize(const GridField& start, const AnisotropyKernel& kernel, double eps,
                               const MinimizeOptions& opts = {}) {
    detail::check_eps(eps);
    detail::check_kernel_field(kernel, start.components());
    if (!start.domain().periodic()) throw DomainError("minimize requires a torus domain");
    if (opts.max_iter < 0 || !(opts.grad_tol >= 0.0)) throw DomainError("invalid minimizer options");
    const PairLattice l = kernel_lattice(kernel, start.domain(), start.m1(), start.m2());
    double step = opts.initial_step;
    if (!(step > 0.0)) {
        const Eigen::SelfAdjointEigenSolver<Matrix> es(l.offset_sum());
        const double smax = std::max(0.0, es.eigenvalues().cwiseAbs().maxCoeff());
        const double h2 = start.cell_area();
        step = 1.0 / (2.0 / eps * h2 + 8.0 * smax * h2 * h2);
    }
    GridField u = start;
    MinimizerTrace trace;
    double e = energy_eps(u, l, eps).total;
    for (int it = 0;; ++it) {
        const GridField g = energy_gradient(u, l, eps);
        double gn2 = 0.0;
        for (double v : g.values()) gn2 += v * v;
        const double gn = std::sqrt(gn2);
        trace.steps.push_back({it, e, gn, 0.0});
        if (gn <= opts.grad_tol) {
            trace.converged = true;
            break;
        }
        if (it >= opts.max_iter) break;
        bool accepted = false;
        for (int halving = 0; halving <= opts.max_halvings; ++halving) {
            GridField trial = u;
            auto& tv = trial.values();
            for (std::size_t k = 0; k < tv.size(); ++k) tv[k] -= step * g.values()[k];
            const double et = energy_eps(trial, l, eps).total;
            if (et <= e - 1e-4 * step * gn2 && et < e) {
                u = std::move(trial);
                e = et;
                trace.steps.back().step = step;
                step *= opts.growth;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "line search failed after %d halvings at iteration %d (energy %.17g, |grad| %.3g)",
                          opts.max_halvings, it, e, gn);
            throw ConvergenceError(buf, gn);
        }
    }
    return {std::move(u), std::move(trace)};
}

} // namespace pnlt
