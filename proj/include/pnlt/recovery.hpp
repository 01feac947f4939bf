#pragma once

// Recovery sequences and epsilon sweeps.
//
// mollified_jump:  w = phi_eps * v
// build_recovery:  w = ln(1/eps) (v_L * phi_eps),  v_L(x) = sum_{j=1}^{floor L} (1/L) v(x + rho^alpha (j/L) zeta),
//                  L = sigma ln(1/eps)
//
// Fields that are constant along x1 on a torus are handled through the exact strip reduction.

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pnlt/energy.hpp"
#include "pnlt/error.hpp"
#include "pnlt/fields.hpp"
#include "pnlt/kernel.hpp"
#include "pnlt/lattice.hpp"
#include "pnlt/linetension.hpp"

namespace pnlt {

struct RecoveryParams {
    double eps = 0.0;
    double rho = 0.0;
    double alpha = 0.0;
    Vec2 zeta = Vec2(0.0, 1.0);
    std::optional<double> margin;  // distance from the sampled domain to the edge of pf's coverage (box)

    double log_scale() const { return std::log(1.0 / eps); }
    double copies_l(double sigma) const { return sigma * log_scale(); }
    double shift_scale() const { return std::pow(rho, alpha); }

    /// All violated constraints; empty when valid.
    std::vector<std::string> diagnostics(double sigma, const DomainSpec& domain) const {
        std::vector<std::string> out;
        if (!(eps > 0.0 && eps < 1.0)) out.emplace_back("eps must lie in (0, 1)");
        if (!(alpha > 0.0 && alpha < 0.5)) out.emplace_back("alpha outside (0, 1/2)");
        if (!(rho > 0.0)) out.emplace_back("rho must be positive");
        if (!(zeta.norm() <= 1.0 + 1e-12)) out.emplace_back("zeta outside the closed unit ball");
        if (eps > 0.0 && eps < 1.0 && sigma * std::log(1.0 / eps) < 1.0)
            out.emplace_back("L = sigma ln(1/eps) is below 1");
        if (!domain.periodic() && rho > 0.0 && alpha > 0.0) {
            if (!margin)
                out.emplace_back("box domains need an explicit margin");
            else if (!(3.0 * shift_scale() < *margin))
                out.emplace_back("margin violated: 3 rho^alpha must be below the margin");
        }
        return out;
    }

    void validate(double sigma, const DomainSpec& domain) const {
        const auto d = diagnostics(sigma, domain);
        if (!d.empty()) {
            std::string msg = d.front();
            for (std::size_t k = 1; k < d.size(); ++k) msg += "; " + d[k];
            throw DomainError(msg);
        }
    }
};

struct GridDims {
    int m1 = 0;
    int m2 = 0;
};

/// Smallest grid with h <= eps / samples_per_eps on both axes.
inline GridDims dims_for_eps(const DomainSpec& domain, double eps, int samples_per_eps = 4) {
    if (samples_per_eps < 4) throw DomainError("grid policy requires at least 4 samples per eps");
    const auto m = [&](double side) {
        const double x = side * samples_per_eps / eps;
        const double r = std::nearbyint(x);
        return static_cast<int>(std::abs(x - r) <= 1e-9 * x ? r : std::ceil(x));
    };
    return {m(domain.side1), m(domain.side2)};
}

namespace detail {

inline void check_resolution(const DomainSpec& domain, GridDims dims, double eps) {
    const double h = std::max(domain.side1 / dims.m1, domain.side2 / dims.m2);
    if (h > eps / 4.0 * (1.0 + 1e-12)) throw DomainError("unresolved eps: grid spacing exceeds eps/4");
}

inline void check_integer_sigma_one(const PolyhedralField& pf) {
    if (pf.sigma() != 1.0) throw DomainError("mollified_jump expects sigma = 1");
}

} // namespace detail

inline GridField mollified_jump(const PolyhedralField& pf, const DomainSpec& domain, double eps, GridDims dims) {
    detail::check_integer_sigma_one(pf);
    detail::check_eps(eps);
    const GridField v = rasterize(pf, domain, dims.m1, dims.m2);
    return mollify(v, Mollifier::with_scale(eps));
}

inline StripField mollified_jump_strip(const PolyhedralField& pf, const DomainSpec& domain, double eps, GridDims dims) {
    detail::check_integer_sigma_one(pf);
    detail::check_eps(eps);
    return mollify(rasterize_strip(pf, domain, dims.m1, dims.m2), Mollifier::with_scale(eps));
}

namespace detail {

inline ReplicatedField replicated(const PolyhedralField& pf, const RecoveryParams& p) {
    return ReplicatedField(pf, p.copies_l(pf.sigma()), p.zeta, p.rho, p.alpha);
}

} // namespace detail

inline GridField build_recovery(const PolyhedralField& pf, const DomainSpec& domain, const RecoveryParams& params,
                                GridDims dims) {
    params.validate(pf.sigma(), domain);
    const ReplicatedField vl = detail::replicated(pf, params);
    GridField f = GridField::sample(domain, dims.m1, dims.m2, pf.components(), [&](const Vec2& x) { return vl(x); });
    f = mollify(f, Mollifier::with_scale(params.eps));
    f *= params.log_scale();
    return f;
}

inline StripField build_recovery_strip(const PolyhedralField& pf, const DomainSpec& domain,
                                       const RecoveryParams& params, GridDims dims) {
    params.validate(pf.sigma(), domain);
    if (!pf.invariant_along_x1()) throw DomainError("polyhedral field is not invariant along the first axis");
    const ReplicatedField vl = detail::replicated(pf, params);
    StripField f = StripField::sample(domain, dims.m1, dims.m2, pf.components(), [&](const Vec2& x) { return vl(x); });
    f = mollify(f, Mollifier::with_scale(params.eps));
    f *= params.log_scale();
    return f;
}

/// Single replicated copy j, built the same way: ln(1/eps) ((1/L) v(. + offset_j) * phi_eps).
inline StripField recovery_copy_strip(const PolyhedralField& pf, const DomainSpec& domain,
                                      const RecoveryParams& params, GridDims dims, int j) {
    const ReplicatedField vl = detail::replicated(pf, params);
    StripField f = StripField::sample(domain, dims.m1, dims.m2, pf.components(), [&](const Vec2& x) { return vl.copy(j, x); });
    f = mollify(f, Mollifier::with_scale(params.eps));
    f *= params.log_scale();
    return f;
}

inline GridField recovery_copy(const PolyhedralField& pf, const DomainSpec& domain, const RecoveryParams& params,
                               GridDims dims, int j) {
    const ReplicatedField vl = detail::replicated(pf, params);
    GridField f = GridField::sample(domain, dims.m1, dims.m2, pf.components(), [&](const Vec2& x) { return vl.copy(j, x); });
    f = mollify(f, Mollifier::with_scale(params.eps));
    f *= params.log_scale();
    return f;
}

/// Radical-inverse (van der Corput) sequence in base b.
inline double radical_inverse(std::uint64_t i, unsigned base) {
    double inv = 1.0 / base, f = inv, r = 0.0;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

/// Low-discrepancy points in the unit ball, accepted with probability proportional to the
/// mollifier profile (rejection against a third Halton coordinate).
inline std::vector<Vec2> zeta_candidates(int count) {
    if (count < 1) throw DomainError("choose_zeta needs at least one candidate");
    std::vector<Vec2> out;
    for (std::uint64_t i = 1; static_cast<int>(out.size()) < count; ++i) {
        const Vec2 p(2.0 * radical_inverse(i, 2) - 1.0, 2.0 * radical_inverse(i, 3) - 1.0);
        if (p.norm() > 1.0) continue;
        if (radical_inverse(i, 5) < Mollifier::profile(p.norm())) out.push_back(p);
    }
    return out;
}

struct ZetaChoice {
    Vec2 zeta;
    double proxy = 0.0;
    double mean_proxy = 0.0;
    std::vector<Vec2> candidates;
    std::vector<double> proxies;
};

/// Cross-interaction proxy: E(w_eps) minus the sum of single-copy energies.
inline double cross_proxy(const PolyhedralField& pf, const DomainSpec& domain, const RecoveryParams& params,
                          const AnisotropyKernel& kernel, GridDims dims) {
    const int copies = static_cast<int>(std::floor(params.copies_l(pf.sigma())));
    if (domain.periodic() && pf.invariant_along_x1()) {
        const PairLattice l = kernel_strip_lattice(kernel, domain, dims.m1, dims.m2);
        double e = energy_eps(build_recovery_strip(pf, domain, params, dims), l, params.eps).total;
        for (int j = 1; j <= copies; ++j) e -= energy_eps(recovery_copy_strip(pf, domain, params, dims, j), l, params.eps).total;
        return e;
    }
    const PairLattice l = kernel_lattice(kernel, domain, dims.m1, dims.m2);
    const EnergyMethod m = domain.periodic() ? EnergyMethod::convolution : EnergyMethod::direct;
    double e = energy_eps(build_recovery(pf, domain, params, dims), l, params.eps, m).total;
    for (int j = 1; j <= copies; ++j) e -= energy_eps(recovery_copy(pf, domain, params, dims, j), l, params.eps, m).total;
    return e;
}

/// Evaluates the proxy for n_candidates sampled zeta and returns the minimizer.
inline ZetaChoice choose_zeta(const PolyhedralField& pf, const DomainSpec& domain, RecoveryParams params,
                              const AnisotropyKernel& kernel, GridDims dims, int n_candidates) {
    ZetaChoice out;
    out.candidates = zeta_candidates(n_candidates);
    double best = std::numeric_limits<double>::infinity(), sum = 0.0;
    for (const auto& z : out.candidates) {
        params.zeta = z;
        const double p = cross_proxy(pf, domain, params, kernel, dims);
        out.proxies.push_back(p);
        sum += p;
        if (p < best) {
            best = p;
            out.zeta = z;
        }
    }
    out.proxy = best;
    out.mean_proxy = sum / static_cast<double>(out.candidates.size());
    return out;
}

// ---------------------------------------------------------------------------------------------
// Sweeps

enum class SweepKind { linetension, gamma };

struct ScalingRecord {
    double eps;
    EnergyBreakdown energy;
    double target;
    SweepKind kind;

    double per_log() const { return energy.per_log(); }
    double per_log2() const { return energy.per_log2(); }
    /// The quantity fitted against the target: nonlocal / ln for line-tension runs, total / ln^2 otherwise.
    double ratio() const {
        const double l = energy.log_scale();
        return kind == SweepKind::linetension ? energy.nonlocal_term / l : energy.total / (l * l);
    }
};

struct ScalingFit {
    double a = std::numeric_limits<double>::quiet_NaN();
    double b = std::numeric_limits<double>::quiet_NaN();
    double residual = std::numeric_limits<double>::quiet_NaN();
};

struct ScalingSweep {
    std::vector<ScalingRecord> records;
    ScalingFit fit;
    std::optional<Vec2> zeta;
};

/// Least squares ratio = a + b / ln(1/eps); residual is the RMS misfit.
inline ScalingFit fit_log_scaling(const std::vector<ScalingRecord>& records) {
    ScalingFit f;
    const std::size_t n = records.size();
    if (n == 0) return f;
    if (n == 1) {
        f.a = records[0].ratio();
        f.b = 0.0;
        f.residual = 0.0;
        return f;
    }
    Eigen::MatrixXd a(static_cast<Eigen::Index>(n), 2);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
        a(static_cast<Eigen::Index>(k), 0) = 1.0;
        a(static_cast<Eigen::Index>(k), 1) = 1.0 / records[k].energy.log_scale();
        y(static_cast<Eigen::Index>(k)) = records[k].ratio();
    }
    const Eigen::VectorXd c = a.colPivHouseholderQr().solve(y);
    f.a = c(0);
    f.b = c(1);
    f.residual = std::sqrt((a * c - y).squaredNorm() / static_cast<double>(n));
    return f;
}

/// sum over segments of length * sigma * psi(jump, nu), psi from the line integral at the exact normal.
inline double line_tension_target(const PolyhedralField& pf, const AnisotropyKernel& kernel) {
    double s = 0.0;
    for (const auto& seg : pf.segments()) s += seg.length() * pf.sigma() * psi_line(kernel, {seg.jump, seg.normal, kDefaultQuadNodes});
    return s;
}

struct SweepOptions {
    int samples_per_eps = 4;
    bool allow_strip = true;
};

namespace detail {

inline void check_dyadic_decreasing(const std::vector<double>& eps_list) {
    for (std::size_t k = 0; k < eps_list.size(); ++k) {
        int e = 0;
        const double mant = std::frexp(eps_list[k], &e);
        if (!(eps_list[k] > 0.0 && eps_list[k] < 1.0) || mant != 0.5)
            throw DomainError("eps list must hold dyadic values 2^-p in (0, 1)");
        if (k > 0 && !(eps_list[k] < eps_list[k - 1])) throw DomainError("eps list must be strictly decreasing");
    }
}

} // namespace detail

/// Line-tension regime: mollified_jump energies, target = integral of psi over the jump set.
inline ScalingSweep sweep_linetension(const PolyhedralField& pf, const DomainSpec& domain,
                                      const std::vector<double>& eps_list, const AnisotropyKernel& kernel,
                                      const SweepOptions& opts = {}) {
    detail::check_dyadic_decreasing(eps_list);
    detail::check_kernel_field(kernel, pf.components());
    ScalingSweep out;
    if (eps_list.empty()) return out;
    const double target = line_tension_target(pf, kernel);
    const bool strip = opts.allow_strip && domain.periodic() && pf.invariant_along_x1();
    for (double eps : eps_list) {
        const GridDims dims = dims_for_eps(domain, eps, opts.samples_per_eps);
        detail::check_resolution(domain, dims, eps);
        EnergyBreakdown e;
        if (strip) {
            e = energy_eps(mollified_jump_strip(pf, domain, eps, dims), kernel, eps);
        } else {
            e = energy_eps(mollified_jump(pf, domain, eps, dims), kernel, eps,
                           domain.periodic() ? EnergyMethod::convolution : EnergyMethod::direct);
        }
        out.records.push_back({eps, e, target, SweepKind::linetension});
    }
    out.fit = fit_log_scaling(out.records);
    return out;
}

/// Strain-gradient regime: build_recovery energies, target = line-tension energy of v plus the
/// nonlocal form of the running average v_inf (evaluated on the same grid).
inline ScalingSweep sweep_gamma(const PolyhedralField& pf, const DomainSpec& domain, const std::vector<double>& eps_list,
                                const AnisotropyKernel& kernel, const RecoveryParams& base,
                                const SweepOptions& opts = {}) {
    detail::check_dyadic_decreasing(eps_list);
    detail::check_kernel_field(kernel, pf.components());
    ScalingSweep out;
    out.zeta = base.zeta;
    if (eps_list.empty()) return out;
    const double lt = line_tension_target(pf, kernel);
    const bool strip = opts.allow_strip && domain.periodic() && pf.invariant_along_x1();
    for (double eps : eps_list) {
        RecoveryParams p = base;
        p.eps = eps;
        p.validate(pf.sigma(), domain);
        const GridDims dims = dims_for_eps(domain, eps, opts.samples_per_eps);
        detail::check_resolution(domain, dims, eps);
        const ReplicatedField vl = detail::replicated(pf, p);
        const auto vinf = [&](const Vec2& x) { return vl.limit(x); };
        EnergyBreakdown e;
        double nl_inf;
        if (strip) {
            const PairLattice l = kernel_strip_lattice(kernel, domain, dims.m1, dims.m2);
            e = energy_eps(build_recovery_strip(pf, domain, p, dims), l, eps);
            nl_inf = nonlocal_energy(StripField::sample(domain, dims.m1, dims.m2, pf.components(), vinf), l);
        } else {
            const PairLattice l = kernel_lattice(kernel, domain, dims.m1, dims.m2);
            const EnergyMethod m = domain.periodic() ? EnergyMethod::convolution : EnergyMethod::direct;
            e = energy_eps(build_recovery(pf, domain, p, dims), l, eps, m);
            nl_inf = nonlocal_energy(GridField::sample(domain, dims.m1, dims.m2, pf.components(), vinf), l, m);
        }
        out.records.push_back({eps, e, lt + nl_inf, SweepKind::gamma});
    }
    out.fit = fit_log_scaling(out.records);
    return out;
}

/// "eps,w_term,nonlocal,total,per_log,per_log2,target,fit_a,fit_residual"; fit columns on the last row.
inline void write_sweep_csv(const ScalingSweep& sweep, std::ostream& out) {
    out << "eps,w_term,nonlocal,total,per_log,per_log2,target,fit_a,fit_residual\n";
    for (std::size_t k = 0; k < sweep.records.size(); ++k) {
        const auto& r = sweep.records[k];
        out << detail::format_double(r.eps) << ',' << detail::format_double(r.energy.w_term) << ','
            << detail::format_double(r.energy.nonlocal_term) << ',' << detail::format_double(r.energy.total) << ','
            << detail::format_double(r.per_log()) << ',' << detail::format_double(r.per_log2()) << ','
            << detail::format_double(r.target) << ',';
        if (k + 1 == sweep.records.size())
            out << detail::format_double(sweep.fit.a) << ',' << detail::format_double(sweep.fit.residual);
        else
            out << ',';
        out << '\n';
    }
}

} // namespace pnlt
