#pragma once

// Limit functionals: the line-tension energy of a polyhedral field, the self-energy F_self
// (bulk density g plus jump density) and F_0 = F_self + nonlocal form.

#include <cmath>
#include <optional>
#include <vector>

#include <json.hpp>

#include "pnlt/energy.hpp"
#include "pnlt/envelope.hpp"
#include "pnlt/error.hpp"
#include "pnlt/fields.hpp"
#include "pnlt/linetension.hpp"

namespace pnlt {

/// u = smooth + jump, sampled on an m1 x m2 grid of `domain`. Either part may be absent.
struct CompositeField {
    DomainSpec domain;
    int m1 = 0;
    int m2 = 0;
    int n_components = 0;
    std::optional<GridField> smooth;
    std::optional<PolyhedralField> jump;

    static CompositeField from_smooth(GridField f) {
        CompositeField c{f.domain(), f.m1(), f.m2(), f.components(), std::nullopt, std::nullopt};
        c.smooth = std::move(f);
        return c;
    }

    static CompositeField from_jump(PolyhedralField pf, const DomainSpec& domain, int m1, int m2) {
        CompositeField c{domain, m1, m2, pf.components(), std::nullopt, std::nullopt};
        c.jump = std::move(pf);
        return c;
    }

    void validate() const {
        domain.validate();
        if (m1 <= 0 || m2 <= 0 || n_components <= 0) throw DomainError("composite field needs positive dimensions");
        if (smooth && (smooth->domain() != domain || smooth->m1() != m1 || smooth->m2() != m2 ||
                       smooth->components() != n_components))
            throw DomainError("smooth part does not share the composite layout");
        if (jump && jump->components() != n_components) throw DomainError("jump part has the wrong number of components");
    }

    /// smooth + rasterized jump.
    GridField total() const {
        validate();
        GridField f = smooth ? *smooth : GridField(domain, m1, m2, n_components);
        if (jump) f += rasterize(*jump, domain, m1, m2);
        return f;
    }
};

struct SegmentSnap {
    int n_index;
    double snap_angle;
};

struct EltValue {
    double value = 0.0;
    double max_snap_angle = 0.0;
    std::vector<SegmentSnap> segments;
};

/// sum over jump segments of length * sigma * psi(jump, nu), nu snapped to the table grid.
inline EltValue elt_sigma(const PolyhedralField& pf, const LineTensionTable& table, bool use_relaxed) {
    if (table.n_components != pf.components()) throw DomainError("table and field have different component counts");
    EltValue out;
    for (const auto& s : pf.segments()) {
        const auto [j, angle] = table.snap(s.normal);
        const auto& row = table.at(s.jump, j);
        out.value += s.length() * pf.sigma() * (use_relaxed ? row.psi_rel_upper : row.psi);
        out.max_snap_angle = std::max(out.max_snap_angle, angle);
        out.segments.push_back({j, angle});
    }
    return out;
}

struct SelfEnergy {
    double ac = 0.0;
    double jump = 0.0;
    double total() const { return ac + jump; }
};

namespace detail {

/// Centered differences (periodic on a torus, one-sided at box edges); returns the N x 2 gradient.
inline Matrix grid_gradient(const GridField& f, int i, int j) {
    const int n = f.components(), m1 = f.m1(), m2 = f.m2();
    const bool torus = f.domain().periodic();
    Matrix g(n, 2);
    auto diff = [&](int axis, int c) {
        const int m = axis == 0 ? m1 : m2;
        const double h = axis == 0 ? f.h1() : f.h2();
        const int k = axis == 0 ? i : j;
        auto val = [&](int kk) { return axis == 0 ? f.at(kk, j, c) : f.at(i, kk, c); };
        if (m == 1) return 0.0;
        if (torus) return (val((k + 1) % m) - val((k - 1 + m) % m)) / (2.0 * h);
        if (k == 0) return (val(1) - val(0)) / h;
        if (k == m - 1) return (val(m - 1) - val(m - 2)) / h;
        return (val(k + 1) - val(k - 1)) / (2.0 * h);
    };
    for (int c = 0; c < n; ++c) {
        g(c, 0) = diff(0, c);
        g(c, 1) = diff(1, c);
    }
    return g;
}

} // namespace detail

/// integral of g(grad u) over the smooth part + sum over jump segments of length * sigma * g(jump (x) nu).
inline SelfEnergy f_self(const CompositeField& cf, const AtomSet& atoms) {
    cf.validate();
    if (atoms.n_components != cf.n_components) throw DomainError("atom set and field have different component counts");
    SelfEnergy out;
    if (cf.smooth) {
        const GridField& f = *cf.smooth;
        std::vector<double> rows(static_cast<std::size_t>(f.m1()), 0.0);
        parallel_for(static_cast<std::size_t>(f.m1()), [&](std::size_t iu) {
            double acc = 0.0;
            for (int j = 0; j < f.m2(); ++j) {
                const Matrix g = detail::grid_gradient(f, static_cast<int>(iu), j);
                if (!g.isZero(0.0)) acc += g_eval(atoms, g).value;
            }
            rows[iu] = acc;
        });
        for (double v : rows) out.ac += v;
        out.ac *= f.cell_area();
    }
    if (cf.jump) {
        for (const auto& s : cf.jump->segments())
            out.jump += s.length() * cf.jump->sigma() * g_eval(atoms, outer(s.jump, s.normal)).value;
    }
    return out;
}

struct LimitValue {
    SelfEnergy self;
    double nonlocal = 0.0;
    double f0() const { return self.total() + nonlocal; }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["f_self_ac"] = self.ac;
        j["f_self_jump"] = self.jump;
        j["nonlocal"] = nonlocal;
        j["f0"] = f0();
        return j;
    }
};

/// F_0 = F_self + sum_{x != y} Gamma(x - y)(u(x) - u(y)).(u(x) - u(y)) h^4 of the total field.
inline LimitValue f0(const CompositeField& cf, const AnisotropyKernel& kernel, const AtomSet& atoms) {
    LimitValue out;
    out.self = f_self(cf, atoms);
    const GridField total = cf.total();
    out.nonlocal = nonlocal_energy(total, kernel,
                                   cf.domain.periodic() ? EnergyMethod::convolution : EnergyMethod::direct);
    return out;
}

} // namespace pnlt
