#pragma once

// Slip-field representations: sampled grids, axis-invariant strips, polyhedral (piecewise
// constant) fields, mollification, replicated shifts, and BV / H^{1/2} measurements.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pnlt/error.hpp"
#include "pnlt/kernel.hpp"
#include "pnlt/linetension.hpp"
#include "pnlt/parallel.hpp"
#include "pnlt/quadrature.hpp"

namespace pnlt {

enum class DomainKind { torus, box };

inline const char* to_string(DomainKind k) { return k == DomainKind::torus ? "torus" : "box"; }

struct DomainSpec {
    DomainKind kind = DomainKind::torus;
    double side1 = 1.0;
    double side2 = 1.0;

    double area() const noexcept { return side1 * side2; }
    bool periodic() const noexcept { return kind == DomainKind::torus; }

    void validate() const {
        if (!(side1 > 0.0) || !(side2 > 0.0) || !std::isfinite(side1) || !std::isfinite(side2))
            throw DomainError("domain sides must be positive and finite");
    }

    /// Maps a point of the plane into [0, side1) x [0, side2) (torus only).
    Vec2 wrap(const Vec2& x) const {
        if (!periodic()) return x;
        double a = std::fmod(x.x(), side1), b = std::fmod(x.y(), side2);
        if (a < 0.0) a += side1;
        if (b < 0.0) b += side2;
        if (a >= side1) a -= side1;
        if (b >= side2) b -= side2;
        return {a, b};
    }

    bool operator==(const DomainSpec&) const = default;
};

/// Sampled field u : grid -> R^N. Cell (i, j) has center ((i + 1/2) h1, (j + 1/2) h2); storage is
/// row-major in (i, j) with the component index fastest.
class GridField {
public:
    GridField(DomainSpec domain, int m1, int m2, int n_components)
        : GridField(domain, m1, m2, n_components,
                    std::vector<double>(static_cast<std::size_t>(m1) * static_cast<std::size_t>(m2) *
                                            static_cast<std::size_t>(std::max(n_components, 0)),
                                        0.0)) {}

    GridField(DomainSpec domain, int m1, int m2, int n_components, std::vector<double> values)
        : domain_(domain), m1_(m1), m2_(m2), n_(n_components), values_(std::move(values)) {
        domain_.validate();
        if (m1 <= 0 || m2 <= 0 || n_components <= 0) throw DomainError("grid dimensions must be positive");
        if (values_.size() != static_cast<std::size_t>(m1) * m2 * n_components)
            throw DomainError("grid value array has the wrong size");
        for (double v : values_)
            if (!std::isfinite(v)) throw DomainError("grid values must be finite");
    }

    static GridField constant(DomainSpec domain, int m1, int m2, const Vector& value) {
        GridField f(domain, m1, m2, static_cast<int>(value.size()));
        for (std::size_t p = 0; p < f.points(); ++p)
            for (int c = 0; c < f.n_; ++c) f.values_[p * f.n_ + c] = value(c);
        return f;
    }

    /// Samples fn at every cell center.
    static GridField sample(DomainSpec domain, int m1, int m2, int n_components,
                            const std::function<Vector(const Vec2&)>& fn) {
        GridField f(domain, m1, m2, n_components);
        parallel_for(static_cast<std::size_t>(m1), [&](std::size_t i) {
            for (int j = 0; j < m2; ++j) {
                const Vector v = fn(f.center(static_cast<int>(i), j));
                for (int c = 0; c < n_components; ++c) f.at(static_cast<int>(i), j, c) = v(c);
            }
        });
        return f;
    }

    const DomainSpec& domain() const noexcept { return domain_; }
    int m1() const noexcept { return m1_; }
    int m2() const noexcept { return m2_; }
    int components() const noexcept { return n_; }
    std::size_t points() const noexcept { return static_cast<std::size_t>(m1_) * static_cast<std::size_t>(m2_); }
    double h1() const noexcept { return domain_.side1 / m1_; }
    double h2() const noexcept { return domain_.side2 / m2_; }
    double cell_area() const noexcept { return h1() * h2(); }

    Vec2 center(int i, int j) const { return {(i + 0.5) * h1(), (j + 0.5) * h2()}; }

    double& at(int i, int j, int c) { return values_[(static_cast<std::size_t>(i) * m2_ + j) * n_ + c]; }
    double at(int i, int j, int c) const { return values_[(static_cast<std::size_t>(i) * m2_ + j) * n_ + c]; }

    Vector value(int i, int j) const {
        Vector v(n_);
        for (int c = 0; c < n_; ++c) v(c) = at(i, j, c);
        return v;
    }

    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }

    /// One component as a contiguous m1 x m2 array.
    std::vector<double> component(int c) const {
        std::vector<double> out(points());
        for (std::size_t p = 0; p < points(); ++p) out[p] = values_[p * n_ + c];
        return out;
    }

    bool same_layout(const GridField& o) const {
        return domain_ == o.domain_ && m1_ == o.m1_ && m2_ == o.m2_ && n_ == o.n_;
    }

    GridField& operator+=(const GridField& o) {
        if (!same_layout(o)) throw DomainError("grid fields have different layouts");
        for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += o.values_[k];
        return *this;
    }

    GridField& operator*=(double s) {
        for (double& v : values_) v *= s;
        return *this;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

private:
    DomainSpec domain_;
    int m1_, m2_, n_;
    std::vector<double> values_;
};

/// Field on a torus grid that is constant along the first axis: only the profile over the m2
/// rows of the second axis is stored, while m1 records the virtual first-axis resolution so
/// every grid quantity (quadratures, kernel lattice sums) matches the expanded GridField.
class StripField {
public:
    StripField(DomainSpec domain, int m1, int m2, int n_components, std::vector<double> profile)
        : domain_(domain), m1_(m1), m2_(m2), n_(n_components), profile_(std::move(profile)) {
        domain_.validate();
        if (!domain_.periodic()) throw DomainError("strip fields live on a torus");
        if (m1 <= 0 || m2 <= 0 || n_components <= 0) throw DomainError("grid dimensions must be positive");
        if (profile_.size() != static_cast<std::size_t>(m2) * n_components)
            throw DomainError("strip profile has the wrong size");
    }

    StripField(DomainSpec domain, int m1, int m2, int n_components)
        : StripField(domain, m1, m2, n_components,
                     std::vector<double>(static_cast<std::size_t>(m2) * static_cast<std::size_t>(n_components), 0.0)) {}

    /// Extracts the profile of a grid field; throws unless the field is exactly constant along axis 1.
    static StripField from_grid(const GridField& f) {
        if (!f.domain().periodic()) throw DomainError("strip fields live on a torus");
        StripField s(f.domain(), f.m1(), f.m2(), f.components());
        for (int j = 0; j < f.m2(); ++j)
            for (int c = 0; c < f.components(); ++c) {
                const double v = f.at(0, j, c);
                for (int i = 1; i < f.m1(); ++i)
                    if (f.at(i, j, c) != v) throw DomainError("field is not invariant along the first axis");
                s.at(j, c) = v;
            }
        return s;
    }

    /// Samples fn along the column x1 = h1 / 2.
    static StripField sample(DomainSpec domain, int m1, int m2, int n_components,
                             const std::function<Vector(const Vec2&)>& fn) {
        StripField s(domain, m1, m2, n_components);
        parallel_for(static_cast<std::size_t>(m2), [&](std::size_t j) {
            const Vector v = fn(Vec2(0.5 * s.h1(), (static_cast<double>(j) + 0.5) * s.h2()));
            for (int c = 0; c < n_components; ++c) s.at(static_cast<int>(j), c) = v(c);
        });
        return s;
    }

    GridField expand() const {
        GridField f(domain_, m1_, m2_, n_);
        for (int i = 0; i < m1_; ++i)
            for (int j = 0; j < m2_; ++j)
                for (int c = 0; c < n_; ++c) f.at(i, j, c) = at(j, c);
        return f;
    }

    const DomainSpec& domain() const noexcept { return domain_; }
    int m1() const noexcept { return m1_; }
    int m2() const noexcept { return m2_; }
    int components() const noexcept { return n_; }
    double h1() const noexcept { return domain_.side1 / m1_; }
    double h2() const noexcept { return domain_.side2 / m2_; }
    double& at(int j, int c) { return profile_[static_cast<std::size_t>(j) * n_ + c]; }
    double at(int j, int c) const { return profile_[static_cast<std::size_t>(j) * n_ + c]; }
    const std::vector<double>& profile() const noexcept { return profile_; }
    std::vector<double>& profile() noexcept { return profile_; }

    StripField& operator*=(double s) {
        for (double& v : profile_) v *= s;
        return *this;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : profile_) m = std::max(m, std::abs(v));
        return m;
    }

private:
    DomainSpec domain_;
    int m1_, m2_, n_;
    std::vector<double> profile_;
};

// ---------------------------------------------------------------------------------------------
// Polyhedral fields

struct Cell {
    std::vector<Vec2> polygon;  // convex, counter-clockwise after construction
    Burgers value;              // integer coefficients; the field value is sigma * value
};

struct JumpSegment {
    Vec2 a;
    Vec2 b;
    Vec2 normal;   // unit, pointing towards the side whose value is u+
    Burgers jump;  // (u+ - u-) / sigma, nonzero
    double length() const { return (b - a).norm(); }
};

class PolyhedralField {
public:
    /// periodic: when set, the cells must tile [0, side1) x [0, side2) and edges on opposite
    /// sides of the fundamental domain are matched.
    PolyhedralField(double sigma, int n_components, std::vector<Cell> cells,
                    std::optional<DomainSpec> periodic = std::nullopt)
        : sigma_(sigma), n_(n_components), cells_(std::move(cells)), periodic_(periodic) {
        if (!(sigma > 0.0)) throw ConstructionError("polyhedral field needs sigma > 0");
        if (n_components <= 0) throw ConstructionError("polyhedral field needs N >= 1");
        if (cells_.empty()) throw ConstructionError("polyhedral field needs at least one cell");
        double total = 0.0;
        for (auto& cell : cells_) {
            if (static_cast<int>(cell.value.size()) != n_)
                throw ConstructionError("cell value has the wrong number of components");
            if (cell.polygon.size() < 3) throw ConstructionError("cell polygon needs at least 3 vertices");
            double a = signed_area(cell.polygon);
            if (a < 0.0) {
                std::reverse(cell.polygon.begin(), cell.polygon.end());
                a = -a;
            }
            if (!(a > 0.0)) throw ConstructionError("degenerate cell polygon");
            if (!is_convex(cell.polygon)) throw ConstructionError("cell polygons must be convex");
            total += a;
        }
        if (periodic_) {
            periodic_->validate();
            if (!periodic_->periodic()) throw ConstructionError("periodic polyhedral fields need a torus domain");
            if (std::abs(total - periodic_->area()) > 1e-9 * periodic_->area())
                throw ConstructionError("cells do not tile the periodic domain");
        }
        derive_segments();
    }

    double sigma() const noexcept { return sigma_; }
    int components() const noexcept { return n_; }
    const std::vector<Cell>& cells() const noexcept { return cells_; }
    const std::vector<JumpSegment>& segments() const noexcept { return segments_; }
    const std::optional<DomainSpec>& periodic() const noexcept { return periodic_; }

    /// Index of the cell containing x (wrapped on a torus). Points on shared edges go to the
    /// lowest cell index.
    std::optional<std::size_t> locate(const Vec2& x) const {
        const Vec2 p = periodic_ ? periodic_->wrap(x) : x;
        for (std::size_t c = 0; c < cells_.size(); ++c)
            if (contains(cells_[c].polygon, p)) return c;
        return std::nullopt;
    }

    const Burgers& coefficients_at(const Vec2& x) const {
        const auto c = locate(x);
        if (!c) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "point (%.9g, %.9g) is not covered by the polyhedral field", x.x(), x.y());
            throw LookupError(buf);
        }
        return cells_[*c].value;
    }

    Vector value_at(const Vec2& x) const {
        const Burgers& b = coefficients_at(x);
        Vector v(n_);
        for (int c = 0; c < n_; ++c) v(c) = sigma_ * b[static_cast<std::size_t>(c)];
        return v;
    }

    double sup_norm() const {
        double m = 0.0;
        for (const auto& cell : cells_) m = std::max(m, sigma_ * norm(cell.value));
        return m;
    }

    /// True when every jump segment is horizontal (normal +-e2), so the field is constant along x1.
    bool invariant_along_x1() const {
        if (!periodic_) return false;
        return std::all_of(segments_.begin(), segments_.end(),
                           [](const JumpSegment& s) { return std::abs(s.normal.x()) < 1e-12; });
    }

    /// Copy with a different quantization scale (same geometry and integer jumps).
    PolyhedralField with_sigma(double sigma) const { return PolyhedralField(sigma, n_, cells_, periodic_); }

    static double signed_area(const std::vector<Vec2>& poly) {
        double s = 0.0;
        for (std::size_t k = 0; k < poly.size(); ++k) {
            const Vec2& p = poly[k];
            const Vec2& q = poly[(k + 1) % poly.size()];
            s += p.x() * q.y() - q.x() * p.y();
        }
        return 0.5 * s;
    }

private:
    static double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

    static bool is_convex(const std::vector<Vec2>& poly) {
        for (std::size_t k = 0; k < poly.size(); ++k) {
            const Vec2& a = poly[k];
            const Vec2& b = poly[(k + 1) % poly.size()];
            const Vec2& c = poly[(k + 2) % poly.size()];
            if (cross(b - a, c - b) < -1e-12 * (b - a).norm() * (c - b).norm()) return false;
        }
        return true;
    }

    static bool contains(const std::vector<Vec2>& poly, const Vec2& p) {
        for (std::size_t k = 0; k < poly.size(); ++k) {
            const Vec2& a = poly[k];
            const Vec2& b = poly[(k + 1) % poly.size()];
            if (cross(b - a, p - a) < -1e-12 * (b - a).norm()) return false;
        }
        return true;
    }

    void derive_segments() {
        std::vector<Vec2> shifts{Vec2::Zero()};
        if (periodic_)
            for (int s1 = -1; s1 <= 1; ++s1)
                for (int s2 = -1; s2 <= 1; ++s2)
                    if (s1 != 0 || s2 != 0) shifts.emplace_back(s1 * periodic_->side1, s2 * periodic_->side2);
        for (std::size_t p = 0; p < cells_.size(); ++p) {
            const auto& pp = cells_[p].polygon;
            // A cell meets its own periodic images only where its value equals itself: no jump.
            for (std::size_t q = p + 1; q < cells_.size(); ++q) {
                const auto& qq = cells_[q].polygon;
                for (const Vec2& shift : shifts)
                    for (std::size_t e = 0; e < pp.size(); ++e) {
                        const Vec2 a = pp[e], b = pp[(e + 1) % pp.size()];
                        for (std::size_t f = 0; f < qq.size(); ++f)
                            add_overlap(p, q, a, b, qq[f] + shift, qq[(f + 1) % qq.size()] + shift);
                    }
            }
        }
    }

    void add_overlap(std::size_t p, std::size_t q, const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
        const Vec2 dir = b - a;
        const double len = dir.norm();
        const double tol = 1e-12 * std::max(1.0, len);
        if (std::abs(cross(dir, c - a)) > tol * len || std::abs(cross(dir, d - a)) > tol * len) return;
        if (dir.dot(d - c) >= 0.0) return;  // shared edges run in opposite directions
        const double tc = dir.dot(c - a) / (len * len), td = dir.dot(d - a) / (len * len);
        const double lo = std::max(0.0, std::min(tc, td)), hi = std::min(1.0, std::max(tc, td));
        if (hi - lo <= 1e-12) return;
        Burgers jump(static_cast<std::size_t>(n_));
        bool nonzero = false;
        for (int k = 0; k < n_; ++k) {
            jump[static_cast<std::size_t>(k)] = cells_[q].value[static_cast<std::size_t>(k)] - cells_[p].value[static_cast<std::size_t>(k)];
            nonzero = nonzero || jump[static_cast<std::size_t>(k)] != 0;
        }
        if (!nonzero) return;
        const Vec2 outward = Vec2(dir.y(), -dir.x()) / len;  // from cell p into cell q
        segments_.push_back({a + lo * dir, a + hi * dir, outward, std::move(jump)});
    }

    double sigma_;
    int n_;
    std::vector<Cell> cells_;
    std::optional<DomainSpec> periodic_;
    std::vector<JumpSegment> segments_;
};

struct BvMeasure {
    double total = 0.0;
    std::vector<double> per_segment;
};

/// |Dv| = sum over jump segments of length * |jump| * sigma.
inline BvMeasure bv_measure(const PolyhedralField& pf) {
    BvMeasure m;
    for (const auto& s : pf.segments()) {
        const double v = s.length() * norm(s.jump) * pf.sigma();
        m.per_segment.push_back(v);
        m.total += v;
    }
    return m;
}

/// Cell-center sampling of a polyhedral field on the given grid.
inline GridField rasterize(const PolyhedralField& pf, const DomainSpec& domain, int m1, int m2) {
    GridField f(domain, m1, m2, pf.components());
    parallel_for(static_cast<std::size_t>(m1), [&](std::size_t i) {
        for (int j = 0; j < m2; ++j) {
            const Burgers& b = pf.coefficients_at(f.center(static_cast<int>(i), j));
            for (int c = 0; c < pf.components(); ++c)
                f.at(static_cast<int>(i), j, c) = pf.sigma() * b[static_cast<std::size_t>(c)];
        }
    });
    return f;
}

inline StripField rasterize_strip(const PolyhedralField& pf, const DomainSpec& domain, int m1, int m2) {
    if (!pf.invariant_along_x1()) throw DomainError("polyhedral field is not invariant along the first axis");
    return StripField::sample(domain, m1, m2, pf.components(), [&](const Vec2& x) { return pf.value_at(x); });
}

/// Total variation of a grid field along grid lines: sum over neighbouring cell pairs of
/// |u(x) - u(y)| times the shared face length.
inline double grid_bv(const GridField& f) {
    double s = 0.0;
    const bool wrap = f.domain().periodic();
    for (int i = 0; i < f.m1(); ++i)
        for (int j = 0; j < f.m2(); ++j) {
            auto diff = [&](int a, int b) {
                double d = 0.0;
                for (int c = 0; c < f.components(); ++c) {
                    const double t = f.at(i, j, c) - f.at(a, b, c);
                    d += t * t;
                }
                return std::sqrt(d);
            };
            if (i + 1 < f.m1() || wrap) s += diff((i + 1) % f.m1(), j) * f.h2();
            if (j + 1 < f.m2() || wrap) s += diff(i, (j + 1) % f.m2()) * f.h1();
        }
    return s;
}

// ---------------------------------------------------------------------------------------------
// Mollifiers

/// Radial mollifier phi_0 = c * P(|x|): P is 1 on B_{1/2} and falls smoothly to 0 at |x| = 0.6,
/// with c chosen for unit mass (c > 1, so phi_0 >= 1 on B_{1/2}). Scaled copies are
/// phi_lambda(x) = lambda^-2 phi_0(x / lambda); the dyadic index h means lambda = 2^-h.
class Mollifier {
public:
    static constexpr double kPlateau = 0.5;
    static constexpr double kOuter = 0.6;

    static Mollifier with_scale(double lambda) {
        if (!(lambda > 0.0)) throw DomainError("mollifier scale must be positive");
        return Mollifier(lambda);
    }
    static Mollifier dyadic(int h) { return Mollifier(std::ldexp(1.0, -h)); }

    double scale() const noexcept { return scale_; }

    /// Unnormalized profile P(r).
    static double profile(double r) {
        if (r <= kPlateau) return 1.0;
        if (r >= kOuter) return 0.0;
        const double t = (kOuter - r) / (kOuter - kPlateau);
        auto f = [](double s) { return s > 0.0 ? std::exp(-1.0 / s) : 0.0; };
        return f(t) / (f(t) + f(1.0 - t));
    }

    /// Normalization c with integral of c P(|x|) dx = 1.
    static double unit_mass_constant() {
        static const double c = [] {
            const GaussLegendre rule(64);
            double mass = std::numbers::pi * kPlateau * kPlateau;
            const int panels = 64;
            const double w = (kOuter - kPlateau) / panels;
            for (int p = 0; p < panels; ++p)
                mass += rule.integrate([](double r) { return 2.0 * std::numbers::pi * r * profile(r); },
                                       kPlateau + p * w, kPlateau + (p + 1) * w);
            return 1.0 / mass;
        }();
        return c;
    }

    /// Continuous density phi_lambda(x).
    double density(const Vec2& x) const {
        return unit_mass_constant() * profile(x.norm() / scale_) / (scale_ * scale_);
    }

    struct Tap {
        int d1, d2;
        double weight;
    };

    /// Grid-sampled weights on spacing (h1, h2), renormalized to unit sum.
    std::vector<Tap> stencil(double h1, double h2) const {
        if (scale_ < std::max(h1, h2) * (1.0 - 1e-12))
            throw DomainError("unresolved mollifier: scale is below the grid spacing");
        const int r1 = static_cast<int>(std::ceil(kOuter * scale_ / h1)), r2 = static_cast<int>(std::ceil(kOuter * scale_ / h2));
        std::vector<Tap> taps;
        double sum = 0.0;
        for (int a = -r1; a <= r1; ++a)
            for (int b = -r2; b <= r2; ++b) {
                const double w = density(Vec2(a * h1, b * h2));
                if (w > 0.0) {
                    taps.push_back({a, b, w});
                    sum += w;
                }
            }
        for (auto& t : taps) t.weight /= sum;
        return taps;
    }

private:
    explicit Mollifier(double scale) : scale_(scale) {}
    double scale_;
};

/// Discrete convolution with the renormalized mollifier stencil. Torus: periodic wrap (mean is
/// preserved exactly). Box: taps leaving the domain are dropped and the rest renormalized.
inline GridField mollify(const GridField& f, const Mollifier& m) {
    const auto taps = m.stencil(f.h1(), f.h2());
    GridField out(f.domain(), f.m1(), f.m2(), f.components());
    const bool wrap = f.domain().periodic();
    const int m1 = f.m1(), m2 = f.m2(), n = f.components();
    parallel_for(static_cast<std::size_t>(m1), [&](std::size_t iu) {
        const int i = static_cast<int>(iu);
        std::vector<double> acc(static_cast<std::size_t>(n));
        for (int j = 0; j < m2; ++j) {
            std::fill(acc.begin(), acc.end(), 0.0);
            double mass = 0.0;
            for (const auto& t : taps) {
                int a = i - t.d1, b = j - t.d2;
                if (wrap) {
                    a = ((a % m1) + m1) % m1;
                    b = ((b % m2) + m2) % m2;
                } else if (a < 0 || a >= m1 || b < 0 || b >= m2) {
                    continue;
                }
                mass += t.weight;
                for (int c = 0; c < n; ++c) acc[static_cast<std::size_t>(c)] += t.weight * f.at(a, b, c);
            }
            for (int c = 0; c < n; ++c) out.at(i, j, c) = wrap ? acc[static_cast<std::size_t>(c)] : acc[static_cast<std::size_t>(c)] / mass;
        }
    });
    return out;
}

/// Strip version: the 2D stencil summed along the first axis, which is exact for fields
/// constant along that axis.
inline StripField mollify(const StripField& f, const Mollifier& m) {
    const auto taps = m.stencil(f.h1(), f.h2());
    int reach = 0;
    for (const auto& t : taps) reach = std::max(reach, std::abs(t.d2));
    std::vector<double> w(static_cast<std::size_t>(2 * reach + 1), 0.0);
    for (const auto& t : taps) w[static_cast<std::size_t>(t.d2 + reach)] += t.weight;
    StripField out(f.domain(), f.m1(), f.m2(), f.components());
    const int m2 = f.m2(), n = f.components();
    parallel_for(static_cast<std::size_t>(m2), [&](std::size_t ju) {
        const int j = static_cast<int>(ju);
        for (int d = -reach; d <= reach; ++d) {
            const double wt = w[static_cast<std::size_t>(d + reach)];
            if (wt == 0.0) continue;
            const int b = (((j - d) % m2) + m2) % m2;
            for (int c = 0; c < n; ++c) out.at(j, c) += wt * f.at(b, c);
        }
    });
    return out;
}

// ---------------------------------------------------------------------------------------------
// Replicated shifts

/// x -> sum_{j=1}^{floor(L)} (1/L) v(x + rho^alpha (j/L) zeta).
class ReplicatedField {
public:
    ReplicatedField(const PolyhedralField& pf, double copies_l, const Vec2& zeta, double rho, double alpha)
        : pf_(&pf), l_(copies_l), zeta_(zeta), shift_scale_(std::pow(rho, alpha)) {
        if (!(copies_l > 0.0)) throw DomainError("replication count L must be positive");
        if (zeta.norm() > 1.0 + 1e-12) throw DomainError("shift direction zeta must lie in the closed unit ball");
        if (!(rho > 0.0)) throw DomainError("rho must be positive");
        if (!(alpha > 0.0 && alpha < 0.5)) throw DomainError("alpha outside (0, 1/2)");
    }

    int copies() const noexcept { return static_cast<int>(std::floor(l_)); }
    double l() const noexcept { return l_; }

    /// Shift of copy j (1-based).
    Vec2 offset(int j) const { return shift_scale_ * (static_cast<double>(j) / l_) * zeta_; }

    Vector operator()(const Vec2& x) const {
        Vector v = Vector::Zero(pf_->components());
        for (int j = 1; j <= copies(); ++j) v += pf_->value_at(x + offset(j)) / l_;
        return v;
    }

    /// Single copy j: x -> (1/L) v(x + offset(j)).
    Vector copy(int j, const Vec2& x) const { return pf_->value_at(x + offset(j)) / l_; }

    /// The L -> infinity limit: integral over t in [0, 1] of v(x + rho^alpha zeta t).
    Vector limit(const Vec2& x) const { return running_average(*pf_, x, shift_scale_ * zeta_); }

    /// Exact integral over t in [0, 1] of v(x + t d) for a polyhedral v: the path is split at every
    /// crossing with a cell edge (and with the fundamental-domain boundary on a torus).
    static Vector running_average(const PolyhedralField& pf, const Vec2& x, const Vec2& d) {
        std::vector<double> cuts{0.0, 1.0};
        const auto& per = pf.periodic();
        auto add_line_cuts = [&](const Vec2& start, const Vec2& dir, double t0, double t1) {
            for (const auto& cell : pf.cells()) {
                const auto& poly = cell.polygon;
                for (std::size_t k = 0; k < poly.size(); ++k) {
                    const Vec2 a = poly[k], b = poly[(k + 1) % poly.size()];
                    const Vec2 e = b - a;
                    const double den = dir.x() * e.y() - dir.y() * e.x();
                    if (std::abs(den) < 1e-300) continue;
                    const Vec2 w = a - start;
                    const double t = (w.x() * e.y() - w.y() * e.x()) / den;
                    const double s = (w.x() * dir.y() - w.y() * dir.x()) / den;
                    if (s >= -1e-12 && s <= 1.0 + 1e-12 && t > t0 && t < t1) cuts.push_back(t);
                }
            }
        };
        if (per) {
            // Domain-boundary crossings, then edge crossings within each periodic piece.
            std::vector<double> pieces{0.0, 1.0};
            for (int axis = 0; axis < 2; ++axis) {
                const double side = axis == 0 ? per->side1 : per->side2;
                const double s0 = x(axis), ds = d(axis);
                if (ds == 0.0) continue;
                const double lo = std::min(s0, s0 + ds), hi = std::max(s0, s0 + ds);
                for (double k = std::ceil(lo / side); k * side <= hi; k += 1.0) {
                    const double t = (k * side - s0) / ds;
                    if (t > 0.0 && t < 1.0) pieces.push_back(t);
                }
            }
            std::sort(pieces.begin(), pieces.end());
            for (std::size_t p = 0; p + 1 < pieces.size(); ++p) {
                const double tm = 0.5 * (pieces[p] + pieces[p + 1]);
                const Vec2 mid = x + tm * d;
                const Vec2 shift(per->side1 * std::floor(mid.x() / per->side1), per->side2 * std::floor(mid.y() / per->side2));
                add_line_cuts(x - shift, d, pieces[p], pieces[p + 1]);
                cuts.push_back(pieces[p]);
            }
        } else {
            add_line_cuts(x, d, 0.0, 1.0);
        }
        std::sort(cuts.begin(), cuts.end());
        Vector acc = Vector::Zero(pf.components());
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
            const double len = cuts[k + 1] - cuts[k];
            if (len <= 0.0) continue;
            acc += len * pf.value_at(x + 0.5 * (cuts[k] + cuts[k + 1]) * d);
        }
        return acc;
    }

private:
    const PolyhedralField* pf_;
    double l_;
    Vec2 zeta_;
    double shift_scale_;
};

inline ReplicatedField replicate_shift(const PolyhedralField& pf, double copies_l, const Vec2& zeta, double rho,
                                       double alpha) {
    return ReplicatedField(pf, copies_l, zeta, rho, alpha);
}

// ---------------------------------------------------------------------------------------------
// File formats

/// "PNFIELD v1\nkind M1 M2 N side1 side2\n" followed by little-endian float64 values.
inline void write_grid_field(const GridField& f, std::ostream& out) {
    char head[256];
    std::snprintf(head, sizeof head, "PNFIELD v1\n%s %d %d %d %.17g %.17g\n", to_string(f.domain().kind), f.m1(),
                  f.m2(), f.components(), f.domain().side1, f.domain().side2);
    out << head;
    for (double v : f.values()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof v);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        char bytes[8];
        std::memcpy(bytes, &bits, 8);
        out.write(bytes, 8);
    }
}

inline GridField read_grid_field(std::istream& in, const std::string& source = "field") {
    std::string magic;
    if (!std::getline(in, magic) || magic != "PNFIELD v1") throw LookupError(source + ": missing PNFIELD v1 header");
    std::string line;
    if (!std::getline(in, line)) throw LookupError(source + ": missing layout line");
    std::istringstream ss(line);
    std::string kind;
    int m1 = 0, m2 = 0, n = 0;
    double s1 = 0.0, s2 = 0.0;
    if (!(ss >> kind >> m1 >> m2 >> n >> s1 >> s2) || (kind != "torus" && kind != "box"))
        throw LookupError(source + ": malformed layout line '" + line + "'");
    DomainSpec d{kind == "torus" ? DomainKind::torus : DomainKind::box, s1, s2};
    if (m1 <= 0 || m2 <= 0 || n <= 0) throw LookupError(source + ": nonpositive dimensions");
    std::vector<double> values(static_cast<std::size_t>(m1) * m2 * n);
    for (double& v : values) {
        char bytes[8];
        if (!in.read(bytes, 8)) throw LookupError(source + ": truncated value block");
        std::uint64_t bits;
        std::memcpy(&bits, bytes, 8);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        std::memcpy(&v, &bits, 8);
    }
    return GridField(d, m1, m2, n, std::move(values));
}

/// Text format:
///   sigma <s>
///   components <N>
///   periodic <side1> <side2>      (optional; the cells then tile the torus)
///   cell <v1> ... <vN>
///   <x> <y>                       (one vertex per line)
///   end
/// Blank lines and lines starting with '#' are ignored.
inline PolyhedralField read_polyhedral_field(std::istream& in, const std::string& source = "polyhedral field") {
    double sigma = 1.0;
    int n = 0;
    std::optional<DomainSpec> periodic;
    std::vector<Cell> cells;
    std::optional<Cell> open;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) { throw ConfigError(source + ":" + std::to_string(lineno) + ": " + msg); };
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "sigma") {
            if (!(ss >> sigma)) fail("expected a number after 'sigma'");
        } else if (word == "components") {
            if (!(ss >> n) || n <= 0) fail("expected a positive integer after 'components'");
        } else if (word == "periodic") {
            DomainSpec d{DomainKind::torus, 0.0, 0.0};
            if (!(ss >> d.side1 >> d.side2)) fail("expected two side lengths after 'periodic'");
            periodic = d;
        } else if (word == "cell") {
            if (open) fail("'cell' before 'end' of the previous cell");
            if (n <= 0) fail("'components' must precede the first cell");
            Cell c;
            int v;
            while (ss >> v) c.value.push_back(v);
            if (static_cast<int>(c.value.size()) != n) fail("cell value needs " + std::to_string(n) + " integers");
            open = std::move(c);
        } else if (word == "end") {
            if (!open) fail("'end' without 'cell'");
            cells.push_back(std::move(*open));
            open.reset();
        } else {
            if (!open) fail("unexpected '" + word + "'");
            std::istringstream vs(line);
            double x, y;
            if (!(vs >> x >> y)) fail("expected a vertex 'x y'");
            open->polygon.emplace_back(x, y);
        }
    }
    if (open) fail("missing 'end'");
    try {
        return PolyhedralField(sigma, n, std::move(cells), periodic);
    } catch (const ConstructionError& e) {
        throw ConfigError(source + ": " + e.what());
    }
}

inline void write_polyhedral_field(const PolyhedralField& pf, std::ostream& out) {
    out << "sigma " << detail::format_double(pf.sigma()) << "\ncomponents " << pf.components() << '\n';
    if (pf.periodic())
        out << "periodic " << detail::format_double(pf.periodic()->side1) << ' '
            << detail::format_double(pf.periodic()->side2) << '\n';
    for (const auto& c : pf.cells()) {
        out << "cell";
        for (int v : c.value) out << ' ' << v;
        out << '\n';
        for (const auto& p : c.polygon) out << detail::format_double(p.x()) << ' ' << detail::format_double(p.y()) << '\n';
        out << "end\n";
    }
}

/// Periodic strip field: value `inside` for a <= x2 < b, `outside` elsewhere, on side1 x side2.
inline PolyhedralField strip_field(double sigma, const DomainSpec& torus, double a, double b, const Burgers& inside,
                                   const Burgers& outside) {
    if (!(0.0 < a && a < b && b < torus.side2)) throw DomainError("strip bounds must satisfy 0 < a < b < side2");
    const double w = torus.side1, top = torus.side2;
    std::vector<Cell> cells{
        {{{0, 0}, {w, 0}, {w, a}, {0, a}}, outside},
        {{{0, a}, {w, a}, {w, b}, {0, b}}, inside},
        {{{0, b}, {w, b}, {w, top}, {0, top}}, outside},
    };
    return PolyhedralField(sigma, static_cast<int>(inside.size()), std::move(cells), torus);
}

} // namespace pnlt
