#pragma once

// Grid-sampled pair kernels G(x - y) and the sums built on them:
//   sum_{x != y} G(x - y)(u(x) - u(y)).(u(x) - u(y)) h1^2 h2^2
// On a torus offsets use the minimal image; when two images tie (offset exactly half a period)
// their values are averaged so that G(d) = G(-d) holds exactly.

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "pnlt/error.hpp"
#include "pnlt/fft.hpp"
#include "pnlt/fields.hpp"
#include "pnlt/kernel.hpp"
#include "pnlt/parallel.hpp"

namespace pnlt {

/// Pair kernel on offsets of an m1 x m2 grid; each entry is an n x n row-major block.
/// Torus offsets are indexed by (d1 mod m1, d2 mod m2); box offsets by
/// (d1 + m1 - 1, d2 + m2 - 1) on a (2 m1 - 1) x (2 m2 - 1) table.
class PairLattice {
public:
    PairLattice() = default;

    DomainKind kind() const noexcept { return kind_; }
    int m1() const noexcept { return m1_; }
    int m2() const noexcept { return m2_; }
    int components() const noexcept { return n_; }
    double h1() const noexcept { return h1_; }
    double h2() const noexcept { return h2_; }
    int rows() const noexcept { return kind_ == DomainKind::torus ? m1_ : 2 * m1_ - 1; }
    int cols() const noexcept { return kind_ == DomainKind::torus ? m2_ : 2 * m2_ - 1; }

    const double* block(int d1, int d2) const {
        std::size_t idx;
        if (kind_ == DomainKind::torus)
            idx = static_cast<std::size_t>(((d1 % m1_) + m1_) % m1_) * m2_ + static_cast<std::size_t>(((d2 % m2_) + m2_) % m2_);
        else
            idx = static_cast<std::size_t>(d1 + m1_ - 1) * static_cast<std::size_t>(2 * m2_ - 1) +
                  static_cast<std::size_t>(d2 + m2_ - 1);
        return g_.data() + idx * static_cast<std::size_t>(n_ * n_);
    }

    /// S = sum over all offsets of G (torus only; on a box the sum depends on the base point).
    const Matrix& offset_sum() const noexcept { return sum_; }
    const std::vector<double>& data() const noexcept { return g_; }

    /// eval(z1, z2, out) writes the n x n block at the nonzero offset z.
    template <class F>
    static PairLattice build(const DomainSpec& domain, int m1, int m2, int n, F&& eval) {
        PairLattice l;
        l.kind_ = domain.kind;
        l.m1_ = m1;
        l.m2_ = m2;
        l.n_ = n;
        l.h1_ = domain.side1 / m1;
        l.h2_ = domain.side2 / m2;
        const std::size_t nn = static_cast<std::size_t>(n) * n;
        const int r = l.rows(), c = l.cols();
        l.g_.assign(static_cast<std::size_t>(r) * c * nn, 0.0);
        parallel_for(static_cast<std::size_t>(r), [&](std::size_t iu) {
            std::vector<double> tmp(nn);
            const int i = static_cast<int>(iu);
            for (int j = 0; j < c; ++j) {
                double* out = l.g_.data() + (static_cast<std::size_t>(i) * c + j) * nn;
                if (l.kind_ == DomainKind::torus) {
                    l.torus_entry(i, j, eval, tmp.data(), out);
                } else {
                    const int d1 = i - (m1 - 1), d2 = j - (m2 - 1);
                    if (d1 != 0 || d2 != 0) eval(d1 * l.h1_, d2 * l.h2_, out);
                }
            }
        });
        l.sum_ = Matrix::Zero(n, n);
        for (std::size_t p = 0; p < static_cast<std::size_t>(r) * c; ++p)
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) l.sum_(a, b) += l.g_[p * nn + static_cast<std::size_t>(a) * n + b];
        return l;
    }

    /// Strip reduction on a torus: K(d2) = sum over d1 of G(d1, d2), with K(0) = 0. The result is
    /// stored as a 1 x m2 torus lattice.
    template <class F>
    static PairLattice build_strip(const DomainSpec& domain, int m1, int m2, int n, F&& eval) {
        if (!domain.periodic()) throw DomainError("strip lattices live on a torus");
        PairLattice l;
        l.kind_ = DomainKind::torus;
        l.m1_ = m1;
        l.m2_ = m2;
        l.n_ = n;
        l.h1_ = domain.side1 / m1;
        l.h2_ = domain.side2 / m2;
        l.strip_ = true;
        const std::size_t nn = static_cast<std::size_t>(n) * n;
        l.g_.assign(static_cast<std::size_t>(m2) * nn, 0.0);
        parallel_for(static_cast<std::size_t>(m2), [&](std::size_t ju) {
            const int j = static_cast<int>(ju);
            if (j == 0) return;
            std::vector<double> tmp(nn), entry(nn);
            double* out = l.g_.data() + static_cast<std::size_t>(j) * nn;
            for (int i = 0; i < m1; ++i) {
                l.torus_entry(i, j, eval, tmp.data(), entry.data());
                for (std::size_t q = 0; q < nn; ++q) out[q] += entry[q];
            }
        });
        l.sum_ = Matrix::Zero(n, n);
        for (int j = 0; j < m2; ++j)
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) l.sum_(a, b) += l.g_[static_cast<std::size_t>(j) * nn + static_cast<std::size_t>(a) * n + b];
        return l;
    }

    bool is_strip() const noexcept { return strip_; }

private:
    template <class F>
    void torus_entry(int i, int j, F& eval, double* tmp, double* out) const {
        const std::size_t nn = static_cast<std::size_t>(n_) * n_;
        std::fill(out, out + nn, 0.0);
        if (i == 0 && j == 0) return;
        int c1[2], c2[2];
        const int k1 = images(i, m1_, c1), k2 = images(j, m2_, c2);
        for (int a = 0; a < k1; ++a)
            for (int b = 0; b < k2; ++b) {
                eval(c1[a] * h1_, c2[b] * h2_, tmp);
                for (std::size_t q = 0; q < nn; ++q) out[q] += tmp[q];
            }
        const double inv = 1.0 / (k1 * k2);
        for (std::size_t q = 0; q < nn; ++q) out[q] *= inv;
    }

    static int images(int d, int m, int* out) {
        if (2 * d == m) {
            out[0] = d;
            out[1] = d - m;
            return 2;
        }
        out[0] = 2 * d < m ? d : d - m;
        return 1;
    }

    DomainKind kind_ = DomainKind::torus;
    int m1_ = 0, m2_ = 0, n_ = 0;
    double h1_ = 0.0, h2_ = 0.0;
    bool strip_ = false;
    std::vector<double> g_;
    Matrix sum_;
};

inline PairLattice kernel_lattice(const AnisotropyKernel& kernel, const DomainSpec& domain, int m1, int m2) {
    const int n = kernel.components();
    return PairLattice::build(domain, m1, m2, n, [&](double z1, double z2, double* out) {
        const double r = std::hypot(z1, z2);
        kernel.gammahat_into(z1 / r, z2 / r, out);
        const double w = 1.0 / (r * r * r);
        for (int q = 0; q < n * n; ++q) out[q] *= w;
    });
}

inline PairLattice kernel_strip_lattice(const AnisotropyKernel& kernel, const DomainSpec& domain, int m1, int m2) {
    const int n = kernel.components();
    return PairLattice::build_strip(domain, m1, m2, n, [&](double z1, double z2, double* out) {
        const double r = std::hypot(z1, z2);
        kernel.gammahat_into(z1 / r, z2 / r, out);
        const double w = 1.0 / (r * r * r);
        for (int q = 0; q < n * n; ++q) out[q] *= w;
    });
}

/// Scalar |z|^-3 weight times the n x n identity.
inline PairLattice seminorm_lattice(const DomainSpec& domain, int m1, int m2, int n) {
    return PairLattice::build(domain, m1, m2, n, [&](double z1, double z2, double* out) {
        const double r = std::hypot(z1, z2);
        std::fill(out, out + n * n, 0.0);
        for (int a = 0; a < n; ++a) out[a * n + a] = 1.0 / (r * r * r);
    });
}

namespace detail {

inline void check_lattice(const GridField& f, const PairLattice& l) {
    if (l.is_strip() || l.kind() != f.domain().kind || l.m1() != f.m1() || l.m2() != f.m2() ||
        l.components() != f.components())
        throw DomainError("pair lattice does not match the field layout");
}

/// G * u by FFT for a periodic layout with `points` samples per component (component fastest in u).
inline std::vector<double> circulant_apply(const fft::Shape& shape, const std::vector<double>& g, int n,
                                           const std::vector<double>& u) {
    const std::size_t pts = shape.real_size(), nc = shape.complex_size();
    const std::size_t nn = static_cast<std::size_t>(n) * n;
    std::vector<fft::Spectrum> uh(static_cast<std::size_t>(n));
    std::vector<double> buf(pts);
    for (int b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < pts; ++p) buf[p] = u[p * n + b];
        uh[static_cast<std::size_t>(b)] = fft::forward(shape, buf);
    }
    std::vector<fft::Spectrum> acc(static_cast<std::size_t>(n), fft::Spectrum(nc));
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            for (std::size_t p = 0; p < pts; ++p) buf[p] = g[p * nn + static_cast<std::size_t>(a) * n + b];
            const fft::Spectrum gh = fft::forward(shape, buf);
            auto& dst = acc[static_cast<std::size_t>(a)];
            const auto& src = uh[static_cast<std::size_t>(b)];
            for (std::size_t k = 0; k < nc; ++k) dst[k] += gh[k] * src[k];
        }
    std::vector<double> out(pts * n);
    for (int a = 0; a < n; ++a) {
        const auto v = fft::inverse(shape, acc[static_cast<std::size_t>(a)]);
        for (std::size_t p = 0; p < pts; ++p) out[p * n + a] = v[p];
    }
    return out;
}

inline double block_form(const double* g, const double* d, int n) {
    double s = 0.0;
    for (int a = 0; a < n; ++a) {
        double row = 0.0;
        for (int b = 0; b < n; ++b) row += g[a * n + b] * d[b];
        s += d[a] * row;
    }
    return s;
}

} // namespace detail

/// Literal double sum over ordered pairs of distinct cells (no h^4 factor).
inline double pair_sum_direct(const GridField& f, const PairLattice& l) {
    detail::check_lattice(f, l);
    const int m1 = f.m1(), m2 = f.m2(), n = f.components();
    std::vector<double> rows(static_cast<std::size_t>(m1), 0.0);
    parallel_for(static_cast<std::size_t>(m1), [&](std::size_t iu) {
        const int i = static_cast<int>(iu);
        std::vector<double> d(static_cast<std::size_t>(n));
        double acc = 0.0;
        for (int j = 0; j < m2; ++j)
            for (int i2 = 0; i2 < m1; ++i2)
                for (int j2 = 0; j2 < m2; ++j2) {
                    if (i2 == i && j2 == j) continue;
                    for (int c = 0; c < n; ++c) d[static_cast<std::size_t>(c)] = f.at(i, j, c) - f.at(i2, j2, c);
                    acc += detail::block_form(l.block(i - i2, j - j2), d.data(), n);
                }
        rows[iu] = acc;
    });
    double s = 0.0;
    for (double v : rows) s += v;
    return s;
}

/// r(x) = sum_y G(x - y)(u(x) - u(y)) = S u(x) - (G * u)(x). FFT on a torus, direct on a box.
inline std::vector<double> pair_residual(const GridField& f, const PairLattice& l) {
    detail::check_lattice(f, l);
    const int m1 = f.m1(), m2 = f.m2(), n = f.components();
    const auto& u = f.values();
    std::vector<double> r(u.size(), 0.0);
    if (f.domain().periodic()) {
        const auto conv = detail::circulant_apply(fft::Shape{{m1, m2}}, l.data(), n, u);
        const Matrix& s = l.offset_sum();
        for (std::size_t p = 0; p < f.points(); ++p)
            for (int a = 0; a < n; ++a) {
                double su = 0.0;
                for (int b = 0; b < n; ++b) su += s(a, b) * u[p * n + b];
                r[p * n + a] = su - conv[p * n + a];
            }
        return r;
    }
    parallel_for(static_cast<std::size_t>(m1), [&](std::size_t iu) {
        const int i = static_cast<int>(iu);
        std::vector<double> d(static_cast<std::size_t>(n));
        for (int j = 0; j < m2; ++j) {
            double* out = r.data() + (static_cast<std::size_t>(i) * m2 + j) * n;
            for (int i2 = 0; i2 < m1; ++i2)
                for (int j2 = 0; j2 < m2; ++j2) {
                    if (i2 == i && j2 == j) continue;
                    for (int c = 0; c < n; ++c) d[static_cast<std::size_t>(c)] = f.at(i, j, c) - f.at(i2, j2, c);
                    const double* g = l.block(i - i2, j - j2);
                    for (int a = 0; a < n; ++a)
                        for (int b = 0; b < n; ++b) out[a] += g[a * n + b] * d[static_cast<std::size_t>(b)];
                }
        }
    });
    return r;
}

/// Double sum via 2 sum_x u(x).r(x) (no h^4 factor).
inline double pair_sum_from_residual(const std::vector<double>& u, const std::vector<double>& r) {
    double s = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * r[k];
    return 2.0 * s;
}

/// Strip residual r(j) = sum_{j'} K(j - j')(u(j) - u(j')), via a 1D FFT.
inline std::vector<double> strip_residual(const StripField& f, const PairLattice& l) {
    if (!l.is_strip() || l.m1() != f.m1() || l.m2() != f.m2() || l.components() != f.components())
        throw DomainError("strip lattice does not match the field layout");
    const int n = f.components();
    const auto& u = f.profile();
    const auto conv = detail::circulant_apply(fft::Shape{{f.m2()}}, l.data(), n, u);
    const Matrix& s = l.offset_sum();
    std::vector<double> r(u.size());
    for (int j = 0; j < f.m2(); ++j)
        for (int a = 0; a < n; ++a) {
            double su = 0.0;
            for (int b = 0; b < n; ++b) su += s(a, b) * u[static_cast<std::size_t>(j) * n + b];
            r[static_cast<std::size_t>(j) * n + a] = su - conv[static_cast<std::size_t>(j) * n + a];
        }
    return r;
}

/// Discrete H^{1/2} seminorm squared: sum_{x != y} |u(x) - u(y)|^2 / |x - y|^3 h1^2 h2^2.
inline double h12_seminorm_sq(const GridField& f) {
    const PairLattice l = seminorm_lattice(f.domain(), f.m1(), f.m2(), f.components());
    const double h4 = f.cell_area() * f.cell_area();
    if (f.domain().periodic()) return pair_sum_from_residual(f.values(), pair_residual(f, l)) * h4;
    return pair_sum_direct(f, l) * h4;
}

} // namespace pnlt
