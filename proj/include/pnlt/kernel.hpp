#pragma once

// Elastic interaction kernel Gamma(z) = |z|^-3 * Gammahat(z/|z|) acting on R^N-valued slip,
// together with its dyadic band truncations.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pnlt/error.hpp"

namespace pnlt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Vec2 = Eigen::Vector2d;

inline constexpr int kDefaultEllipticitySamples = 4096;

struct EllipticityBounds {
    double lambda_min = 0.0;
    double lambda_max = 0.0;
};

class AnisotropyKernel {
public:
    struct Cubic {
        double mu;
        double nu;
    };
    struct Tabulated {
        // K row-major N x N samples at theta_j = 2 pi j / K.
        std::vector<std::vector<double>> samples;
    };

    /// Isotropic cubic crystal kernel (two slip systems, N = 2).
    static AnisotropyKernel cubic(double mu, double nu, int ellipticity_samples = kDefaultEllipticitySamples) {
        if (!(mu > 0.0) || !(nu > -1.0) || !(nu < 1.0))
            throw ConstructionError("kernel not elliptic: cubic kernel needs mu > 0 and nu in (-1, 1/2)");
        AnisotropyKernel k(2, Cubic{mu, nu});
        k.certify(ellipticity_samples);
        return k;
    }

    /// Tabulated angular kernel. Samples are symmetrized (A + A^T)/2 and averaged with the
    /// sample at theta + pi so the interpolant is exactly even.
    static AnisotropyKernel tabulated(const std::vector<Matrix>& samples,
                                      int ellipticity_samples = kDefaultEllipticitySamples) {
        const auto count = samples.size();
        if (count == 0 || count % 2 != 0)
            throw ConstructionError("tabulated kernel needs an even, positive number of samples");
        const auto n = samples.front().rows();
        if (n <= 0) throw ConstructionError("tabulated kernel needs N >= 1");
        for (const auto& m : samples)
            if (m.rows() != n || m.cols() != n)
                throw ConstructionError("tabulated kernel samples must all be N x N");
        const std::size_t half = count / 2;
        Tabulated tab;
        tab.samples.resize(count);
        for (std::size_t j = 0; j < count; ++j) {
            const Matrix& a = samples[j];
            const Matrix& b = samples[(j + half) % count];
            Matrix s = 0.25 * (a + a.transpose() + b + b.transpose());
            auto& out = tab.samples[j];
            out.resize(static_cast<std::size_t>(n * n));
            for (Eigen::Index r = 0; r < n; ++r)
                for (Eigen::Index c = 0; c < n; ++c) out[static_cast<std::size_t>(r * n + c)] = s(r, c);
        }
        AnisotropyKernel k(static_cast<int>(n), std::move(tab));
        k.certify(ellipticity_samples);
        return k;
    }

    /// Reads "N K" followed by K lines of the N(N+1)/2 upper-triangular entries.
    static AnisotropyKernel load(const std::string& path, int ellipticity_samples = kDefaultEllipticitySamples) {
        std::ifstream in(path);
        if (!in) throw LookupError("cannot open kernel table '" + path + "'");
        std::string line;
        int n = 0, count = 0;
        if (!std::getline(in, line)) throw ConstructionError(path + ":1: missing header \"N K\"");
        {
            std::istringstream head(line);
            if (!(head >> n >> count) || n <= 0 || count <= 0)
                throw ConstructionError(path + ":1: expected positive integers \"N K\"");
        }
        std::vector<Matrix> samples;
        samples.reserve(static_cast<std::size_t>(count));
        for (int j = 0; j < count; ++j) {
            if (!std::getline(in, line))
                throw ConstructionError(path + ":" + std::to_string(j + 2) + ": missing sample row");
            std::istringstream row(line);
            Matrix m(n, n);
            for (int r = 0; r < n; ++r)
                for (int c = r; c < n; ++c) {
                    double v;
                    if (!(row >> v))
                        throw ConstructionError(path + ":" + std::to_string(j + 2) + ": expected " +
                                                std::to_string(n * (n + 1) / 2) + " entries");
                    m(r, c) = v;
                    m(c, r) = v;
                }
            samples.push_back(std::move(m));
        }
        return tabulated(samples, ellipticity_samples);
    }

    int components() const noexcept { return n_; }
    double lambda_min() const noexcept { return bounds_.lambda_min; }
    double lambda_max() const noexcept { return bounds_.lambda_max; }
    EllipticityBounds bounds() const noexcept { return bounds_; }
    bool is_cubic() const noexcept { return std::holds_alternative<Cubic>(variant_); }
    const std::variant<Cubic, Tabulated>& variant() const noexcept { return variant_; }

    std::string id() const {
        char buf[128];
        if (const auto* c = std::get_if<Cubic>(&variant_))
            std::snprintf(buf, sizeof buf, "cubic(mu=%.17g,nu=%.17g)", c->mu, c->nu);
        else
            std::snprintf(buf, sizeof buf, "tabulated(N=%d,K=%zu)", n_,
                          std::get<Tabulated>(variant_).samples.size());
        return buf;
    }

    /// Writes Gammahat(y/|y|) into out (row-major N x N). y must be nonzero; it need not be unit.
    void gammahat_into(double y1, double y2, double* out) const {
        // Canonical half-plane representative makes evaluation exactly even.
        if (y2 < 0.0 || (y2 == 0.0 && y1 < 0.0)) {
            y1 = -y1;
            y2 = -y2;
        }
        if (const auto* c = std::get_if<Cubic>(&variant_)) {
            const double r2 = y1 * y1 + y2 * y2;
            const double pref = c->mu / (16.0 * std::numbers::pi * (1.0 - c->nu));
            const double nu = c->nu;
            out[0] = pref * (nu + 1.0 - 3.0 * nu * (y2 * y2) / r2);
            out[1] = pref * (3.0 * nu * (y1 * y2) / r2);
            out[2] = out[1];
            out[3] = pref * (nu + 1.0 - 3.0 * nu * (y1 * y1) / r2);
            return;
        }
        const auto& s = std::get<Tabulated>(variant_).samples;
        const std::size_t count = s.size();
        const double step = 2.0 * std::numbers::pi / static_cast<double>(count);
        const double t = std::atan2(y2, y1) / step;  // in [0, count/2]
        auto j = static_cast<std::size_t>(std::floor(t));
        double frac = t - static_cast<double>(j);
        if (j >= count) {
            j = count - 1;
            frac = 1.0;
        }
        const auto& a = s[j];
        const auto& b = s[(j + 1) % count];
        const std::size_t nn = a.size();
        for (std::size_t i = 0; i < nn; ++i) out[i] = (1.0 - frac) * a[i] + frac * b[i];
    }

    Matrix gammahat(const Vec2& y) const {
        Matrix m(n_, n_);
        std::vector<double> buf(static_cast<std::size_t>(n_ * n_));
        gammahat_into(y.x(), y.y(), buf.data());
        for (int r = 0; r < n_; ++r)
            for (int c = 0; c < n_; ++c) m(r, c) = buf[static_cast<std::size_t>(r * n_ + c)];
        return m;
    }

    Matrix gammahat_angle(double theta) const { return gammahat(Vec2(std::cos(theta), std::sin(theta))); }

    /// Gamma(z) = |z|^-3 Gammahat(z/|z|).
    Matrix gamma(const Vec2& z) const {
        const double r = z.norm();
        if (r == 0.0) throw DomainError("singular point: kernel evaluated at z = 0");
        return gammahat(z) / (r * r * r);
    }

private:
    AnisotropyKernel(int n, std::variant<Cubic, Tabulated> v) : n_(n), variant_(std::move(v)) {}

    void certify(int samples);

    friend EllipticityBounds check_ellipticity(const AnisotropyKernel&, int);

    int n_;
    std::variant<Cubic, Tabulated> variant_;
    EllipticityBounds bounds_{};
};

/// Extreme eigenvalues of Gammahat over n_samples uniform angles. Throws ConstructionError
/// ("kernel not elliptic") when some sample is not positive definite.
inline EllipticityBounds check_ellipticity(const AnisotropyKernel& kernel, int n_samples) {
    if (n_samples < 4) throw DomainError("ellipticity check needs at least 4 samples");
    const int n = kernel.components();
    EllipticityBounds b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    std::vector<double> buf(static_cast<std::size_t>(n * n));
    Eigen::SelfAdjointEigenSolver<Matrix> solver;
    for (int j = 0; j < n_samples; ++j) {
        const double theta = 2.0 * std::numbers::pi * j / n_samples;
        kernel.gammahat_into(std::cos(theta), std::sin(theta), buf.data());
        const Matrix m = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            buf.data(), n, n);
        solver.compute(m, Eigen::EigenvaluesOnly);
        const auto& ev = solver.eigenvalues();
        b.lambda_min = std::min(b.lambda_min, ev.minCoeff());
        b.lambda_max = std::max(b.lambda_max, ev.maxCoeff());
    }
    if (!(b.lambda_min > 0.0) || !std::isfinite(b.lambda_max)) {
        char buf2[96];
        std::snprintf(buf2, sizeof buf2, "kernel not elliptic (smallest sampled eigenvalue %.6g)", b.lambda_min);
        throw ConstructionError(buf2);
    }
    return b;
}

inline void AnisotropyKernel::certify(int samples) { bounds_ = check_ellipticity(*this, samples); }

/// Dyadic band Gamma_k of the kernel, supported in |z| <= 2^-k.
class TruncatedKernel {
public:
    TruncatedKernel(AnisotropyKernel base, int level) : base_(std::move(base)), level_(level) {
        if (level < 0) throw DomainError("truncation level must be >= 0");
    }

    const AnisotropyKernel& base() const noexcept { return base_; }
    int level() const noexcept { return level_; }
    double support_radius() const noexcept { return std::ldexp(1.0, -level_); }

    /// Radial weight multiplying Gammahat at distance r > 0.
    double radial_weight(double r) const noexcept { return band_weight(level_, r); }

    static double band_weight(int k, double r) noexcept {
        const double outer = std::ldexp(1.0, -k);
        const double inner = std::ldexp(1.0, -k - 1);
        if (r > outer) return 0.0;
        const double base = std::ldexp(1.0, 3 * k);
        if (r <= inner) return std::ldexp(1.0, 3 * (k + 1)) - base;
        return 1.0 / (r * r * r) - base;
    }

    Matrix eval(const Vec2& z) const {
        const double r = z.norm();
        if (r == 0.0) throw DomainError("singular point: truncated kernel evaluated at z = 0");
        const double w = radial_weight(r);
        if (w == 0.0) return Matrix::Zero(base_.components(), base_.components());
        return base_.gammahat(z) * w;
    }

private:
    AnisotropyKernel base_;
    int level_;
};

} // namespace pnlt
