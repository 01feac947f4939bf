#pragma once

// Line-tension densities: the unrelaxed density psi(b, n) by two independent quadratures, and
// an upper bound for its relaxation obtained from explicit microstructure moves.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pnlt/error.hpp"
#include "pnlt/kernel.hpp"
#include "pnlt/parallel.hpp"
#include "pnlt/quadrature.hpp"

namespace pnlt {

/// Integer Burgers coefficients b in Z^N.
using Burgers = std::vector<int>;

inline constexpr int kDefaultQuadNodes = 4096;

inline double norm(const Burgers& b) {
    double s = 0.0;
    for (int v : b) s += static_cast<double>(v) * v;
    return std::sqrt(s);
}

inline int max_norm(const Burgers& b) {
    int m = 0;
    for (int v : b) m = std::max(m, std::abs(v));
    return m;
}

inline Burgers negate(Burgers b) {
    for (int& v : b) v = -v;
    return b;
}

inline bool is_zero(const Burgers& b) {
    return std::all_of(b.begin(), b.end(), [](int v) { return v == 0; });
}

inline double quadratic_form(const Matrix& m, const Burgers& b) {
    double s = 0.0;
    for (std::size_t r = 0; r < b.size(); ++r)
        for (std::size_t c = 0; c < b.size(); ++c)
            s += static_cast<double>(b[r]) * m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * b[c];
    return s;
}

struct LineTensionQuery {
    Burgers b;
    Vec2 n;
    int quad_nodes = kDefaultQuadNodes;
};

namespace detail {
inline void check_query(const AnisotropyKernel& kernel, const LineTensionQuery& q) {
    if (static_cast<int>(q.b.size()) != kernel.components())
        throw DomainError("Burgers vector has " + std::to_string(q.b.size()) + " components, kernel expects " +
                          std::to_string(kernel.components()));
    if (std::abs(q.n.norm() - 1.0) > 1e-12) throw DomainError("line-tension normal must be a unit vector");
    if (q.quad_nodes < 16) throw DomainError("line-tension quadrature needs at least 16 nodes");
}

inline Vec2 perp(const Vec2& n) { return Vec2(-n.y(), n.x()); }
} // namespace detail

/// M(n) = 2 * integral over the line {x . n = 1} of Gamma(x) dH^1, so psi(b, n) = b . M(n) b.
/// The line is parameterized x = n + tan(theta) n_perp, theta in (-pi/2, pi/2), and integrated by
/// composite 16-point Gauss-Legendre with panel doubling until successive estimates agree.
inline Matrix line_matrix(const AnisotropyKernel& kernel, const Vec2& n, int quad_nodes = kDefaultQuadNodes) {
    static const GaussLegendre rule(16);
    const int dim = kernel.components();
    const Vec2 t = detail::perp(n);
    std::vector<double> buf(static_cast<std::size_t>(dim * dim));

    auto integrate = [&](int panels) {
        Matrix acc = Matrix::Zero(dim, dim);
        const double width = std::numbers::pi / panels;
        for (int p = 0; p < panels; ++p) {
            const double a = -0.5 * std::numbers::pi + p * width;
            const double mid = a + 0.5 * width, rad = 0.5 * width;
            for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
                const double theta = mid + rad * rule.nodes[q];
                const double c = std::cos(theta);
                const double tan_theta = std::tan(theta);
                const double x1 = n.x() + tan_theta * t.x(), x2 = n.y() + tan_theta * t.y();
                const double r = std::sqrt(x1 * x1 + x2 * x2);
                kernel.gammahat_into(x1, x2, buf.data());
                const double w = rule.weights[q] * rad * 2.0 / (r * r * r * c * c);
                for (int i = 0; i < dim; ++i)
                    for (int j = 0; j < dim; ++j) acc(i, j) += w * buf[static_cast<std::size_t>(i * dim + j)];
            }
        }
        return acc;
    };

    int panels = std::max(1, (quad_nodes + 15) / 16);
    Matrix coarse = integrate(panels);
    double residual = std::numeric_limits<double>::infinity();
    for (int round = 0; round < 12; ++round) {
        panels *= 2;
        Matrix fine = integrate(panels);
        const double scale = std::max(fine.norm(), std::numeric_limits<double>::min());
        residual = (fine - coarse).norm() / scale;
        if (residual <= 1e-11) return fine;
        coarse = std::move(fine);
    }
    char msg[128];
    std::snprintf(msg, sizeof msg, "line-integral quadrature did not converge (relative residual %.3g)", residual);
    throw ConvergenceError(msg, residual);
}

/// M(n) = integral over S^1 of |y . n| Gammahat(y) dH^1(y), by the periodic trapezoidal rule in the
/// angle measured from n (nodes land on the kinks of |y . n|) with one Richardson step.
inline Matrix circle_matrix(const AnisotropyKernel& kernel, const Vec2& n, int quad_nodes = kDefaultQuadNodes) {
    const int dim = kernel.components();
    const Vec2 t = detail::perp(n);
    const int nodes = ((std::max(quad_nodes, 16) + 7) / 8) * 8;
    std::vector<double> buf(static_cast<std::size_t>(dim * dim));
    Matrix fine = Matrix::Zero(dim, dim), coarse = Matrix::Zero(dim, dim);
    for (int k = 0; k < nodes; ++k) {
        const double phi = 2.0 * std::numbers::pi * k / nodes;
        const double c = std::cos(phi), s = std::sin(phi);
        kernel.gammahat_into(n.x() * c + t.x() * s, n.y() * c + t.y() * s, buf.data());
        const double w = std::abs(c);
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) {
                const double v = w * buf[static_cast<std::size_t>(i * dim + j)];
                fine(i, j) += v;
                if (k % 2 == 0) coarse(i, j) += v;
            }
    }
    fine *= 2.0 * std::numbers::pi / nodes;
    coarse *= 4.0 * std::numbers::pi / nodes;
    return (4.0 * fine - coarse) / 3.0;
}

/// psi(b, n) from the line integral definition.
inline double psi_line(const AnisotropyKernel& kernel, const LineTensionQuery& q) {
    detail::check_query(kernel, q);
    if (is_zero(q.b)) return 0.0;
    return quadratic_form(line_matrix(kernel, q.n, q.quad_nodes), q.b);
}

/// psi(b, n) from the circle representation.
inline double psi_circle(const AnisotropyKernel& kernel, const LineTensionQuery& q) {
    detail::check_query(kernel, q);
    if (is_zero(q.b)) return 0.0;
    return quadratic_form(circle_matrix(kernel, q.n, q.quad_nodes), q.b);
}

/// Unit normals n_j at angles offset + 2 pi j / K. The second half is the exact negation of the
/// first, so (b, n) -> (b, -n) symmetries hold bit for bit.
inline std::vector<Vec2> normal_grid(int k, double offset = 0.0) {
    if (k < 2 || k % 2 != 0) throw DomainError("direction grid size K must be even and >= 2");
    std::vector<Vec2> out(static_cast<std::size_t>(k));
    for (int j = 0; j < k / 2; ++j) {
        const double theta = offset + (2.0 * std::numbers::pi * j) / k;
        out[static_cast<std::size_t>(j)] = Vec2(std::cos(theta), std::sin(theta));
        out[static_cast<std::size_t>(j + k / 2)] = -out[static_cast<std::size_t>(j)];
    }
    return out;
}

inline double grid_angle(int j, int k) { return (2.0 * std::numbers::pi * j) / k; }

/// Certified coercivity constant lambda* = min over grid normals of the smallest eigenvalue of M(n).
/// psi(b, n_j) >= lambda* |b|^2 and the relaxed bound stays >= lambda* |b| for integer b != 0.
inline double coercivity_constant(const AnisotropyKernel& kernel, int k, int quad_nodes = kDefaultQuadNodes,
                                  double offset = 0.0) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<Matrix> solver;
    for (const auto& n : normal_grid(k, offset)) {
        solver.compute(circle_matrix(kernel, n, quad_nodes), Eigen::EigenvaluesOnly);
        best = std::min(best, solver.eigenvalues().minCoeff());
    }
    return best;
}

/// Constant C in (psi(b,n) - psi(b,n')) / psi(b,n') <= C |n - n'|, from
/// psi(b,n) - psi(b,n') <= |n - n'| * integral_{S^1} Gammahat b.b and psi(b,n') >= lambda* |b|^2.
inline double lipschitz_constant(const AnisotropyKernel& kernel, int k, int quad_nodes = kDefaultQuadNodes) {
    const int dim = kernel.components();
    const int nodes = std::max(quad_nodes, 16);
    Matrix total = Matrix::Zero(dim, dim);
    std::vector<double> buf(static_cast<std::size_t>(dim * dim));
    for (int j = 0; j < nodes; ++j) {
        const double phi = 2.0 * std::numbers::pi * j / nodes;
        kernel.gammahat_into(std::cos(phi), std::sin(phi), buf.data());
        for (int r = 0; r < dim; ++r)
            for (int c = 0; c < dim; ++c) total(r, c) += buf[static_cast<std::size_t>(r * dim + c)];
    }
    total *= 2.0 * std::numbers::pi / nodes;
    Eigen::SelfAdjointEigenSolver<Matrix> solver(total, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().maxCoeff() / coercivity_constant(kernel, k, quad_nodes);
}

struct RelaxationOptions {
    int b_max = 1;
    int n_directions = 32;
    int max_iterations = 1000;
    double tolerance = 1e-12;
};

/// Every integer vector with |b|_inf <= b_max, in a fixed lexicographic order.
inline std::vector<Burgers> burgers_box(int n_components, int b_max) {
    std::vector<Burgers> out;
    Burgers cur(static_cast<std::size_t>(n_components), -b_max);
    for (;;) {
        out.push_back(cur);
        int i = n_components - 1;
        while (i >= 0 && cur[static_cast<std::size_t>(i)] == b_max) cur[static_cast<std::size_t>(i--)] = -b_max;
        if (i < 0) break;
        ++cur[static_cast<std::size_t>(i)];
    }
    return out;
}

/// psi and its relaxation upper bound on the box |b|_inf <= b_max times a K-direction grid.
class RelaxedLineTension {
public:
    RelaxedLineTension(const AnisotropyKernel& kernel, const RelaxationOptions& opts, double offset = 0.0,
                       int quad_nodes = kDefaultQuadNodes)
        : n_(kernel.components()), b_max_(opts.b_max), k_(opts.n_directions), normals_(normal_grid(k_, offset)),
          box_(burgers_box(n_, b_max_)) {
        if (opts.b_max < 1) throw DomainError("relaxation needs b_max >= 1");
        if (opts.n_directions < 8) throw DomainError("relaxation needs at least 8 directions");
        if (opts.max_iterations < 1 || !(opts.tolerance > 0.0)) throw DomainError("invalid relaxation options");

        const std::size_t nb = box_.size();
        psi_.assign(nb * static_cast<std::size_t>(k_), 0.0);
        std::vector<Matrix> mats(static_cast<std::size_t>(k_));
        parallel_for(static_cast<std::size_t>(k_ / 2), [&](std::size_t j) {
            mats[j] = line_matrix(kernel, normals_[j], quad_nodes);
        });
        for (int j = k_ / 2; j < k_; ++j) mats[static_cast<std::size_t>(j)] = mats[static_cast<std::size_t>(j - k_ / 2)];
        for (std::size_t bi = 0; bi < nb; ++bi)
            for (int j = 0; j < k_; ++j) psi_[bi * k_ + j] = quadratic_form(mats[static_cast<std::size_t>(j)], box_[bi]);
        relax(opts);
    }

    int directions() const noexcept { return k_; }
    int b_max() const noexcept { return b_max_; }
    const std::vector<Vec2>& normals() const noexcept { return normals_; }
    const std::vector<Burgers>& burgers() const noexcept { return box_; }
    int iterations() const noexcept { return iterations_; }

    std::size_t index(const Burgers& b) const {
        if (static_cast<int>(b.size()) != n_ || max_norm(b) > b_max_)
            throw DomainError("Burgers vector outside the relaxation box |b|_inf <= " + std::to_string(b_max_));
        std::size_t idx = 0;
        for (int v : b) idx = idx * static_cast<std::size_t>(2 * b_max_ + 1) + static_cast<std::size_t>(v + b_max_);
        return idx;
    }

    double psi(const Burgers& b, int j) const { return psi_[index(b) * k_ + j]; }
    double upper(const Burgers& b, int j) const { return relaxed_[index(b) * k_ + j]; }

private:
    void relax(const RelaxationOptions& opts) {
        const std::size_t nb = box_.size();
        const std::size_t kk = static_cast<std::size_t>(k_);
        relaxed_ = psi_;
        double scale = 0.0;
        for (double v : psi_) scale = std::max(scale, v);
        scale = std::max(scale, 1.0);

        // Zigzag weights: t = mu1 t1 + mu2 t2, t_j the tangent of n_j. Parallel and antiparallel pairs are skipped.
        struct Pair {
            int j1, j2;
            double mu1, mu2;
        };
        std::vector<std::vector<Pair>> zig(kk);
        for (std::size_t j = 0; j < kk; ++j) {
            const Vec2 t = detail::perp(normals_[j]);
            for (std::size_t j1 = 0; j1 < kk; ++j1)
                for (std::size_t j2 = j1 + 1; j2 < kk; ++j2) {
                    if (j1 == j || j2 == j) continue;
                    const Vec2 t1 = detail::perp(normals_[j1]), t2 = detail::perp(normals_[j2]);
                    const double det = t1.x() * t2.y() - t1.y() * t2.x();
                    if (std::abs(det) < 1e-12) continue;
                    const double mu1 = (t.x() * t2.y() - t.y() * t2.x()) / det;
                    const double mu2 = (t1.x() * t.y() - t1.y() * t.x()) / det;
                    if (mu1 < 0.0 || mu2 < 0.0) continue;
                    zig[j].push_back({static_cast<int>(j1), static_cast<int>(j2), mu1, mu2});
                }
        }

        double last = 0.0, previous = 0.0;
        for (iterations_ = 1; iterations_ <= opts.max_iterations; ++iterations_) {
            std::vector<double> next(relaxed_.size());
            parallel_for(nb, [&](std::size_t bi) {
                const Burgers& b = box_[bi];
                for (std::size_t j = 0; j < kk; ++j) {
                    double best = relaxed_[bi * kk + j];
                    if (!is_zero(b)) {
                        // Burgers splitting b = b1 + b2 with both parts nonzero and inside the box.
                        for (std::size_t b1 = 0; b1 < nb; ++b1) {
                            const Burgers& p = box_[b1];
                            if (is_zero(p)) continue;
                            Burgers q(b.size());
                            bool inside = true, zero = true;
                            for (std::size_t c = 0; c < b.size(); ++c) {
                                q[c] = b[c] - p[c];
                                if (std::abs(q[c]) > b_max_) inside = false;
                                if (q[c] != 0) zero = false;
                            }
                            if (!inside || zero) continue;
                            best = std::min(best, relaxed_[b1 * kk + j] + relaxed_[index(q) * kk + j]);
                        }
                        for (const Pair& z : zig[j])
                            best = std::min(best, z.mu1 * relaxed_[bi * kk + static_cast<std::size_t>(z.j1)] +
                                                      z.mu2 * relaxed_[bi * kk + static_cast<std::size_t>(z.j2)]);
                    }
                    next[bi * kk + j] = best;
                }
            });
            double change = 0.0;
            for (std::size_t i = 0; i < next.size(); ++i) change = std::max(change, relaxed_[i] - next[i]);
            relaxed_ = std::move(next);
            previous = last;
            last = change;
            if (change <= opts.tolerance * scale) return;
        }
        const double factor = previous > 0.0 ? last / previous : 0.0;
        char msg[160];
        std::snprintf(msg, sizeof msg,
                      "relaxation did not converge in %d iterations (last change %.3g, contraction factor %.3g)",
                      opts.max_iterations, last, factor);
        throw ConvergenceError(msg, last);
    }

    int n_;
    int b_max_;
    int k_;
    std::vector<Vec2> normals_;
    std::vector<Burgers> box_;
    std::vector<double> psi_;
    std::vector<double> relaxed_;
    int iterations_ = 0;
};

/// Upper bound on the relaxed density psi_rel(b, n). The direction grid is rotated so that n is
/// one of its nodes.
inline double psi_rel_upper(const AnisotropyKernel& kernel, const Burgers& b, const Vec2& n,
                            const RelaxationOptions& opts) {
    if (std::abs(n.norm() - 1.0) > 1e-12) throw DomainError("line-tension normal must be a unit vector");
    if (max_norm(b) > opts.b_max)
        throw DomainError("|b|_inf exceeds the relaxation bound b_max = " + std::to_string(opts.b_max));
    if (is_zero(b)) return 0.0;
    const RelaxedLineTension relaxed(kernel, opts, std::atan2(n.y(), n.x()));
    return relaxed.upper(b, 0);
}

/// [lambda* |b|, psi_rel_upper]: the computable bracket of psi_rel(b, n).
struct RelaxedBracket {
    double lower;
    double upper;
};

inline RelaxedBracket psi_rel_bracket(const AnisotropyKernel& kernel, const Burgers& b, const Vec2& n,
                                      const RelaxationOptions& opts) {
    const double lo = coercivity_constant(kernel, opts.n_directions, kDefaultQuadNodes, std::atan2(n.y(), n.x())) * norm(b);
    return {lo, psi_rel_upper(kernel, b, n, opts)};
}

struct LineTensionRow {
    Burgers b;
    int n_index;
    double theta;
    double psi;
    double psi_rel_upper;
};

struct LineTensionTable {
    std::string kernel_id;
    int n_components = 0;
    int directions = 0;  // K
    std::vector<LineTensionRow> rows;

    Vec2 normal(int j) const { return normal_grid(directions)[static_cast<std::size_t>(j)]; }

    const LineTensionRow* find(const Burgers& b, int j) const {
        for (const auto& r : rows)
            if (r.n_index == j && r.b == b) return &r;
        return nullptr;
    }

    /// Looks up (b, n_j), falling back to the symmetric entries (-b, n_j) and (b, -n_j).
    const LineTensionRow& at(const Burgers& b, int j) const {
        if (const auto* r = find(b, j)) return *r;
        if (const auto* r = find(negate(b), j)) return *r;
        const int opposite = (j + directions / 2) % directions;
        if (const auto* r = find(b, opposite)) return *r;
        if (const auto* r = find(negate(b), opposite)) return *r;
        std::string key;
        for (int v : b) key += (key.empty() ? "" : ",") + std::to_string(v);
        throw LookupError("line-tension table has no row for b=(" + key + "), n_index=" + std::to_string(j));
    }

    /// Index of the grid normal closest in angle to n, and the snap angle.
    std::pair<int, double> snap(const Vec2& n) const {
        const auto grid = normal_grid(directions);
        int best = 0;
        double best_angle = std::numeric_limits<double>::infinity();
        for (int j = 0; j < directions; ++j) {
            const double a = std::acos(std::clamp(grid[static_cast<std::size_t>(j)].dot(n) / n.norm(), -1.0, 1.0));
            if (a < best_angle) best_angle = a, best = j;
        }
        return {best, best_angle};
    }
};

/// Rows (b, n_j) for every b in b_set and j < K. psi comes from the line integral; the relaxed
/// bound is computed on the full box |b|_inf <= opts.b_max (K overrides opts.n_directions).
inline LineTensionTable build_linetension_table(const AnisotropyKernel& kernel, const std::vector<Burgers>& b_set,
                                                int k, RelaxationOptions opts) {
    if (b_set.empty()) throw DomainError("line-tension table needs a nonempty Burgers set");
    for (const auto& b : b_set)
        if (static_cast<int>(b.size()) != kernel.components())
            throw DomainError("Burgers vector dimension does not match the kernel");
    opts.n_directions = k;
    LineTensionTable table{kernel.id(), kernel.components(), k, {}};
    int needed = 0;
    for (const auto& b : b_set) needed = std::max(needed, max_norm(b));
    if (needed > opts.b_max) throw DomainError("b_set exceeds relaxation bound b_max = " + std::to_string(opts.b_max));
    if (needed == 0) {
        for (const auto& b : b_set)
            for (int j = 0; j < k; ++j) table.rows.push_back({b, j, grid_angle(j, k), 0.0, 0.0});
        return table;
    }
    const RelaxedLineTension relaxed(kernel, opts);
    for (const auto& b : b_set)
        for (int j = 0; j < k; ++j)
            table.rows.push_back({b, j, grid_angle(j, k), relaxed.psi(b, j), relaxed.upper(b, j)});
    return table;
}

namespace detail {
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
} // namespace detail

inline void write_table_csv(const LineTensionTable& table, std::ostream& out) {
    for (int c = 1; c <= table.n_components; ++c) out << 'b' << c << ',';
    out << "theta,psi,psi_rel_upper\n";
    for (const auto& r : table.rows) {
        for (int v : r.b) out << v << ',';
        out << detail::format_double(r.theta) << ',' << detail::format_double(r.psi) << ','
            << detail::format_double(r.psi_rel_upper) << '\n';
    }
}

/// Reads the CSV written by write_table_csv. K is recovered from the distinct theta values.
inline LineTensionTable read_table_csv(std::istream& in, const std::string& source = "table") {
    std::string line;
    if (!std::getline(in, line)) throw LookupError(source + ": empty line-tension table");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    const int n = static_cast<int>(header.size()) - 3;
    if (n < 1 || header[header.size() - 3] != "theta" || header[header.size() - 2] != "psi" ||
        header.back() != "psi_rel_upper")
        throw LookupError(source + ":1: expected header b1,...,bN,theta,psi,psi_rel_upper");
    LineTensionTable table;
    table.kernel_id = "csv:" + source;
    table.n_components = n;
    std::set<double> thetas;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (static_cast<int>(cells.size()) != n + 3)
            throw LookupError(source + ":" + std::to_string(lineno) + ": wrong number of columns");
        LineTensionRow row;
        try {
            for (int c = 0; c < n; ++c) row.b.push_back(std::stoi(cells[static_cast<std::size_t>(c)]));
            row.theta = std::stod(cells[static_cast<std::size_t>(n)]);
            row.psi = std::stod(cells[static_cast<std::size_t>(n + 1)]);
            row.psi_rel_upper = std::stod(cells[static_cast<std::size_t>(n + 2)]);
        } catch (const std::exception&) {
            throw LookupError(source + ":" + std::to_string(lineno) + ": malformed number");
        }
        thetas.insert(row.theta);
        table.rows.push_back(std::move(row));
    }
    table.directions = static_cast<int>(thetas.size());
    for (auto& r : table.rows)
        r.n_index = static_cast<int>(std::lround(r.theta * table.directions / (2.0 * std::numbers::pi))) %
                    table.directions;
    return table;
}

} // namespace pnlt
