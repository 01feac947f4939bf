#pragma once

// Rank-one density g0 and its convex envelope g, evaluated as a linear program over the atoms
// b (x) n_j with cost psi_rel_upper(b, n_j).

#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "pnlt/error.hpp"
#include "pnlt/linetension.hpp"
#include "pnlt/simplex.hpp"

namespace pnlt {

struct Atom {
    Burgers b;
    int n_index;
    double theta;
    Matrix matrix;  // N x 2, b (x) n
    double cost;
};

struct AtomSet {
    std::vector<Atom> atoms;
    int b_max = 0;
    int directions = 0;
    int n_components = 0;

    bool empty() const noexcept { return atoms.empty(); }
    std::size_t size() const noexcept { return atoms.size(); }
};

inline Matrix outer(const Burgers& b, const Vec2& n) {
    Matrix m(static_cast<Eigen::Index>(b.size()), 2);
    for (std::size_t k = 0; k < b.size(); ++k) {
        m(static_cast<Eigen::Index>(k), 0) = b[k] * n.x();
        m(static_cast<Eigen::Index>(k), 1) = b[k] * n.y();
    }
    return m;
}

/// One atom per distinct b (x) n_j. The pair (-b, -n) gives the same matrix, so only normals
/// n_j with j < K/2 are kept, with both signs of b.
inline AtomSet build_atoms(const LineTensionTable& table, int b_max, int k) {
    if (b_max < 1) throw DomainError("empty atom set: b_max must be >= 1");
    if (table.directions != k)
        throw DomainError("table has " + std::to_string(table.directions) + " directions, atoms requested K=" +
                          std::to_string(k));
    AtomSet set{{}, b_max, k, table.n_components};
    const auto normals = normal_grid(k);
    std::string missing;
    for (const auto& b : burgers_box(table.n_components, b_max)) {
        if (is_zero(b)) continue;
        for (int j = 0; j < k / 2; ++j) {
            try {
                const auto& row = table.at(b, j);
                set.atoms.push_back({b, j, grid_angle(j, k), outer(b, normals[static_cast<std::size_t>(j)]),
                                     row.psi_rel_upper});
            } catch (const LookupError&) {
                std::string key;
                for (int v : b) key += (key.empty() ? "" : ",") + std::to_string(v);
                missing += " (" + key + ";" + std::to_string(j) + ")";
            }
        }
    }
    if (!missing.empty()) throw LookupError("line-tension table is missing rows (b;n_index):" + missing);
    if (set.atoms.empty()) throw DomainError("empty atom set");
    return set;
}

struct EnvelopeTerm {
    std::size_t atom;
    double lambda;
};

struct EnvelopeValue {
    double value = 0.0;
    std::vector<EnvelopeTerm> support;
    int directions = 0;
};

/// g(A) = min { sum lambda_i cost_i : sum lambda_i b_i (x) n_i = A, lambda >= 0 }.
inline EnvelopeValue g_eval(const AtomSet& atoms, const Matrix& a) {
    if (atoms.empty()) throw DomainError("empty atom set");
    const int n = atoms.n_components;
    if (a.rows() != n || a.cols() != 2) throw DomainError("g expects an N x 2 matrix");
    EnvelopeValue out;
    out.directions = atoms.directions;
    if (a.isZero(0.0)) return out;

    const auto rows = static_cast<Eigen::Index>(2 * n);
    const auto cols = static_cast<Eigen::Index>(atoms.size());
    Matrix lhs(rows, cols);
    Vector cost(cols), rhs(rows);
    for (Eigen::Index j = 0; j < cols; ++j) {
        const Atom& at = atoms.atoms[static_cast<std::size_t>(j)];
        for (int k = 0; k < n; ++k) {
            lhs(2 * k, j) = at.matrix(k, 0);
            lhs(2 * k + 1, j) = at.matrix(k, 1);
        }
        cost(j) = at.cost;
    }
    for (int k = 0; k < n; ++k) {
        rhs(2 * k) = a(k, 0);
        rhs(2 * k + 1) = a(k, 1);
    }
    const LpSolution sol = solve_lp(lhs, rhs, cost);
    if (sol.status == LpStatus::infeasible) throw DomainError("g: matrix is not in the cone of the atom set");
    if (sol.status == LpStatus::unbounded) throw Error("g: internal error, unbounded linear program");
    out.value = sol.value;
    for (std::size_t j = 0; j < sol.x.size(); ++j)
        if (sol.x[j] > 0.0) out.support.push_back({j, sol.x[j]});
    return out;
}

/// g0(A): 0 at A = 0, the relaxed table value when A = b (x) n_j within tol, +infinity otherwise.
inline double g0_eval(const LineTensionTable& table, const Matrix& a, double tol = 1e-9) {
    if (a.cwiseAbs().maxCoeff() <= tol) return 0.0;
    const auto normals = normal_grid(table.directions);
    for (const auto& row : table.rows) {
        if (is_zero(row.b)) continue;
        const Matrix m = outer(row.b, normals[static_cast<std::size_t>(row.n_index)]);
        if (m.rows() == a.rows() && (m - a).cwiseAbs().maxCoeff() <= tol) return row.psi_rel_upper;
    }
    return std::numeric_limits<double>::infinity();
}

/// Constants of the certified sandwich lambda* s_K |A| <= g(A) <= C_up |A| (Frobenius norm).
/// lambda* s_K = min_i cost_i / |b_i| since |A| <= sum lambda_i |b_i|; C_up = sqrt(2N) max g(e_k (x) e_l)
/// by convexity and 1-homogeneity, the atom set being symmetric under b -> -b.
struct EnvelopeBounds {
    double lambda_star;
    double s_k;
    double c_up;

    double lower_slope() const noexcept { return lambda_star * s_k; }
};

inline EnvelopeBounds envelope_bounds(const AtomSet& atoms, double lambda_star) {
    double slope = std::numeric_limits<double>::infinity();
    for (const auto& at : atoms.atoms) slope = std::min(slope, at.cost / norm(at.b));
    double worst = 0.0;
    for (int k = 0; k < atoms.n_components; ++k)
        for (int l = 0; l < 2; ++l) {
            Matrix e = Matrix::Zero(atoms.n_components, 2);
            e(k, l) = 1.0;
            worst = std::max(worst, g_eval(atoms, e).value);
        }
    return {lambda_star, slope / lambda_star, std::sqrt(2.0 * atoms.n_components) * worst};
}

/// Rows "lambda,b1..bN,theta,cost" of an optimal decomposition.
inline void write_decomposition_csv(const AtomSet& atoms, const EnvelopeValue& value, std::ostream& out) {
    out << "lambda,";
    for (int c = 1; c <= atoms.n_components; ++c) out << 'b' << c << ',';
    out << "theta,cost\n";
    for (const auto& term : value.support) {
        const Atom& at = atoms.atoms[term.atom];
        out << detail::format_double(term.lambda) << ',';
        for (int v : at.b) out << v << ',';
        out << detail::format_double(at.theta) << ',' << detail::format_double(at.cost) << '\n';
    }
}

} // namespace pnlt
