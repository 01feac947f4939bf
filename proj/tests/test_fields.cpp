#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "pnlt/fields.hpp"
#include "pnlt/lattice.hpp"

using namespace pnlt;

namespace {

const DomainSpec kTorus{DomainKind::torus, 1.0, 1.0};
const DomainSpec kBox{DomainKind::box, 1.0, 1.0};

GridField random_field(const DomainSpec& d, int m1, int m2, int n, unsigned seed, double amp = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-amp, amp);
    GridField f(d, m1, m2, n);
    for (double& v : f.values()) v = u(rng);
    return f;
}

// Literal double loop for the discrete H^{1/2} seminorm. On a torus the distance is the
// minimal-image distance, which is the same for both images at a tie.
double h12_oracle(const GridField& f) {
    const int m1 = f.m1(), m2 = f.m2();
    const double h1 = f.h1(), h2 = f.h2();
    double s = 0.0;
    for (int i = 0; i < m1; ++i)
        for (int j = 0; j < m2; ++j)
            for (int k = 0; k < m1; ++k)
                for (int l = 0; l < m2; ++l) {
                    if (i == k && j == l) continue;
                    double d1 = (i - k) * h1, d2 = (j - l) * h2;
                    if (f.domain().periodic()) {
                        d1 -= f.domain().side1 * std::round(d1 / f.domain().side1);
                        d2 -= f.domain().side2 * std::round(d2 / f.domain().side2);
                    }
                    const double r = std::hypot(d1, d2);
                    const double diff = (f.value(i, j) - f.value(k, l)).squaredNorm();
                    s += diff / (r * r * r);
                }
    return s * f.cell_area() * f.cell_area();
}

GridField roll(const GridField& f, int s1, int s2) {
    GridField g(f.domain(), f.m1(), f.m2(), f.components());
    for (int i = 0; i < f.m1(); ++i)
        for (int j = 0; j < f.m2(); ++j)
            for (int c = 0; c < f.components(); ++c)
                g.at((i + s1) % f.m1(), (j + s2) % f.m2(), c) = f.at(i, j, c);
    return g;
}

PolyhedralField diagonal_field() {
    // Two triangles splitting the unit square along its diagonal, with a box domain.
    std::vector<Cell> cells{{{{0, 0}, {1, 0}, {1, 1}}, {1, 0}}, {{{0, 0}, {1, 1}, {0, 1}}, {0, -1}}};
    return PolyhedralField(0.5, 2, std::move(cells));
}

} // namespace

TEST(Domain, WrapsIntoFundamentalCell) {
    const DomainSpec d{DomainKind::torus, 2.0, 0.5};
    const Vec2 w = d.wrap(Vec2(-0.5, 1.2));
    EXPECT_NEAR(w.x(), 1.5, 1e-15);
    EXPECT_NEAR(w.y(), 0.2, 1e-15);
    EXPECT_EQ(kBox.wrap(Vec2(3.0, -1.0)), Vec2(3.0, -1.0));
    EXPECT_THROW((DomainSpec{DomainKind::torus, 0.0, 1.0}.validate()), DomainError);
}

TEST(GridField, LayoutAndValidation) {
    GridField f(kTorus, 4, 3, 2);
    EXPECT_EQ(f.values().size(), 24u);
    f.at(2, 1, 1) = 5.0;
    EXPECT_EQ(f.values()[(2 * 3 + 1) * 2 + 1], 5.0);
    EXPECT_EQ(f.center(0, 0), Vec2(0.125, 1.0 / 6.0));
    EXPECT_THROW(GridField(kTorus, 0, 3, 2), DomainError);
    EXPECT_THROW(GridField(kTorus, 2, 2, 1, {1.0, 2.0}), DomainError);
    EXPECT_THROW(GridField(kTorus, 1, 1, 1, {std::nan("")}), DomainError);
    GridField g(kBox, 4, 3, 2);
    EXPECT_THROW(f += g, DomainError);
}

TEST(PolyhedralField, StripSegmentsAndMeasure) {
    const auto pf = strip_field(0.5, kTorus, 0.25, 0.75, {2, -1}, {0, 0});
    ASSERT_EQ(pf.segments().size(), 2u);
    for (const auto& s : pf.segments()) {
        EXPECT_NEAR(s.length(), 1.0, 1e-15);
        EXPECT_NEAR(std::abs(s.normal.y()), 1.0, 1e-15);
        // The normal points from the u- side into the u+ side.
        const Vec2 mid = 0.5 * (s.a + s.b);
        const Burgers& plus = pf.coefficients_at(mid + 1e-6 * s.normal);
        const Burgers& minus = pf.coefficients_at(mid - 1e-6 * s.normal);
        EXPECT_EQ(s.jump, (Burgers{plus[0] - minus[0], plus[1] - minus[1]}));
    }
    const auto bv = bv_measure(pf);
    EXPECT_NEAR(bv.total, 2.0 * std::sqrt(5.0) * 0.5, 1e-14);
    EXPECT_TRUE(pf.invariant_along_x1());
    EXPECT_NEAR(pf.sup_norm(), 0.5 * std::sqrt(5.0), 1e-15);
    EXPECT_EQ(pf.with_sigma(2.0).sigma(), 2.0);
}

TEST(PolyhedralField, DiagonalInterfaceAndLookups) {
    const auto pf = diagonal_field();
    ASSERT_EQ(pf.segments().size(), 1u);
    EXPECT_NEAR(pf.segments()[0].length(), std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(bv_measure(pf).total, std::sqrt(2.0) * std::sqrt(2.0) * 0.5, 1e-14);
    EXPECT_FALSE(pf.invariant_along_x1());
    // Ties on the shared edge go to the lowest cell index.
    EXPECT_EQ(pf.coefficients_at(Vec2(0.5, 0.5)), (Burgers{1, 0}));
    try {
        (void)pf.value_at(Vec2(1.5, 0.25));
        FAIL() << "uncovered point accepted";
    } catch (const LookupError& e) {
        EXPECT_NE(std::string(e.what()).find("(1.5, 0.25)"), std::string::npos);
    }
}

TEST(PolyhedralField, RejectsBadCells) {
    std::vector<Cell> dart{{{{0, 0}, {1, 0}, {0.2, 0.2}, {0, 1}}, {1}}};
    EXPECT_THROW(PolyhedralField(1.0, 1, dart), ConstructionError);
    std::vector<Cell> half{{{{0, 0}, {1, 0}, {1, 0.5}, {0, 0.5}}, {1}}};
    EXPECT_THROW(PolyhedralField(1.0, 1, half, kTorus), ConstructionError);
    EXPECT_THROW(PolyhedralField(0.0, 1, half), ConstructionError);
    EXPECT_THROW(PolyhedralField(1.0, 2, half), ConstructionError);
    // Clockwise input is reoriented.
    std::vector<Cell> cw{{{{0, 0}, {0, 1}, {1, 1}, {1, 0}}, {1}}};
    const PolyhedralField ok(1.0, 1, cw, kTorus);
    EXPECT_GT(PolyhedralField::signed_area(ok.cells()[0].polygon), 0.0);
    EXPECT_TRUE(ok.segments().empty());
}

TEST(Rasterize, ValuesAreQuantized) {
    const auto pf = diagonal_field();
    const auto f = rasterize(pf, kBox, 17, 13);
    for (double v : f.values()) {
        const double q = v / pf.sigma();
        EXPECT_EQ(q, std::round(q));
    }
    const auto strip = strip_field(0.25, kTorus, 0.25, 0.75, {1, 0}, {0, 0});
    const auto g = rasterize(strip, kTorus, 8, 8);
    EXPECT_NEAR(grid_bv(g), 2.0 * 0.25, 1e-14);
    const auto s = rasterize_strip(strip, kTorus, 8, 8);
    EXPECT_EQ(s.expand().values(), g.values());
    EXPECT_THROW((void)rasterize_strip(pf, kTorus, 8, 8), DomainError);
}

TEST(StripField, RoundTripsThroughGrid) {
    const auto strip = strip_field(1.0, kTorus, 0.3, 0.6, {1, 1}, {0, 2});
    const auto s = rasterize_strip(strip, kTorus, 6, 10);
    const auto back = StripField::from_grid(s.expand());
    EXPECT_EQ(back.profile(), s.profile());
    auto g = s.expand();
    g.at(3, 4, 0) += 1.0;
    EXPECT_THROW((void)StripField::from_grid(g), DomainError);
    EXPECT_THROW(StripField(kBox, 4, 4, 1), DomainError);
}

TEST(Mollifier, UnitMassAndProfile) {
    EXPECT_EQ(Mollifier::profile(0.0), 1.0);
    EXPECT_EQ(Mollifier::profile(0.5), 1.0);
    EXPECT_EQ(Mollifier::profile(0.6), 0.0);
    EXPECT_NEAR(Mollifier::profile(0.55), 0.5, 1e-12);
    for (double r = 0.5; r < 0.6; r += 0.001) EXPECT_GE(Mollifier::profile(r), Mollifier::profile(r + 0.001));
    // Midpoint rule over a fine Cartesian grid, independent of the radial quadrature.
    const auto m = Mollifier::with_scale(0.3);
    const int n = 1200;
    const double h = 0.4 / n;
    double mass = 0.0;
    for (int i = 0; i < 2 * n; ++i)
        for (int j = 0; j < 2 * n; ++j) mass += m.density(Vec2(-0.4 + (i + 0.5) * h, -0.4 + (j + 0.5) * h)) * h * h;
    EXPECT_NEAR(mass, 1.0, 1e-5);
    EXPECT_GT(Mollifier::unit_mass_constant(), 1.0);
    EXPECT_NEAR(Mollifier::dyadic(3).scale(), 0.125, 0.0);
    EXPECT_THROW((void)Mollifier::with_scale(0.0), DomainError);
}

TEST(Mollifier, StencilIsNormalizedAndRejectsUnresolvedScales) {
    const auto taps = Mollifier::with_scale(0.1).stencil(0.01, 0.02);
    double sum = 0.0;
    for (const auto& t : taps) {
        EXPECT_GT(t.weight, 0.0);
        EXPECT_LE(std::hypot(t.d1 * 0.01, t.d2 * 0.02), 0.06 + 1e-12);
        sum += t.weight;
    }
    EXPECT_NEAR(sum, 1.0, 1e-14);
    try {
        (void)Mollifier::with_scale(0.01).stencil(0.02, 0.02);
        FAIL() << "unresolved scale accepted";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("unresolved mollifier"), std::string::npos);
    }
}

TEST(Mollify, PreservesConstantsMeanAndBounds) {
    Vector c(2);
    c << 0.3, -1.7;
    for (const auto& d : {kTorus, kBox}) {
        const auto f = mollify(GridField::constant(d, 16, 16, c), Mollifier::with_scale(0.25));
        for (int i = 0; i < 16; ++i)
            for (int j = 0; j < 16; ++j) EXPECT_LT((f.value(i, j) - c).norm(), 1e-14);
    }
    const auto r = random_field(kTorus, 24, 20, 2, 7);
    const auto m = mollify(r, Mollifier::with_scale(0.2));
    for (int comp = 0; comp < 2; ++comp) {
        const auto a = r.component(comp), b = m.component(comp);
        const double lo = *std::min_element(a.begin(), a.end()), hi = *std::max_element(a.begin(), a.end());
        double ma = 0.0, mb = 0.0;
        for (std::size_t p = 0; p < a.size(); ++p) {
            EXPECT_GE(b[p], lo - 1e-14);
            EXPECT_LE(b[p], hi + 1e-14);
            ma += a[p];
            mb += b[p];
        }
        EXPECT_NEAR(ma, mb, 1e-12);
    }
    const auto rb = random_field(kBox, 12, 12, 1, 8);
    const auto mbox = mollify(rb, Mollifier::with_scale(0.3));
    for (double v : mbox.values()) EXPECT_LE(std::abs(v), rb.max_abs() + 1e-14);
}

TEST(Mollify, StripMatchesTwoDimensional) {
    const auto strip = strip_field(1.0, kTorus, 0.2, 0.7, {1, -1}, {0, 1});
    const auto s = rasterize_strip(strip, kTorus, 16, 32);
    const auto mol = Mollifier::with_scale(0.15);
    const auto a = mollify(s, mol).expand();
    const auto b = mollify(s.expand(), mol);
    for (std::size_t k = 0; k < a.values().size(); ++k) EXPECT_NEAR(a.values()[k], b.values()[k], 1e-14);
}

TEST(ReplicateShift, CopiesAndConstants) {
    const auto strip = strip_field(1.0, kTorus, 0.25, 0.75, {1, 0}, {0, 0});
    const Vec2 zeta(0.0, 1.0);
    const auto none = replicate_shift(strip, 0.7, zeta, 0.04, 1.0 / 3.0);
    EXPECT_EQ(none.copies(), 0);
    EXPECT_EQ(none(Vec2(0.3, 0.5)).norm(), 0.0);

    std::vector<Cell> one{{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {2, -1}}};
    const PolyhedralField constant(0.5, 2, one, kTorus);
    const auto rep = replicate_shift(constant, 3.6, zeta, 0.04, 1.0 / 3.0);
    const Vector v = rep(Vec2(0.1, 0.9));
    EXPECT_NEAR(v(0), 1.0 * 3.0 / 3.6, 1e-15);
    EXPECT_NEAR(v(1), -0.5 * 3.0 / 3.6, 1e-15);
    EXPECT_NEAR(rep.offset(2).y(), std::pow(0.04, 1.0 / 3.0) * 2.0 / 3.6, 1e-15);

    EXPECT_THROW((void)replicate_shift(strip, 2.0, zeta, 0.04, 0.7), DomainError);
    EXPECT_THROW((void)replicate_shift(strip, 2.0, Vec2(1.0, 1.0), 0.04, 0.3), DomainError);
    EXPECT_THROW((void)replicate_shift(strip, 0.0, zeta, 0.04, 0.3), DomainError);
}

TEST(ReplicateShift, SumApproachesRunningAverage) {
    const auto pf = diagonal_field();
    const Vec2 zeta(0.6, -0.8);
    const double rho = 0.5, alpha = 0.25;
    const Vec2 x(0.3, 0.9);
    const auto rep = replicate_shift(pf, 4000.0, zeta, rho, alpha);
    const Vector exact = rep.limit(x);
    // Independent oracle: a fine midpoint rule along the segment.
    const Vec2 d = std::pow(rho, alpha) * zeta;
    Vector mid = Vector::Zero(2);
    const int n = 200000;
    for (int k = 0; k < n; ++k) mid += pf.value_at(x + (k + 0.5) / n * d) / n;
    EXPECT_LT((exact - mid).norm(), 1e-5);
    EXPECT_LT((rep(x) - exact).norm(), 1e-3);
}

TEST(ReplicateShift, RunningAverageWrapsOnTorus) {
    const auto strip = strip_field(1.0, kTorus, 0.25, 0.75, {1, 0}, {0, 0});
    // From x2 = 0.9 upward by 0.5: crosses the top of the cell at 1.0 and re-enters at 0.0;
    // the inside band 0.25..0.4 has length 0.15 out of 0.5.
    const Vector v = ReplicatedField::running_average(strip, Vec2(0.3, 0.9), Vec2(0.0, 0.5));
    EXPECT_NEAR(v(0), 0.3, 1e-14);
    EXPECT_NEAR(v(1), 0.0, 0.0);
}

TEST(Seminorm, MatchesDoubleLoop) {
    for (const auto& d : {kTorus, kBox, DomainSpec{DomainKind::torus, 2.0, 1.0}}) {
        const auto f = random_field(d, 8, 6, 2, 3);
        const double ref = h12_oracle(f);
        EXPECT_NEAR(h12_seminorm_sq(f), ref, 1e-11 * ref);
    }
}

TEST(Seminorm, ConstantScalingTranslation) {
    Vector c(1);
    c << 4.0;
    EXPECT_NEAR(h12_seminorm_sq(GridField::constant(kTorus, 12, 12, c)), 0.0, 1e-9);
    EXPECT_NEAR(h12_seminorm_sq(GridField::constant(kBox, 12, 12, c)), 0.0, 0.0);
    const auto f = random_field(kTorus, 16, 12, 1, 4);
    const double base = h12_seminorm_sq(f);
    auto g = f;
    g *= 3.0;
    EXPECT_NEAR(h12_seminorm_sq(g), 9.0 * base, 1e-10 * base);
    EXPECT_NEAR(h12_seminorm_sq(roll(f, 5, 7)), base, 1e-11 * base);
}

TEST(FieldIo, GridRoundTripIsBitExact) {
    const auto f = random_field(DomainSpec{DomainKind::box, 2.0, 0.5}, 5, 7, 3, 9);
    std::stringstream ss;
    write_grid_field(f, ss);
    const auto g = read_grid_field(ss);
    EXPECT_TRUE(g.same_layout(f));
    EXPECT_EQ(g.values(), f.values());
    std::stringstream bad("PNFIELD v2\n");
    EXPECT_THROW((void)read_grid_field(bad), LookupError);
    std::stringstream trunc("PNFIELD v1\ntorus 2 2 1 1 1\nabc");
    EXPECT_THROW((void)read_grid_field(trunc), LookupError);
}

TEST(FieldIo, PolyhedralTextRoundTrip) {
    const auto pf = strip_field(0.125, DomainSpec{DomainKind::torus, 2.0, 1.0}, 0.25, 0.5, {1, -2}, {0, 1});
    std::stringstream ss;
    write_polyhedral_field(pf, ss);
    const auto back = read_polyhedral_field(ss);
    EXPECT_EQ(back.sigma(), pf.sigma());
    ASSERT_EQ(back.cells().size(), pf.cells().size());
    for (std::size_t c = 0; c < pf.cells().size(); ++c) {
        EXPECT_EQ(back.cells()[c].value, pf.cells()[c].value);
        EXPECT_EQ(back.cells()[c].polygon, pf.cells()[c].polygon);
    }
    EXPECT_EQ(back.segments().size(), pf.segments().size());
    EXPECT_EQ(*back.periodic(), *pf.periodic());
}

TEST(FieldIo, PolyhedralErrorsCarryLineNumbers) {
    std::stringstream missing_end("components 1\n# comment\ncell 1\n0 0\n1 0\n0 1\n");
    try {
        (void)read_polyhedral_field(missing_end, "f.txt");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("f.txt:6: missing 'end'"), std::string::npos);
    }
    std::stringstream bad_value("components 2\ncell 1\n");
    EXPECT_THROW((void)read_polyhedral_field(bad_value), ConfigError);
    std::stringstream bad_tiling("components 1\nperiodic 1 1\ncell 1\n0 0\n1 0\n0 1\nend\n");
    EXPECT_THROW((void)read_polyhedral_field(bad_tiling), ConfigError);
}
