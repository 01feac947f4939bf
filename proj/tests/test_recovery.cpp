#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "pnlt/recovery.hpp"

using namespace pnlt;

namespace {

constexpr double kPi = std::numbers::pi;
const DomainSpec kTorus{DomainKind::torus, 1.0, 1.0};
const DomainSpec kBox{DomainKind::box, 1.0, 1.0};

RecoveryParams params(double eps) {
    RecoveryParams p;
    p.eps = eps;
    p.rho = 0.04;
    p.alpha = 1.0 / 3.0;
    p.zeta = Vec2(0.0, 1.0);
    return p;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
    for (const auto& x : v)
        if (x.find(s) != std::string::npos) return true;
    return false;
}

ScalingRecord synthetic(double eps, double ratio) {
    EnergyBreakdown e;
    e.eps = eps;
    const double l = std::log(1.0 / eps);
    e.nonlocal_term = ratio * l;
    e.total = e.nonlocal_term;
    return {eps, e, 0.0, SweepKind::linetension};
}

} // namespace

TEST(RecoveryParams, Diagnostics) {
    EXPECT_TRUE(params(1.0 / 16).diagnostics(1.0, kTorus).empty());
    auto p = params(1.0 / 16);
    p.alpha = 0.7;
    EXPECT_TRUE(contains(p.diagnostics(1.0, kTorus), "alpha outside (0, 1/2)"));
    EXPECT_THROW(p.validate(1.0, kTorus), DomainError);
    EXPECT_TRUE(contains(params(0.5).diagnostics(0.1, kTorus), "L = sigma ln(1/eps) is below 1"));
    EXPECT_TRUE(contains(params(0.1).diagnostics(1.0, kBox), "explicit margin"));
    auto q = params(0.1);
    q.margin = 0.5;
    EXPECT_TRUE(contains(q.diagnostics(1.0, kBox), "margin violated"));
    q.margin = 1.2;
    EXPECT_TRUE(q.diagnostics(1.0, kBox).empty());
    auto z = params(0.1);
    z.zeta = Vec2(1.0, 1.0);
    EXPECT_TRUE(contains(z.diagnostics(1.0, kTorus), "zeta"));
    EXPECT_NEAR(params(0.1).copies_l(2.0), 2.0 * std::log(10.0), 1e-15);
}

TEST(GridPolicy, FourSamplesPerEps) {
    const auto d = dims_for_eps(kTorus, 1.0 / 16);
    EXPECT_EQ(d.m1, 64);
    EXPECT_EQ(d.m2, 64);
    const auto r = dims_for_eps(DomainSpec{DomainKind::torus, 1.5, 1.0}, 0.1, 5);
    EXPECT_EQ(r.m1, 75);
    EXPECT_EQ(r.m2, 50);
    EXPECT_THROW((void)dims_for_eps(kTorus, 0.1, 3), DomainError);
}

TEST(Recovery, BoundedAndIntegerAwayFromJumps) {
    const auto pf = strip_field(1.0, kTorus, 0.25, 0.75, {1, -1}, {0, 0});
    const auto p = params(1.0 / 16);
    const auto dims = dims_for_eps(kTorus, p.eps);
    const auto w = build_recovery(pf, kTorus, p, dims);
    const double copies = std::floor(p.copies_l(1.0));
    for (double v : w.values()) EXPECT_LE(std::abs(v), copies + 1e-12);
    // Rows farther than rho^alpha + 0.6 eps from both interfaces see every copy fully inside or outside.
    const double reach = p.shift_scale() + 0.6 * p.eps;
    for (int j = 0; j < dims.m2; ++j) {
        const double y = (j + 0.5) / dims.m2;
        const double dist = std::min({std::abs(y - 0.25), std::abs(y - 0.75), y + 0.25, 1.25 - y});
        if (dist <= reach) continue;
        for (int c = 0; c < 2; ++c) {
            const double v = w.at(3, j, c);
            EXPECT_NEAR(v, std::round(v), 1e-12) << "row " << j;
        }
    }
    const auto s = build_recovery_strip(pf, kTorus, p, dims);
    for (std::size_t k = 0; k < w.values().size(); ++k) EXPECT_NEAR(s.expand().values()[k], w.values()[k], 1e-13);
}

TEST(Recovery, ConstantFieldHasZeroEnergy) {
    std::vector<Cell> one{{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {1, 2}}};
    const PolyhedralField pf(1.0, 2, one, kTorus);
    const auto p = params(1.0 / 16);
    const auto dims = dims_for_eps(kTorus, p.eps);
    const auto w = build_recovery(pf, kTorus, p, dims);
    const double copies = std::floor(p.copies_l(1.0));
    EXPECT_NEAR(w.at(0, 0, 0), copies, 1e-12);
    EXPECT_NEAR(w.at(5, 9, 1), 2.0 * copies, 1e-12);
    const auto kernel = AnisotropyKernel::cubic(4.0 * kPi, 0.3);
    EXPECT_NEAR(energy_eps(w, kernel, p.eps).total, 0.0, 1e-8);
}

TEST(Recovery, MollifiedJumpNeedsUnitSigma) {
    const auto pf = strip_field(0.5, kTorus, 0.25, 0.75, {1, 0}, {0, 0});
    EXPECT_THROW((void)mollified_jump(pf, kTorus, 0.1, dims_for_eps(kTorus, 0.1)), DomainError);
}

TEST(ScalingFit, RecoversSyntheticCoefficients) {
    std::vector<ScalingRecord> recs;
    for (int p = 4; p <= 9; ++p) {
        const double eps = std::ldexp(1.0, -p);
        recs.push_back(synthetic(eps, 2.0 + 3.0 / std::log(1.0 / eps)));
    }
    const auto f = fit_log_scaling(recs);
    EXPECT_NEAR(f.a, 2.0, 1e-12);
    EXPECT_NEAR(f.b, 3.0, 1e-11);
    EXPECT_NEAR(f.residual, 0.0, 1e-12);
    EXPECT_TRUE(std::isnan(fit_log_scaling({}).a));
    EXPECT_NEAR(fit_log_scaling({recs[0]}).a, recs[0].ratio(), 0.0);
}

TEST(Sweep, EmptyAndInvalidEpsLists) {
    const auto pf = strip_field(1.0, kTorus, 0.25, 0.75, {1, 0}, {0, 0});
    const auto kernel = AnisotropyKernel::cubic(4.0 * kPi, 0.0);
    const auto empty = sweep_linetension(pf, kTorus, {}, kernel);
    EXPECT_TRUE(empty.records.empty());
    EXPECT_TRUE(std::isnan(empty.fit.a));
    EXPECT_TRUE(sweep_gamma(pf, kTorus, {}, kernel, params(0.5)).records.empty());
    EXPECT_THROW((void)sweep_linetension(pf, kTorus, {0.1}, kernel), DomainError);
    EXPECT_THROW((void)sweep_linetension(pf, kTorus, {0.125, 0.25}, kernel), DomainError);
    std::stringstream ss;
    write_sweep_csv(empty, ss);
    EXPECT_EQ(ss.str(), "eps,w_term,nonlocal,total,per_log,per_log2,target,fit_a,fit_residual\n");
}

TEST(Sweep, LineTensionStripMatchesTwoDimensional) {
    const auto pf = strip_field(1.0, kTorus, 0.25, 0.75, {1, 0}, {0, 0});
    const auto kernel = AnisotropyKernel::cubic(4.0 * kPi, 0.3);
    SweepOptions full;
    full.allow_strip = false;
    const std::vector<double> eps{0.125, 0.0625};
    const auto a = sweep_linetension(pf, kTorus, eps, kernel);
    const auto b = sweep_linetension(pf, kTorus, eps, kernel, full);
    ASSERT_EQ(a.records.size(), 2u);
    for (std::size_t k = 0; k < 2; ++k) {
        EXPECT_NEAR(a.records[k].energy.nonlocal_term, b.records[k].energy.nonlocal_term,
                    1e-10 * b.records[k].energy.nonlocal_term);
        EXPECT_NEAR(a.records[k].energy.w_term, b.records[k].energy.w_term, 1e-10 * b.records[k].energy.w_term);
    }
    // Target: two unit-length interfaces with psi(e1, e2).
    EXPECT_NEAR(a.records[0].target, 2.0 * psi_line(kernel, {Burgers{1, 0}, Vec2(0.0, 1.0)}), 1e-12);
    std::stringstream ss;
    write_sweep_csv(a, ss);
    std::string header, first, last;
    std::getline(ss, header);
    std::getline(ss, first);
    std::getline(ss, last);
    EXPECT_EQ(first.substr(first.size() - 2), ",,");
    EXPECT_NE(last.substr(last.size() - 2), ",,");
}

TEST(Sweep, DoublingBurgersQuadruplesNonlocalEnergy) {
    const auto kernel = AnisotropyKernel::cubic(4.0 * kPi, 0.3);
    const std::vector<double> eps{0.125, 0.0625};
    const auto a = sweep_linetension(strip_field(1.0, kTorus, 0.25, 0.75, {1, 0}, {0, 0}), kTorus, eps, kernel);
    const auto b = sweep_linetension(strip_field(1.0, kTorus, 0.25, 0.75, {2, 0}, {0, 0}), kTorus, eps, kernel);
    for (std::size_t k = 0; k < eps.size(); ++k) {
        EXPECT_NEAR(b.records[k].energy.nonlocal_term, 4.0 * a.records[k].energy.nonlocal_term,
                    1e-10 * b.records[k].energy.nonlocal_term);
        EXPECT_NEAR(b.records[k].target, 4.0 * a.records[k].target, 1e-10 * b.records[k].target);
    }
}

TEST(Sweep, GammaStripMatchesTwoDimensional) {
    const auto pf = strip_field(1.0, kTorus, 0.25, 0.75, {1, 0}, {0, 0});
    const auto kernel = AnisotropyKernel::cubic(4.0 * kPi, 0.0);
    SweepOptions full;
    full.allow_strip = false;
    const std::vector<double> eps{0.0625};
    const auto a = sweep_gamma(pf, kTorus, eps, kernel, params(0.5));
    const auto b = sweep_gamma(pf, kTorus, eps, kernel, params(0.5), full);
    EXPECT_NEAR(a.records[0].energy.total, b.records[0].energy.total, 1e-10 * b.records[0].energy.total);
    EXPECT_NEAR(a.records[0].target, b.records[0].target, 1e-10 * b.records[0].target);
    EXPECT_GT(a.records[0].energy.w_term, 0.0);
}

TEST(Zeta, CandidatesAreDeterministicAndInTheBall) {
    EXPECT_DOUBLE_EQ(radical_inverse(1, 2), 0.5);
    EXPECT_DOUBLE_EQ(radical_inverse(3, 2), 0.75);
    EXPECT_NEAR(radical_inverse(5, 3), 2.0 / 3.0 + 1.0 / 9.0, 1e-15);
    const auto a = zeta_candidates(16), b = zeta_candidates(16);
    ASSERT_EQ(a.size(), 16u);
    EXPECT_EQ(a, b);
    for (const auto& z : a) EXPECT_LE(z.norm(), 1.0);
    EXPECT_THROW((void)zeta_candidates(0), DomainError);
}

TEST(Zeta, ChoiceMinimizesProxy) {
    const auto pf = strip_field(1.0, kTorus, 0.25, 0.75, {1, 0}, {0, 0});
    const auto kernel = AnisotropyKernel::cubic(4.0 * kPi, 0.0);
    const auto p = params(0.0625);
    const auto c = choose_zeta(pf, kTorus, p, kernel, dims_for_eps(kTorus, p.eps), 6);
    ASSERT_EQ(c.proxies.size(), 6u);
    EXPECT_LE(c.proxy, c.mean_proxy);
    for (double q : c.proxies) EXPECT_LE(c.proxy, q);
    bool found = false;
    for (std::size_t k = 0; k < c.candidates.size(); ++k) found = found || (c.candidates[k] == c.zeta && c.proxies[k] == c.proxy);
    EXPECT_TRUE(found);
}
