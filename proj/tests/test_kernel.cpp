#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "pnlt/kernel.hpp"

using namespace pnlt;

namespace {

constexpr double kPi = std::numbers::pi;

// Hand-written cubic formula, independent of the library's evaluation path.
Matrix cubic_reference(double mu, double nu, double theta) {
    const double c = mu / (16.0 * kPi * (1.0 - nu));
    const double y1 = std::cos(theta), y2 = std::sin(theta);
    Matrix m(2, 2);
    m << c * (nu + 1.0 - 3.0 * nu * y2 * y2), c * 3.0 * nu * y1 * y2, c * 3.0 * nu * y1 * y2,
        c * (nu + 1.0 - 3.0 * nu * y1 * y1);
    return m;
}

double rel_err(const Matrix& a, const Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
}

} // namespace

TEST(Kernel, IsotropicUnitDistanceGivesIdentity) {
    const auto k = AnisotropyKernel::cubic(16.0 * kPi, 0.0);
    const Matrix g = k.gamma(Vec2(1.0, 0.0));
    EXPECT_NEAR((g - Matrix::Identity(2, 2)).norm(), 0.0, 1e-15);
    EXPECT_NEAR(k.lambda_min(), 1.0, 1e-15);
    EXPECT_NEAR(k.lambda_max(), 1.0, 1e-15);
}

TEST(Kernel, CubicMatchesHandFormula) {
    for (double nu : {-0.5, 0.0, 0.3, 0.45}) {
        const auto k = AnisotropyKernel::cubic(2.5, nu);
        for (int j = 0; j < 97; ++j) {
            const double theta = 2.0 * kPi * j / 97.0 + 0.01;
            EXPECT_LT(rel_err(k.gammahat_angle(theta), cubic_reference(2.5, nu, theta)), 1e-14);
        }
    }
}

TEST(Kernel, EvenAndSymmetric) {
    const auto k = AnisotropyKernel::cubic(1.0, 0.3);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        const Vec2 y(u(rng), u(rng));
        const Matrix a = k.gammahat(y), b = k.gammahat(-y);
        EXPECT_EQ(a, b);
        EXPECT_EQ(a, a.transpose());
    }
}

TEST(Kernel, EllipticityBoundsMatchEigenvalues) {
    // Eigenvalues of c[(1 + nu) I - 3 nu t t^T] are c(1 + nu) and c(1 - 2 nu).
    for (double nu : {-0.4, 0.2, 0.3}) {
        const auto k = AnisotropyKernel::cubic(3.0, nu);
        const double c = 3.0 / (16.0 * kPi * (1.0 - nu));
        EXPECT_NEAR(k.lambda_min(), c * std::min(1.0 + nu, 1.0 - 2.0 * nu), 1e-14);
        EXPECT_NEAR(k.lambda_max(), c * std::max(1.0 + nu, 1.0 - 2.0 * nu), 1e-14);
    }
}

TEST(Kernel, RejectsNonEllipticParameters) {
    for (double nu : {0.5, 0.6, 0.99}) {
        try {
            (void)AnisotropyKernel::cubic(4.0 * kPi, nu);
            FAIL() << "nu = " << nu << " accepted";
        } catch (const ConstructionError& e) {
            EXPECT_NE(std::string(e.what()).find("kernel not elliptic"), std::string::npos);
        }
    }
    EXPECT_THROW((void)AnisotropyKernel::cubic(-1.0, 0.0), ConstructionError);
    EXPECT_THROW((void)AnisotropyKernel::cubic(1.0, -1.0), ConstructionError);
}

TEST(Kernel, SingularPointIsDomainError) {
    const auto k = AnisotropyKernel::cubic(1.0, 0.0);
    EXPECT_THROW((void)k.gamma(Vec2(0.0, 0.0)), DomainError);
    EXPECT_THROW((void)TruncatedKernel(k, 2).eval(Vec2(0.0, 0.0)), DomainError);
}

TEST(Kernel, HomogeneousOfDegreeMinusThree) {
    const auto k = AnisotropyKernel::cubic(1.0, 0.25);
    const Vec2 z(0.3, -0.7);
    EXPECT_LT(rel_err(k.gamma(2.0 * z), k.gamma(z) / 8.0), 1e-14);
}

TEST(Kernel, TabulatedReproducesSamplesAndIsEven) {
    const int count = 64;
    std::vector<Matrix> samples;
    for (int j = 0; j < count; ++j) samples.push_back(cubic_reference(1.0, 0.3, 2.0 * kPi * j / count));
    const auto k = AnisotropyKernel::tabulated(samples);
    for (int j = 0; j < count; ++j) EXPECT_LT(rel_err(k.gammahat_angle(2.0 * kPi * j / count), samples[j]), 1e-12);
    for (int t = 0; t < 50; ++t) {
        const double th = 0.123 * t;
        EXPECT_LT(rel_err(k.gammahat_angle(th), k.gammahat_angle(th + kPi)), 1e-13);
    }
    // Between nodes the interpolant is within the linear-interpolation error of the smooth kernel.
    EXPECT_LT(rel_err(k.gammahat_angle(0.05), cubic_reference(1.0, 0.3, 0.05)), 1e-2);
}

TEST(Kernel, TabulatedSymmetrizesUnevenInput) {
    std::vector<Matrix> samples(4, Matrix::Identity(1, 1));
    samples[0](0, 0) = 2.0;  // paired with sample 2 = 1.0
    const auto k = AnisotropyKernel::tabulated(samples);
    EXPECT_NEAR(k.gammahat_angle(0.0)(0, 0), 1.5, 1e-15);
    EXPECT_NEAR(k.gammahat_angle(kPi)(0, 0), 1.5, 1e-15);
    EXPECT_THROW((void)AnisotropyKernel::tabulated(std::vector<Matrix>(3, Matrix::Identity(1, 1))), ConstructionError);
}

TEST(Kernel, LoadsPlainTextTable) {
    const std::string path = testing::TempDir() + "kernel_table.txt";
    {
        std::ofstream out(path);
        out << "2 4\n";
        for (int j = 0; j < 4; ++j) out << "2 0.5 3\n";
    }
    const auto k = AnisotropyKernel::load(path);
    EXPECT_EQ(k.components(), 2);
    const Matrix g = k.gammahat_angle(1.0);
    EXPECT_DOUBLE_EQ(g(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(g(0, 1), 0.5);
    EXPECT_DOUBLE_EQ(g(1, 0), 0.5);
    EXPECT_DOUBLE_EQ(g(1, 1), 3.0);
    {
        std::ofstream out(path);
        out << "2 4\n1 0 1\n";
    }
    EXPECT_THROW((void)AnisotropyKernel::load(path), ConstructionError);
    std::remove(path.c_str());
}

TEST(TruncatedKernel, ThreeBranches) {
    const auto k = AnisotropyKernel::cubic(16.0 * kPi, 0.0);  // Gammahat = I
    const int level = 3;
    const TruncatedKernel tk(k, level);
    const double inner = 1.0 / 16.0, outer = 1.0 / 8.0;
    EXPECT_NEAR(tk.eval(Vec2(0.5 * inner, 0.0))(0, 0), 4096.0 - 512.0, 1e-9);
    EXPECT_NEAR(tk.eval(Vec2(inner, 0.0))(0, 0), 4096.0 - 512.0, 1e-9);
    const double r = 0.1;
    EXPECT_NEAR(tk.eval(Vec2(0.0, r))(1, 1), 1.0 / (r * r * r) - 512.0, 1e-9);
    EXPECT_NEAR(tk.eval(Vec2(outer, 0.0))(0, 0), 0.0, 1e-9);
    EXPECT_EQ(tk.eval(Vec2(outer * 1.001, 0.0))(0, 0), 0.0);
}

TEST(TruncatedKernel, BandsArePositiveSemidefiniteAndBelowKernel) {
    const auto k = AnisotropyKernel::cubic(1.0, 0.3);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 300; ++t) {
        Vec2 z(u(rng), u(rng));
        if (z.norm() < 1e-3) continue;
        Matrix acc = Matrix::Zero(2, 2);
        for (int level = 0; level <= 10; ++level) {
            const Matrix band = TruncatedKernel(k, level).eval(z);
            Eigen::SelfAdjointEigenSolver<Matrix> es(band);
            EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12 * std::max(1.0, band.norm()));
            acc += band;
            Eigen::SelfAdjointEigenSolver<Matrix> gap(k.gamma(z) - acc);
            EXPECT_GE(gap.eigenvalues().minCoeff(), -1e-10 * k.gamma(z).norm());
        }
    }
}

TEST(TruncatedKernel, TelescopingClosedForm) {
    const auto k = AnisotropyKernel::cubic(4.0 * kPi, 0.3);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int checked = 0;
    while (checked < 200) {
        const Vec2 z(u(rng), u(rng));
        const double r = z.norm();
        if (r == 0.0 || r > 1.0) continue;
        ++checked;
        Matrix acc = Matrix::Zero(2, 2);
        for (int level = 0; level <= 10; ++level) {
            acc += TruncatedKernel(k, level).eval(z);
            const double w = std::min(1.0 / (r * r * r), std::pow(2.0, 3.0 * (level + 1))) - 1.0;
            const Matrix closed = k.gammahat(z) * w;
            if (closed.norm() == 0.0) {
                EXPECT_LT(acc.norm(), 1e-12);
                continue;
            }
            EXPECT_LT((acc - closed).norm() / closed.norm(), 1e-10) << "level " << level << " r " << r;
        }
    }
}
