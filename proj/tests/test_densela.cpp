#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rbfkan/densela.hpp"
#include "rbfkan/random.hpp"

using namespace rbfkan;

namespace
{

/// M^T M + I for a random n x n M: symmetric positive definite.
SymMatrix random_spd(Xoshiro256 &rng, std::size_t n)
{
    std::vector<double> m(n * n);
    for (auto &v : m) {
        v = rng.normal();
    }
    std::vector<double> a(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = i == j ? 1.0 : 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                acc += m[k * n + i] * m[k * n + j];
            }
            a[i * n + j] = acc;
        }
    }
    return SymMatrix(n, a);
}

oracle::Dense to_dense(const SymMatrix &a)
{
    oracle::Dense d(a.size(), std::vector<double>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a.size(); ++j) {
            d[i][j] = a(i, j);
        }
    }
    return d;
}

double inf_norm(const std::vector<double> &v)
{
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

} // namespace

TEST(Densela, IdentitySolveIsIdentity)
{
    const auto f = factorize(SymMatrix::identity(3));
    const std::vector<double> b = {1.5, -2.0, 0.25};
    EXPECT_EQ(solve(f, b), b);
    EXPECT_EQ(inverse_diagonal(f), (std::vector<double>{1.0, 1.0, 1.0}));
}

TEST(Densela, TwoByTwoByHand)
{
    const auto f = factorize(SymMatrix(2, {2.0, 1.0, 1.0, 2.0}));
    const auto x = f.solve(std::vector<double>{3.0, 3.0});
    EXPECT_NEAR(x[0], 1.0, 1e-15);
    EXPECT_NEAR(x[1], 1.0, 1e-15);
}

TEST(Densela, RankDeficientThrows)
{
    EXPECT_THROW(factorize(SymMatrix(2, {1.0, 1.0, 1.0, 1.0})), NumericalRankError);
    EXPECT_THROW(factorize(SymMatrix(3, std::vector<double>(9, 0.0))), NumericalRankError);
}

TEST(Densela, DiagonalInverse)
{
    const auto d = inverse_diagonal(factorize(SymMatrix(2, {2.0, 0.0, 0.0, 4.0})));
    EXPECT_DOUBLE_EQ(d[0], 0.5);
    EXPECT_DOUBLE_EQ(d[1], 0.25);
}

TEST(Densela, IdentityInverseDiagonalIsOnes)
{
    for (std::size_t n : {1u, 4u, 17u}) {
        const auto d = inverse_diagonal(factorize(SymMatrix::identity(n)));
        for (double v : d) {
            EXPECT_EQ(v, 1.0);
        }
    }
}

TEST(Densela, ConstructionValidatesSymmetryAndFiniteness)
{
    EXPECT_THROW(SymMatrix(2, {1.0, 2.0, 2.1, 1.0}), DomainError);
    EXPECT_THROW(SymMatrix(2, {1.0, NAN, NAN, 1.0}), DomainError);
    EXPECT_THROW(SymMatrix(2, {1.0, 2.0, 3.0}), DomainError);
    EXPECT_NO_THROW(SymMatrix(2, {1.0, 2.0, 2.0 + 1e-13, 1.0}));
}

TEST(Densela, SolveDimensionMismatch)
{
    const auto f = factorize(SymMatrix::identity(3));
    EXPECT_THROW(f.solve(std::vector<double>{1.0, 2.0}), DomainError);
}

TEST(Densela, RandomSpdRecoversKnownSolution)
{
    Xoshiro256 rng(21);
    const auto a = random_spd(rng, 10);
    std::vector<double> x(10);
    for (auto &v : x) {
        v = rng.normal();
    }
    const auto b = a.multiply(x);
    const auto got = solve(factorize(a), b);
    EXPECT_LE(oracle::rel_max_diff(got, x), 1e-8);
}

TEST(Densela, InverseDiagonalMatchesGaussJordan)
{
    Xoshiro256 rng(22);
    const auto a = random_spd(rng, 8);
    const auto inv = oracle::gauss_jordan_inverse(to_dense(a));
    const auto d = inverse_diagonal(factorize(a));
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_NEAR(d[i], inv[i][i], 1e-10 * std::abs(inv[i][i]));
        EXPECT_GT(d[i], 0.0);
    }
}

TEST(Densela, SolveIsLeftInverseOnRandomSpd)
{
    Xoshiro256 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(50);
        const auto a = random_spd(rng, n);
        std::vector<double> b(n);
        for (auto &v : b) {
            v = rng.normal();
        }
        const auto x = solve(factorize(a), b);
        auto r = a.multiply(x);
        for (std::size_t i = 0; i < n; ++i) {
            r[i] -= b[i];
        }
        EXPECT_LE(inf_norm(r), 1e-8 * (1.0 + inf_norm(b))) << "n=" << n;
    }
}

TEST(Densela, IndefiniteFallsBackToPivotedLu)
{
    // Symmetric, nonsingular, not positive definite.
    const SymMatrix a(3, {0.0, 1.0, 2.0, 1.0, 0.0, 3.0, 2.0, 3.0, 0.0});
    const auto f = factorize(a);
    EXPECT_EQ(f.method(), Factorization::Method::PivotedLU);
    const std::vector<double> x = {1.0, -2.0, 0.5};
    const auto got = f.solve(a.multiply(x));
    EXPECT_LE(oracle::rel_max_diff(got, x), 1e-12);
    const auto inv = oracle::gauss_jordan_inverse(to_dense(a));
    const auto d = inverse_diagonal(f);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(d[i], inv[i][i], 1e-12);
    }
}

TEST(Densela, SpdUsesCholesky)
{
    Xoshiro256 rng(24);
    EXPECT_EQ(factorize(random_spd(rng, 5)).method(), Factorization::Method::Cholesky);
}

TEST(Factorize, DiagonalShiftIsNotRoundedAway)
{
    // [[1,1],[1,1]] + s I has inverse diagonal (1 + s) / (s (2 + s)). Rounding
    // 1 + s to double first would perturb s by about 1e-4 relative.
    const double s = 1e-12;
    const auto d = inverse_diagonal(factorize(SymMatrix(2, {1.0, 1.0, 1.0, 1.0}), s));
    const double expect = (1.0 + s) / (s * (2.0 + s));
    EXPECT_NEAR(d[0] / expect, 1.0, 1e-6);
    EXPECT_NEAR(d[1] / expect, 1.0, 1e-6);
}
