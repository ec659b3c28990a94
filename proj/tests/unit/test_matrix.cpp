#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace nmfsem;
using testing_support::uniform;

namespace {

Matrix m2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

// Largest |eigenvalue| from a general dense eigensolver.
double dense_rho(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

TEST(NonNegMatrix, RejectsNegativeNonFiniteAndEmpty) {
  EXPECT_THROW(NonNegMatrix(m2(0.1, -1e-300, 0, 0)), DomainError);
  EXPECT_THROW(NonNegMatrix(m2(0.1, std::nan(""), 0, 0)), DomainError);
  EXPECT_THROW(NonNegMatrix(m2(std::numeric_limits<double>::infinity(), 0, 0, 0)), DomainError);
  EXPECT_THROW(NonNegMatrix(Matrix(0, 3)), DimensionError);
  EXPECT_NO_THROW(NonNegMatrix(1, 1, 0.0));
}

TEST(SpectralRadius, TrivialCases) {
  EXPECT_EQ(spectral_radius(NonNegMatrix::zeros(3, 3)).value, 0.0);
  EXPECT_NEAR(spectral_radius(NonNegMatrix(0.5 * Matrix::Identity(2, 2))), 0.5, 1e-12);
  EXPECT_NEAR(spectral_radius(NonNegMatrix(1, 1, 0.3)), 0.3, 1e-12);
}

TEST(SpectralRadius, QuadraticFormulaOracle) {
  // Characteristic polynomial l^2 - 0.6 l + 0.05; largest root
  // (0.6 + sqrt(0.36 - 0.2)) / 2 = 0.5.
  const double oracle = (0.6 + std::sqrt(0.6 * 0.6 - 4 * 0.05)) / 2.0;
  ASSERT_DOUBLE_EQ(oracle, 0.5);
  const auto r = spectral_radius(NonNegMatrix(m2(0.2, 0.1, 0.3, 0.4)));
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.value, oracle, 1e-9);
}

TEST(SpectralRadius, NonSquareIsDimensionError) {
  EXPECT_THROW(spectral_radius(NonNegMatrix(2, 3, 0.1)), DimensionError);
}

TEST(SpectralRadius, PeriodicMatrixConverges) {
  // A permutation matrix: unshifted power iteration would oscillate.
  Matrix p = Matrix::Zero(3, 3);
  p(0, 1) = p(1, 2) = p(2, 0) = 0.7;
  const auto r = spectral_radius(NonNegMatrix(p));
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.value, 0.7, 1e-8);
}

TEST(SpectralRadius, ReportsNonConvergence) {
  std::mt19937_64 rng(1);
  const auto r = spectral_radius(NonNegMatrix(uniform(5, 5, rng)), 1e-15, 2);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 2u);
}

TEST(SpectralRadius, MatchesDenseEigensolverOnRandomMatrices) {
  std::mt19937_64 rng(20240501);
  for (int trial = 0; trial < 300; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(trial % 9);
    Matrix a = uniform(n, n, rng);
    if (trial % 3 == 0) a = (a.array() < 0.5).select(0.0, a);  // sparse patterns
    const double norm = op_norm_1(a);
    if (norm == 0.0) continue;
    a *= 0.9 / norm;
    const NonNegMatrix nn(a);
    const double rho = spectral_radius(nn);
    EXPECT_NEAR(rho, dense_rho(a), 1e-8) << "trial " << trial;
    EXPECT_LE(rho, op_norm_1(nn) + 1e-12);
  }
}

TEST(OpNorm1, Examples) {
  EXPECT_DOUBLE_EQ(op_norm_1(NonNegMatrix::identity(3)), 1.0);
  EXPECT_DOUBLE_EQ(op_norm_1(NonNegMatrix(m2(0.2, 0.1, 0.3, 0.4))), 0.5);
  std::mt19937_64 rng(3);
  EXPECT_NEAR(op_norm_1(NonNegMatrix(testing_support::stochastic(6, 4, rng))), 1.0, 1e-15);
}

TEST(NeumannInverse, TrivialCases) {
  EXPECT_EQ(neumann_inverse(NonNegMatrix::zeros(2, 2)), Matrix::Identity(2, 2));
  const Matrix n = neumann_inverse(NonNegMatrix(m2(0, 0.5, 0, 0)));
  EXPECT_EQ(n, m2(1, 0.5, 0, 1));
}

TEST(NeumannInverse, AdjugateOracle) {
  // I - A = [[0.8, -0.1], [-0.3, 0.6]], det = 0.45.
  const double det = 0.8 * 0.6 - 0.1 * 0.3;
  const Matrix oracle = m2(0.6, 0.1, 0.3, 0.8) / det;
  const Matrix n = neumann_inverse(NonNegMatrix(m2(0.2, 0.1, 0.3, 0.4)));
  EXPECT_LT(testing_support::max_abs_diff(n, oracle), 1e-12);
}

TEST(NeumannInverse, ErrorsOnInstabilityAndTermBudget) {
  EXPECT_THROW(neumann_inverse(NonNegMatrix(1, 1, 1.0)), InstabilityError);
  EXPECT_THROW(neumann_inverse(NonNegMatrix(2, 2, 0.6)), InstabilityError);
  try {
    neumann_inverse(NonNegMatrix(1, 1, 0.5), 1e-14, 3);
    FAIL() << "expected NonConvergenceError";
  } catch (const NonConvergenceError& e) {
    ASSERT_EQ(e.partial().size(), 1);
    EXPECT_DOUBLE_EQ(e.partial()(0, 0), 1.0 + 0.5 + 0.25 + 0.125);
  }
}

TEST(NeumannInverse, AtLeastIdentityAndMonotoneInTerms) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix a = uniform(4, 4, rng);
    a *= 0.8 / op_norm_1(a);
    const NonNegMatrix nn(a);
    const Matrix full = neumann_inverse(nn);
    EXPECT_TRUE(((full - Matrix::Identity(4, 4)).array() >= 0.0).all());
    Matrix prev = Matrix::Identity(4, 4);
    for (double tol : {1e-1, 1e-3, 1e-6, 1e-10}) {
      const Matrix cur = neumann_inverse(nn, tol);
      EXPECT_TRUE(((cur - prev).array() >= 0.0).all());
      prev = cur;
    }
  }
}

TEST(SolveIMinus, Examples) {
  std::mt19937_64 rng(2);
  const Matrix b = uniform(3, 2, rng);
  EXPECT_EQ(solve_i_minus(NonNegMatrix::zeros(3, 3), b), b);
  EXPECT_NEAR(solve_i_minus(NonNegMatrix(1, 1, 0.5), Matrix::Ones(1, 1))(0, 0), 2.0, 1e-15);
  const NonNegMatrix a(m2(0.2, 0.1, 0.3, 0.4));
  EXPECT_LT(testing_support::max_abs_diff(solve_i_minus(a, Matrix::Identity(2, 2)),
                                          neumann_inverse(a)),
            1e-10);
}

TEST(SolveIMinus, Errors) {
  EXPECT_THROW(solve_i_minus(NonNegMatrix(1, 1, 1.0), Matrix::Ones(1, 1)), InstabilityError);
  EXPECT_THROW(solve_i_minus(NonNegMatrix(2, 2, 0.1), Matrix::Ones(3, 1)), DimensionError);
}

TEST(SolveIMinus, AgreesWithNeumannOnRandomSystems) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 1 + trial % 7;
    Matrix a = uniform(n, n, rng);
    a *= 0.95 / op_norm_1(a);
    const Matrix b = uniform(n, 3, rng);
    const NonNegMatrix nn(a);
    EXPECT_LT(testing_support::max_abs_diff(neumann_inverse(nn) * b, solve_i_minus(nn, b)), 1e-8);
  }
}
