#pragma once

#include <random>

#include <Eigen/Dense>

#include "nmfsem/nmfsem.hpp"

namespace testing_support {

using nmfsem::Matrix;

inline Matrix uniform(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = 0.0,
                      double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = u(rng);
  return m;
}

inline Matrix stochastic(Eigen::Index p, Eigen::Index q, std::mt19937_64& rng) {
  Matrix x = uniform(p, q, rng, 0.05, 1.0);
  for (Eigen::Index j = 0; j < q; ++j) x.col(j) /= x.col(j).sum();
  return x;
}

// Random (X, Theta1, Theta2) with op_norm_1(X Theta1) = feedback_norm.
inline nmfsem::ModelParams random_params(Eigen::Index p1, Eigen::Index p2, Eigen::Index q,
                                         double feedback_norm, std::mt19937_64& rng) {
  const Matrix x = stochastic(p1, q, rng);
  Matrix t1 = uniform(q, p1, rng);
  if (feedback_norm == 0.0) {
    t1.setZero();
  } else {
    t1 *= feedback_norm / nmfsem::op_norm_1(Matrix(x * t1));
  }
  return {nmfsem::NonNegMatrix(x), nmfsem::NonNegMatrix(t1),
          nmfsem::NonNegMatrix(uniform(q, p2, rng))};
}

// Noise-free data on the equilibrium of `p`.
inline nmfsem::Dataset model_data(const nmfsem::ModelParams& p, Eigen::Index n,
                                  std::mt19937_64& rng) {
  const Matrix y2 = uniform(p.p2(), n, rng);
  const Matrix y1 =
      nmfsem::solve_i_minus(nmfsem::NonNegMatrix(p.feedback_operator()), p.direct_effect() * y2)
          .cwiseMax(0.0);
  return {nmfsem::NonNegMatrix(y1), nmfsem::NonNegMatrix(y2)};
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace testing_support
