#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "nmfsem/errors.hpp"

namespace nmfsem {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense matrix whose entries are finite and non-negative, with at least one
/// row and one column. Entries are validated once at construction; the
/// contents are immutable afterwards.
class NonNegMatrix {
public:
  NonNegMatrix() : m_(Matrix::Zero(1, 1)) {}

  explicit NonNegMatrix(Matrix m) : m_(std::move(m)) { validate(); }

  NonNegMatrix(Eigen::Index rows, Eigen::Index cols, double fill)
      : m_(Matrix::Constant(rows, cols, fill)) {
    validate();
  }

  static NonNegMatrix zeros(Eigen::Index rows, Eigen::Index cols) {
    return NonNegMatrix(Matrix::Zero(rows, cols));
  }
  static NonNegMatrix identity(Eigen::Index n) {
    return NonNegMatrix(Matrix::Identity(n, n));
  }

  Eigen::Index rows() const noexcept { return m_.rows(); }
  Eigen::Index cols() const noexcept { return m_.cols(); }
  bool square() const noexcept { return m_.rows() == m_.cols(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

  const Matrix& mat() const noexcept { return m_; }
  operator const Matrix&() const noexcept { return m_; }

  bool operator==(const NonNegMatrix& other) const {
    return m_.rows() == other.m_.rows() && m_.cols() == other.m_.cols() && m_ == other.m_;
  }

private:
  void validate() const {
    if (m_.rows() < 1 || m_.cols() < 1) {
      throw DimensionError("NonNegMatrix must have at least one row and one column");
    }
    for (Eigen::Index j = 0; j < m_.cols(); ++j) {
      for (Eigen::Index i = 0; i < m_.rows(); ++i) {
        const double v = m_(i, j);
        if (!std::isfinite(v) || v < 0.0) {
          std::ostringstream os;
          os << "NonNegMatrix entry (" << i << ", " << j << ") = " << v
             << " is negative or not finite";
          throw DomainError(os.str());
        }
      }
    }
  }

  Matrix m_;
};

namespace detail {

inline std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw DimensionError(std::string(what) + ": expected a square matrix, got " + shape(m));
  }
}

}  // namespace detail

// Maximum absolute column sum.
inline double op_norm_1(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().colwise().sum().maxCoeff();
}

inline double op_norm_1(const NonNegMatrix& m) { return m.mat().colwise().sum().maxCoeff(); }

struct SpectralRadius {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = true;

  operator double() const noexcept { return value; }
};

/// Dominant eigenvalue of a non-negative square matrix by power iteration.
///
/// Iterates on A + s*I with s = ||A||_1. The shift keeps the Perron root
/// dominant in modulus even for periodic matrices (e.g. permutations), and
/// the all-ones start vector stays strictly positive throughout. Convergence
/// is judged on the Collatz-Wielandt bracket min_i (Av)_i / v_i <= rho <=
/// max_i (Av)_i / v_i rather than on the step size, which can be momentarily
/// tiny while the iterate still oscillates around the limit. Components that
/// have decayed below 1e-12 of the largest one are left out of the bracket so
/// reducible matrices still close it. The result is flagged as not converged
/// when max_iter is reached before the bracket width drops below
/// tol * (rho + s).
inline SpectralRadius spectral_radius(const NonNegMatrix& m, double tol = 1e-10,
                                      std::size_t max_iter = 10000) {
  detail::require_square(m.mat(), "spectral_radius");
  if (!(tol > 0.0)) throw DomainError("spectral_radius: tol must be positive");

  const Matrix& a = m.mat();
  const double shift = op_norm_1(m);
  if (shift == 0.0) return {0.0, 0, true};

  constexpr double kNegligible = 1e-12;
  const Eigen::Index n = a.rows();
  Vector v = Vector::Constant(n, 1.0 / static_cast<double>(n));
  SpectralRadius out{0.0, 0, false};
  double lo = 0.0, hi = shift;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    const Vector av = a * v;
    const double cut = kNegligible * v.maxCoeff();
    lo = HUGE_VAL;
    hi = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (v(i) <= cut) continue;
      const double ratio = av(i) / v(i);
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    out.iterations = it;
    if (hi - lo <= tol * (hi + shift)) {
      out.converged = true;
      break;
    }
    const Vector w = av + shift * v;
    v = w / w.sum();
  }
  out.value = std::max(0.0, 0.5 * (lo + hi));
  return out;
}

/// Truncated Neumann series sum_k a^k for rho(a) < 1. Accumulation stops once
/// the most recently added power has operator 1-norm below tol.
inline Matrix neumann_inverse(const NonNegMatrix& a, double tol = 1e-14,
                              std::size_t max_terms = 100000) {
  detail::require_square(a.mat(), "neumann_inverse");
  const double rho = spectral_radius(a);
  if (rho >= 1.0) {
    throw InstabilityError("neumann_inverse: spectral radius " + std::to_string(rho) +
                           " is not below 1");
  }
  const Eigen::Index n = a.rows();
  Matrix sum = Matrix::Identity(n, n);
  Matrix term = Matrix::Identity(n, n);
  for (std::size_t k = 1; k <= max_terms; ++k) {
    term = term * a.mat();
    sum += term;
    if (op_norm_1(term) < tol) return sum;
  }
  throw NonConvergenceError("neumann_inverse: " + std::to_string(max_terms) +
                                " terms did not reach tolerance",
                            std::move(sum));
}

/// (I - a)^{-1} b by LU with partial pivoting.
inline Matrix solve_i_minus(const NonNegMatrix& a, const Matrix& b) {
  detail::require_square(a.mat(), "solve_i_minus");
  if (b.rows() != a.rows()) {
    throw DimensionError("solve_i_minus: right-hand side is " + detail::shape(b) +
                         " but system is " + detail::shape(a.mat()));
  }
  const double rho = spectral_radius(a);
  if (rho >= 1.0) {
    throw InstabilityError("solve_i_minus: spectral radius " + std::to_string(rho) +
                           " is not below 1");
  }
  const Eigen::Index n = a.rows();
  const Matrix lhs = Matrix::Identity(n, n) - a.mat();
  Eigen::PartialPivLU<Matrix> lu(lhs);
  if (!(lu.rcond() > 1e3 * std::numeric_limits<double>::epsilon())) {
    throw InstabilityError("solve_i_minus: (I - a) is numerically singular");
  }
  return lu.solve(b);
}

}  // namespace nmfsem
