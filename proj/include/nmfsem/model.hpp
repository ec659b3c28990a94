#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "nmfsem/matrix.hpp"

namespace nmfsem {

/// Paired observations: endogenous y1 (P1 x N) and exogenous y2 (P2 x N).
/// Variables are rows, observations are columns.
struct Dataset {
  NonNegMatrix y1;
  NonNegMatrix y2;
  std::vector<std::string> y1_names;
  std::vector<std::string> y2_names;

  Dataset() = default;

  Dataset(NonNegMatrix endogenous, NonNegMatrix exogenous,
          std::vector<std::string> endogenous_names = {},
          std::vector<std::string> exogenous_names = {})
      : y1(std::move(endogenous)),
        y2(std::move(exogenous)),
        y1_names(std::move(endogenous_names)),
        y2_names(std::move(exogenous_names)) {
    if (y1.cols() != y2.cols()) {
      throw DimensionError("Dataset: y1 has " + std::to_string(y1.cols()) +
                           " observations but y2 has " + std::to_string(y2.cols()));
    }
    if (y1.cols() < 2) throw DimensionError("Dataset: at least two observations are required");
    if (y1_names.empty()) y1_names = default_names("y1_", y1.rows());
    if (y2_names.empty()) y2_names = default_names("y2_", y2.rows());
    if (static_cast<Eigen::Index>(y1_names.size()) != y1.rows() ||
        static_cast<Eigen::Index>(y2_names.size()) != y2.rows()) {
      throw DimensionError("Dataset: variable name count does not match row count");
    }
  }

  Eigen::Index p1() const noexcept { return y1.rows(); }
  Eigen::Index p2() const noexcept { return y2.rows(); }
  Eigen::Index n() const noexcept { return y1.cols(); }

  /// Columns `idx` of both blocks, in the given order (repeats allowed).
  Dataset select_columns(const std::vector<std::size_t>& idx) const {
    Matrix a(p1(), static_cast<Eigen::Index>(idx.size()));
    Matrix b(p2(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto c = static_cast<Eigen::Index>(idx[k]);
      if (c >= n()) throw DimensionError("Dataset::select_columns: index out of range");
      a.col(static_cast<Eigen::Index>(k)) = y1.mat().col(c);
      b.col(static_cast<Eigen::Index>(k)) = y2.mat().col(c);
    }
    return Dataset(NonNegMatrix(std::move(a)), NonNegMatrix(std::move(b)), y1_names, y2_names);
  }

  static std::vector<std::string> default_names(const std::string& prefix, Eigen::Index n) {
    std::vector<std::string> out;
    for (Eigen::Index i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i + 1));
    return out;
  }
};

/// The structural parameters (X, Theta1, Theta2). X is P1 x Q with unit
/// column sums; Theta1 is Q x P1 (endogenous -> latent); Theta2 is Q x P2
/// (exogenous -> latent).
struct ModelParams {
  NonNegMatrix x;
  NonNegMatrix theta1;
  NonNegMatrix theta2;

  static constexpr double kColumnSumTol = 1e-8;

  ModelParams() = default;

  ModelParams(NonNegMatrix basis, NonNegMatrix feedback, NonNegMatrix direct)
      : x(std::move(basis)), theta1(std::move(feedback)), theta2(std::move(direct)) {
    const auto q = x.cols();
    if (theta1.rows() != q || theta2.rows() != q) {
      throw DimensionError("ModelParams: latent dimension mismatch between X and Theta");
    }
    if (theta1.cols() != x.rows()) {
      throw DimensionError("ModelParams: Theta1 must be Q x P1");
    }
    for (Eigen::Index j = 0; j < q; ++j) {
      const double s = x.mat().col(j).sum();
      if (std::abs(s - 1.0) > kColumnSumTol) {
        throw DomainError("ModelParams: column " + std::to_string(j) + " of X sums to " +
                          std::to_string(s) + ", expected 1");
      }
    }
  }

  Eigen::Index p1() const noexcept { return x.rows(); }
  Eigen::Index p2() const noexcept { return theta2.cols(); }
  Eigen::Index q() const noexcept { return x.cols(); }

  Matrix feedback_operator() const { return x.mat() * theta1.mat(); }  // X Theta1
  Matrix direct_effect() const { return x.mat() * theta2.mat(); }      // X Theta2
};

struct EquilibriumSummary {
  std::optional<Matrix> m_model;  // absent when unstable
  Matrix m_direct;
  double rho = 0.0;
  std::optional<double> ar;
  std::optional<double> ar_upper_bound;
  bool stable = false;
  bool near_critical = false;  // stable with rho > 0.99

  static constexpr double kNearCritical = 0.99;
};

/// B = Theta1 Y1 + Theta2 Y2.
inline Matrix coefficient_matrix(const ModelParams& params, const Dataset& data) {
  if (params.p1() != data.p1() || params.p2() != data.p2()) {
    throw DimensionError("coefficient_matrix: parameters are " + std::to_string(params.p1()) +
                         "/" + std::to_string(params.p2()) + " but data have P1=" +
                         std::to_string(data.p1()) + ", P2=" + std::to_string(data.p2()));
  }
  return params.theta1.mat() * data.y1.mat() + params.theta2.mat() * data.y2.mat();
}

inline constexpr double kDegenerateDirectNorm = 1e-12;

/// Reduced-form equilibrium operator M = (I - X Theta1)^{-1} X Theta2 with the
/// feedback diagnostics. Unstable systems (rho >= 1) carry no M or AR.
inline EquilibriumSummary equilibrium(const ModelParams& params) {
  EquilibriumSummary s;
  s.m_direct = params.direct_effect();
  const double direct_norm = op_norm_1(s.m_direct);
  if (direct_norm < kDegenerateDirectNorm) {
    throw DegenerateError("equilibrium: ||X Theta2||_1 = " + std::to_string(direct_norm) +
                          " is degenerate; amplification ratio undefined");
  }
  const NonNegMatrix feedback(params.feedback_operator());
  s.rho = spectral_radius(feedback);
  s.stable = s.rho < 1.0;
  if (!s.stable) return s;

  s.near_critical = s.rho > EquilibriumSummary::kNearCritical;
  // Round-off in the LU solve can leave entries at -1e-17; the exact
  // operator is non-negative.
  s.m_model = solve_i_minus(feedback, s.m_direct).cwiseMax(0.0);
  s.ar = op_norm_1(*s.m_model) / direct_norm;
  const double f_norm = op_norm_1(feedback);
  if (f_norm < 1.0) s.ar_upper_bound = 1.0 / (1.0 - f_norm);
  return s;
}

/// [X Theta2, F X Theta2, ..., F^k X Theta2] with F = X Theta1.
inline std::vector<Matrix> neumann_terms(const ModelParams& params, std::size_t k) {
  const Matrix f = params.feedback_operator();
  const double rho = spectral_radius(NonNegMatrix(f));
  if (rho >= 1.0) {
    throw InstabilityError("neumann_terms: spectral radius " + std::to_string(rho) +
                           " is not below 1");
  }
  std::vector<Matrix> terms;
  terms.reserve(k + 1);
  terms.push_back(params.direct_effect());
  for (std::size_t i = 1; i <= k; ++i) terms.push_back(f * terms.back());
  return terms;
}

/// Equilibrium prediction M_model * y2.
inline Matrix predict(const EquilibriumSummary& summary, const Matrix& y2) {
  if (!summary.stable || !summary.m_model) {
    throw InstabilityError("predict: equilibrium is unstable (rho = " +
                           std::to_string(summary.rho) + ")");
  }
  if (summary.m_model->cols() != y2.rows()) {
    throw DimensionError("predict: M_model has " + std::to_string(summary.m_model->cols()) +
                         " columns but y2 has " + std::to_string(y2.rows()) + " rows");
  }
  return *summary.m_model * y2;
}

inline Matrix predict(const EquilibriumSummary& summary, const NonNegMatrix& y2) {
  return predict(summary, y2.mat());
}

}  // namespace nmfsem
