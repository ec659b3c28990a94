#pragma once

#include <cmath>
#include <string>

#include "nmfsem/matrix.hpp"
#include "nmfsem/model.hpp"

namespace nmfsem {

struct EvalMetrics {
  double sc_map = 0.0;
  double sc_cov = 0.0;
  double mae = 0.0;

  bool operator==(const EvalMetrics&) const = default;
};

/// Pearson correlation of the vectorised matrices.
inline double vec_correlation(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("vec_correlation: shapes " + detail::shape(a) + " and " +
                         detail::shape(b) + " differ");
  }
  if (a.size() < 2) throw DegenerateError("vec_correlation: need at least two entries");
  const Eigen::Map<const Vector> u(a.data(), a.size());
  const Eigen::Map<const Vector> v(b.data(), b.size());
  const Vector du = u.array() - u.mean();
  const Vector dv = v.array() - v.mean();
  const double su = du.squaredNorm();
  const double sv = dv.squaredNorm();
  // Constant up to round-off relative to the entry magnitudes.
  const auto flat = [](const Vector& d, double ss, const Eigen::Map<const Vector>& x) {
    const double scale = x.cwiseAbs().maxCoeff();
    return ss == 0.0 || std::sqrt(ss / static_cast<double>(d.size())) <= 1e-14 * scale;
  };
  if (flat(du, su, u) || flat(dv, sv, v)) {
    throw DegenerateError("vec_correlation: correlation undefined for a constant matrix");
  }
  const double r = du.dot(dv) / std::sqrt(su * sv);
  return std::clamp(r, -1.0, 1.0);
}

/// Correlation between the equilibrium operator and the feed-forward benchmark.
inline double sc_map(const Matrix& m_model, const Matrix& m_simple) {
  return vec_correlation(m_model, m_simple);
}

/// Correlation between M (Y2 Y2^T) M^T and Y1 Y1^T (uncentred second moments).
inline double sc_cov(const Matrix& m_model, const Dataset& data) {
  if (m_model.rows() != data.p1() || m_model.cols() != data.p2()) {
    throw DimensionError("sc_cov: M_model is " + detail::shape(m_model) + " but data have P1=" +
                         std::to_string(data.p1()) + ", P2=" + std::to_string(data.p2()));
  }
  const Matrix s_y2 = data.y2.mat() * data.y2.mat().transpose();
  const Matrix s_model = m_model * s_y2 * m_model.transpose();
  const Matrix s_sample = data.y1.mat() * data.y1.mat().transpose();
  return vec_correlation(s_model, s_sample);
}

inline double mae(const Matrix& y1, const Matrix& y1_hat) {
  if (y1.rows() != y1_hat.rows() || y1.cols() != y1_hat.cols()) {
    throw DimensionError("mae: shapes " + detail::shape(y1) + " and " + detail::shape(y1_hat) +
                         " differ");
  }
  return (y1 - y1_hat).cwiseAbs().mean();
}

/// SC_map, SC_cov and equilibrium MAE for a stable equilibrium.
inline EvalMetrics evaluate(const EquilibriumSummary& eq, const Matrix& m_simple,
                            const Dataset& data) {
  const Matrix y1_hat = predict(eq, data.y2);
  return EvalMetrics{sc_map(*eq.m_model, m_simple), sc_cov(*eq.m_model, data),
                     mae(data.y1.mat(), y1_hat)};
}

}  // namespace nmfsem
