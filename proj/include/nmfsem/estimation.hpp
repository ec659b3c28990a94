#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "nmfsem/matrix.hpp"
#include "nmfsem/metrics.hpp"
#include "nmfsem/model.hpp"

namespace nmfsem {

enum class InitMethod { nndsvdar, kmeans, given };

inline const char* to_string(InitMethod m) {
  switch (m) {
    case InitMethod::nndsvdar: return "nndsvdar";
    case InitMethod::kmeans: return "kmeans";
    case InitMethod::given: return "given";
  }
  return "?";
}

inline InitMethod parse_init_method(const std::string& s) {
  if (s == "nndsvdar") return InitMethod::nndsvdar;
  if (s == "kmeans") return InitMethod::kmeans;
  if (s == "given") return InitMethod::given;
  throw DomainError("unknown initialisation method '" + s + "' (nndsvdar, kmeans, given)");
}

/// literal: the regularised rules with the bare lambdas in the denominators.
/// scale_consistent: the same rules with the penalty terms scaled so that each
/// sweep (including column renormalisation) descends loss().
enum class UpdateRule { scale_consistent, literal };

inline const char* to_string(UpdateRule r) {
  return r == UpdateRule::literal ? "literal" : "scale_consistent";
}

inline UpdateRule parse_update_rule(const std::string& s) {
  if (s == "scale_consistent") return UpdateRule::scale_consistent;
  if (s == "literal") return UpdateRule::literal;
  throw DomainError("unknown update rule '" + s + "' (scale_consistent, literal)");
}

struct Penalties {
  double lambda_x = 0.0;  // orthogonality of X columns
  double lambda_1 = 0.0;  // L1 on Theta1
  double lambda_2 = 0.0;  // L1 on Theta2

  void validate() const {
    for (double v : {lambda_x, lambda_1, lambda_2}) {
      if (!std::isfinite(v) || v < 0.0) {
        throw DomainError("Penalties: every lambda must be finite and non-negative");
      }
    }
  }

  bool operator==(const Penalties&) const = default;
};

struct FitConfig {
  std::size_t q = 1;
  Penalties penalties;
  std::size_t max_iter = 2000;
  double rel_tol = 1e-6;
  InitMethod init = InitMethod::nndsvdar;
  double epsilon_floor = 1e-12;
  std::uint64_t seed = 0;
  UpdateRule rule = UpdateRule::scale_consistent;
  std::optional<Matrix> given_x;  // P1 x Q, required when init == given

  void validate() const {
    if (q < 1) throw DomainError("FitConfig: q must be at least 1");
    if (!(rel_tol > 0.0)) throw DomainError("FitConfig: rel_tol must be positive");
    if (!(epsilon_floor > 0.0)) throw DomainError("FitConfig: epsilon_floor must be positive");
    penalties.validate();
    if (init == InitMethod::given && !given_x) {
      throw DomainError("FitConfig: init = given requires given_x");
    }
  }
};

struct FitResult {
  ModelParams params;
  Matrix m_simple;  // X0 Theta0 from the feed-forward initialisation
  std::vector<double> loss_trace;
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t init_iterations = 0;
  EquilibriumSummary equilibrium;
  std::optional<EvalMetrics> metrics;
  std::vector<std::string> y1_names;
  std::vector<std::string> y2_names;
  std::vector<std::string> warnings;
};

/// Second moments of Z = [Y1; Y2]. Every multiplicative update can be written
/// in terms of G = Z Z^T, so per-iteration cost does not grow with N.
struct Moments {
  Matrix g;
  Eigen::Index p1 = 0;
  Eigen::Index p2 = 0;

  explicit Moments(const Dataset& data) : p1(data.p1()), p2(data.p2()) {
    Matrix z(p1 + p2, data.n());
    z << data.y1.mat(), data.y2.mat();
    g = z * z.transpose();
  }

  auto g11() const { return g.topLeftCorner(p1, p1); }   // Y1 Y1^T
  auto g12() const { return g.topRightCorner(p1, p2); }  // Y1 Y2^T
  auto g1z() const { return g.topRows(p1); }             // Y1 Z^T
  auto gz1() const { return g.leftCols(p1); }            // Z Y1^T
  auto gz2() const { return g.rightCols(p2); }           // Z Y2^T
};

namespace detail {

inline constexpr double kCollapsedColumn = 1e-100;

struct RawParams {
  Matrix x;
  Matrix theta1;
  Matrix theta2;
};

inline RawParams raw(const ModelParams& p) { return {p.x.mat(), p.theta1.mat(), p.theta2.mat()}; }

inline double raw_loss(const RawParams& p, const Dataset& data, const Penalties& pen) {
  const Matrix b = p.theta1 * data.y1.mat() + p.theta2 * data.y2.mat();
  double l = (data.y1.mat() - p.x * b).squaredNorm();
  if (pen.lambda_x != 0.0) {
    Matrix gram = p.x.transpose() * p.x;
    gram.diagonal().setZero();
    l += 0.5 * pen.lambda_x * gram.squaredNorm();
  }
  l += pen.lambda_1 * p.theta1.sum() + pen.lambda_2 * p.theta2.sum();
  return l;
}

// One sweep X -> (renormalise) -> Theta1 -> Theta2, in place.
//
// scale_consistent majorises exactly the objective returned by loss(): the
// L1 terms enter the Theta denominators as lambda/2 (the squared-error
// gradient carries a factor 2), and the X rule includes the change that the
// subsequent column renormalisation makes to the penalties. With all
// lambdas zero both rules coincide.
inline void raw_step(RawParams& p, const Moments& m, const Penalties& pen, double eps,
                     UpdateRule rule, std::vector<std::string>* warnings) {
  const Eigen::Index p1 = m.p1;
  const Eigen::Index q = p.x.cols();
  const bool consistent = rule == UpdateRule::scale_consistent;
  Matrix theta(q, m.p1 + m.p2);
  theta << p.theta1, p.theta2;

  {
    Matrix num = m.g1z() * theta.transpose();
    const Matrix bbt = theta * m.g * theta.transpose();
    Matrix den = p.x * bbt;
    if (pen.lambda_x != 0.0) {
      Matrix off = p.x.transpose() * p.x;
      off.diagonal().setZero();
      den.noalias() += pen.lambda_x * (p.x * off);
      if (consistent) {
        num.rowwise() += pen.lambda_x * off.array().square().colwise().sum().matrix();
      }
    }
    if (consistent && (pen.lambda_1 != 0.0 || pen.lambda_2 != 0.0)) {
      const Vector row_pen = 0.5 * (pen.lambda_1 * p.theta1.rowwise().sum() +
                                    pen.lambda_2 * p.theta2.rowwise().sum());
      den.rowwise() += row_pen.transpose();
    }
    p.x.array() *= num.array() / den.array().max(eps);
  }

  // Column renormalisation. The latent row scale moves into Theta so the
  // reconstruction X (Theta1 Y1 + Theta2 Y2) is unchanged.
  for (Eigen::Index j = 0; j < q; ++j) {
    const double s = p.x.col(j).sum();
    if (!(s > kCollapsedColumn)) {
      p.x.col(j).setConstant(1.0 / static_cast<double>(p1));
      if (warnings) {
        warnings->push_back("latent column " + std::to_string(j + 1) +
                            " collapsed; reset to uniform");
      }
      continue;
    }
    p.x.col(j) /= s;
    p.theta1.row(j) *= s;
    p.theta2.row(j) *= s;
  }

  const double l1_scale = consistent ? 0.5 : 1.0;
  const Matrix xtx = p.x.transpose() * p.x;
  theta << p.theta1, p.theta2;
  {
    const Matrix num = p.x.transpose() * m.g11();
    const Matrix den = (xtx * theta * m.gz1()).array() + l1_scale * pen.lambda_1;
    p.theta1.array() *= num.array() / den.array().max(eps);
  }
  theta.leftCols(p1) = p.theta1;
  {
    const Matrix num = p.x.transpose() * m.g12();
    const Matrix den = (xtx * theta * m.gz2()).array() + l1_scale * pen.lambda_2;
    p.theta2.array() *= num.array() / den.array().max(eps);
  }
}

inline void normalize_columns(Matrix& x, double floor) {
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double s = x.col(j).sum();
    if (s > 0.0) x.col(j) /= s;
  }
  // Column sums stay within P1 * floor of one.
  x = x.cwiseMax(floor);
}

inline void check_rank(const Matrix& y1, std::size_t q) {
  const auto lim = std::min(y1.rows(), y1.cols());
  if (q < 1 || static_cast<Eigen::Index>(q) > lim) {
    throw DomainError("latent dimension q = " + std::to_string(q) + " must lie in [1, " +
                      std::to_string(lim) + "] = [1, min(P1, N)]");
  }
}

inline Matrix random_basis(Eigen::Index p1, std::size_t q, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix x(p1, static_cast<Eigen::Index>(q));
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < p1; ++i) x(i, j) = u(rng);
  return x;
}

// Row clustering of y1 by Lloyd iterations from a k-means++ start.
inline std::vector<Eigen::Index> kmeans_rows(const Matrix& y1, std::size_t k,
                                             std::mt19937_64& rng) {
  const Eigen::Index n = y1.rows();
  const auto kk = static_cast<Eigen::Index>(k);
  Matrix centers(kk, y1.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = y1.row(pick(rng));
  Vector d2(n);
  for (Eigen::Index c = 1; c < kk; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      d2(i) = (centers.topRows(c).rowwise() - y1.row(i)).rowwise().squaredNorm().minCoeff();
    }
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (chosen = 0; chosen < n - 1; ++chosen) {
        r -= d2(chosen);
        if (r <= 0.0) break;
      }
    } else {
      chosen = pick(rng);
    }
    centers.row(c) = y1.row(chosen);
  }

  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (centers.rowwise() - y1.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    // Empty clusters take the point farthest from its own centre.
    for (Eigen::Index c = 0; c < kk; ++c) {
      if (std::find(assign.begin(), assign.end(), c) != assign.end()) continue;
      Eigen::Index far = 0;
      double worst = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto a = assign[static_cast<std::size_t>(i)];
        if (std::count(assign.begin(), assign.end(), a) < 2) continue;
        const double d = (y1.row(i) - centers.row(a)).squaredNorm();
        if (d > worst) {
          worst = d;
          far = i;
        }
      }
      assign[static_cast<std::size_t>(far)] = c;
      changed = true;
    }
    for (Eigen::Index c = 0; c < kk; ++c) {
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(y1.cols());
      int count = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (assign[static_cast<std::size_t>(i)] == c) {
          acc += y1.row(i);
          ++count;
        }
      }
      if (count > 0) centers.row(c) = acc / count;
    }
    if (!changed) break;
  }
  return assign;
}

}  // namespace detail

struct BasisInit {
  Matrix x;  // P1 x Q, column-stochastic, entries >= epsilon_floor
  std::optional<std::string> warning;
};

/// Initial basis for Y1 ~ X B.
///
/// nndsvdar: non-negative double SVD (Boutsidis & Gallopoulos) where each
/// singular pair contributes its dominant-sign section; zeros are refilled
/// with uniform values in [0, mean(Y1)/100].
/// kmeans: rows of Y1 are clustered into q groups and X is the membership
/// indicator plus a 0.01 smoothing term.
/// Falls back to a random basis (with a warning) when Y1 has numerical rank
/// below q.
inline BasisInit init_basis(const Matrix& y1, std::size_t q, InitMethod method,
                            std::uint64_t seed, double epsilon_floor = 1e-12) {
  detail::check_rank(y1, q);
  if (method == InitMethod::given) {
    throw DomainError("init_basis: 'given' initialisation has no generator");
  }
  std::mt19937_64 rng(seed);
  const Eigen::Index p1 = y1.rows();
  const auto qq = static_cast<Eigen::Index>(q);
  BasisInit out;

  Eigen::JacobiSVD<Matrix> svd(y1, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const bool rank_ok = sv(0) > 0.0 && sv(qq - 1) > 1e-12 * sv(0);
  if (!rank_ok) {
    out.x = detail::random_basis(p1, q, rng);
    out.warning = "init_basis: Y1 has numerical rank below q = " + std::to_string(q) +
                  "; using a random non-negative basis";
    detail::normalize_columns(out.x, epsilon_floor);
    return out;
  }

  if (method == InitMethod::kmeans) {
    const auto assign = detail::kmeans_rows(y1, q, rng);
    out.x = Matrix::Constant(p1, qq, 0.01);
    for (Eigen::Index i = 0; i < p1; ++i) out.x(i, assign[static_cast<std::size_t>(i)]) = 1.0;
    detail::normalize_columns(out.x, epsilon_floor);
    return out;
  }

  const Matrix& u = svd.matrixU();
  const Matrix& v = svd.matrixV();
  Matrix w(p1, qq);
  w.col(0) = std::sqrt(sv(0)) * u.col(0).cwiseAbs();
  for (Eigen::Index j = 1; j < qq; ++j) {
    const Vector xp = u.col(j).cwiseMax(0.0);
    const Vector xn = (-u.col(j)).cwiseMax(0.0);
    const Vector yp = v.col(j).cwiseMax(0.0);
    const Vector yn = (-v.col(j)).cwiseMax(0.0);
    const double mp = xp.norm() * yp.norm();
    const double mn = xn.norm() * yn.norm();
    if (mp > mn) {
      w.col(j) = std::sqrt(sv(j) * mp) * xp / xp.norm();
    } else {
      w.col(j) = std::sqrt(sv(j) * mn) * xn / xn.norm();
    }
  }
  const double ave = y1.mean();
  std::uniform_real_distribution<double> fill(0.0, ave / 100.0);
  for (Eigen::Index j = 0; j < qq; ++j) {
    for (Eigen::Index i = 0; i < p1; ++i) {
      if (!(w(i, j) > std::numeric_limits<double>::epsilon())) w(i, j) = fill(rng);
    }
  }
  out.x = std::move(w);
  detail::normalize_columns(out.x, epsilon_floor);
  return out;
}

/// ||Y1 - X(Theta1 Y1 + Theta2 Y2)||_F^2 + (lambda_x/2)||X^T X - diag||_F^2
///   + lambda_1 sum(Theta1) + lambda_2 sum(Theta2)
inline double loss(const ModelParams& params, const Dataset& data, const Penalties& penalties) {
  if (params.p1() != data.p1() || params.p2() != data.p2()) {
    throw DimensionError("loss: parameter and data shapes differ");
  }
  return detail::raw_loss(detail::raw(params), data, penalties);
}

/// One sweep of the regularised multiplicative rules (X, then Theta1, then
/// Theta2, each using the freshly updated predecessors). Denominators are
/// floored at epsilon_floor and X is renormalised to unit column sums after
/// its update.
inline ModelParams update_step(const ModelParams& params, const Moments& moments,
                               const Penalties& penalties, double epsilon_floor = 1e-12,
                               UpdateRule rule = UpdateRule::scale_consistent,
                               std::vector<std::string>* warnings = nullptr) {
  if (params.p1() != moments.p1 || params.p2() != moments.p2) {
    throw DimensionError("update_step: parameter and data shapes differ");
  }
  auto p = detail::raw(params);
  detail::raw_step(p, moments, penalties, epsilon_floor, rule, warnings);
  return ModelParams(NonNegMatrix(std::move(p.x)), NonNegMatrix(std::move(p.theta1)),
                     NonNegMatrix(std::move(p.theta2)));
}

inline ModelParams update_step(const ModelParams& params, const Dataset& data,
                               const Penalties& penalties, double epsilon_floor = 1e-12,
                               UpdateRule rule = UpdateRule::scale_consistent,
                               std::vector<std::string>* warnings = nullptr) {
  return update_step(params, Moments(data), penalties, epsilon_floor, rule, warnings);
}

struct FeedforwardInit {
  NonNegMatrix x0;
  NonNegMatrix theta0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

namespace detail {

struct LoopOutcome {
  std::vector<double> trace;
  std::size_t iterations = 0;
  bool converged = false;
};

inline LoopOutcome iterate(RawParams& p, const Dataset& data, const Moments& m,
                           const Penalties& pen, const FitConfig& cfg,
                           std::vector<std::string>& warnings, const char* stage) {
  LoopOutcome out;
  double prev = raw_loss(p, data, pen);
  out.trace.push_back(prev);
  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    raw_step(p, m, pen, cfg.epsilon_floor, cfg.rule, &warnings);
    const double cur = raw_loss(p, data, pen);
    if (!std::isfinite(cur)) {
      throw NumericalFailure(std::string(stage) + ": loss became non-finite at iteration " +
                                 std::to_string(it),
                             it);
    }
    out.trace.push_back(cur);
    out.iterations = it;
    if (cur == 0.0 || std::abs(prev - cur) < cfg.rel_tol * prev) {
      out.converged = true;
      break;
    }
    prev = cur;
  }
  return out;
}

}  // namespace detail

/// Feed-forward fit Y1 ~ X0 Theta0 Y2: the multiplicative rules with Theta1
/// held at zero. Theta0 starts from the clipped least-squares solution
/// X0^+ Y1 Y2^+.
inline FeedforwardInit init_feedforward(const Dataset& data, std::size_t q,
                                        const FitConfig& config) {
  config.validate();
  detail::check_rank(data.y1.mat(), q);
  const Matrix& y2 = data.y2.mat();
  for (Eigen::Index i = 0; i < y2.rows(); ++i) {
    if (y2.row(i).sum() == 0.0) {
      throw DegenerateError("init_feedforward: exogenous variable '" + data.y2_names[i] +
                            "' is identically zero; Theta0 is not identifiable");
    }
  }

  FeedforwardInit out;
  Matrix x0;
  if (config.init == InitMethod::given) {
    x0 = *config.given_x;
    if (x0.rows() != data.p1() || x0.cols() != static_cast<Eigen::Index>(q) ||
        (x0.array() < 0.0).any()) {
      throw DomainError("init_feedforward: given_x must be a non-negative P1 x q matrix");
    }
    detail::normalize_columns(x0, config.epsilon_floor);
  } else {
    auto b = init_basis(data.y1.mat(), q, config.init, config.seed, config.epsilon_floor);
    if (b.warning) out.warnings.push_back(*b.warning);
    x0 = std::move(b.x);
  }

  const Matrix ls = x0.completeOrthogonalDecomposition().pseudoInverse() * data.y1.mat() *
                    y2.completeOrthogonalDecomposition().pseudoInverse();
  const double pos_mean = ls.cwiseMax(0.0).mean();
  const double start_floor = pos_mean > 0.0 ? 1e-3 * pos_mean : 1e-3;

  detail::RawParams p{std::move(x0), Matrix::Zero(static_cast<Eigen::Index>(q), data.p1()),
                      ls.cwiseMax(start_floor)};
  const Penalties pen{config.penalties.lambda_x, 0.0, config.penalties.lambda_2};
  const Moments m(data);
  const auto loop = detail::iterate(p, data, m, pen, config, out.warnings, "init_feedforward");
  out.iterations = loop.iterations;
  out.converged = loop.converged;
  out.x0 = NonNegMatrix(std::move(p.x));
  out.theta0 = NonNegMatrix(std::move(p.theta2));
  return out;
}

inline constexpr double kFeedbackInitShare = 0.01;

/// Joint estimate of (X, Theta1, Theta2): feed-forward initialisation, then
/// regularised multiplicative updates until the relative loss change drops
/// below rel_tol or max_iter is reached.
inline FitResult fit(const Dataset& data, const FitConfig& config) {
  config.validate();
  auto ff = init_feedforward(data, config.q, config);

  FitResult r;
  r.warnings = std::move(ff.warnings);
  r.init_iterations = ff.iterations;
  r.m_simple = ff.x0.mat() * ff.theta0.mat();
  r.y1_names = data.y1_names;
  r.y2_names = data.y2_names;

  const double c = kFeedbackInitShare * ff.theta0.mat().mean();
  detail::RawParams p{ff.x0.mat(), Matrix::Constant(ff.theta0.rows(), data.p1(), c),
                      ff.theta0.mat()};
  const Moments m(data);
  auto loop = detail::iterate(p, data, m, config.penalties, config, r.warnings, "fit");
  r.loss_trace = std::move(loop.trace);
  r.iterations = loop.iterations;
  r.converged = loop.converged;
  r.params = ModelParams(NonNegMatrix(std::move(p.x)), NonNegMatrix(std::move(p.theta1)),
                         NonNegMatrix(std::move(p.theta2)));
  r.equilibrium = equilibrium(r.params);
  if (r.equilibrium.stable) {
    try {
      r.metrics = evaluate(r.equilibrium, r.m_simple, data);
    } catch (const DegenerateError& e) {
      r.warnings.push_back(std::string("metrics unavailable: ") + e.what());
    }
  } else {
    r.warnings.push_back("fitted system is unstable (rho = " + std::to_string(r.equilibrium.rho) +
                         ")");
  }
  return r;
}

}  // namespace nmfsem
