#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nmfsem/estimation.hpp"
#include "nmfsem/metrics.hpp"
#include "nmfsem/model.hpp"
#include "nmfsem/parallel.hpp"

namespace nmfsem {

struct SimCondition {
  std::size_t p1 = 9;
  std::size_t p2 = 3;
  std::size_t q = 3;
  std::size_t n = 200;
  double sigma = 0.0;
  double rho_true = 0.0;
  std::size_t r = 50;
  std::uint64_t seed = 1;

  void validate() const {
    if (p1 < 1 || p2 < 1 || q < 1) throw DomainError("SimCondition: dimensions must be positive");
    if (n < 2) throw DomainError("SimCondition: n must be at least 2");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("SimCondition: sigma < 0");
    if (!(rho_true >= 0.0 && rho_true < 1.0)) {
      throw DomainError("SimCondition: rho_true must lie in [0, 1)");
    }
  }

  std::string label() const {
    std::ostringstream os;
    os << "rho_true=" << rho_true << ", N=" << n;
    if (sigma != 0.0) os << ", sigma=" << sigma;
    return os.str();
  }
};

struct SimData {
  Dataset data;
  ModelParams truth;
};

namespace detail {

inline constexpr int kRhoRedraws = 100;

inline Matrix uniform_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = u(rng);
  return m;
}

}  // namespace detail

/// Draws ground-truth parameters and data for one condition.
///
/// X columns are symmetric Dirichlet(1) draws, Theta2 and Y2 are uniform on
/// [0, 1], and Theta1 is a uniform draw rescaled so that rho(X Theta1) equals
/// rho_true (zero when rho_true = 0). Y1 is the exact equilibrium
/// (I - X Theta1)^{-1} X Theta2 Y2 plus N(0, sigma^2) noise clipped so that
/// every entry stays non-negative.
inline SimData generate(const SimCondition& c) {
  c.validate();
  std::mt19937_64 rng(c.seed);
  const auto p1 = static_cast<Eigen::Index>(c.p1);
  const auto p2 = static_cast<Eigen::Index>(c.p2);
  const auto q = static_cast<Eigen::Index>(c.q);
  const auto n = static_cast<Eigen::Index>(c.n);

  Matrix x(p1, q);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  for (Eigen::Index j = 0; j < q; ++j) {
    double s = 0.0;
    do {
      for (Eigen::Index i = 0; i < p1; ++i) x(i, j) = gamma(rng);
      s = x.col(j).sum();
    } while (!(s > 0.0));
    x.col(j) /= s;
  }
  const Matrix theta2 = detail::uniform_matrix(q, p2, rng);

  Matrix theta1 = Matrix::Zero(q, p1);
  if (c.rho_true > 0.0) {
    double rho = 0.0;
    for (int attempt = 0; attempt < detail::kRhoRedraws && !(rho > 0.0); ++attempt) {
      theta1 = detail::uniform_matrix(q, p1, rng);
      rho = spectral_radius(NonNegMatrix(x * theta1));
    }
    if (!(rho > 0.0)) {
      throw DegenerateError("generate: could not draw a Theta1 with positive feedback");
    }
    // rho is homogeneous of degree one; a few correction passes absorb the
    // power-iteration error so the reported value matches rho_true.
    for (int pass = 0; pass < 5; ++pass) {
      theta1 *= c.rho_true / rho;
      rho = spectral_radius(NonNegMatrix(x * theta1));
      if (std::abs(rho - c.rho_true) <= 1e-13) break;
    }
  }

  const Matrix y2 = detail::uniform_matrix(p2, n, rng);
  SimData out{Dataset{}, ModelParams(NonNegMatrix(x), NonNegMatrix(theta1), NonNegMatrix(theta2))};
  const NonNegMatrix f(x * theta1);
  Matrix y1 = solve_i_minus(f, x * theta2 * y2).cwiseMax(0.0);
  if (c.sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, c.sigma);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < p1; ++i) y1(i, j) = std::max(0.0, y1(i, j) + noise(rng));
  }
  out.data = Dataset(NonNegMatrix(std::move(y1)), NonNegMatrix(y2));
  return out;
}

/// ||Y1* - X(Theta1 Y1* + Theta2 Y2)||_F / ||Y1*||_F for Y1* = M_model Y2.
inline double equilibrium_residual(const ModelParams& params, const EquilibriumSummary& eq,
                                   const Matrix& y2) {
  const Matrix y1_star = predict(eq, y2);
  const double scale = y1_star.norm();
  const Matrix r =
      y1_star - params.x.mat() * (params.theta1.mat() * y1_star + params.theta2.mat() * y2);
  return scale > 0.0 ? r.norm() / scale : r.norm();
}

struct ReplicateRecord {
  bool ok = false;  // fit succeeded and the equilibrium is stable
  bool stable = false;
  double rho = 0.0;
  double ar = 0.0;
  double sc_map = 0.0;
  double sc_cov = 0.0;
  double mae = 0.0;
  double fixed_point_residual = 0.0;
  std::string error;
};

struct SimStat {
  double mean = 0.0;
  double sd = 0.0;
};

struct SimSummary {
  SimCondition condition;
  std::size_t retained = 0;
  std::size_t n_unstable = 0;
  std::size_t n_failed = 0;
  SimStat rho_hat;
  SimStat ar_hat;
  SimStat sc_map;
  SimStat sc_cov;
  SimStat mae;
  std::vector<ReplicateRecord> replicates;
};

/// The four noise-free conditions of the reference Monte Carlo study.
inline std::vector<SimCondition> table1_conditions(std::size_t r, std::uint64_t seed,
                                                   double sigma = 0.0) {
  std::vector<SimCondition> out;
  for (double rho : {0.0, 0.2}) {
    for (std::size_t n : {50u, 200u}) {
      SimCondition c;
      c.n = n;
      c.rho_true = rho;
      c.sigma = sigma;
      c.r = r;
      c.seed = seed;
      out.push_back(c);
    }
  }
  return out;
}

namespace detail {

inline SimStat mean_sd(const std::vector<double>& v) {
  SimStat s;
  if (v.empty()) return {std::nan(""), std::nan("")};
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

inline ReplicateRecord run_replicate(const SimCondition& cond, std::size_t cond_index,
                                     std::size_t rep, const FitConfig& base) {
  ReplicateRecord rec;
  try {
    SimCondition c = cond;
    c.seed = derive_seed(cond.seed, cond_index, rep);
    const auto sim = generate(c);
    FitConfig cfg = base;
    cfg.q = cond.q;
    cfg.seed = derive_seed(c.seed, 0x1f17);
    const auto fr = fit(sim.data, cfg);
    rec.stable = fr.equilibrium.stable;
    rec.rho = fr.equilibrium.rho;
    if (!rec.stable) {
      rec.error = "unstable fit";
      return rec;
    }
    if (!fr.metrics) {
      rec.error = "metrics undefined";
      return rec;
    }
    rec.ar = *fr.equilibrium.ar;
    rec.sc_map = fr.metrics->sc_map;
    rec.sc_cov = fr.metrics->sc_cov;
    rec.mae = fr.metrics->mae;
    rec.fixed_point_residual = equilibrium_residual(fr.params, fr.equilibrium, sim.data.y2.mat());
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  return rec;
}

}  // namespace detail

/// Monte Carlo study: for each condition, r replicates of generate -> fit ->
/// evaluate, aggregated into means and standard deviations over the retained
/// (successful, stable) replicates. Each replicate owns an RNG stream derived
/// from (seed, condition index, replicate index), so the output does not
/// depend on the thread count.
inline std::vector<SimSummary> run_study(const std::vector<SimCondition>& conditions,
                                         const FitConfig& config, std::size_t threads = 0) {
  std::vector<SimSummary> out;
  for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
    const auto& cond = conditions[ci];
    cond.validate();
    SimSummary s;
    s.condition = cond;
    s.replicates.resize(cond.r);
    parallel_for(cond.r, threads, [&](std::size_t rep) {
      s.replicates[rep] = detail::run_replicate(cond, ci, rep, config);
    });
    std::vector<double> rho, ar, map, cov, err;
    for (const auto& rec : s.replicates) {
      if (rec.ok) {
        ++s.retained;
        rho.push_back(rec.rho);
        ar.push_back(rec.ar);
        map.push_back(rec.sc_map);
        cov.push_back(rec.sc_cov);
        err.push_back(rec.mae);
      } else if (rec.error == "unstable fit") {
        ++s.n_unstable;
      } else {
        ++s.n_failed;
      }
    }
    s.rho_hat = detail::mean_sd(rho);
    s.ar_hat = detail::mean_sd(ar);
    s.sc_map = detail::mean_sd(map);
    s.sc_cov = detail::mean_sd(cov);
    s.mae = detail::mean_sd(err);
    out.push_back(std::move(s));
  }
  return out;
}

/// Aligned text table: Condition, rho_hat, AR_hat, SC_map, SC_cov, MAE.
inline std::string format_study_table(const std::vector<SimSummary>& rows) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-28s %8s %8s %8s %8s %8s\n", "Condition", "rho_hat", "AR_hat",
                "SC_map", "SC_cov", "MAE");
  os << buf;
  for (const auto& s : rows) {
    std::snprintf(buf, sizeof buf, "%-28s %8.3f %8.2f %8.3f %8.3f %8.3f\n",
                  s.condition.label().c_str(), s.rho_hat.mean, s.ar_hat.mean, s.sc_map.mean,
                  s.sc_cov.mean, s.mae.mean);
    os << buf;
  }
  return os.str();
}

inline std::string format_study_csv(const std::vector<SimSummary>& rows) {
  std::ostringstream os;
  os << "condition,p1,p2,q,n,sigma,rho_true,r,retained,n_unstable,n_failed,"
        "rho_hat,rho_hat_sd,ar_hat,ar_hat_sd,sc_map,sc_map_sd,sc_cov,sc_cov_sd,mae,mae_sd\n";
  char buf[64];
  const auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  for (const auto& s : rows) {
    const auto& c = s.condition;
    os << '"' << c.label() << "\"," << c.p1 << ',' << c.p2 << ',' << c.q << ',' << c.n << ','
       << num(c.sigma) << ',' << num(c.rho_true) << ',' << c.r << ',' << s.retained << ','
       << s.n_unstable << ',' << s.n_failed;
    for (const auto& st : {s.rho_hat, s.ar_hat, s.sc_map, s.sc_cov, s.mae}) {
      os << ',' << num(st.mean) << ',' << num(st.sd);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace nmfsem
