#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "nmfsem/estimation.hpp"
#include "nmfsem/metrics.hpp"
#include "nmfsem/parallel.hpp"

namespace nmfsem {

struct CvGrid {
  std::vector<double> lambda1_values;
  std::vector<double> lambda2_values;
  double lambda_x = 100.0;
  std::size_t k_folds = 5;
  std::vector<std::size_t> q_values;  // empty: use the base config's q

  void validate(std::size_t n) const {
    if (lambda1_values.empty() || lambda2_values.empty()) {
      throw DomainError("CvGrid: lambda value lists must be non-empty");
    }
    for (const auto* list : {&lambda1_values, &lambda2_values}) {
      for (double v : *list) {
        if (!std::isfinite(v) || v < 0.0) throw DomainError("CvGrid: lambdas must be >= 0");
      }
    }
    if (!std::isfinite(lambda_x) || lambda_x < 0.0) throw DomainError("CvGrid: lambda_x < 0");
    if (k_folds < 2 || k_folds > n) {
      throw DomainError("CvGrid: k_folds = " + std::to_string(k_folds) + " must lie in [2, N = " +
                        std::to_string(n) + "]");
    }
    for (auto q : q_values) {
      if (q < 1) throw DomainError("CvGrid: q values must be >= 1");
    }
  }
};

inline constexpr double kDefaultLambdaMultipliers[] = {0.0, 0.001, 0.01, 0.1, 1.0};

/// Typical magnitude of the Theta-update numerators: the mean entry of
/// Y1 Y1^T. Default lambda grids are multiples of it.
inline double data_scale(const Dataset& data) {
  return (data.y1.mat() * data.y1.mat().transpose()).mean();
}

inline CvGrid default_grid(const Dataset& data) {
  CvGrid g;
  const double s = data_scale(data);
  for (double m : kDefaultLambdaMultipliers) {
    g.lambda1_values.push_back(m * s);
    g.lambda2_values.push_back(m * s);
  }
  return g;
}

struct CvCell {
  std::size_t q = 0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double mean_mae = std::numeric_limits<double>::infinity();
  std::vector<double> fold_mae;
  std::vector<double> fold_rho;
  bool stable = false;  // every fold produced a stable fit
  std::string note;
};

struct CvResult {
  std::vector<CvCell> cells;
  std::size_t best = 0;
  std::vector<std::size_t> fold_assignments;
  double lambda_x = 0.0;
  std::size_t k_folds = 0;

  const CvCell& best_cell() const { return cells.at(best); }
};

/// Random partition of 0..n-1 into k folds whose sizes differ by at most one.
inline std::vector<std::size_t> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > n) {
    throw DomainError("kfold_split: need 2 <= k <= n (k = " + std::to_string(k) +
                      ", n = " + std::to_string(n) + ")");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> fold(n);
  for (std::size_t pos = 0; pos < n; ++pos) fold[order[pos]] = pos % k;
  return fold;
}

inline constexpr double kMaeTieTol = 1e-12;

/// Index of the winning cell: lowest mean MAE among cells stable in every
/// fold. Ties (relative 1e-12) go to the sparser cell: larger lambda1 +
/// lambda2, then larger lambda1, then smaller q.
inline std::size_t select_best(const std::vector<CvCell>& cells) {
  std::size_t best = cells.size();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    if (!c.stable || !std::isfinite(c.mean_mae)) continue;
    if (best == cells.size()) {
      best = i;
      continue;
    }
    const auto& b = cells[best];
    const double tol = kMaeTieTol * std::max(std::abs(c.mean_mae), std::abs(b.mean_mae));
    if (c.mean_mae < b.mean_mae - tol) {
      best = i;
    } else if (std::abs(c.mean_mae - b.mean_mae) <= tol) {
      const double cs = c.lambda1 + c.lambda2;
      const double bs = b.lambda1 + b.lambda2;
      if (cs > bs || (cs == bs && c.lambda1 > b.lambda1) ||
          (cs == bs && c.lambda1 == b.lambda1 && c.q < b.q)) {
        best = i;
      }
    }
  }
  if (best == cells.size()) {
    throw NoFeasibleModel("cross_validate: no grid cell is stable in every fold");
  }
  return best;
}

/// K-fold cross-validation of the equilibrium prediction M_model Y2 over
/// (q, lambda1, lambda2) with lambda_x fixed. Every fold refits all
/// parameters on its training columns. Cells with an unstable (or failed)
/// fold are excluded from the argmin.
inline CvResult cross_validate(const Dataset& data, const CvGrid& grid,
                               const FitConfig& base_config, std::size_t threads = 0) {
  const auto n = static_cast<std::size_t>(data.n());
  grid.validate(n);
  base_config.validate();

  CvResult out;
  out.lambda_x = grid.lambda_x;
  out.k_folds = grid.k_folds;
  out.fold_assignments = kfold_split(n, grid.k_folds, base_config.seed);

  std::vector<std::vector<std::size_t>> train(grid.k_folds), test(grid.k_folds);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < grid.k_folds; ++f) {
      (out.fold_assignments[i] == f ? test[f] : train[f]).push_back(i);
    }
  }

  const std::vector<std::size_t> qs =
      grid.q_values.empty() ? std::vector<std::size_t>{base_config.q} : grid.q_values;
  for (auto q : qs) {
    for (double l1 : grid.lambda1_values) {
      for (double l2 : grid.lambda2_values) {
        CvCell c;
        c.q = q;
        c.lambda1 = l1;
        c.lambda2 = l2;
        c.fold_mae.assign(grid.k_folds, std::numeric_limits<double>::quiet_NaN());
        c.fold_rho.assign(grid.k_folds, std::numeric_limits<double>::quiet_NaN());
        out.cells.push_back(std::move(c));
      }
    }
  }

  struct FoldOutcome {
    bool stable = false;
    double mae = std::numeric_limits<double>::quiet_NaN();
    double rho = std::numeric_limits<double>::quiet_NaN();
    std::string error;
  };
  const std::size_t jobs = out.cells.size() * grid.k_folds;
  std::vector<FoldOutcome> outcomes(jobs);
  parallel_for(jobs, threads, [&](std::size_t job) {
    const auto& cell = out.cells[job / grid.k_folds];
    const std::size_t f = job % grid.k_folds;
    FoldOutcome o;
    try {
      FitConfig cfg = base_config;
      cfg.q = cell.q;
      cfg.penalties = Penalties{grid.lambda_x, cell.lambda1, cell.lambda2};
      const auto fr = fit(data.select_columns(train[f]), cfg);
      o.rho = fr.equilibrium.rho;
      if (fr.equilibrium.stable) {
        const auto held = data.select_columns(test[f]);
        o.mae = mae(held.y1.mat(), predict(fr.equilibrium, held.y2));
        o.stable = true;
      } else {
        o.error = "unstable fold fit";
      }
    } catch (const Error& e) {
      o.error = e.what();
    }
    outcomes[job] = std::move(o);
  });

  for (std::size_t ci = 0; ci < out.cells.size(); ++ci) {
    auto& cell = out.cells[ci];
    cell.stable = true;
    double sum = 0.0;
    for (std::size_t f = 0; f < grid.k_folds; ++f) {
      const auto& o = outcomes[ci * grid.k_folds + f];
      cell.fold_mae[f] = o.mae;
      cell.fold_rho[f] = o.rho;
      if (!o.stable) {
        cell.stable = false;
        if (cell.note.empty()) cell.note = "fold " + std::to_string(f + 1) + ": " + o.error;
      } else {
        sum += o.mae;
      }
    }
    cell.mean_mae = cell.stable ? sum / static_cast<double>(grid.k_folds)
                                : std::numeric_limits<double>::infinity();
  }
  out.best = select_best(out.cells);
  return out;
}

}  // namespace nmfsem
