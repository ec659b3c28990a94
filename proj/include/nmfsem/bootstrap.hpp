#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nmfsem/estimation.hpp"
#include "nmfsem/parallel.hpp"

namespace nmfsem {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const noexcept { return lo <= v && v <= hi; }
  bool operator==(const Interval&) const = default;
};

/// Percentile of a sample by linear interpolation between order statistics
/// (position p * (n - 1) in the sorted sample).
inline double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw DomainError("percentile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("percentile: p must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline Interval percentile_interval(const std::vector<double>& values, double level = 0.95) {
  const double tail = 0.5 * (1.0 - level);
  return {percentile(values, tail), percentile(values, 1.0 - tail)};
}

struct BootstrapOptions {
  std::size_t b = 200;
  std::uint64_t seed = 1;
  double level = 0.95;
  std::size_t threads = 0;
  // Test hook: replicate r uses columns 0..N-1 and the point-fit seed, so
  // every replicate reproduces the point estimate.
  bool resample = true;
};

struct BootstrapResult {
  std::size_t b = 0;
  double level = 0.95;
  double rho_point = 0.0;
  Interval rho_interval;
  std::optional<double> ar_point;  // absent when the point fit is unstable
  Interval ar_interval;
  std::size_t n_unstable = 0;
  std::size_t n_failed = 0;  // refits that raised (e.g. a resample with a zero exogenous row)
  std::vector<double> rho_values;  // retained replicates, by replicate index
  std::vector<double> ar_values;

  std::size_t retained() const noexcept { return rho_values.size(); }
};

/// Nonparametric bootstrap of rho(X Theta1) and AR: resample the columns of
/// (Y1, Y2) with replacement, refit with the fixed configuration, keep the
/// stable refits, and report percentile intervals. Replicate r draws its
/// columns from an RNG seeded by (seed, r) and refits with init seed
/// config.seed + r, so results do not depend on the thread count.
inline BootstrapResult bootstrap(const Dataset& data, const FitConfig& config,
                                 const BootstrapOptions& opt) {
  if (opt.b < 2) throw DomainError("bootstrap: b must be at least 2");
  if (!(opt.level > 0.0 && opt.level < 1.0)) throw DomainError("bootstrap: level outside (0, 1)");
  config.validate();

  BootstrapResult out;
  out.b = opt.b;
  out.level = opt.level;
  const auto point = fit(data, config);
  out.rho_point = point.equilibrium.rho;
  out.ar_point = point.equilibrium.ar;

  struct Rep {
    enum class Status { stable, unstable, failed } status = Status::failed;
    double rho = 0.0;
    double ar = 0.0;
  };
  std::vector<Rep> reps(opt.b);
  const auto n = static_cast<std::size_t>(data.n());
  parallel_for(opt.b, opt.threads, [&](std::size_t r) {
    std::vector<std::size_t> idx(n);
    FitConfig cfg = config;
    if (opt.resample) {
      std::mt19937_64 rng(derive_seed(opt.seed, r));
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& i : idx) i = pick(rng);
      cfg.seed = config.seed + r;
    } else {
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    }
    Rep rep;
    try {
      const auto fr = fit(data.select_columns(idx), cfg);
      rep.rho = fr.equilibrium.rho;
      if (fr.equilibrium.stable) {
        rep.status = Rep::Status::stable;
        rep.ar = *fr.equilibrium.ar;
      } else {
        rep.status = Rep::Status::unstable;
      }
    } catch (const Error&) {
      rep.status = Rep::Status::failed;
    }
    reps[r] = rep;
  });

  for (const auto& rep : reps) {
    switch (rep.status) {
      case Rep::Status::stable:
        out.rho_values.push_back(rep.rho);
        out.ar_values.push_back(rep.ar);
        break;
      case Rep::Status::unstable: ++out.n_unstable; break;
      case Rep::Status::failed: ++out.n_failed; break;
    }
  }
  if (out.retained() < 2) {
    throw InsufficientReplicates("bootstrap: only " + std::to_string(out.retained()) + " of " +
                                 std::to_string(opt.b) + " replicates produced a stable fit");
  }
  out.rho_interval = percentile_interval(out.rho_values, opt.level);
  out.ar_interval = percentile_interval(out.ar_values, opt.level);
  return out;
}

}  // namespace nmfsem
