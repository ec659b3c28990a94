#pragma once

#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nmfsem/nmfsem.hpp"

namespace nmfsem::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitUnstable = 2;

namespace detail {

inline std::string f3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string opt3(const std::optional<double>& v) { return v ? f3(*v) : "NA"; }

// Table-2 column order.
inline void print_fit_table(std::ostream& out, const FitResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-4s %14s %8s %8s %8s %8s\n", "Q", "rho(X Theta1)", "AR",
                "SC_map", "SC_cov", "MAE");
  out << buf;
  const auto& m = r.metrics;
  std::snprintf(buf, sizeof buf, "%-4lld %14s %8s %8s %8s %8s\n",
                static_cast<long long>(r.params.q()), f3(r.equilibrium.rho).c_str(),
                opt3(r.equilibrium.ar).c_str(), m ? f3(m->sc_map).c_str() : "NA",
                m ? f3(m->sc_cov).c_str() : "NA", m ? f3(m->mae).c_str() : "NA");
  out << buf;
}

inline void print_warnings(std::ostream& err, const FitResult& r) {
  for (const auto& w : r.warnings) err << "warning: " << w << '\n';
  if (r.equilibrium.near_critical) {
    err << "warning: rho(X Theta1) = " << r.equilibrium.rho << " is near the stability boundary\n";
  }
}

struct FitFlags {
  std::size_t q = 0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda_x = 100.0;
  std::uint64_t seed = 1;
  std::size_t max_iter = 2000;
  double tol = 1e-6;
  std::string init = "nndsvdar";
  std::string rule = "scale_consistent";

  void add(CLI::App* app, bool with_lambdas = true, bool q_required = true) {
    auto* q_opt = app->add_option("--q", q, "Latent dimension Q")->check(CLI::PositiveNumber);
    if (q_required) q_opt->required();
    if (with_lambdas) {
      app->add_option("--lambda1", lambda1, "Sparsity penalty on Theta1")->capture_default_str();
      app->add_option("--lambda2", lambda2, "Sparsity penalty on Theta2")->capture_default_str();
    }
    app->add_option("--lambda-x", lambda_x, "Orthogonality penalty on X")->capture_default_str();
    app->add_option("--seed", seed, "Initialisation seed")->capture_default_str();
    app->add_option("--max-iter", max_iter, "Maximum update iterations")->capture_default_str();
    app->add_option("--tol", tol, "Relative loss-change tolerance")->capture_default_str();
    app->add_option("--init", init, "Basis initialisation")
        ->check(CLI::IsMember({"nndsvdar", "kmeans"}))
        ->capture_default_str();
    app->add_option("--rule", rule, "Update rule")
        ->check(CLI::IsMember({"scale_consistent", "literal"}))
        ->capture_default_str();
  }

  FitConfig config() const {
    FitConfig c;
    c.q = q == 0 ? 1 : q;
    c.penalties = Penalties{lambda_x, lambda1, lambda2};
    c.seed = seed;
    c.max_iter = max_iter;
    c.rel_tol = tol;
    c.init = parse_init_method(init);
    c.rule = parse_update_rule(rule);
    c.validate();
    return c;
  }
};

struct DataFlags {
  std::string data;
  std::string spec;

  void add(CLI::App* app, bool required = true) {
    auto* d = app->add_option("--data", data, "Input CSV (header row, one observation per row)");
    auto* s = app->add_option("--spec", spec, "Column spec file (name = role[, transform][, protective])");
    if (required) {
      d->required();
      s->required();
    }
  }

  Dataset load() const { return load_dataset(data, load_column_spec(spec)); }
};

inline RunArtifact make_artifact(const std::string& kind, const FitConfig& cfg) {
  RunArtifact a;
  a.kind = kind;
  a.config = cfg;
  a.provenance = make_provenance(cfg);
  return a;
}

// Synthetic data with an all-zero observation prepended. The zero column is
// an exact solution of the model, and it pins every variable's minimum at 0
// so the [0, 1] rescaling done on load is a pure per-variable scaling.
inline Dataset with_zero_anchor(const Dataset& d) {
  Matrix y1 = Matrix::Zero(d.p1(), d.n() + 1);
  Matrix y2 = Matrix::Zero(d.p2(), d.n() + 1);
  y1.rightCols(d.n()) = d.y1.mat();
  y2.rightCols(d.n()) = d.y2.mat();
  return Dataset(NonNegMatrix(std::move(y1)), NonNegMatrix(std::move(y2)), d.y1_names,
                 d.y2_names);
}

}  // namespace detail

/// Entry point of the nmfsem tool. Returns the process exit code:
/// 0 success, 2 unstable fit (outputs still written), 1 input error.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Non-negative matrix factorization with latent feedback", "nmfsem"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  app.set_version_flag("--version", "nmfsem 1.0.0");
  std::size_t threads = 0;
  app.add_option("--threads", threads,
                 std::string("Worker threads (default: $") + kThreadsEnv + " or all cores)");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit the model and write a run artifact");
  detail::DataFlags fit_data;
  detail::FitFlags fit_flags;
  std::string fit_out = "nmfsem_fit.json";
  std::string fit_dot;
  fit_data.add(fit_cmd);
  fit_flags.add(fit_cmd);
  fit_cmd->add_option("--out", fit_out, "Artifact path")->capture_default_str();
  fit_cmd->add_option("--dot", fit_dot, "Also write a path diagram (DOT) here");

  // cv
  auto* cv_cmd = app.add_subcommand("cv", "K-fold equilibrium-MAE cross-validation");
  detail::DataFlags cv_data;
  detail::FitFlags cv_flags;
  std::vector<double> l1_values, l2_values;
  std::vector<std::size_t> q_values;
  std::size_t folds = 5;
  std::string cv_out = "nmfsem_cv.json";
  cv_data.add(cv_cmd);
  cv_flags.add(cv_cmd, false, false);
  cv_cmd->add_option("--lambda1-values", l1_values, "Grid for lambda1 (default: data-scaled)")
      ->delimiter(',');
  cv_cmd->add_option("--lambda2-values", l2_values, "Grid for lambda2 (default: data-scaled)")
      ->delimiter(',');
  cv_cmd->add_option("--q-values", q_values, "Latent dimensions to compare")->delimiter(',');
  cv_cmd->add_option("--folds", folds, "Number of folds K")->capture_default_str();
  cv_cmd->add_option("--out", cv_out, "Artifact path")->capture_default_str();

  // bootstrap
  auto* bs_cmd = app.add_subcommand("bootstrap", "Percentile intervals for rho and AR");
  detail::DataFlags bs_data;
  detail::FitFlags bs_flags;
  std::size_t b = 200;
  double level = 0.95;
  std::string bs_out = "nmfsem_bootstrap.json";
  bs_data.add(bs_cmd);
  bs_flags.add(bs_cmd);
  bs_cmd->add_option("--b", b, "Bootstrap replicates")->capture_default_str();
  bs_cmd->add_option("--level", level, "Interval coverage level")->capture_default_str();
  bs_cmd->add_option("--out", bs_out, "Artifact path")->capture_default_str();

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Synthetic data and Monte Carlo study");
  bool table1 = false;
  SimCondition cond;
  std::string sim_out, emit_data, emit_spec;
  double sim_lx = 100.0, sim_l1 = 0.0, sim_l2 = 0.0;
  std::size_t sim_max_iter = 2000;
  sim_cmd->add_flag("--table1", table1, "Run the four noise-free reference conditions");
  sim_cmd->add_option("--r", cond.r, "Replications per condition")->capture_default_str();
  sim_cmd->add_option("--seed", cond.seed, "Base seed")->capture_default_str();
  sim_cmd->add_option("--sigma", cond.sigma, "Noise standard deviation")->capture_default_str();
  sim_cmd->add_option("--rho-true", cond.rho_true, "Target rho(X Theta1)")->capture_default_str();
  sim_cmd->add_option("--n", cond.n, "Observations")->capture_default_str();
  sim_cmd->add_option("--p1", cond.p1, "Endogenous variables")->capture_default_str();
  sim_cmd->add_option("--p2", cond.p2, "Exogenous variables")->capture_default_str();
  sim_cmd->add_option("--q", cond.q, "Latent dimension")->capture_default_str();
  sim_cmd->add_option("--lambda-x", sim_lx, "Fit: orthogonality penalty")->capture_default_str();
  sim_cmd->add_option("--lambda1", sim_l1, "Fit: Theta1 penalty")->capture_default_str();
  sim_cmd->add_option("--lambda2", sim_l2, "Fit: Theta2 penalty")->capture_default_str();
  sim_cmd->add_option("--max-iter", sim_max_iter, "Fit: maximum iterations")->capture_default_str();
  sim_cmd->add_option("--out", sim_out, "Write the summary CSV here");
  sim_cmd->add_option("--emit-data", emit_data,
                      "Write one generated dataset as CSV (no study is run)");
  sim_cmd->add_option("--emit-spec", emit_spec, "With --emit-data: also write its column spec");

  // diagram
  auto* dia_cmd = app.add_subcommand("diagram", "Path diagram (Graphviz DOT) from a fit artifact");
  std::string dia_artifact, dia_out;
  std::optional<double> dia_threshold;
  double dia_relative = 0.05;
  dia_cmd->add_option("--artifact", dia_artifact, "Artifact with a fit")->required();
  dia_cmd->add_option("--threshold", dia_threshold, "Absolute edge threshold");
  dia_cmd->add_option("--relative", dia_relative, "Edge threshold as a share of each matrix max")
      ->capture_default_str();
  dia_cmd->add_option("--out", dia_out, "Output path (default: standard output)");

  // metrics
  auto* met_cmd = app.add_subcommand("metrics", "SC_map, SC_cov and MAE of a fitted artifact");
  std::string met_artifact;
  detail::DataFlags met_data;
  met_cmd->add_option("--artifact", met_artifact, "Artifact with a fit")->required();
  met_data.add(met_cmd, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*fit_cmd) {
      const auto cfg = fit_flags.config();
      const auto data = fit_data.load();
      auto r = fit(data, cfg);
      auto art = detail::make_artifact("fit", cfg);
      art.fit = r;
      save_artifact(art, fit_out);
      if (!fit_dot.empty()) write_file_atomic(fit_dot, export_diagram(r));
      detail::print_fit_table(out, r);
      detail::print_warnings(err, r);
      if (!r.equilibrium.stable) {
        err << "unstable fit: rho(X Theta1) = " << r.equilibrium.rho
            << " >= 1; artifact written to " << fit_out << '\n';
        return kExitUnstable;
      }
      return kExitOk;
    }

    if (*cv_cmd) {
      auto cfg = cv_flags.config();
      const auto data = cv_data.load();
      CvGrid grid = default_grid(data);
      if (!l1_values.empty()) grid.lambda1_values = l1_values;
      if (!l2_values.empty()) grid.lambda2_values = l2_values;
      grid.lambda_x = cv_flags.lambda_x;
      grid.k_folds = folds;
      grid.q_values = q_values;
      if (grid.q_values.empty()) grid.q_values = {cfg.q};
      const auto cv = cross_validate(data, grid, cfg, threads);
      char buf[160];
      std::snprintf(buf, sizeof buf, "%-4s %12s %12s %12s %7s\n", "Q", "lambda1", "lambda2",
                    "cv_MAE", "stable");
      out << buf;
      for (const auto& c : cv.cells) {
        std::snprintf(buf, sizeof buf, "%-4zu %12.6g %12.6g %12.6g %7s\n", c.q, c.lambda1,
                      c.lambda2, c.mean_mae, c.stable ? "yes" : "no");
        out << buf;
      }
      const auto& best = cv.best_cell();
      out << "selected: Q = " << best.q << ", lambda1 = " << best.lambda1
          << ", lambda2 = " << best.lambda2 << ", lambda_x = " << grid.lambda_x << "\n\n";
      cfg.q = best.q;
      cfg.penalties = Penalties{grid.lambda_x, best.lambda1, best.lambda2};
      auto r = fit(data, cfg);
      auto art = detail::make_artifact("cv", cfg);
      art.cv = cv;
      art.fit = r;
      save_artifact(art, cv_out);
      detail::print_fit_table(out, r);
      detail::print_warnings(err, r);
      if (!r.equilibrium.stable) {
        err << "refit on the full data is unstable (rho = " << r.equilibrium.rho << ")\n";
        return kExitUnstable;
      }
      return kExitOk;
    }

    if (*bs_cmd) {
      const auto cfg = bs_flags.config();
      const auto data = bs_data.load();
      auto r = fit(data, cfg);
      BootstrapOptions opt;
      opt.b = b;
      opt.seed = cfg.seed;
      opt.level = level;
      opt.threads = threads;
      const auto res = bootstrap(data, cfg, opt);
      auto art = detail::make_artifact("bootstrap", cfg);
      art.fit = r;
      art.bootstrap = res;
      save_artifact(art, bs_out);
      const int pct = static_cast<int>(level * 100.0 + 0.5);
      out << "B = " << res.b << ", retained = " << res.retained()
          << ", unstable = " << res.n_unstable << ", failed = " << res.n_failed << '\n';
      out << "rho(X Theta1) = " << detail::f3(res.rho_point) << "  " << pct << "% CI ["
          << detail::f3(res.rho_interval.lo) << ", " << detail::f3(res.rho_interval.hi) << "]\n";
      out << "AR            = " << detail::opt3(res.ar_point) << "  " << pct << "% CI ["
          << detail::f3(res.ar_interval.lo) << ", " << detail::f3(res.ar_interval.hi) << "]\n";
      detail::print_warnings(err, r);
      return r.equilibrium.stable ? kExitOk : kExitUnstable;
    }

    if (*sim_cmd) {
      if (!emit_data.empty()) {
        const auto sim = generate(cond);
        const auto data = detail::with_zero_anchor(sim.data);
        write_file_atomic(emit_data, format_dataset_csv(data));
        if (!emit_spec.empty()) {
          write_file_atomic(emit_spec, format_column_spec(dataset_spec(data)));
        }
        out << "wrote " << data.n() << " observations (" << data.p1() << " endogenous, "
            << data.p2() << " exogenous) to " << emit_data << '\n';
        return kExitOk;
      }
      if (!emit_spec.empty()) throw InputError("--emit-spec requires --emit-data");
      const auto conditions =
          table1 ? table1_conditions(cond.r, cond.seed, cond.sigma) : std::vector{cond};
      FitConfig cfg;
      cfg.penalties = Penalties{sim_lx, sim_l1, sim_l2};
      cfg.max_iter = sim_max_iter;
      cfg.validate();
      const auto rows = run_study(conditions, cfg, threads);
      out << format_study_table(rows);
      for (const auto& s : rows) {
        if (s.n_unstable + s.n_failed > 0) {
          err << s.condition.label() << ": " << s.n_unstable << " unstable and " << s.n_failed
              << " failed replicates excluded\n";
        }
      }
      if (!sim_out.empty()) write_file_atomic(sim_out, format_study_csv(rows));
      return kExitOk;
    }

    if (*dia_cmd) {
      const auto art = load_artifact(dia_artifact);
      if (!art.fit) throw InputError(dia_artifact + ": artifact has no fit");
      DiagramOptions opt;
      opt.threshold = dia_threshold;
      opt.relative = dia_relative;
      const auto dot = export_diagram(*art.fit, opt);
      if (dia_out.empty()) {
        out << dot;
      } else {
        write_file_atomic(dia_out, dot);
      }
      return art.fit->equilibrium.stable ? kExitOk : kExitUnstable;
    }

    if (*met_cmd) {
      const auto art = load_artifact(met_artifact);
      if (!art.fit) throw InputError(met_artifact + ": artifact has no fit");
      const auto& r = *art.fit;
      if (!r.equilibrium.stable) {
        err << "unstable fit (rho = " << r.equilibrium.rho << "): metrics undefined\n";
        return kExitUnstable;
      }
      EvalMetrics m;
      if (!met_data.data.empty() || !met_data.spec.empty()) {
        if (met_data.data.empty() || met_data.spec.empty()) {
          throw InputError("metrics: --data and --spec must be given together");
        }
        m = evaluate(r.equilibrium, r.m_simple, met_data.load());
      } else if (r.metrics) {
        m = *r.metrics;
      } else {
        throw InputError(met_artifact + ": artifact stores no metrics; pass --data and --spec");
      }
      char buf[128];
      std::snprintf(buf, sizeof buf, "%8s %8s %8s\n%8.3f %8.3f %8.3f\n", "SC_map", "SC_cov",
                    "MAE", m.sc_map, m.sc_cov, m.mae);
      out << buf;
      return kExitOk;
    }
  } catch (const InstabilityError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUnstable;
  } catch (const NoFeasibleModel& e) {
    err << "error: " << e.what() << '\n';
    return kExitUnstable;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace nmfsem::cli
