#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nmfsem/bootstrap.hpp"
#include "nmfsem/estimation.hpp"
#include "nmfsem/io.hpp"
#include "nmfsem/selection.hpp"

namespace nmfsem {

inline constexpr const char* kSchemaVersion = "1";

struct Provenance {
  std::uint64_t seed = 0;
  std::string config_hash;  // "fnv1a64:<16 hex digits>" of the serialized config
  std::string created_utc;  // ISO 8601

  bool operator==(const Provenance&) const = default;
};

/// Serialized bundle of one analysis. `fit` is present for fit/bootstrap
/// runs, `cv` for cross-validation, `bootstrap` for bootstrap runs.
struct RunArtifact {
  std::string kind = "fit";
  FitConfig config;
  std::optional<FitResult> fit;
  std::optional<CvResult> cv;
  std::optional<BootstrapResult> bootstrap;
  Provenance provenance;
};

namespace json_codec {

using nlohmann::json;

// JSON has no NaN/Inf; they travel as strings.
inline json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline double get_num(const json& j, const std::string& what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw SchemaError("artifact: field '" + what + "' is not a number");
}

inline const json& at(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) {
    throw SchemaError("artifact: missing field '" + ctx + key + "'");
  }
  return j.at(key);
}

template <class T>
T get(const json& j, const std::string& key, const std::string& ctx) {
  try {
    return at(j, key, ctx).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError("artifact: field '" + ctx + key + "' has the wrong type");
  }
}

inline double get_double(const json& j, const std::string& key, const std::string& ctx) {
  return get_num(at(j, key, ctx), ctx + key);
}

inline json vec(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

inline std::vector<double> get_vec(const json& j, const std::string& key, const std::string& ctx) {
  const auto& a = at(j, key, ctx);
  if (!a.is_array()) throw SchemaError("artifact: field '" + ctx + key + "' is not an array");
  std::vector<double> out;
  for (const auto& x : a) out.push_back(get_num(x, ctx + key));
  return out;
}

inline json mat(const Matrix& m) {
  json values = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) values.push_back(num(m(i, j)));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", values}};
}

inline Matrix get_mat(const json& j, const std::string& key, const std::string& ctx) {
  const auto& o = at(j, key, ctx);
  const std::string c = ctx + key + ".";
  const auto rows = get<std::int64_t>(o, "rows", c);
  const auto cols = get<std::int64_t>(o, "cols", c);
  if (rows < 1 || cols < 1) {
    throw SchemaError("artifact: matrix '" + ctx + key + "' is empty (" + std::to_string(rows) +
                      "x" + std::to_string(cols) + ")");
  }
  const auto values = get_vec(o, "values", c);
  if (values.size() != static_cast<std::size_t>(rows * cols)) {
    throw SchemaError("artifact: matrix '" + ctx + key + "' has " +
                      std::to_string(values.size()) + " values for shape " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index jj = 0; jj < cols; ++jj) m(i, jj) = values[k++];
  return m;
}

inline NonNegMatrix get_nonneg(const json& j, const std::string& key, const std::string& ctx) {
  try {
    return NonNegMatrix(get_mat(j, key, ctx));
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError("artifact: matrix '" + ctx + key + "': " + e.what());
  }
}

inline json opt_num(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

inline std::optional<double> get_opt_num(const json& j, const std::string& key,
                                         const std::string& ctx) {
  const auto& v = at(j, key, ctx);
  if (v.is_null()) return std::nullopt;
  return get_num(v, ctx + key);
}

inline json to_json(const FitConfig& c) {
  json j = {{"q", c.q},
            {"lambda_x", num(c.penalties.lambda_x)},
            {"lambda_1", num(c.penalties.lambda_1)},
            {"lambda_2", num(c.penalties.lambda_2)},
            {"max_iter", c.max_iter},
            {"rel_tol", num(c.rel_tol)},
            {"init", to_string(c.init)},
            {"epsilon_floor", num(c.epsilon_floor)},
            {"seed", c.seed},
            {"update_rule", to_string(c.rule)}};
  j["given_x"] = c.given_x ? mat(*c.given_x) : json(nullptr);
  return j;
}

inline FitConfig config_from_json(const json& j) {
  const std::string ctx = "config.";
  FitConfig c;
  c.q = get<std::size_t>(j, "q", ctx);
  c.penalties.lambda_x = get_double(j, "lambda_x", ctx);
  c.penalties.lambda_1 = get_double(j, "lambda_1", ctx);
  c.penalties.lambda_2 = get_double(j, "lambda_2", ctx);
  c.max_iter = get<std::size_t>(j, "max_iter", ctx);
  c.rel_tol = get_double(j, "rel_tol", ctx);
  c.epsilon_floor = get_double(j, "epsilon_floor", ctx);
  c.seed = get<std::uint64_t>(j, "seed", ctx);
  try {
    c.init = parse_init_method(get<std::string>(j, "init", ctx));
    c.rule = parse_update_rule(get<std::string>(j, "update_rule", ctx));
  } catch (const DomainError& e) {
    throw SchemaError(std::string("artifact: ") + e.what());
  }
  if (!at(j, "given_x", ctx).is_null()) c.given_x = get_mat(j, "given_x", ctx);
  return c;
}

inline json to_json(const EquilibriumSummary& e) {
  return {{"m_model", e.m_model ? mat(*e.m_model) : json(nullptr)},
          {"m_direct", mat(e.m_direct)},
          {"rho", num(e.rho)},
          {"ar", opt_num(e.ar)},
          {"ar_upper_bound", opt_num(e.ar_upper_bound)},
          {"stable", e.stable},
          {"near_critical", e.near_critical}};
}

inline EquilibriumSummary equilibrium_from_json(const json& j) {
  const std::string ctx = "equilibrium.";
  EquilibriumSummary e;
  if (!at(j, "m_model", ctx).is_null()) e.m_model = get_mat(j, "m_model", ctx);
  e.m_direct = get_mat(j, "m_direct", ctx);
  e.rho = get_double(j, "rho", ctx);
  e.ar = get_opt_num(j, "ar", ctx);
  e.ar_upper_bound = get_opt_num(j, "ar_upper_bound", ctx);
  e.stable = get<bool>(j, "stable", ctx);
  e.near_critical = get<bool>(j, "near_critical", ctx);
  if (e.stable != (e.rho < 1.0)) throw SchemaError("artifact: stable flag disagrees with rho");
  if (e.stable != e.m_model.has_value()) {
    throw SchemaError("artifact: m_model must be present exactly when the fit is stable");
  }
  return e;
}

inline json to_json(const FitResult& r) {
  json j = {{"params",
             {{"x", mat(r.params.x)}, {"theta1", mat(r.params.theta1)},
              {"theta2", mat(r.params.theta2)}}},
            {"m_simple", mat(r.m_simple)},
            {"loss_trace", vec(r.loss_trace)},
            {"iterations", r.iterations},
            {"converged", r.converged},
            {"init_iterations", r.init_iterations},
            {"equilibrium", to_json(r.equilibrium)},
            {"endogenous", r.y1_names},
            {"exogenous", r.y2_names},
            {"warnings", r.warnings}};
  j["metrics"] = r.metrics ? json{{"sc_map", num(r.metrics->sc_map)},
                                  {"sc_cov", num(r.metrics->sc_cov)},
                                  {"mae", num(r.metrics->mae)}}
                           : json(nullptr);
  return j;
}

inline FitResult fit_from_json(const json& j) {
  const std::string ctx = "fit.";
  FitResult r;
  const auto& p = at(j, "params", ctx);
  try {
    r.params = ModelParams(get_nonneg(p, "x", "fit.params."), get_nonneg(p, "theta1", "fit.params."),
                           get_nonneg(p, "theta2", "fit.params."));
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError(std::string("artifact: fit.params: ") + e.what());
  }
  r.m_simple = get_mat(j, "m_simple", ctx);
  r.loss_trace = get_vec(j, "loss_trace", ctx);
  r.iterations = get<std::size_t>(j, "iterations", ctx);
  r.converged = get<bool>(j, "converged", ctx);
  r.init_iterations = get<std::size_t>(j, "init_iterations", ctx);
  r.equilibrium = equilibrium_from_json(at(j, "equilibrium", ctx));
  r.y1_names = get<std::vector<std::string>>(j, "endogenous", ctx);
  r.y2_names = get<std::vector<std::string>>(j, "exogenous", ctx);
  r.warnings = get<std::vector<std::string>>(j, "warnings", ctx);
  const auto& m = at(j, "metrics", ctx);
  if (!m.is_null()) {
    r.metrics = EvalMetrics{get_double(m, "sc_map", "fit.metrics."),
                            get_double(m, "sc_cov", "fit.metrics."),
                            get_double(m, "mae", "fit.metrics.")};
  }
  if (static_cast<Eigen::Index>(r.y1_names.size()) != r.params.p1() ||
      static_cast<Eigen::Index>(r.y2_names.size()) != r.params.p2()) {
    throw SchemaError("artifact: variable names do not match parameter shapes");
  }
  return r;
}

inline json to_json(const CvResult& cv) {
  json cells = json::array();
  for (const auto& c : cv.cells) {
    cells.push_back({{"q", c.q},
                     {"lambda1", num(c.lambda1)},
                     {"lambda2", num(c.lambda2)},
                     {"mean_mae", num(c.mean_mae)},
                     {"fold_mae", vec(c.fold_mae)},
                     {"fold_rho", vec(c.fold_rho)},
                     {"stable", c.stable},
                     {"note", c.note}});
  }
  return {{"cells", cells},
          {"best", cv.best},
          {"fold_assignments", cv.fold_assignments},
          {"lambda_x", num(cv.lambda_x)},
          {"k_folds", cv.k_folds}};
}

inline CvResult cv_from_json(const json& j) {
  const std::string ctx = "cv.";
  CvResult cv;
  const auto& cells = at(j, "cells", ctx);
  if (!cells.is_array()) throw SchemaError("artifact: cv.cells is not an array");
  for (const auto& c : cells) {
    CvCell cell;
    const std::string cc = "cv.cells[].";
    cell.q = get<std::size_t>(c, "q", cc);
    cell.lambda1 = get_double(c, "lambda1", cc);
    cell.lambda2 = get_double(c, "lambda2", cc);
    cell.mean_mae = get_double(c, "mean_mae", cc);
    cell.fold_mae = get_vec(c, "fold_mae", cc);
    cell.fold_rho = get_vec(c, "fold_rho", cc);
    cell.stable = get<bool>(c, "stable", cc);
    cell.note = get<std::string>(c, "note", cc);
    cv.cells.push_back(std::move(cell));
  }
  cv.best = get<std::size_t>(j, "best", ctx);
  if (cv.best >= cv.cells.size()) throw SchemaError("artifact: cv.best out of range");
  cv.fold_assignments = get<std::vector<std::size_t>>(j, "fold_assignments", ctx);
  cv.lambda_x = get_double(j, "lambda_x", ctx);
  cv.k_folds = get<std::size_t>(j, "k_folds", ctx);
  return cv;
}

inline json interval(const Interval& i) { return json::array({num(i.lo), num(i.hi)}); }

inline Interval get_interval(const json& j, const std::string& key, const std::string& ctx) {
  const auto v = get_vec(j, key, ctx);
  if (v.size() != 2) throw SchemaError("artifact: '" + ctx + key + "' must have two entries");
  if (!(v[0] <= v[1])) throw SchemaError("artifact: '" + ctx + key + "' has lo > hi");
  return {v[0], v[1]};
}

inline json to_json(const BootstrapResult& b) {
  return {{"b", b.b},
          {"level", num(b.level)},
          {"rho_point", num(b.rho_point)},
          {"rho_interval", interval(b.rho_interval)},
          {"ar_point", opt_num(b.ar_point)},
          {"ar_interval", interval(b.ar_interval)},
          {"n_unstable", b.n_unstable},
          {"n_failed", b.n_failed},
          {"rho_values", vec(b.rho_values)},
          {"ar_values", vec(b.ar_values)}};
}

inline BootstrapResult bootstrap_from_json(const json& j) {
  const std::string ctx = "bootstrap.";
  BootstrapResult b;
  b.b = get<std::size_t>(j, "b", ctx);
  b.level = get_double(j, "level", ctx);
  b.rho_point = get_double(j, "rho_point", ctx);
  b.rho_interval = get_interval(j, "rho_interval", ctx);
  b.ar_point = get_opt_num(j, "ar_point", ctx);
  b.ar_interval = get_interval(j, "ar_interval", ctx);
  b.n_unstable = get<std::size_t>(j, "n_unstable", ctx);
  b.n_failed = get<std::size_t>(j, "n_failed", ctx);
  b.rho_values = get_vec(j, "rho_values", ctx);
  b.ar_values = get_vec(j, "ar_values", ctx);
  if (b.rho_values.size() != b.ar_values.size() ||
      b.rho_values.size() + b.n_unstable + b.n_failed != b.b) {
    throw SchemaError("artifact: bootstrap replicate counts do not add up to b");
  }
  return b;
}

}  // namespace json_codec

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const FitConfig& c) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(json_codec::to_json(c).dump())));
  return buf;
}

inline std::string utc_now_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Provenance make_provenance(const FitConfig& c) {
  return {c.seed, config_hash(c), utc_now_iso8601()};
}

inline nlohmann::json to_json(const RunArtifact& a) {
  using json_codec::to_json;
  nlohmann::json j = {{"schema_version", kSchemaVersion},
                      {"kind", a.kind},
                      {"provenance",
                       {{"seed", a.provenance.seed},
                        {"config_hash", a.provenance.config_hash},
                        {"created_utc", a.provenance.created_utc}}},
                      {"config", to_json(a.config)}};
  if (a.fit) j["fit"] = to_json(*a.fit);
  if (a.cv) j["cv"] = to_json(*a.cv);
  if (a.bootstrap) j["bootstrap"] = to_json(*a.bootstrap);
  return j;
}

inline std::string serialize_artifact(const RunArtifact& a) { return to_json(a).dump(2) + "\n"; }

inline RunArtifact parse_artifact(const std::string& text, const std::string& source = "<artifact>") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(source + ": malformed JSON: " + e.what());
  }
  if (!j.is_object() || !j.contains("schema_version")) {
    throw SchemaError(source + ": not an nmfsem artifact (no schema_version)");
  }
  const auto& v = j.at("schema_version");
  const std::string version = v.is_string() ? v.get<std::string>() : v.dump();
  if (version != kSchemaVersion) {
    throw SchemaError(source + ": schema_version \"" + version + "\" is not supported; this build reads version \"" +
                      kSchemaVersion + "\". Re-run the analysis with this build to upgrade the artifact.");
  }
  try {
    RunArtifact a;
    a.kind = json_codec::get<std::string>(j, "kind", "");
    const auto& p = json_codec::at(j, "provenance", "");
    a.provenance.seed = json_codec::get<std::uint64_t>(p, "seed", "provenance.");
    a.provenance.config_hash = json_codec::get<std::string>(p, "config_hash", "provenance.");
    a.provenance.created_utc = json_codec::get<std::string>(p, "created_utc", "provenance.");
    a.config = json_codec::config_from_json(json_codec::at(j, "config", ""));
    if (j.contains("fit")) a.fit = json_codec::fit_from_json(j.at("fit"));
    if (j.contains("cv")) a.cv = json_codec::cv_from_json(j.at("cv"));
    if (j.contains("bootstrap")) a.bootstrap = json_codec::bootstrap_from_json(j.at("bootstrap"));
    return a;
  } catch (const SchemaError& e) {
    throw SchemaError(source + ": " + e.what());
  }
}

inline void save_artifact(const RunArtifact& a, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_artifact(a));
}

inline RunArtifact load_artifact(const std::filesystem::path& path) {
  return parse_artifact(detail::read_file(path), path.string());
}

}  // namespace nmfsem
