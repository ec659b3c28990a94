#pragma once

#include <cstdio>
#include <optional>
#include <string>

#include "nmfsem/estimation.hpp"

namespace nmfsem {

struct DiagramOptions {
  // Absolute edge threshold; when absent, each matrix uses
  // `relative` x (its largest entry).
  std::optional<double> threshold;
  double relative = 0.05;
};

namespace detail {

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

inline std::string fmt(const char* f, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace detail

/// Graphviz DOT path diagram: exogenous -> factor edges from Theta2, factor ->
/// endogenous edges from X, and dashed endogenous -> factor feedback edges
/// from Theta1. Only strictly positive weights at or above the threshold are
/// drawn. Nodes and edges follow input order, so the text is deterministic.
inline std::string export_diagram(const FitResult& r, const DiagramOptions& opt = {}) {
  if (!(opt.relative >= 0.0) || (opt.threshold && !(*opt.threshold >= 0.0))) {
    throw DomainError("export_diagram: thresholds must be non-negative");
  }
  const auto& x = r.params.x.mat();
  const auto& t1 = r.params.theta1.mat();
  const auto& t2 = r.params.theta2.mat();
  const auto cut = [&](const Matrix& m) {
    return opt.threshold ? *opt.threshold : opt.relative * m.maxCoeff();
  };
  const double cx = cut(x), c1 = cut(t1), c2 = cut(t2);
  const auto keep = [](double w, double c) { return w > 0.0 && w >= c; };
  const auto name = [](const std::vector<std::string>& names, Eigen::Index i, const char* prefix) {
    return i < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(i)]
                                                        : prefix + std::to_string(i + 1);
  };

  std::string d = "digraph nmfsem {\n  rankdir=LR;\n  node [fontname=\"Helvetica\"];\n";
  d += "  subgraph cluster_exogenous {\n    label=\"Exogenous\";\n    rank=same;\n";
  for (Eigen::Index j = 0; j < t2.cols(); ++j) {
    d += "    exo" + std::to_string(j + 1) + " [shape=box, label=\"" +
         detail::dot_escape(name(r.y2_names, j, "y2_")) + "\"];\n";
  }
  d += "  }\n  subgraph cluster_latent {\n    label=\"Latent\";\n    rank=same;\n";
  for (Eigen::Index q = 0; q < x.cols(); ++q) {
    d += "    F" + std::to_string(q + 1) + " [shape=ellipse, label=\"F" + std::to_string(q + 1) +
         "\"];\n";
  }
  d += "  }\n  subgraph cluster_endogenous {\n    label=\"Endogenous\";\n    rank=same;\n";
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    d += "    endo" + std::to_string(i + 1) + " [shape=box, label=\"" +
         detail::dot_escape(name(r.y1_names, i, "y1_")) + "\"];\n";
  }
  d += "  }\n";

  for (Eigen::Index j = 0; j < t2.cols(); ++j)
    for (Eigen::Index q = 0; q < t2.rows(); ++q)
      if (keep(t2(q, j), c2)) {
        d += "  exo" + std::to_string(j + 1) + " -> F" + std::to_string(q + 1) + " [label=\"" +
             detail::fmt("%.3g", t2(q, j)) + "\"];\n";
      }
  for (Eigen::Index q = 0; q < x.cols(); ++q)
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (keep(x(i, q), cx)) {
        d += "  F" + std::to_string(q + 1) + " -> endo" + std::to_string(i + 1) + " [label=\"" +
             detail::fmt("%.3g", x(i, q)) + "\"];\n";
      }
  for (Eigen::Index i = 0; i < t1.cols(); ++i)
    for (Eigen::Index q = 0; q < t1.rows(); ++q)
      if (keep(t1(q, i), c1)) {
        d += "  endo" + std::to_string(i + 1) + " -> F" + std::to_string(q + 1) +
             " [style=dashed, constraint=false, label=\"" + detail::fmt("%.3g", t1(q, i)) +
             "\"];\n";
      }

  const auto& eq = r.equilibrium;
  if (eq.stable && eq.ar) {
    d += "  caption [shape=plaintext, label=\"rho(X Theta1) = " + detail::fmt("%.3f", eq.rho) +
         ", AR = " + detail::fmt("%.3f", *eq.ar) + "\"];\n";
  } else {
    d += "  warning [shape=note, color=red, label=\"UNSTABLE: rho(X Theta1) = " +
         detail::fmt("%.3f", eq.rho) + " >= 1; equilibrium and AR undefined\"];\n";
  }
  d += "}\n";
  return d;
}

}  // namespace nmfsem
