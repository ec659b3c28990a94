#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "nmfsem/errors.hpp"
#include "nmfsem/model.hpp"

namespace nmfsem {

enum class Role { endogenous, exogenous, ignore };
enum class Transform { none, log1p, reverse };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::endogenous: return "endogenous";
    case Role::exogenous: return "exogenous";
    case Role::ignore: return "ignore";
  }
  return "?";
}

inline const char* to_string(Transform t) {
  switch (t) {
    case Transform::none: return "none";
    case Transform::log1p: return "log1p";
    case Transform::reverse: return "reverse";
  }
  return "?";
}

struct ColumnSpec {
  std::string name;
  Role role = Role::ignore;
  Transform transform = Transform::none;
  bool protective = false;

  bool operator==(const ColumnSpec&) const = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// One CSV record; supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw InputError("line " + std::to_string(line_no) + ": unterminated quote");
  out.push_back(std::move(cur));
  return out;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// Raw numeric table: header names plus columns of values.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
};

/// Parses a header + numeric CSV. Empty cells and NA/NaN markers are
/// reported as missing values; errors name the data row (1-based, header
/// excluded) and column.
inline CsvTable parse_csv(const std::string& text, const std::string& source = "<csv>") {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t data_row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      if (detail::trim(line).empty()) continue;
      for (auto& h : detail::split_csv_line(line, line_no)) t.header.push_back(detail::trim(h));
      for (std::size_t j = 0; j < t.header.size(); ++j) {
        if (t.header[j].empty()) {
          throw InputError(source + ": header column " + std::to_string(j + 1) + " is empty");
        }
        for (std::size_t k = 0; k < j; ++k) {
          if (t.header[k] == t.header[j]) {
            throw InputError(source + ": duplicate column name '" + t.header[j] + "'");
          }
        }
      }
      t.columns.resize(t.header.size());
      have_header = true;
      continue;
    }
    if (detail::trim(line).empty()) continue;
    ++data_row;
    const auto cells = detail::split_csv_line(line, line_no);
    if (cells.size() != t.header.size()) {
      throw InputError(source + ": row " + std::to_string(data_row) + " has " +
                       std::to_string(cells.size()) + " fields, header has " +
                       std::to_string(t.header.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const std::string cell = detail::trim(cells[j]);
      const std::string where = source + ": row " + std::to_string(data_row) + ", column '" +
                                t.header[j] + "'";
      const std::string lc = detail::lower(cell);
      if (cell.empty() || lc == "na" || lc == "nan" || lc == "null") {
        throw InputError(where + ": missing value");
      }
      double v = 0.0;
      const char* first = cell.data();
      if (*first == '+') ++first;
      const auto res = std::from_chars(first, cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw InputError(where + ": non-numeric value '" + cell + "'");
      }
      if (!std::isfinite(v)) throw InputError(where + ": non-finite value '" + cell + "'");
      t.columns[j].push_back(v);
    }
  }
  if (!have_header) throw InputError(source + ": no header row");
  if (data_row == 0) throw InputError(source + ": no data rows");
  return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  return parse_csv(detail::read_file(path), path.string());
}

/// Column spec, one line per column: `name = role[, transform][, protective]`.
/// Roles: endogenous|exogenous|ignore (also y1|y2). Transforms: none|log1p|reverse.
/// `#` starts a comment. Columns not listed are ignored.
inline std::vector<ColumnSpec> parse_column_spec(const std::string& text,
                                                 const std::string& source = "<spec>") {
  std::vector<ColumnSpec> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.rfind('=');
    if (eq == std::string::npos) throw InputError(where + ": expected 'name = role[, ...]'");
    ColumnSpec c;
    c.name = detail::trim(std::string_view(body).substr(0, eq));
    if (c.name.size() >= 2 && c.name.front() == '"' && c.name.back() == '"') {
      c.name = c.name.substr(1, c.name.size() - 2);
    }
    if (c.name.empty()) throw InputError(where + ": empty column name");
    std::vector<std::string> parts;
    std::istringstream rest(body.substr(eq + 1));
    std::string tok;
    while (std::getline(rest, tok, ',')) parts.push_back(detail::lower(detail::trim(tok)));
    if (parts.empty() || parts.front().empty()) throw InputError(where + ": missing role");
    const auto& role = parts.front();
    if (role == "endogenous" || role == "y1") {
      c.role = Role::endogenous;
    } else if (role == "exogenous" || role == "y2") {
      c.role = Role::exogenous;
    } else if (role == "ignore") {
      c.role = Role::ignore;
    } else {
      throw InputError(where + ": unknown role '" + role + "'");
    }
    bool have_transform = false;
    for (std::size_t k = 1; k < parts.size(); ++k) {
      const auto& p = parts[k];
      if (p == "protective") {
        c.protective = true;
      } else if (p == "none" || p == "log1p" || p == "reverse") {
        if (have_transform) throw InputError(where + ": more than one transform");
        have_transform = true;
        c.transform = p == "log1p" ? Transform::log1p
                      : p == "reverse" ? Transform::reverse
                                       : Transform::none;
      } else {
        throw InputError(where + ": unknown option '" + p + "'");
      }
    }
    for (const auto& prev : out) {
      if (prev.name == c.name) throw InputError(where + ": column '" + c.name + "' listed twice");
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<ColumnSpec> load_column_spec(const std::filesystem::path& path) {
  return parse_column_spec(detail::read_file(path), path.string());
}

inline std::string format_column_spec(const std::vector<ColumnSpec>& spec) {
  std::string out;
  for (const auto& c : spec) {
    out += c.name + " = " + to_string(c.role);
    if (c.transform != Transform::none) out += std::string(", ") + to_string(c.transform);
    if (c.protective) out += ", protective";
    out += '\n';
  }
  return out;
}

/// transform -> protective sign flip -> min-max rescale to [0, 1].
/// `reverse` maps v to max - v.
inline std::vector<double> preprocess_column(std::vector<double> v, const ColumnSpec& spec,
                                             const std::string& source = "<csv>") {
  const std::string where = source + ": column '" + spec.name + "'";
  if (v.empty()) throw InputError(where + ": no values");
  switch (spec.transform) {
    case Transform::none: break;
    case Transform::log1p:
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(v[i] > -1.0)) {
          throw InputError(where + ", row " + std::to_string(i + 1) +
                           ": log1p needs values > -1");
        }
        v[i] = std::log1p(v[i]);
      }
      break;
    case Transform::reverse: {
      const double mx = *std::max_element(v.begin(), v.end());
      for (auto& x : v) x = mx - x;
      break;
    }
  }
  if (spec.protective) {
    for (auto& x : v) x = -x;
  }
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  if (!(range > 0.0)) throw InputError(where + ": constant variable (zero range)");
  for (auto& x : v) x = std::clamp((x - lo) / range, 0.0, 1.0);
  return v;
}

/// Builds a Dataset from a parsed table. Variables become rows (P x N), in
/// spec order within each role.
inline Dataset make_dataset(const CsvTable& table, const std::vector<ColumnSpec>& spec,
                            const std::string& source = "<csv>") {
  std::vector<const ColumnSpec*> endo, exo;
  std::vector<std::size_t> endo_col, exo_col;
  for (const auto& c : spec) {
    const auto it = std::find(table.header.begin(), table.header.end(), c.name);
    if (it == table.header.end()) {
      throw InputError(source + ": spec column '" + c.name + "' not found in header");
    }
    const auto j = static_cast<std::size_t>(it - table.header.begin());
    if (c.role == Role::endogenous) {
      endo.push_back(&c);
      endo_col.push_back(j);
    } else if (c.role == Role::exogenous) {
      exo.push_back(&c);
      exo_col.push_back(j);
    }
  }
  if (endo.empty()) throw InputError(source + ": spec declares no endogenous column");
  if (exo.empty()) throw InputError(source + ": spec declares no exogenous column");
  const auto n = static_cast<Eigen::Index>(table.rows());
  const auto fill = [&](const std::vector<const ColumnSpec*>& cs,
                        const std::vector<std::size_t>& cols, std::vector<std::string>& names) {
    Matrix m(static_cast<Eigen::Index>(cs.size()), n);
    for (std::size_t k = 0; k < cs.size(); ++k) {
      const auto v = preprocess_column(table.columns[cols[k]], *cs[k], source);
      for (Eigen::Index i = 0; i < n; ++i) {
        m(static_cast<Eigen::Index>(k), i) = v[static_cast<std::size_t>(i)];
      }
      names.push_back(cs[k]->name);
    }
    return m;
  };
  std::vector<std::string> n1, n2;
  Matrix y1 = fill(endo, endo_col, n1);
  Matrix y2 = fill(exo, exo_col, n2);
  return Dataset(NonNegMatrix(std::move(y1)), NonNegMatrix(std::move(y2)), std::move(n1),
                 std::move(n2));
}

inline Dataset load_dataset(const std::filesystem::path& csv, const std::vector<ColumnSpec>& spec) {
  return make_dataset(read_csv(csv), spec, csv.string());
}

/// Observations as rows: Y1 variables, then Y2 variables.
inline std::string format_dataset_csv(const Dataset& data) {
  std::string out;
  bool first = true;
  for (const auto* names : {&data.y1_names, &data.y2_names}) {
    for (const auto& nm : *names) {
      if (!first) out += ',';
      out += detail::csv_quote(nm);
      first = false;
    }
  }
  out += '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index r = 0; r < data.p1(); ++r) {
      if (r) out += ',';
      out += detail::format_double(data.y1(r, i));
    }
    for (Eigen::Index r = 0; r < data.p2(); ++r) out += ',' + detail::format_double(data.y2(r, i));
    out += '\n';
  }
  return out;
}

inline std::vector<ColumnSpec> dataset_spec(const Dataset& data) {
  std::vector<ColumnSpec> spec;
  for (const auto& nm : data.y1_names) spec.push_back({nm, Role::endogenous});
  for (const auto& nm : data.y2_names) spec.push_back({nm, Role::exogenous});
  return spec;
}

/// Writes `text` to `path` through a temporary sibling and a rename, so a
/// failed write never leaves a partial file behind.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + tmp.string() + "'");
    out << text;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw InputError("write to '" + tmp.string() + "' failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw InputError("cannot move output into place at '" + path.string() + "'");
  }
}

}  // namespace nmfsem
