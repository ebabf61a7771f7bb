#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "lipci/dataset.hpp"
#include "lipci/error.hpp"
#include "lipci/geometry.hpp"

namespace lipci::io {

/// Raw CSV table: header names and numeric rows.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// Locale-independent strict parse; the whole cell must be consumed and the
// value must be finite.
inline std::optional<double> parse_double(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (*first == '+') ++first;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses a numeric CSV with a header row. Errors name the data row
/// (1-based) and the column.
inline Table parse_csv(std::istream& in, const std::string& name = "input") {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    t.header = detail::split(line);
    break;
  }
  if (t.header.empty()) throw Error("missing-header", name + ": no header row");
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i].empty())
      throw Error("missing-columns", name + ": empty column name at position " + std::to_string(i + 1));
    for (std::size_t j = 0; j < i; ++j)
      if (t.header[j] == t.header[i])
        throw Error("duplicate-column", name + ": column '" + t.header[i] + "' repeats");
  }
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    ++row_no;
    const auto cells = detail::split(line);
    if (cells.size() != t.header.size())
      throw Error("column-count", name + ": row " + std::to_string(row_no) + " (line " +
                                      std::to_string(line_no) + ") has " +
                                      std::to_string(cells.size()) + " cells, header has " +
                                      std::to_string(t.header.size()));
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = detail::parse_double(cells[c]);
      if (!v)
        throw Error("invalid-cell", name + ": row " + std::to_string(row_no) + " (line " +
                                        std::to_string(line_no) + "), column '" + t.header[c] +
                                        "': cannot parse '" + cells[c] + "' as a finite number");
      row[c] = *v;
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("file-not-found", "cannot open '" + path + "'");
  return parse_csv(in, path);
}

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("format-error", "cannot format number");
  return std::string(buf, ptr);
}

inline void write_csv(std::ostream& out, const Table& t) {
  for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << '\n';
  }
}

namespace detail {

// Indices of prefix1..prefixK; gaps or a missing prefix1 are errors.
inline std::vector<std::size_t> numbered_columns(const Table& t, const std::string& prefix,
                                                 const std::string& name) {
  std::map<int, std::size_t> found;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    const std::string& h = t.header[i];
    if (h.size() <= prefix.size() || h.compare(0, prefix.size(), prefix) != 0) continue;
    int k = 0;
    const auto [ptr, ec] = std::from_chars(h.data() + prefix.size(), h.data() + h.size(), k);
    if (ec == std::errc() && ptr == h.data() + h.size() && k >= 1) found[k] = i;
  }
  std::vector<std::size_t> out;
  for (int k = 1; k <= static_cast<int>(found.size()); ++k) {
    const auto it = found.find(k);
    if (it == found.end())
      throw Error("missing-columns", name + ": column " + prefix + std::to_string(k) + " is missing");
    out.push_back(it->second);
  }
  return out;
}

inline void check_known_columns(const Table& t, const std::vector<std::size_t>& used,
                                const std::string& name) {
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    bool ok = false;
    for (std::size_t u : used) ok = ok || u == i;
    if (!ok) throw Error("unknown-column", name + ": unexpected column '" + t.header[i] + "'");
  }
}

struct Parsed {
  LocationSet locations;
  Matrix covariates;
  std::optional<Vector> responses;
};

inline Parsed parse_common(const Table& t, const Metric& metric, bool want_y,
                           const std::string& name) {
  std::vector<std::size_t> used;
  const auto lat = t.column("lat"), lon = t.column("lon");
  const auto s_cols = numbered_columns(t, "s", name);
  const auto x_cols = numbered_columns(t, "x", name);
  if (x_cols.empty()) throw Error("missing-columns", name + ": no covariate columns x1..xP");

  Parsed out;
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  if (lat || lon) {
    if (!lat || !lon) throw Error("missing-columns", name + ": need both lat and lon");
    if (!s_cols.empty())
      throw Error("ambiguous-units", name + ": both lat,lon and s columns present");
    if (metric.kind != MetricKind::haversine)
      throw Error("ambiguous-units",
                  name + ": lat,lon columns (degrees) need the haversine metric");
    Matrix deg(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      deg(i, 0) = t.rows[static_cast<std::size_t>(i)][*lat];
      deg(i, 1) = t.rows[static_cast<std::size_t>(i)][*lon];
    }
    out.locations = LocationSet(degrees_to_radians(deg), AngularUnit::radians);
    used.push_back(*lat);
    used.push_back(*lon);
  } else {
    if (s_cols.empty()) throw Error("missing-columns", name + ": no location columns s1..sD or lat,lon");
    if (metric.kind == MetricKind::haversine)
      throw Error("ambiguous-units",
                  name + ": the haversine metric needs lat,lon columns in degrees");
    Matrix c(n, static_cast<Eigen::Index>(s_cols.size()));
    for (Eigen::Index i = 0; i < n; ++i)
      for (std::size_t d = 0; d < s_cols.size(); ++d)
        c(i, static_cast<Eigen::Index>(d)) = t.rows[static_cast<std::size_t>(i)][s_cols[d]];
    out.locations = LocationSet(std::move(c));
    used.insert(used.end(), s_cols.begin(), s_cols.end());
  }
  out.covariates.resize(n, static_cast<Eigen::Index>(x_cols.size()));
  for (Eigen::Index i = 0; i < n; ++i)
    for (std::size_t p = 0; p < x_cols.size(); ++p)
      out.covariates(i, static_cast<Eigen::Index>(p)) = t.rows[static_cast<std::size_t>(i)][x_cols[p]];
  used.insert(used.end(), x_cols.begin(), x_cols.end());

  const auto y = t.column("y");
  if (want_y && !y) throw Error("missing-columns", name + ": no response column y");
  if (y) {
    Vector r(n);
    for (Eigen::Index i = 0; i < n; ++i) r[i] = t.rows[static_cast<std::size_t>(i)][*y];
    out.responses = std::move(r);
    used.push_back(*y);
  }
  check_known_columns(t, used, name);
  if (n == 0) throw Error("empty-source", name + ": no data rows");
  return out;
}

}  // namespace detail

/// Source CSV: s1..sD (or lat,lon in degrees for haversine), x1..xP, y.
/// With `intercept` a constant column is prepended as coefficient 0.
inline SourceDataset parse_source_csv(const std::string& path, const Metric& metric,
                                      bool intercept = true) {
  auto p = detail::parse_common(read_csv(path), metric, true, path);
  SourceDataset s;
  s.locations = std::move(p.locations);
  s.covariates = intercept ? with_intercept(p.covariates) : p.covariates;
  s.intercept_included = intercept;
  s.responses = std::move(*p.responses);
  return s;
}

/// Target CSV: same columns without y. A y column, when present, is
/// returned separately (evaluation mode).
inline TargetSet parse_target_csv(const std::string& path, const Metric& metric,
                                  bool intercept = true, std::optional<Vector>* responses = nullptr) {
  auto p = detail::parse_common(read_csv(path), metric, false, path);
  TargetSet t;
  t.locations = std::move(p.locations);
  t.covariates = intercept ? with_intercept(p.covariates) : p.covariates;
  if (responses) *responses = std::move(p.responses);
  return t;
}

/// Writes locations (as lat,lon degrees when the set is angular), covariates
/// (without an intercept column) and optional responses.
inline void write_dataset_csv(const std::string& path, const LocationSet& locations,
                              const Matrix& covariates, bool drop_intercept,
                              const Vector* responses) {
  Table t;
  const bool angular = locations.angular_unit == AngularUnit::radians;
  if (angular) {
    t.header = {"lat", "lon"};
  } else {
    for (Eigen::Index d = 0; d < locations.dim(); ++d) t.header.push_back("s" + std::to_string(d + 1));
  }
  const Eigen::Index first = drop_intercept ? 1 : 0;
  for (Eigen::Index p = first; p < covariates.cols(); ++p)
    t.header.push_back("x" + std::to_string(p - first + 1));
  if (responses) t.header.push_back("y");
  const double to_deg = 180.0 / std::numbers::pi;
  for (Eigen::Index i = 0; i < locations.size(); ++i) {
    std::vector<double> row;
    for (Eigen::Index d = 0; d < locations.dim(); ++d)
      row.push_back(angular ? locations.coords(i, d) * to_deg : locations.coords(i, d));
    for (Eigen::Index p = first; p < covariates.cols(); ++p) row.push_back(covariates(i, p));
    if (responses) row.push_back((*responses)[i]);
    t.rows.push_back(std::move(row));
  }
  std::ofstream out(path);
  if (!out) throw Error("file-not-writable", "cannot write '" + path + "'");
  write_csv(out, t);
}

}  // namespace lipci::io
