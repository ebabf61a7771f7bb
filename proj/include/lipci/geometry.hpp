#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "lipci/error.hpp"

namespace lipci {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class MetricKind { euclidean, haversine };

/// Mean Earth radius in kilometres; the default sphere for haversine.
inline constexpr double kEarthRadiusKm = 6371.0088;

struct Metric {
  MetricKind kind = MetricKind::euclidean;
  double radius = 1.0;  // haversine only

  static Metric euclidean() { return {MetricKind::euclidean, 1.0}; }
  static Metric haversine(double radius = kEarthRadiusKm) {
    detail::require(std::isfinite(radius) && radius > 0.0, "invalid-metric",
                    "haversine radius must be positive");
    return {MetricKind::haversine, radius};
  }
};

inline std::string to_string(MetricKind k) {
  return k == MetricKind::euclidean ? "euclidean" : "haversine";
}

enum class AngularUnit { none, radians };

/// Spatial locations, one per row. Haversine rows are (latitude, longitude)
/// in radians.
struct LocationSet {
  Matrix coords;
  AngularUnit angular_unit = AngularUnit::none;

  LocationSet() = default;
  explicit LocationSet(Matrix c, AngularUnit unit = AngularUnit::none)
      : coords(std::move(c)), angular_unit(unit) {}

  Eigen::Index size() const { return coords.rows(); }
  Eigen::Index dim() const { return coords.cols(); }
  auto row(Eigen::Index i) const { return coords.row(i); }
};

namespace detail {

template <class A, class B>
double euclidean_distance(const A& a, const B& b) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    acc += d * d;
  }
  return std::sqrt(acc);
}

// Arcsine form; the argument is clamped to [0, 1] so antipodes stay finite.
template <class A, class B>
double haversine_distance(const A& a, const B& b, double radius) {
  const double s_lat = std::sin(0.5 * (b[0] - a[0]));
  const double s_lon = std::sin(0.5 * (b[1] - a[1]));
  double h = s_lat * s_lat + std::cos(a[0]) * std::cos(b[0]) * s_lon * s_lon;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * radius * std::asin(std::sqrt(h));
}

}  // namespace detail

/// Checks that a location set can be used with the metric.
inline void check_conforms(const Metric& metric, const LocationSet& set) {
  detail::require(set.dim() >= 1, "dimension-mismatch",
                  "locations need at least one coordinate");
  detail::require(set.coords.allFinite(), "non-finite",
                  "location coordinates must be finite");
  if (metric.kind == MetricKind::haversine) {
    detail::require(set.dim() == 2, "dimension-mismatch",
                    "haversine needs (lat, lon) pairs");
    detail::require(set.angular_unit == AngularUnit::radians, "angular-unit",
                    "haversine needs coordinates in radians");
    const double half_pi = 0.5 * std::numbers::pi;
    for (Eigen::Index i = 0; i < set.size(); ++i) {
      const double lat = set.coords(i, 0);
      detail::require(lat >= -half_pi - 1e-12 && lat <= half_pi + 1e-12,
                      "latitude-range", "latitude outside [-pi/2, pi/2]");
    }
  }
}

/// Distance between two points (row vectors or Eigen expressions).
template <class A, class B>
double distance(const Metric& metric, const A& a, const B& b) {
  detail::require(a.size() == b.size(), "dimension-mismatch",
                  "points have different dimensions");
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    detail::require(std::isfinite(a[k]) && std::isfinite(b[k]), "non-finite",
                    "non-finite coordinate");
  }
  if (metric.kind == MetricKind::euclidean) {
    return detail::euclidean_distance(a, b);
  }
  detail::require(a.size() == 2, "dimension-mismatch",
                  "haversine needs (lat, lon) pairs");
  const double half_pi = 0.5 * std::numbers::pi;
  detail::require(std::abs(a[0]) <= half_pi + 1e-12 &&
                      std::abs(b[0]) <= half_pi + 1e-12,
                  "latitude-range", "latitude outside [-pi/2, pi/2]");
  return detail::haversine_distance(a, b, metric.radius);
}

/// |A| x |B| matrix of distances.
inline Matrix pairwise_distances(const Metric& metric, const LocationSet& a,
                                 const LocationSet& b) {
  check_conforms(metric, a);
  check_conforms(metric, b);
  detail::require(a.dim() == b.dim(), "dimension-mismatch",
                  "location sets have different dimensions");
  Matrix out(a.size(), b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      out(i, j) = metric.kind == MetricKind::euclidean
                      ? detail::euclidean_distance(a.coords.row(i), b.coords.row(j))
                      : detail::haversine_distance(a.coords.row(i), b.coords.row(j),
                                                   metric.radius);
    }
  }
  return out;
}

inline Matrix degrees_to_radians(const Matrix& coords) {
  detail::require(coords.allFinite(), "non-finite",
                  "coordinates must be finite");
  return coords * (std::numbers::pi / 180.0);
}

}  // namespace lipci
