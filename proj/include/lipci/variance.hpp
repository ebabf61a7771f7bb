#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lipci/dataset.hpp"
#include "lipci/detail/lipschitz_qp.hpp"
#include "lipci/error.hpp"
#include "lipci/geometry.hpp"

namespace lipci {

enum class NoiseMethod { known, qp, nn };

inline std::string to_string(NoiseMethod m) {
  switch (m) {
    case NoiseMethod::known: return "known";
    case NoiseMethod::qp: return "qp";
    case NoiseMethod::nn: return "nn";
  }
  return "unknown";
}

struct NoiseDiagnostics {
  int iterations = 0;
  double max_violation = 0.0;
  double optimality_gap = 0.0;  // relative primal-dual gap
  bool polished = false;
};

struct NoiseEstimate {
  double sigma2 = 0.0;
  NoiseMethod method = NoiseMethod::known;
  std::optional<Vector> fitted_values;  // qp only
  NoiseDiagnostics diagnostics;

  static NoiseEstimate known(double sigma2) {
    detail::require(std::isfinite(sigma2) && sigma2 >= 0.0, "invalid-sigma2",
                    "noise variance must be nonnegative");
    NoiseEstimate e;
    e.sigma2 = sigma2;
    return e;
  }
};

struct QpOptions {
  int max_iterations = 50000;
  double rel_gap_tol = 1e-6;
  double feas_tol = 1e-8;  // multiplied by (L * max distance + 1)
  Eigen::Index max_points = 2000;
  bool allow_large = false;
};

/// Noise variance from Lipschitz-constrained least squares on the source:
/// sigma2 = min over L-Lipschitz g of (1/N) sum (Y_n - g(S_n))^2.
inline NoiseEstimate sigma2_qp(const Metric& metric, const SourceDataset& source,
                               double lipschitz, const QpOptions& opt = {}) {
  const Eigen::Index n = source.responses.size();
  detail::require(n >= 2, "too-few-points", "sigma2_qp needs N >= 2");
  detail::require(source.locations.size() == n, "dimension-mismatch",
                  "locations and responses differ in length");
  detail::require(std::isfinite(lipschitz) && lipschitz >= 0.0, "invalid-lipschitz",
                  "Lipschitz constant must be nonnegative");
  detail::require(source.responses.allFinite(), "non-finite", "responses must be finite");
  detail::require(opt.allow_large || n <= opt.max_points, "qp-too-large",
                  "sigma2_qp refuses N > " + std::to_string(opt.max_points) +
                      "; use sigma2_nn or allow_large");

  const Matrix d = pairwise_distances(metric, source.locations, source.locations);
  const Vector& y = source.responses;

  // Locations at distance zero must share a fitted value: merge them.
  std::vector<int> group(static_cast<std::size_t>(n), -1);
  std::vector<Eigen::Index> rep;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (group[static_cast<std::size_t>(i)] >= 0) continue;
    const int gid = static_cast<int>(rep.size());
    rep.push_back(i);
    for (Eigen::Index j = i; j < n; ++j)
      if (group[static_cast<std::size_t>(j)] < 0 && d(i, j) == 0.0)
        group[static_cast<std::size_t>(j)] = gid;
  }
  const int k = static_cast<int>(rep.size());
  std::vector<double> cnt(static_cast<std::size_t>(k), 0.0), mean(static_cast<std::size_t>(k), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    cnt[static_cast<std::size_t>(group[static_cast<std::size_t>(i)])] += 1.0;
    mean[static_cast<std::size_t>(group[static_cast<std::size_t>(i)])] += y[i];
  }
  for (int g = 0; g < k; ++g) mean[static_cast<std::size_t>(g)] /= cnt[static_cast<std::size_t>(g)];

  NoiseEstimate out;
  out.method = NoiseMethod::qp;
  std::vector<double> values;

  if (lipschitz == 0.0 || k == 1) {
    // Constant g; the minimiser is the overall mean.
    values.assign(static_cast<std::size_t>(k), y.mean());
    if (k == 1) values[0] = mean[0];
  } else {
    std::vector<double> bound;
    bound.reserve(static_cast<std::size_t>(k) * (k - 1) / 2);
    double diam = 0.0;
    for (int a = 0; a < k; ++a)
      for (int b = a + 1; b < k; ++b) {
        const double dab = d(rep[static_cast<std::size_t>(a)], rep[static_cast<std::size_t>(b)]);
        diam = std::max(diam, dab);
        bound.push_back(lipschitz * dab);
      }
    detail::LipschitzQpOptions qo;
    qo.max_iterations = opt.max_iterations;
    qo.rel_gap_tol = opt.rel_gap_tol;
    qo.feas_tol = opt.feas_tol * (lipschitz * diam + 1.0);
    detail::LipschitzQp qp(cnt, mean, std::move(bound), qo);
    const auto res = qp.solve();
    values = res.values;
    out.diagnostics.iterations = res.iterations;
    out.diagnostics.max_violation = res.max_violation;
    out.diagnostics.optimality_gap =
        res.objective > 0.0 ? std::max(0.0, res.objective - res.dual_bound) / res.objective : 0.0;
    out.diagnostics.polished = res.polished;
  }

  Vector fitted(n);
  double rss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    fitted[i] = values[static_cast<std::size_t>(group[static_cast<std::size_t>(i)])];
    rss += (y[i] - fitted[i]) * (y[i] - fitted[i]);
  }
  out.sigma2 = rss / static_cast<double>(n);
  out.fitted_values = std::move(fitted);
  return out;
}

/// Nearest-neighbour differencing estimate (1/2N) sum (Y_n - Y_eta(n))^2,
/// eta(n) the closest other index (lowest index on ties).
inline NoiseEstimate sigma2_nn(const Metric& metric, const SourceDataset& source) {
  const Eigen::Index n = source.responses.size();
  detail::require(n >= 2, "too-few-points", "sigma2_nn needs N >= 2");
  detail::require(source.locations.size() == n, "dimension-mismatch",
                  "locations and responses differ in length");
  check_conforms(metric, source.locations);
  const auto& s = source.locations.coords;
  const Vector& y = source.responses;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index arg = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dij = metric.kind == MetricKind::euclidean
                             ? detail::euclidean_distance(s.row(i), s.row(j))
                             : detail::haversine_distance(s.row(i), s.row(j), metric.radius);
      if (dij < best) {
        best = dij;
        arg = j;
      }
    }
    const double diff = y[i] - y[arg];
    acc += diff * diff;
  }
  NoiseEstimate out;
  out.method = NoiseMethod::nn;
  out.sigma2 = acc / (2.0 * static_cast<double>(n));
  return out;
}

}  // namespace lipci
