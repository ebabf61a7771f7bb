#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "lipci/dataset.hpp"
#include "lipci/distributions.hpp"
#include "lipci/error.hpp"
#include "lipci/transport.hpp"
#include "lipci/variance.hpp"
#include "lipci/weights.hpp"

namespace lipci {

struct IntervalResult {
  Eigen::Index coefficient_index = 0;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double bias_halfwidth = 0.0;    // B
  double randomness_scale = 0.0;  // c = sigma * ||v||_2
  double delta = 0.0;
  double alpha = 0.05;
  double sigma2 = 0.0;
  NoiseMethod sigma2_source = NoiseMethod::known;

  // Diagnostics carried along for reporting.
  double contrast_mass = 0.0;  // A
  double transport = 0.0;      // W1
  double contrast_norm = 0.0;  // ||v||_2

  double width() const { return upper - lower; }
  bool contains(double x) const { return lower <= x && x <= upper; }
};

namespace detail {

inline void check_alpha(double alpha) {
  require(std::isfinite(alpha) && alpha > 0.0 && alpha < 1.0, "invalid-alpha",
          "alpha must lie strictly inside (0, 1)");
}

// Upper normal tail, accurate far into the tail.
inline double normal_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

}  // namespace detail

/// Phi(delta) - Phi(-2B/c - delta) - (1 - alpha), written with upper tails.
inline double delta_residual(double delta, double b_over_c, double alpha) {
  return alpha - detail::normal_tail(delta) - detail::normal_tail(2.0 * b_over_c + delta);
}

/// Half-width multiplier of the shortest symmetric interval that covers
/// every mean in [-B, B] under Normal noise of scale c.
inline double find_delta(double bias, double c, double alpha) {
  detail::check_alpha(alpha);
  detail::require(std::isfinite(bias) && bias >= 0.0, "invalid-bias",
                  "B must be finite and nonnegative");
  detail::require(std::isfinite(c) && c > 0.0, "invalid-scale", "c must be positive");
  const double t = bias / c;
  double lo = std_normal_quantile(1.0 - alpha);
  double hi = std_normal_quantile(1.0 - 0.5 * alpha);
  // The residual is increasing in delta; bisect until the bracket collapses.
  for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    if (delta_residual(mid, t, alpha) < 0.0) lo = mid;
    else hi = mid;
  }
  const double rlo = std::abs(delta_residual(lo, t, alpha));
  const double rhi = std::abs(delta_residual(hi, t, alpha));
  return rlo <= rhi ? lo : hi;
}

/// estimate +- (B + c * delta); with c = 0 the interval is estimate +- B.
inline IntervalResult interval_from_parts(double estimate, double bias, double c, double alpha,
                                          Eigen::Index coefficient_index = 0) {
  detail::check_alpha(alpha);
  detail::require(std::isfinite(c) && c >= 0.0, "invalid-scale", "c must be nonnegative");
  IntervalResult r;
  r.coefficient_index = coefficient_index;
  r.estimate = estimate;
  r.bias_halfwidth = bias;
  r.randomness_scale = c;
  r.alpha = alpha;
  r.delta = c > 0.0 ? find_delta(bias, c, alpha) : std_normal_quantile(1.0 - 0.5 * alpha);
  const double half = c > 0.0 ? bias + c * r.delta : bias;
  r.lower = estimate - half;
  r.upper = estimate + half;
  return r;
}

inline IntervalResult build_interval(double estimate, const BiasBound& bias, const Vector& v,
                                     const NoiseEstimate& sigma2, double alpha,
                                     Eigen::Index coefficient_index = 0) {
  detail::require(std::isfinite(sigma2.sigma2) && sigma2.sigma2 >= 0.0, "invalid-sigma2",
                  "noise variance must be nonnegative");
  const double norm = v.norm();
  IntervalResult r = interval_from_parts(estimate, bias.B, std::sqrt(sigma2.sigma2) * norm,
                                         alpha, coefficient_index);
  r.sigma2 = sigma2.sigma2;
  r.sigma2_source = sigma2.method;
  r.contrast_mass = bias.A;
  r.transport = bias.w1;
  r.contrast_norm = norm;
  return r;
}

/// Union over b in [-B, B] of the classical intervals: never shorter than
/// the calibrated interval.
inline IntervalResult union_interval(double estimate, double bias, double c, double alpha,
                                     Eigen::Index coefficient_index = 0) {
  detail::check_alpha(alpha);
  IntervalResult r;
  r.coefficient_index = coefficient_index;
  r.estimate = estimate;
  r.bias_halfwidth = bias;
  r.randomness_scale = c;
  r.alpha = alpha;
  r.delta = std_normal_quantile(1.0 - 0.5 * alpha);
  r.lower = estimate - bias - c * r.delta;
  r.upper = estimate + bias + c * r.delta;
  return r;
}

struct IntervalInputs {
  Eigen::Index coefficient_index = 0;
  double estimate = 0.0;
  double bias = 0.0;
  double c = 0.0;
};

/// Each of D outputs at level alpha / D.
inline std::vector<IntervalResult> bonferroni_intervals(const std::vector<IntervalInputs>& inputs,
                                                        double alpha) {
  detail::check_alpha(alpha);
  detail::require(!inputs.empty(), "empty-outputs", "need at least one output");
  const double level = alpha / static_cast<double>(inputs.size());
  std::vector<IntervalResult> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs)
    out.push_back(interval_from_parts(in.estimate, in.bias, in.c, level, in.coefficient_index));
  return out;
}

/// Psi construction: 1-NN by default, K-NN when neighbours > 1.
struct PsiKind {
  Eigen::Index neighbours = 1;

  static PsiKind nearest() { return {}; }
  static PsiKind knn(Eigen::Index k) { return {k}; }
  std::string name() const {
    return neighbours == 1 ? "nn1" : "knn:" + std::to_string(neighbours);
  }
};

struct CiOptions {
  std::optional<double> sigma2;  // known noise variance; estimated when absent
  // Estimator when sigma2 is absent. Unset: qp, or nn beyond the QP size guard.
  std::optional<NoiseMethod> estimator;
  PsiKind psi;
  std::uint64_t seed = 0;        // tie-breaking in Psi
  QpOptions qp;
  bool simultaneous = false;     // Bonferroni across the requested coefficients
};

struct CiReport {
  std::vector<IntervalResult> intervals;
  NoiseEstimate noise;
  ValidationReport validation;
};

/// Full pipeline: Psi, point estimate, contrasts, bias bound, noise
/// variance, calibration.
inline CiReport lipschitz_ci_report(const SourceDataset& source, const TargetSet& target,
                                    double lipschitz, double alpha, const Metric& metric,
                                    const std::vector<Eigen::Index>& coefficients,
                                    const CiOptions& opt = {}) {
  detail::check_alpha(alpha);
  detail::require(std::isfinite(lipschitz) && lipschitz > 0.0, "invalid-lipschitz",
                  "Lipschitz constant must be positive");
  CiReport rep;
  rep.validation = validate(source, target);
  for (const auto& f : rep.validation.findings)
    if (f.code != "duplicate-locations") throw Error(f.code, f.message);
  check_conforms(metric, source.locations);
  check_conforms(metric, target.locations);
  detail::require(!coefficients.empty(), "invalid-coefficient", "no coefficients requested");

  const WeightMatrix psi =
      knn_weights(metric, source.locations, target.locations, opt.psi.neighbours, opt.seed);

  const bool qp_fits = source.size() <= opt.qp.max_points || opt.qp.allow_large;
  if (opt.sigma2) {
    rep.noise = NoiseEstimate::known(*opt.sigma2);
  } else if (opt.estimator == NoiseMethod::nn || (!opt.estimator && !qp_fits)) {
    rep.noise = sigma2_nn(metric, source);
  } else {
    detail::require(opt.estimator != NoiseMethod::known, "invalid-sigma2",
                    "known noise variance requested without a value");
    rep.noise = sigma2_qp(metric, source, lipschitz, opt.qp);
  }

  const Vector psi_y = psi * source.responses;
  std::vector<IntervalInputs> inputs;
  for (Eigen::Index p : coefficients) {
    const ContrastVectors cv = contrast_vectors(target.covariates, psi, p);
    const BiasBound b = bias_bound(metric, source.locations, target.locations, cv, lipschitz);
    const double estimate = cv.w.dot(psi_y);
    IntervalResult r = build_interval(estimate, b, cv.v, rep.noise, alpha, p);
    inputs.push_back({p, estimate, b.B, r.randomness_scale});
    rep.intervals.push_back(r);
  }
  if (opt.simultaneous && coefficients.size() > 1) {
    auto simul = bonferroni_intervals(inputs, alpha);
    for (std::size_t i = 0; i < simul.size(); ++i) {
      IntervalResult& r = rep.intervals[i];
      r.delta = simul[i].delta;
      r.lower = simul[i].lower;
      r.upper = simul[i].upper;
      r.alpha = simul[i].alpha;
    }
  }
  return rep;
}

inline std::vector<IntervalResult> lipschitz_ci(const SourceDataset& source,
                                                const TargetSet& target, double lipschitz,
                                                double alpha, const Metric& metric,
                                                const std::vector<Eigen::Index>& coefficients,
                                                const CiOptions& opt = {}) {
  return lipschitz_ci_report(source, target, lipschitz, alpha, metric, coefficients, opt)
      .intervals;
}

}  // namespace lipci
