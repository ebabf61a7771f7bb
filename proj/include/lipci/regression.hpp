#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "lipci/dataset.hpp"
#include "lipci/distributions.hpp"
#include "lipci/error.hpp"
#include "lipci/random.hpp"
#include "lipci/weights.hpp"

namespace lipci {

enum class FitMethod { ols, sandwich, wls };

inline std::string to_string(FitMethod m) {
  switch (m) {
    case FitMethod::ols: return "ols";
    case FitMethod::sandwich: return "sandwich";
    case FitMethod::wls: return "wls";
  }
  return "unknown";
}

struct LinearFit {
  Vector coefficients;
  Matrix coefficient_cov;
  Vector residuals;  // Y - X theta
  Eigen::Index dof = 0;
  FitMethod method = FitMethod::ols;
};

/// Two-sided baseline interval estimate +- quantile * se.
struct BaselineInterval {
  Eigen::Index coefficient_index = 0;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double variance = 0.0;
  double quantile = 0.0;
  FitMethod method = FitMethod::ols;

  double width() const { return upper - lower; }
  bool contains(double x) const { return lower <= x && x <= upper; }
};

/// (X*^T X*)^{-1} X*^T f(S*): the least-squares projection of the
/// conditional mean at the targets.
inline Vector target_conditional_estimand(const TargetSet& target, const Vector& mean_at_targets) {
  detail::require(mean_at_targets.size() == target.size(), "dimension-mismatch",
                  "need one conditional mean per target");
  const GramSolver gram(target.covariates);
  return gram.solve(Vector(target.covariates.transpose() * mean_at_targets));
}

/// (X*^T X*)^{-1} X*^T Psi Y.
inline Vector theta_hat_psi(const TargetSet& target, const WeightMatrix& psi, const Vector& y) {
  detail::require(psi.rows() == target.size() && psi.cols() == y.size(), "dimension-mismatch",
                  "Psi must be M x N");
  const GramSolver gram(target.covariates);
  const Vector psi_y = psi * y;
  return gram.solve(Vector(target.covariates.transpose() * psi_y));
}

namespace detail {

inline void check_regression(const Matrix& x, const Vector& y) {
  require(x.rows() == y.size(), "dimension-mismatch", "X and Y row counts differ");
  require(x.rows() > x.cols(), "too-few-observations", "need N > P");
  require(x.allFinite() && y.allFinite(), "non-finite", "regression data must be finite");
}

inline BaselineInterval t_or_z_interval(const LinearFit& fit, Eigen::Index p, double alpha,
                                        bool use_t) {
  require(alpha > 0.0 && alpha < 1.0, "invalid-alpha", "alpha must lie strictly inside (0, 1)");
  require(p >= 0 && p < fit.coefficients.size(), "invalid-coefficient",
          "coefficient index out of range");
  BaselineInterval r;
  r.coefficient_index = p;
  r.method = fit.method;
  r.estimate = fit.coefficients[p];
  r.variance = std::max(0.0, fit.coefficient_cov(p, p));
  r.quantile = use_t ? student_t_quantile(1.0 - 0.5 * alpha, static_cast<double>(fit.dof))
                     : std_normal_quantile(1.0 - 0.5 * alpha);
  const double half = r.quantile * std::sqrt(r.variance);
  r.lower = r.estimate - half;
  r.upper = r.estimate + half;
  return r;
}

}  // namespace detail

/// Ordinary least squares with sigma2 = RSS / (N - P).
inline LinearFit ols_fit(const Matrix& x, const Vector& y) {
  detail::check_regression(x, y);
  const GramSolver gram(x);
  LinearFit fit;
  fit.method = FitMethod::ols;
  fit.coefficients = gram.solve(Vector(x.transpose() * y));
  fit.residuals = y - x * fit.coefficients;
  fit.dof = x.rows() - x.cols();
  const double s2 = fit.residuals.squaredNorm() / static_cast<double>(fit.dof);
  fit.coefficient_cov = s2 * gram.inverse();
  return fit;
}

/// t interval with N - P degrees of freedom.
inline BaselineInterval ols_interval(const LinearFit& fit, Eigen::Index p, double alpha) {
  return detail::t_or_z_interval(fit, p, alpha, true);
}

/// HC1 covariance N/(N-P) (X^T X)^{-1} X^T R X (X^T X)^{-1}, R = diag(r^2).
inline LinearFit sandwich_fit(const Matrix& x, const Vector& y) {
  LinearFit fit = ols_fit(x, y);
  fit.method = FitMethod::sandwich;
  const GramSolver gram(x);
  const Matrix meat = x.transpose() * fit.residuals.array().square().matrix().asDiagonal() * x;
  const Matrix bread = gram.inverse();
  const double n = static_cast<double>(x.rows());
  fit.coefficient_cov = n / static_cast<double>(fit.dof) * bread * meat * bread;
  return fit;
}

/// OLS point estimate with the HC1 variance and a z quantile.
inline BaselineInterval sandwich_interval(const Matrix& x, const Vector& y, Eigen::Index p,
                                          double alpha) {
  return detail::t_or_z_interval(sandwich_fit(x, y), p, alpha, false);
}

/// Weighted least squares; sigma2 = sum w r^2 / (N - P), cov = sigma2 (X^T W X)^{-1}.
inline LinearFit wls_fit(const Matrix& x, const Vector& y, const Vector& weights) {
  detail::check_regression(x, y);
  detail::require(weights.size() == y.size(), "dimension-mismatch", "one weight per row");
  detail::require(weights.allFinite() && (weights.array() > 0.0).all(), "invalid-weights",
                  "weights must be finite and positive");
  const Vector sw = weights.cwiseSqrt();
  const Matrix xw = sw.asDiagonal() * x;
  const GramSolver gram(xw);
  LinearFit fit;
  fit.method = FitMethod::wls;
  fit.coefficients = gram.solve(Vector(xw.transpose() * sw.cwiseProduct(y)));
  fit.residuals = y - x * fit.coefficients;
  fit.dof = x.rows() - x.cols();
  const double s2 = weights.dot(fit.residuals.cwiseAbs2()) / static_cast<double>(fit.dof);
  fit.coefficient_cov = s2 * gram.inverse();
  return fit;
}

inline BaselineInterval wls_interval(const Matrix& x, const Vector& y, const Vector& weights,
                                     Eigen::Index p, double alpha) {
  return detail::t_or_z_interval(wls_fit(x, y, weights), p, alpha, true);
}

inline const std::vector<double>& simulation_bandwidth_grid() {
  static const std::vector<double> g{0.01, 0.025, 0.05, 0.1, 0.25, 0.5};
  return g;
}

inline const std::vector<double>& geographic_bandwidth_grid() {
  static const std::vector<double> g{0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
  return g;
}

struct DensityRatioWeights {
  Vector weights;
  double bandwidth_source = 0.0;
  double bandwidth_target = 0.0;
  std::vector<double> cv_grid;
};

namespace detail {

inline constexpr double kDensityFloor = 1e-300;

// log of the Gaussian-kernel density built on `train`, evaluated at x.
inline double kde_log_density(const Matrix& train, const std::vector<Eigen::Index>& rows,
                              const Eigen::Ref<const Eigen::RowVectorXd>& x, double h) {
  const double d = static_cast<double>(train.cols());
  const double norm = -0.5 * d * std::log(2.0 * std::numbers::pi * h * h) -
                      std::log(static_cast<double>(rows.size()));
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> e(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    e[k] = -(train.row(rows[k]) - x).squaredNorm() / (2.0 * h * h);
    mx = std::max(mx, e[k]);
  }
  double acc = 0.0;
  for (double v : e) acc += std::exp(v - mx);
  return norm + mx + std::log(acc);
}

// Bandwidth with the best mean held-out log-likelihood over `folds` folds.
inline double select_bandwidth(const Matrix& pts, const std::vector<double>& grid, int folds,
                               Rng& rng) {
  const auto n = pts.rows();
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[rng.index(i)]);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < perm.size(); ++i)
    fold_of[static_cast<std::size_t>(perm[i])] = static_cast<int>(i % static_cast<std::size_t>(folds));

  double best_h = 0.0, best_score = -std::numeric_limits<double>::infinity();
  for (double h : grid) {
    double total = 0.0;
    bool finite = true;
    for (int f = 0; f < folds && finite; ++f) {
      std::vector<Eigen::Index> train, test;
      for (Eigen::Index i = 0; i < n; ++i)
        (fold_of[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
      double acc = 0.0;
      for (Eigen::Index i : test) acc += kde_log_density(pts, train, pts.row(i), h);
      acc /= static_cast<double>(test.size());
      finite = std::isfinite(acc);
      total += acc;
    }
    if (finite && total / folds > best_score) {
      best_score = total / folds;
      best_h = h;
    }
  }
  require(best_h > 0.0, "kde-degenerate",
          "every bandwidth gave a non-finite held-out likelihood");
  return best_h;
}

}  // namespace detail

/// Importance weights p_target(S_n) / p_source(S_n) from Gaussian KDEs whose
/// bandwidths are chosen separately by k-fold likelihood cross-validation.
/// Coordinates are used as given (radians on spherical data).
inline DensityRatioWeights kde_importance_weights(const LocationSet& source,
                                                  const LocationSet& target,
                                                  const std::vector<double>& cv_grid,
                                                  int folds = 5, std::uint64_t seed = 0) {
  detail::require(!cv_grid.empty(), "invalid-grid", "bandwidth grid is empty");
  for (double h : cv_grid)
    detail::require(std::isfinite(h) && h > 0.0, "invalid-grid", "bandwidths must be positive");
  detail::require(folds >= 2, "invalid-folds", "need at least two folds");
  detail::require(source.size() >= folds && target.size() >= folds, "too-few-points",
                  "need at least one point per fold");
  detail::require(source.dim() == target.dim(), "dimension-mismatch",
                  "location dimensions differ");

  Rng rng_s = Rng::derive(seed, "kde-source");
  Rng rng_t = Rng::derive(seed, "kde-target");
  DensityRatioWeights out;
  out.cv_grid = cv_grid;
  out.bandwidth_source = detail::select_bandwidth(source.coords, cv_grid, folds, rng_s);
  out.bandwidth_target = detail::select_bandwidth(target.coords, cv_grid, folds, rng_t);

  std::vector<Eigen::Index> all_s(static_cast<std::size_t>(source.size()));
  std::vector<Eigen::Index> all_t(static_cast<std::size_t>(target.size()));
  std::iota(all_s.begin(), all_s.end(), Eigen::Index{0});
  std::iota(all_t.begin(), all_t.end(), Eigen::Index{0});
  const double log_floor = std::log(detail::kDensityFloor);
  out.weights.resize(source.size());
  for (Eigen::Index i = 0; i < source.size(); ++i) {
    const double ls = std::max(
        detail::kde_log_density(source.coords, all_s, source.coords.row(i), out.bandwidth_source),
        log_floor);
    const double lt = std::max(
        detail::kde_log_density(target.coords, all_t, source.coords.row(i), out.bandwidth_target),
        log_floor);
    out.weights[i] = std::clamp(std::exp(lt - ls), std::numeric_limits<double>::min(),
                                std::numeric_limits<double>::max());
  }
  return out;
}

}  // namespace lipci
