#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "lipci/harness.hpp"
#include "lipci/random.hpp"
#include "lipci/regression.hpp"

using namespace lipci;

namespace {

Matrix random_design(Rng& rng, Eigen::Index n, Eigen::Index p) {
  Matrix x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < p; ++j) x(i, j) = rng.normal();
  }
  return x;
}

// Least squares through a column-pivoted QR of the design; independent of
// the Cholesky route used by the library.
Vector qr_least_squares(const Matrix& x, const Vector& y) { return x.colPivHouseholderQr().solve(y); }

LocationSet random_points(Rng& rng, Eigen::Index n, double sd = 1.0) {
  Matrix c(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) c.row(i) << sd * rng.normal(), sd * rng.normal();
  return LocationSet(c);
}

}  // namespace

TEST(Estimand, WellSpecifiedLinearMean) {
  Rng rng(1);
  TargetSet t;
  t.locations = random_points(rng, 20);
  t.covariates = Matrix(20, 1);
  for (Eigen::Index i = 0; i < 20; ++i) t.covariates(i, 0) = rng.normal();
  const Vector f = 2.0 * t.covariates.col(0);
  EXPECT_NEAR(target_conditional_estimand(t, f)[0], 2.0, 1e-14);
}

TEST(Estimand, ConstantMeanGoesToIntercept) {
  Rng rng(2);
  TargetSet t{random_points(rng, 15), random_design(rng, 15, 3)};
  const Vector th = target_conditional_estimand(t, Vector::Constant(15, 4.25));
  EXPECT_NEAR(th[0], 4.25, 1e-13);
  EXPECT_NEAR(th[1], 0.0, 1e-13);
  EXPECT_NEAR(th[2], 0.0, 1e-13);
}

TEST(Estimand, SingleCovariateMatchesDenseLeastSquares) {
  const auto d = gen_single_covariate(300, 100, 0.0, 3);
  const Vector f = d.truth.evaluate(d.target.locations);
  const Vector th = target_conditional_estimand(d.target, f);
  EXPECT_LT((th - qr_least_squares(d.target.covariates, f)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ThetaHatPsi, ScalarCase) {
  TargetSet t{LocationSet(Matrix::Zero(1, 1)), Matrix::Ones(1, 1)};
  WeightMatrix psi(1, 1);
  psi.insert(0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(theta_hat_psi(t, psi, Vector::Constant(1, 3.0))[0], 3.0);
}

TEST(ThetaHatPsi, IdentityPsiIsOls) {
  Rng rng(4);
  const Matrix x = random_design(rng, 25, 3);
  Vector y(25);
  for (auto& v : y) v = rng.normal();
  TargetSet t{random_points(rng, 25), x};
  WeightMatrix psi(25, 25);
  psi.setIdentity();
  EXPECT_LT((theta_hat_psi(t, psi, y) - ols_fit(x, y).coefficients).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ThetaHatPsi, EqualsContrastDotPsiY) {
  Rng rng(5);
  const auto src = random_points(rng, 30), tgt = random_points(rng, 12);
  const Matrix x = random_design(rng, 12, 3);
  Vector y(30);
  for (auto& v : y) v = rng.normal();
  const auto psi = knn_weights(Metric::euclidean(), src, tgt, 2, 0);
  const Vector th = theta_hat_psi({tgt, x}, psi, y);
  for (Eigen::Index p = 0; p < 3; ++p)
    EXPECT_NEAR(th[p], contrast_vectors(x, psi, p).w.dot(psi * y), 1e-12);
}

TEST(ThetaHatPsiProperty, TranslationShiftsOnlyIntercept) {
  Rng rng(6);
  const auto src = random_points(rng, 40), tgt = random_points(rng, 10);
  const Matrix x = random_design(rng, 10, 3);
  Vector y(40);
  for (auto& v : y) v = rng.normal();
  const auto psi = one_nn_weights(Metric::euclidean(), src, tgt, 0);
  const Vector a = theta_hat_psi({tgt, x}, psi, y);
  const Vector b = theta_hat_psi({tgt, x}, psi, (y.array() + 3.5).matrix());
  EXPECT_NEAR(b[0] - a[0], 3.5, 1e-12);
  EXPECT_NEAR(b[1], a[1], 1e-12);
  EXPECT_NEAR(b[2], a[2], 1e-12);
}

TEST(Ols, ExactFitHasZeroWidth) {
  const Matrix x = (Matrix(2, 1) << 1, 2).finished();
  const auto fit = ols_fit(x, (Vector(2) << 2, 4).finished());
  EXPECT_NEAR(fit.coefficients[0], 2.0, 1e-15);
  EXPECT_EQ(fit.dof, 1);
  EXPECT_NEAR(fit.residuals.norm(), 0.0, 1e-15);
  EXPECT_NEAR(ols_interval(fit, 0, 0.05).width(), 0.0, 1e-14);
}

TEST(Ols, MatchesQrOracleAndCovariance) {
  Rng rng(7);
  const Matrix x = random_design(rng, 50, 3);
  Vector y(50);
  for (Eigen::Index i = 0; i < 50; ++i) y[i] = x.row(i).sum() + rng.normal();
  const auto fit = ols_fit(x, y);
  const Vector beta = qr_least_squares(x, y);
  EXPECT_LT((fit.coefficients - beta).cwiseAbs().maxCoeff(), 1e-10);
  const double s2 = (y - x * beta).squaredNorm() / 47.0;
  EXPECT_LT((fit.coefficient_cov - s2 * (x.transpose() * x).inverse()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Ols, RejectsTooFewRows) {
  try {
    ols_fit(Matrix::Ones(2, 2), Vector::Ones(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "too-few-observations");
  }
}

TEST(StudentT, LargeDofApproachesNormal) {
  EXPECT_NEAR(student_t_quantile(0.975, 1e6), 1.959964, 1e-4);
}

TEST(StudentT, CauchyClosedForm) {
  EXPECT_NEAR(student_t_quantile(0.975, 1.0), std::tan(0.475 * std::numbers::pi), 1e-6);
  EXPECT_NEAR(student_t_quantile(0.975, 1.0), 12.7062, 1e-3);
  // Cauchy CDF 1/2 + atan(t)/pi.
  for (double t : {-5.0, -0.3, 0.7, 20.0})
    EXPECT_NEAR(student_t_cdf(t, 1.0), 0.5 + std::atan(t) / std::numbers::pi, 1e-12);
}

TEST(Sandwich, ZeroResidualsGiveZeroWidth) {
  const Matrix x = (Matrix(3, 2) << 1, 0, 1, 1, 1, 2).finished();
  const Vector y = (Vector(3) << 1, 3, 5).finished();
  EXPECT_NEAR(sandwich_interval(x, y, 1, 0.05).width(), 0.0, 1e-12);
}

TEST(Sandwich, ThreeObservationHandComputation) {
  // One covariate, no intercept: beta = sum xy / sum x^2 and
  // HC1 = N/(N-P) * sum x^2 r^2 / (sum x^2)^2.
  const double xs[] = {1.0, 2.0, 3.0}, ys[] = {1.0, 3.0, 2.0};
  const double sxx = 1.0 + 4.0 + 9.0, sxy = 1.0 + 6.0 + 6.0;
  const double beta = sxy / sxx;
  double meat = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double r = ys[i] - beta * xs[i];
    meat += xs[i] * xs[i] * r * r;
  }
  const double hc1 = 3.0 / 2.0 * meat / (sxx * sxx);
  const Matrix x = (Matrix(3, 1) << 1, 2, 3).finished();
  const Vector y = (Vector(3) << 1, 3, 2).finished();
  const auto fit = sandwich_fit(x, y);
  EXPECT_NEAR(fit.coefficients[0], beta, 1e-15);
  EXPECT_NEAR(fit.coefficient_cov(0, 0), hc1, 1e-15);
  const auto ci = sandwich_interval(x, y, 0, 0.05);
  EXPECT_NEAR(ci.upper - ci.estimate, 1.959963984540054 * std::sqrt(hc1), 1e-12);
}

TEST(Sandwich, HomoskedasticAgreesWithOls) {
  Rng rng(8);
  const Matrix x = random_design(rng, 10000, 2);
  Vector y(10000);
  for (Eigen::Index i = 0; i < 10000; ++i) y[i] = 1.0 + 0.5 * x(i, 1) + rng.normal();
  const double ols = ols_fit(x, y).coefficient_cov(1, 1);
  const auto sw = sandwich_fit(x, y);
  EXPECT_NEAR(sw.coefficient_cov(1, 1) / ols, 1.0, 0.1);
  EXPECT_EQ(sw.coefficients, ols_fit(x, y).coefficients);
}

TEST(Wls, EqualWeightsMatchOls) {
  Rng rng(9);
  const Matrix x = random_design(rng, 40, 3);
  Vector y(40);
  for (auto& v : y) v = rng.normal();
  const auto o = ols_fit(x, y);
  const auto w = wls_fit(x, y, Vector::Constant(40, 2.5));
  EXPECT_LT((o.coefficients - w.coefficients).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((o.coefficient_cov - w.coefficient_cov).cwiseAbs().maxCoeff(), 1e-10);
  const auto a = ols_interval(o, 1, 0.05), b = wls_interval(x, y, Vector::Ones(40), 1, 0.05);
  EXPECT_NEAR(a.lower, b.lower, 1e-10);
  EXPECT_NEAR(a.upper, b.upper, 1e-10);
}

TEST(Wls, TinyWeightFollowsTheOtherPoints) {
  const Matrix x = (Matrix(3, 2) << 1, 0, 1, 1, 1, 2).finished();
  const Vector y = (Vector(3) << 0, 1, 7).finished();
  const Vector w = (Vector(3) << 1, 1, 1e-12).finished();
  const auto fit = wls_fit(x, y, w);
  EXPECT_NEAR(fit.coefficients[0], 0.0, 1e-9);
  EXPECT_NEAR(fit.coefficients[1], 1.0, 1e-9);
}

TEST(Wls, MatchesWeightedNormalEquations) {
  Rng rng(10);
  const Matrix x = random_design(rng, 60, 3);
  Vector y(60), w(60);
  for (Eigen::Index i = 0; i < 60; ++i) {
    y[i] = rng.normal();
    w[i] = 0.1 + rng.uniform() * 3.0;
  }
  const Matrix xtwx = x.transpose() * w.asDiagonal() * x;
  const Vector beta = xtwx.fullPivLu().solve(x.transpose() * w.asDiagonal() * y);
  const auto fit = wls_fit(x, y, w);
  EXPECT_LT((fit.coefficients - beta).cwiseAbs().maxCoeff(), 1e-9);
  const Vector r = y - x * beta;
  const double s2 = w.dot(r.cwiseAbs2()) / 57.0;
  EXPECT_LT((fit.coefficient_cov - s2 * xtwx.inverse()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Wls, RejectsBadWeights) {
  try {
    wls_fit(Matrix::Ones(3, 1), Vector::Ones(3), (Vector(3) << 1, -1, 1).finished());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "invalid-weights");
  }
}

TEST(Kde, SinglePointDensityAtItself) {
  const Matrix pts = (Matrix(1, 2) << 0.3, -0.2).finished();
  const double h = 0.7;
  const double got = detail::kde_log_density(pts, {0}, pts.row(0), h);
  EXPECT_NEAR(got, std::log(std::pow(2.0 * std::numbers::pi * h * h, -1.0)), 1e-14);
}

TEST(Kde, SameDistributionGivesWeightsNearOne) {
  Rng rng(11);
  const auto pts = random_points(rng, 500);
  const auto kw = kde_importance_weights(pts, pts, {0.1, 0.2, 0.3, 0.5, 1.0}, 5, 3);
  std::vector<double> w(kw.weights.data(), kw.weights.data() + 500);
  std::nth_element(w.begin(), w.begin() + 250, w.end());
  EXPECT_GE(w[250], 0.5);
  EXPECT_LE(w[250], 2.0);
}

TEST(Kde, CrossValidationPrefersInteriorBandwidths) {
  Rng rng(12);
  const std::vector<double> grid{0.01, 0.1, 0.2, 0.35, 0.5, 0.8, 5.0};
  int interior = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto pts = random_points(rng, 200);
    Rng folds(static_cast<std::uint64_t>(rep));
    const double h = detail::select_bandwidth(pts.coords, grid, 5, folds);
    interior += h != grid.front() && h != grid.back();
  }
  EXPECT_GE(interior, 40);
}

TEST(KdeProperty, PermutingSourcesPermutesWeights) {
  Rng rng(13);
  const auto src = random_points(rng, 80), tgt = random_points(rng, 30, 0.5);
  std::vector<Eigen::Index> perm(80);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  Matrix p(80, 2);
  for (Eigen::Index i = 0; i < 80; ++i) p.row(i) = src.coords.row(perm[static_cast<std::size_t>(i)]);
  // A one-point grid removes the dependence on the fold assignment.
  const auto a = kde_importance_weights(src, tgt, {0.4}, 5, 1);
  const auto b = kde_importance_weights(LocationSet(p), tgt, {0.4}, 5, 1);
  for (Eigen::Index i = 0; i < 80; ++i)
    EXPECT_NEAR(b.weights[i], a.weights[perm[static_cast<std::size_t>(i)]], 1e-12 * a.weights.maxCoeff());
}

TEST(Kde, DisjointSupportsStayFinite) {
  Matrix a(10, 2), b(10, 2);
  for (Eigen::Index i = 0; i < 10; ++i) {
    a.row(i) << 0.01 * static_cast<double>(i), 0.0;
    b.row(i) << 100.0 + 0.01 * static_cast<double>(i), 0.0;
  }
  const auto kw = kde_importance_weights(LocationSet(a), LocationSet(b), {0.01, 0.05}, 5, 0);
  EXPECT_TRUE(kw.weights.allFinite());
  EXPECT_GT(kw.weights.minCoeff(), 0.0);
}

TEST(Kde, Errors) {
  const LocationSet a(Matrix::Zero(10, 2));
  auto code = [&](std::vector<double> g, int folds) {
    try {
      kde_importance_weights(a, a, g, folds, 0);
    } catch (const Error& e) {
      return e.code();
    }
    return std::string("none");
  };
  EXPECT_EQ(code({}, 5), "invalid-grid");
  EXPECT_EQ(code({-1.0}, 5), "invalid-grid");
  EXPECT_EQ(code({0.1}, 1), "invalid-folds");
  EXPECT_EQ(code({0.1}, 20), "too-few-points");
}
