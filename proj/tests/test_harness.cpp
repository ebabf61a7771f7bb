#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "lipci/harness.hpp"

using namespace lipci;

namespace {

ExperimentConfig small_config(double shift, int seeds) {
  ExperimentConfig c;
  c.N = 150;
  c.M = 40;
  c.shift = shift;
  c.seeds = seeds;
  c.seed = 21;
  c.threads = 1;
  return c;
}

const CoverageReport& by_method(const std::vector<CoverageReport>& r, const std::string& m) {
  for (const auto& x : r)
    if (x.method == m) return x;
  throw std::runtime_error("missing method " + m);
}

bool same_report(const CoverageReport& a, const CoverageReport& b) {
  if (a.hits != b.hits || a.trials != b.trials || a.records.size() != b.records.size()) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i)
    if (a.records[i].lower != b.records[i].lower || a.records[i].upper != b.records[i].upper ||
        a.records[i].target != b.records[i].target)
      return false;
  return a.mean_width == b.mean_width && a.width_sd == b.width_sd;
}

// Largest gradient norm of f over a grid by central differences.
double grid_max_gradient(const GroundTruth& t, double lo, double hi, int steps) {
  const double h = 1e-6;
  double best = 0.0;
  for (int i = 0; i <= steps; ++i)
    for (int j = 0; j <= steps; ++j) {
      const double a = lo + (hi - lo) * i / steps, b = lo + (hi - lo) * j / steps;
      const Eigen::RowVector2d px(a + h, b), mx(a - h, b), py(a, b + h), my(a, b - h);
      const double gx = (t.f(px) - t.f(mx)) / (2 * h), gy = (t.f(py) - t.f(my)) / (2 * h);
      best = std::max(best, std::hypot(gx, gy));
    }
  return best;
}

}  // namespace

TEST(Generators, ShiftedSquare) {
  EXPECT_EQ(shifted_square(0.0), std::make_pair(-1.0, 1.0));
  const auto [lo, hi] = shifted_square(0.8);
  EXPECT_NEAR(lo, -1.0 / 9.0, 1e-15);
  EXPECT_NEAR(hi, 1.0, 1e-15);
  const auto [nlo, nhi] = shifted_square(-0.8);
  EXPECT_NEAR(nlo, -1.0, 1e-15);
  EXPECT_NEAR(nhi, 1.0 / 9.0, 1e-15);
}

TEST(Generators, SingleCovariateGradientBound) {
  const auto d = gen_single_covariate(10, 5, 0.0, 1);
  const double g = grid_max_gradient(d.truth, -1.0, 1.0, 200);
  EXPECT_LE(g, 2.0 * std::numbers::sqrt2 + 1e-6);
  EXPECT_NEAR(g, 2.0 * std::numbers::sqrt2, 1e-6);  // attained at (1, 1)
  EXPECT_DOUBLE_EQ(d.truth.lipschitz_L0, 2.0 * std::numbers::sqrt2);
}

TEST(Generators, SingleCovariateLayout) {
  const auto d = gen_single_covariate(50, 20, 0.8, 2);
  EXPECT_EQ(d.source.covariates.cols(), 2);
  EXPECT_GE(d.target.locations.coords.minCoeff(), -1.0 / 9.0);
  EXPECT_LE(d.source.locations.coords.cwiseAbs().maxCoeff(), 1.0);
  for (Eigen::Index i = 0; i < 20; ++i)
    EXPECT_DOUBLE_EQ(d.target.covariates(i, 1), d.target.locations.coords.row(i).sum());
}

TEST(Generators, ThreeCovariateAtOrigin) {
  const auto d = gen_three_covariate(10, 5, 0.0, 1);
  EXPECT_DOUBLE_EQ(d.truth.f(Eigen::RowVector2d(0.0, 0.0)), 1.0);
  EXPECT_LE(grid_max_gradient(d.truth, -1.0, 1.0, 200), 3.0 * std::numbers::sqrt2);
}

TEST(Generators, ThreeCovariateDesign) {
  const auto d = gen_three_covariate(30, 10, 0.0, 4);
  ASSERT_EQ(d.source.covariates.cols(), 4);
  for (Eigen::Index i = 0; i < 30; ++i) {
    const double a = d.source.locations.coords(i, 0), b = d.source.locations.coords(i, 1);
    EXPECT_DOUBLE_EQ(d.source.covariates(i, 1), std::sin(a) + std::cos(b));
    EXPECT_DOUBLE_EQ(d.source.covariates(i, 2), std::cos(a) - std::sin(b));
    EXPECT_DOUBLE_EQ(d.source.covariates(i, 3), a + b);
  }
}

TEST(Generators, EstimandReproducibleForFixedTargets) {
  const auto a = gen_three_covariate(100, 30, 0.4, 5), b = gen_three_covariate(100, 30, 0.4, 5);
  const Vector ta = target_conditional_estimand(a.target, a.truth.evaluate(a.target.locations));
  const Vector tb = target_conditional_estimand(b.target, b.truth.evaluate(b.target.locations));
  EXPECT_TRUE(ta.allFinite());
  EXPECT_EQ(ta, tb);
}

TEST(Generators, RejectBadShift) {
  try {
    gen_single_covariate(10, 5, 1.5, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "invalid-shift");
  }
}

TEST(BinomialCi, ZeroHits) {
  const auto [lo, hi] = binomial_coverage_ci(0, 50);
  EXPECT_EQ(lo, 0.0);
  EXPECT_NEAR(hi, 1.0 - std::pow(0.025, 1.0 / 50.0), 1e-9);
}

TEST(BinomialCi, AllHitsClosedForm) {
  const auto [lo, hi] = binomial_coverage_ci(250, 250);
  EXPECT_EQ(hi, 1.0);
  EXPECT_NEAR(lo, std::pow(0.025, 1.0 / 250.0), 1e-9);
  EXPECT_NEAR(lo, 0.98535, 1e-4);
}

TEST(BinomialCi, SymmetricAtHalf) {
  const auto [lo, hi] = binomial_coverage_ci(50, 100);
  EXPECT_NEAR(0.5 - lo, hi - 0.5, 1e-6);
}

TEST(BinomialCiProperty, ContainsEmpiricalCoverage) {
  for (long n : {1L, 7L, 50L, 250L})
    for (long k = 0; k <= n; k += std::max(1L, n / 10)) {
      const auto [lo, hi] = binomial_coverage_ci(k, n);
      const double p = static_cast<double>(k) / static_cast<double>(n);
      EXPECT_LE(lo, p);
      EXPECT_GE(hi, p);
    }
}

TEST(RunCoverage, ZeroNoiseLipschitzAlwaysHits) {
  ExperimentConfig c = small_config(0.8, 10);
  c.noise_sd = 0.0;
  c.methods = {Method::lipschitz};
  const auto r = run_coverage(c);
  EXPECT_EQ(r[0].hits, r[0].trials);
  EXPECT_EQ(r[0].trials, 10);
}

TEST(RunCoverage, ShiftedSweepSeparatesMethods) {
  ExperimentConfig c;
  c.shift = 0.8;
  c.seeds = 50;
  c.seed = 5;
  c.methods = {Method::lipschitz, Method::ols};
  const auto r = run_coverage(c);
  EXPECT_GE(by_method(r, "lipschitz").cov_lo, 0.85);
  EXPECT_LE(by_method(r, "ols").coverage, 0.1);
}

TEST(RunCoverage, WidthGrowsWithShift) {
  ExperimentConfig c = small_config(0.0, 10);
  c.methods = {Method::lipschitz};
  const double w0 = run_coverage(c)[0].mean_width;
  c.shift = 0.8;
  const double w8 = run_coverage(c)[0].mean_width;
  EXPECT_GT(w8, w0);
}

TEST(RunCoverageProperty, DeterministicAndThreadIndependent) {
  ExperimentConfig c = small_config(0.4, 6);
  const auto a = run_coverage(c), b = run_coverage(c);
  c.threads = 3;
  const auto p = run_coverage(c);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(same_report(a[i], b[i]));
    EXPECT_TRUE(same_report(a[i], p[i]));
  }
}

TEST(RunCoverageProperty, WidthsAndCiAreConsistent) {
  const auto r = run_coverage(small_config(-0.4, 8));
  for (const auto& rep : r) {
    double sum = 0.0;
    for (const auto& s : rep.records) {
      sum += s.upper - s.lower;
      EXPECT_EQ(s.hit, s.lower <= s.target && s.target <= s.upper);
    }
    EXPECT_NEAR(rep.mean_width, sum / static_cast<double>(rep.trials), 1e-12);
    EXPECT_LE(rep.cov_lo, rep.coverage);
    EXPECT_GE(rep.cov_hi, rep.coverage);
  }
  const auto& lip = by_method(r, "lipschitz");
  for (const auto& s : lip.records) EXPECT_NEAR(s.bias_part + s.randomness_part, s.upper - s.lower, 1e-12);
}

TEST(RunCoverage, FailuresAreRecordedNotThrown) {
  ExperimentConfig c = small_config(0.0, 3);
  c.methods = {Method::lipschitz, Method::ols};
  c.experiment = Experiment::custom;
  c.custom = [](Eigen::Index n, Eigen::Index m, double shift, std::uint64_t seed) {
    auto d = gen_single_covariate(n, m, shift, seed);
    d.target.covariates.col(1) = d.target.covariates.col(0);  // singular target design
    return d;
  };
  std::vector<CoverageReport> r;
  ASSERT_NO_THROW(r = run_coverage(c));
  EXPECT_EQ(r[0].trials, 0);
  ASSERT_EQ(r[0].failures.size(), 3u);
  EXPECT_EQ(r[0].failures[0].code, "singular-gram");
  EXPECT_EQ(r[1].trials, 0);
  EXPECT_EQ(r[1].failures.size(), 3u);
}

TEST(RunCoverage, MethodFailureLeavesOtherMethodsScored) {
  ExperimentConfig c = small_config(0.0, 3);
  c.methods = {Method::lipschitz, Method::ols};
  c.experiment = Experiment::custom;
  c.custom = [](Eigen::Index n, Eigen::Index m, double shift, std::uint64_t seed) {
    auto d = gen_single_covariate(n, m, shift, seed);
    d.truth.lipschitz_L0 = -1.0;  // only the Lipschitz method uses it
    return d;
  };
  const auto r = run_coverage(c);
  EXPECT_EQ(r[0].trials, 0);
  ASSERT_EQ(r[0].failures.size(), 3u);
  EXPECT_EQ(r[0].failures[0].code, "invalid-lipschitz");
  EXPECT_EQ(r[1].trials, 3);
  EXPECT_TRUE(r[1].failures.empty());
}

TEST(Ablation, DecompositionMovesTheRightWay) {
  ExperimentConfig c = small_config(0.4, 4);
  c.L_grid = {0.1, 1.0, 5.0};
  c.sigma2_mode = NoiseMethod::qp;
  const auto rows = lipschitz_ablation(c);
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_GT(rows[i].report.mean_bias_part, rows[i - 1].report.mean_bias_part);
    EXPECT_LE(rows[i].report.mean_randomness_part, rows[i - 1].report.mean_randomness_part * (1 + 1e-9));
    EXPECT_EQ(rows[i].report.shift_or_L, c.L_grid[i]);
  }
}

TEST(RealData, FullSubsampleOfNoiselessPoolAlwaysHits) {
  RealDataPool d = gen_synthetic_geographic(120, 30, 3, 0.0);
  d.target = TargetSet{d.pool.locations, d.pool.covariates};
  d.target_responses = d.pool.responses;
  RealDataConfig c;
  c.subsample_fraction = 1.0;
  c.seeds = 3;
  c.threads = 1;
  const auto r = real_data_coverage(d, c);
  for (const auto& rep : r.difference) {
    EXPECT_EQ(rep.hits, rep.trials) << rep.method;
    EXPECT_EQ(rep.trials, 3);
  }
}

TEST(RealData, DifferenceHitImpliesPointHitWithoutAddedVariance) {
  // Responses exactly linear in the covariates: the source OLS fit has zero
  // residuals, so the added target variance vanishes.
  RealDataPool d = gen_synthetic_geographic(200, 40, 4, 0.0);
  d.pool.responses = d.pool.covariates * Vector::LinSpaced(3, 1.0, 3.0);
  d.target_responses = d.target.covariates * Vector::LinSpaced(3, 1.0, 3.0);
  RealDataConfig c;
  c.seeds = 6;
  c.threads = 1;
  c.sigma2 = 0.5;
  const auto r = real_data_coverage(d, c);
  for (std::size_t m = 0; m < r.difference.size(); ++m)
    for (std::size_t i = 0; i < r.difference[m].records.size(); ++i)
      if (r.difference[m].records[i].hit) {
        const auto& pt = r.point[m].records[i];
        // Zero-width baseline intervals agree only to rounding.
        const double tol = 1e-12 * std::max(1.0, std::abs(pt.target));
        EXPECT_TRUE(pt.lower - tol <= pt.target && pt.target <= pt.upper + tol) << r.difference[m].method;
      }
}

TEST(RealData, GeneratorLayout) {
  const auto d = gen_synthetic_geographic(300, 50, 5);
  const double k = 180.0 / std::numbers::pi;
  for (Eigen::Index i = 0; i < 50; ++i) {
    EXPECT_GT(d.target.locations.coords(i, 0) * k, 44.0);
    EXPECT_LT(d.target.locations.coords(i, 1) * k, -114.0);
  }
  for (Eigen::Index i = 0; i < 300; ++i) {
    const double lat = d.pool.locations.coords(i, 0) * k, lon = d.pool.locations.coords(i, 1) * k;
    EXPECT_FALSE(lat > 44.0 && lon < -114.0);
    EXPECT_GE(lat, 30.0);
    EXPECT_LE(lon, -100.0);
  }
  EXPECT_EQ(d.pool.locations.angular_unit, AngularUnit::radians);
}

TEST(RealData, Deterministic) {
  const auto d = gen_synthetic_geographic(200, 30, 6);
  RealDataConfig c;
  c.seeds = 4;
  c.threads = 2;
  const auto a = real_data_coverage(d, c);
  c.threads = 1;
  const auto b = real_data_coverage(d, c);
  for (std::size_t i = 0; i < a.difference.size(); ++i) EXPECT_TRUE(same_report(a.difference[i], b.difference[i]));
}
