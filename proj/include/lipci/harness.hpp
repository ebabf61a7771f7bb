#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "lipci/dataset.hpp"
#include "lipci/detail/parallel.hpp"
#include "lipci/error.hpp"
#include "lipci/geometry.hpp"
#include "lipci/interval.hpp"
#include "lipci/random.hpp"
#include "lipci/regression.hpp"
#include "lipci/variance.hpp"

namespace lipci {

/// One simulated instance with its ground truth and the coefficient of
/// interest.
struct SimulatedData {
  SourceDataset source;
  TargetSet target;
  GroundTruth truth;
  Eigen::Index coefficient = 1;
};

namespace detail {

inline void check_generator(Eigen::Index n, Eigen::Index m, double shift) {
  require(n >= 1 && m >= 1, "invalid-size", "N and M must be positive");
  require(std::isfinite(shift) && shift >= -1.0 && shift <= 1.0, "invalid-shift",
          "shift must lie in [-1, 1]");
}

inline Matrix uniform_square(Rng& rng, Eigen::Index rows, double lo, double hi) {
  Matrix c(rows, 2);
  for (Eigen::Index i = 0; i < rows; ++i) {
    c(i, 0) = rng.uniform(lo, hi);
    c(i, 1) = rng.uniform(lo, hi);
  }
  return c;
}

inline Vector noisy(const Vector& mean, double sd, Rng& rng) {
  Vector y = mean;
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += sd * rng.normal();
  return y;
}

}  // namespace detail

/// Target square [(-1 + shift) / (1 + |shift|), (1 + shift) / (1 + |shift|)]
/// per coordinate.
inline std::pair<double, double> shifted_square(double shift) {
  const double s = 1.0 + std::abs(shift);
  return {(-1.0 + shift) / s, (1.0 + shift) / s};
}

/// Source on [-1,1]^2, covariate S1 + S2, f = S1 + S2 + (S1^2 + S2^2) / 2.
inline SimulatedData gen_single_covariate(Eigen::Index n, Eigen::Index m, double shift,
                                          std::uint64_t seed, double noise_sd = 0.1) {
  detail::check_generator(n, m, shift);
  Rng rs = Rng::derive(seed, "source-locations");
  Rng rt = Rng::derive(seed, "target-locations");
  Rng re = Rng::derive(seed, "noise");
  const auto [lo, hi] = shifted_square(shift);

  SimulatedData d;
  d.truth.f = [](const Eigen::Ref<const Eigen::RowVectorXd>& s) {
    return s[0] + s[1] + 0.5 * (s[0] * s[0] + s[1] * s[1]);
  };
  d.truth.sigma2 = noise_sd * noise_sd;
  d.truth.lipschitz_L0 = 2.0 * std::numbers::sqrt2;

  auto covariates = [](const Matrix& c) {
    return with_intercept(Matrix(c.col(0) + c.col(1)));
  };
  d.source.locations = LocationSet(detail::uniform_square(rs, n, -1.0, 1.0));
  d.source.covariates = covariates(d.source.locations.coords);
  d.source.intercept_included = true;
  d.source.responses = detail::noisy(d.truth.evaluate(d.source.locations), noise_sd, re);
  d.target.locations = LocationSet(detail::uniform_square(rt, m, lo, hi));
  d.target.covariates = covariates(d.target.locations.coords);
  d.coefficient = 1;
  return d;
}

/// X1 = sin S1 + cos S2, X2 = cos S1 - sin S2, X3 = S1 + S2 and
/// f = X1 X2 + (S1^2 + S2^2) / 2; inference on X1.
inline SimulatedData gen_three_covariate(Eigen::Index n, Eigen::Index m, double shift,
                                         std::uint64_t seed, double noise_sd = 0.1) {
  detail::check_generator(n, m, shift);
  Rng rs = Rng::derive(seed, "source-locations");
  Rng rt = Rng::derive(seed, "target-locations");
  Rng re = Rng::derive(seed, "noise");
  const auto [lo, hi] = shifted_square(shift);

  SimulatedData d;
  d.truth.f = [](const Eigen::Ref<const Eigen::RowVectorXd>& s) {
    const double x1 = std::sin(s[0]) + std::cos(s[1]);
    const double x2 = std::cos(s[0]) - std::sin(s[1]);
    return x1 * x2 + 0.5 * (s[0] * s[0] + s[1] * s[1]);
  };
  d.truth.sigma2 = noise_sd * noise_sd;
  d.truth.lipschitz_L0 = 3.0 * std::numbers::sqrt2;

  auto covariates = [](const Matrix& c) {
    Matrix x(c.rows(), 3);
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      x(i, 0) = std::sin(c(i, 0)) + std::cos(c(i, 1));
      x(i, 1) = std::cos(c(i, 0)) - std::sin(c(i, 1));
      x(i, 2) = c(i, 0) + c(i, 1);
    }
    return with_intercept(x);
  };
  d.source.locations = LocationSet(detail::uniform_square(rs, n, -1.0, 1.0));
  d.source.covariates = covariates(d.source.locations.coords);
  d.source.intercept_included = true;
  d.source.responses = detail::noisy(d.truth.evaluate(d.source.locations), noise_sd, re);
  d.target.locations = LocationSet(detail::uniform_square(rt, m, lo, hi));
  d.target.covariates = covariates(d.target.locations.coords);
  d.coefficient = 1;
  return d;
}

enum class Experiment { single_covariate, three_covariate, lipschitz_ablation, custom };
enum class Method { lipschitz, ols, sandwich, kdeiw };

inline std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::single_covariate: return "single_covariate";
    case Experiment::three_covariate: return "three_covariate";
    case Experiment::lipschitz_ablation: return "lipschitz_ablation";
    case Experiment::custom: return "custom";
  }
  return "unknown";
}

inline std::string to_string(Method m) {
  switch (m) {
    case Method::lipschitz: return "lipschitz";
    case Method::ols: return "ols";
    case Method::sandwich: return "sandwich";
    case Method::kdeiw: return "kdeiw";
  }
  return "unknown";
}

using Generator = std::function<SimulatedData(Eigen::Index n, Eigen::Index m, double shift,
                                              std::uint64_t seed)>;

struct ExperimentConfig {
  Experiment experiment = Experiment::single_covariate;
  Eigen::Index N = 300;
  Eigen::Index M = 100;
  double shift = 0.0;
  int seeds = 50;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  std::optional<double> L;       // defaults to the generator's L0
  std::vector<double> L_grid;    // ablation only
  NoiseMethod sigma2_mode = NoiseMethod::known;
  std::vector<Method> methods{Method::lipschitz, Method::ols, Method::sandwich, Method::kdeiw};
  std::optional<double> noise_sd;  // overrides the generator's noise level
  std::vector<double> cv_grid = simulation_bandwidth_grid();
  PsiKind psi;
  std::optional<Eigen::Index> coefficient;
  int threads = 0;
  Generator custom;  // used when experiment == custom
};

/// Exact binomial interval for the coverage probability: each tail at
/// (1 - level) / 2, solved by bisection on p.
inline std::pair<double, double> binomial_coverage_ci(long hits, long trials,
                                                      double level = 0.95) {
  detail::require(trials >= 1 && hits >= 0 && hits <= trials, "invalid-counts",
                  "need 0 <= hits <= trials and trials >= 1");
  detail::require(level > 0.0 && level < 1.0, "invalid-level", "level must lie in (0, 1)");
  const double tail = 0.5 * (1.0 - level);
  const double n = static_cast<double>(trials), k = static_cast<double>(hits);
  // P(X <= k) = 1 - I_p(k + 1, n - k), decreasing in p.
  auto cdf_le = [&](double p) { return hits == trials ? 1.0 : boost::math::ibetac(k + 1.0, n - k, p); };
  // P(X >= k) = I_p(k, n - k + 1), increasing in p.
  auto cdf_ge = [&](double p) { return hits == 0 ? 1.0 : boost::math::ibeta(k, n - k + 1.0, p); };

  double lower = 0.0, upper = 1.0;
  if (hits > 0) {
    double lo = 0.0, hi = 1.0;
    while (hi - lo > 1e-12) {
      const double mid = 0.5 * (lo + hi);
      if (cdf_ge(mid) >= tail) hi = mid;
      else lo = mid;
    }
    lower = hi;
  }
  if (hits < trials) {
    double lo = 0.0, hi = 1.0;
    while (hi - lo > 1e-12) {
      const double mid = 0.5 * (lo + hi);
      if (cdf_le(mid) >= tail) lo = mid;
      else hi = mid;
    }
    upper = lo;
  }
  return {lower, upper};
}

/// One method's interval on one replicate.
struct SeedRecord {
  int replicate = 0;
  double target = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double bias_part = 0.0;        // 2B (Lipschitz only)
  double randomness_part = 0.0;  // 2 c delta (Lipschitz only)
  bool hit = false;
};

struct SeedFailure {
  int replicate = 0;
  std::string code;
  std::string message;
};

struct CoverageReport {
  std::string method;
  Eigen::Index coefficient = 0;
  double shift_or_L = 0.0;
  long hits = 0;
  long trials = 0;
  double coverage = 0.0;
  double cov_lo = 0.0;
  double cov_hi = 0.0;
  double mean_width = 0.0;
  double width_sd = 0.0;
  double mean_bias_part = 0.0;
  double mean_randomness_part = 0.0;
  std::vector<SeedRecord> records;
  std::vector<SeedFailure> failures;
};

namespace detail {

inline CoverageReport summarize(std::string method, Eigen::Index coefficient, double key,
                                std::vector<SeedRecord> records,
                                std::vector<SeedFailure> failures) {
  CoverageReport r;
  r.method = std::move(method);
  r.coefficient = coefficient;
  r.shift_or_L = key;
  r.records = std::move(records);
  r.failures = std::move(failures);
  r.trials = static_cast<long>(r.records.size());
  if (r.trials == 0) return r;
  double sw = 0.0, sb = 0.0, sr = 0.0;
  for (const auto& s : r.records) {
    r.hits += s.hit ? 1 : 0;
    sw += s.upper - s.lower;
    sb += s.bias_part;
    sr += s.randomness_part;
  }
  const double t = static_cast<double>(r.trials);
  r.coverage = static_cast<double>(r.hits) / t;
  std::tie(r.cov_lo, r.cov_hi) = binomial_coverage_ci(r.hits, r.trials);
  r.mean_width = sw / t;
  r.mean_bias_part = sb / t;
  r.mean_randomness_part = sr / t;
  double ss = 0.0;
  for (const auto& s : r.records) {
    const double d = (s.upper - s.lower) - r.mean_width;
    ss += d * d;
  }
  r.width_sd = r.trials > 1 ? std::sqrt(ss / (t - 1.0)) : 0.0;
  return r;
}

inline std::uint64_t replicate_seed(std::uint64_t base, int replicate) {
  return Rng::derive(base, "replicate:" + std::to_string(replicate)).next();
}

inline Generator generator_for(const ExperimentConfig& cfg) {
  const std::optional<double> sd = cfg.noise_sd;
  switch (cfg.experiment) {
    case Experiment::single_covariate:
    case Experiment::lipschitz_ablation:
      return [sd](Eigen::Index n, Eigen::Index m, double shift, std::uint64_t seed) {
        return gen_single_covariate(n, m, shift, seed, sd.value_or(0.1));
      };
    case Experiment::three_covariate:
      return [sd](Eigen::Index n, Eigen::Index m, double shift, std::uint64_t seed) {
        return gen_three_covariate(n, m, shift, seed, sd.value_or(0.1));
      };
    case Experiment::custom:
      require(static_cast<bool>(cfg.custom), "invalid-config", "custom experiment needs a generator");
      return cfg.custom;
  }
  fail("invalid-config", "unknown experiment");
}

struct Attempt {
  std::optional<SeedRecord> record;
  std::optional<SeedFailure> failure;
};

}  // namespace detail

/// Per replicate: generate, compute the target-conditional estimand from the
/// known f, run each method and record hit and width. Method failures are
/// recorded per replicate and do not stop the sweep.
inline std::vector<CoverageReport> run_coverage(const ExperimentConfig& cfg) {
  detail::require(cfg.seeds >= 1, "invalid-config", "seeds must be at least 1");
  detail::require(cfg.alpha > 0.0 && cfg.alpha < 1.0, "invalid-alpha",
                  "alpha must lie strictly inside (0, 1)");
  detail::require(!cfg.methods.empty(), "invalid-config", "no methods selected");
  const Generator gen = detail::generator_for(cfg);
  const std::size_t nm = cfg.methods.size();
  const Metric metric = Metric::euclidean();

  struct Row {
    Eigen::Index coefficient = 0;
    std::vector<detail::Attempt> cells;
  };
  auto rows = detail::parallel_map<Row>(
      static_cast<std::size_t>(cfg.seeds), detail::resolve_threads(cfg.threads),
      [&](std::size_t i) {
        const int rep = static_cast<int>(i);
        const std::uint64_t seed = detail::replicate_seed(cfg.seed, rep);
        const SimulatedData d = gen(cfg.N, cfg.M, cfg.shift, seed);
        const Eigen::Index p = cfg.coefficient.value_or(d.coefficient);
        const double lip = cfg.L.value_or(d.truth.lipschitz_L0);

        Row row{p, std::vector<detail::Attempt>(nm)};
        double truth = 0.0;
        try {
          truth = target_conditional_estimand(d.target, d.truth.evaluate(d.target.locations))[p];
        } catch (const Error& e) {
          // Without an estimand no method can be scored.
          for (auto& cell : row.cells) cell.failure = SeedFailure{rep, e.code(), e.what()};
          return row;
        }
        for (std::size_t k = 0; k < nm; ++k) {
          SeedRecord rec;
          rec.replicate = rep;
          rec.target = truth;
          try {
            switch (cfg.methods[k]) {
              case Method::lipschitz: {
                CiOptions opt;
                opt.psi = cfg.psi;
                opt.seed = Rng::derive(seed, "psi").next();
                if (cfg.sigma2_mode == NoiseMethod::known) opt.sigma2 = d.truth.sigma2;
                else opt.estimator = cfg.sigma2_mode;
                const auto r = lipschitz_ci(d.source, d.target, lip, cfg.alpha, metric, {p}, opt)[0];
                rec.lower = r.lower;
                rec.upper = r.upper;
                rec.bias_part = 2.0 * r.bias_halfwidth;
                rec.randomness_part = r.width() - rec.bias_part;
                break;
              }
              case Method::ols: {
                const auto r = ols_interval(ols_fit(d.source.covariates, d.source.responses), p,
                                            cfg.alpha);
                rec.lower = r.lower;
                rec.upper = r.upper;
                break;
              }
              case Method::sandwich: {
                const auto r =
                    sandwich_interval(d.source.covariates, d.source.responses, p, cfg.alpha);
                rec.lower = r.lower;
                rec.upper = r.upper;
                break;
              }
              case Method::kdeiw: {
                const auto w = kde_importance_weights(d.source.locations, d.target.locations,
                                                      cfg.cv_grid, 5,
                                                      Rng::derive(seed, "kde").next());
                const auto r = wls_interval(d.source.covariates, d.source.responses, w.weights,
                                            p, cfg.alpha);
                rec.lower = r.lower;
                rec.upper = r.upper;
                break;
              }
            }
            rec.hit = rec.lower <= truth && truth <= rec.upper;
            row.cells[k].record = rec;
          } catch (const Error& e) {
            row.cells[k].failure = SeedFailure{rep, e.code(), e.what()};
          }
        }
        return row;
      });

  std::vector<CoverageReport> out;
  for (std::size_t k = 0; k < nm; ++k) {
    std::vector<SeedRecord> recs;
    std::vector<SeedFailure> fails;
    for (const auto& row : rows) {
      if (row.cells[k].record) recs.push_back(*row.cells[k].record);
      if (row.cells[k].failure) fails.push_back(*row.cells[k].failure);
    }
    const double key = cfg.experiment == Experiment::lipschitz_ablation
                           ? cfg.L.value_or(0.0)
                           : cfg.shift;
    out.push_back(detail::summarize(to_string(cfg.methods[k]), rows.front().coefficient, key, std::move(recs),
                                    std::move(fails)));
  }
  return out;
}

struct AblationRow {
  double L = 0.0;
  CoverageReport report;  // Lipschitz method at this L
};

/// Lipschitz-method coverage across an L grid with the noise variance
/// re-estimated at each L (unless the config fixes it as known).
inline std::vector<AblationRow> lipschitz_ablation(const ExperimentConfig& cfg) {
  detail::require(!cfg.L_grid.empty(), "invalid-config", "ablation needs an L grid");
  std::vector<AblationRow> out;
  for (double L : cfg.L_grid) {
    detail::require(std::isfinite(L) && L > 0.0, "invalid-lipschitz",
                    "grid values must be positive");
    ExperimentConfig c = cfg;
    c.experiment = cfg.experiment == Experiment::lipschitz_ablation ? Experiment::single_covariate
                                                                    : cfg.experiment;
    c.L = L;
    c.methods = {Method::lipschitz};
    auto reps = run_coverage(c);
    reps[0].shift_or_L = L;
    out.push_back({L, std::move(reps[0])});
  }
  return out;
}

/// Fully observed spatial data split into a source pool and a target set.
struct RealDataPool {
  SourceDataset pool;
  TargetSet target;
  Vector target_responses;
  Metric metric = Metric::haversine();
  Eigen::Index coefficient = 1;
};

/// Synthetic geography on a 20 x 20 degree patch (lat 30..50, lon -120..-100).
/// Targets fill the north-west 6 x 6 degree block; the pool covers the rest.
/// Locations are stored in radians for the Haversine metric.
inline RealDataPool gen_synthetic_geographic(Eigen::Index pool_size, Eigen::Index target_size,
                                             std::uint64_t seed, double noise_sd = 3.0) {
  detail::require(pool_size >= 1 && target_size >= 1, "invalid-size",
                  "pool and target sizes must be positive");
  Rng rl = Rng::derive(seed, "geo-locations");
  Rng re = Rng::derive(seed, "geo-noise");
  auto in_block = [](double lat, double lon) { return lat > 44.0 && lon < -114.0; };
  Matrix pool_deg(pool_size, 2), target_deg(target_size, 2);
  for (Eigen::Index i = 0; i < pool_size;) {
    const double lat = rl.uniform(30.0, 50.0), lon = rl.uniform(-120.0, -100.0);
    if (in_block(lat, lon)) continue;
    pool_deg(i, 0) = lat;
    pool_deg(i, 1) = lon;
    ++i;
  }
  for (Eigen::Index i = 0; i < target_size; ++i) {
    target_deg(i, 0) = rl.uniform(44.0, 50.0);
    target_deg(i, 1) = rl.uniform(-120.0, -114.0);
  }

  auto covariates = [](const Matrix& deg) {
    Matrix x(deg.rows(), 2);
    for (Eigen::Index i = 0; i < deg.rows(); ++i) {
      const double u = (deg(i, 0) - 40.0) / 10.0, w = (deg(i, 1) + 110.0) / 10.0;
      x(i, 0) = u + 0.5 * w;
      x(i, 1) = std::cos(0.5 * std::numbers::pi * w) * (1.0 + 0.5 * u);
    }
    return with_intercept(x);
  };
  auto mean = [](const Matrix& deg) {
    Vector f(deg.rows());
    for (Eigen::Index i = 0; i < deg.rows(); ++i) {
      const double u = (deg(i, 0) - 40.0) / 10.0, w = (deg(i, 1) + 110.0) / 10.0;
      const double x1 = u + 0.5 * w;
      const double x2 = std::cos(0.5 * std::numbers::pi * w) * (1.0 + 0.5 * u);
      f[i] = 40.0 + 10.0 * x1 + 5.0 * x2 + 12.0 * u * u + 8.0 * std::sin(std::numbers::pi * w) * u;
    }
    return f;
  };

  RealDataPool d;
  d.metric = Metric::haversine();
  d.pool.locations = LocationSet(degrees_to_radians(pool_deg), AngularUnit::radians);
  d.pool.covariates = covariates(pool_deg);
  d.pool.intercept_included = true;
  d.pool.responses = detail::noisy(mean(pool_deg), noise_sd, re);
  d.target.locations = LocationSet(degrees_to_radians(target_deg), AngularUnit::radians);
  d.target.covariates = covariates(target_deg);
  d.target_responses = detail::noisy(mean(target_deg), noise_sd, re);
  d.coefficient = 1;
  return d;
}

struct RealDataConfig {
  double subsample_fraction = 0.2;
  int seeds = 100;
  std::uint64_t seed = 0;
  std::vector<Method> methods{Method::lipschitz, Method::ols, Method::sandwich, Method::kdeiw};
  double L = 0.1;  // per km; the built-in geography has L0 of about 0.054
  double alpha = 0.05;
  std::optional<double> sigma2;  // known noise variance for the Lipschitz method
  std::optional<NoiseMethod> estimator;
  PsiKind psi;
  std::vector<double> cv_grid = geographic_bandwidth_grid();
  std::vector<Eigen::Index> coefficients;  // empty: the pool's default coefficient
  int threads = 0;
};

struct RealDataReport {
  std::vector<CoverageReport> difference;  // interval for theta*_hat - theta_hat contains 0
  std::vector<CoverageReport> point;       // theta*_hat inside the method's own interval
};

/// Subsampling protocol on fully observed data. The variance of the target
/// fit, RSS/(N-P) of the source OLS fit times e_p^T (X*^T X*)^{-1} e_p, is
/// added to each baseline's variance and folded into c for the Lipschitz
/// method.
inline RealDataReport real_data_coverage(const RealDataPool& data, const RealDataConfig& cfg) {
  detail::require(cfg.subsample_fraction > 0.0 && cfg.subsample_fraction <= 1.0,
                  "invalid-config", "subsample fraction must lie in (0, 1]");
  detail::require(cfg.seeds >= 1, "invalid-config", "seeds must be at least 1");
  detail::require(data.target_responses.size() == data.target.size(), "dimension-mismatch",
                  "evaluation needs one target response per target row");
  const std::vector<Eigen::Index> coefs =
      cfg.coefficients.empty() ? std::vector<Eigen::Index>{data.coefficient} : cfg.coefficients;
  const auto n_pool = data.pool.size();
  const auto n_sub = std::max<Eigen::Index>(
      data.pool.num_covariates() + 1,
      static_cast<Eigen::Index>(std::llround(cfg.subsample_fraction * static_cast<double>(n_pool))));
  detail::require(n_sub <= n_pool, "invalid-config", "subsample larger than the pool");

  const Vector theta_star =
      ols_fit(data.target.covariates, data.target_responses).coefficients;
  const Matrix target_inv = GramSolver(data.target.covariates).inverse();
  const std::size_t nm = cfg.methods.size(), nc = coefs.size();

  struct Cell {
    std::optional<SeedRecord> diff, point;
    std::optional<SeedFailure> failure;
  };
  using Row = std::vector<Cell>;  // nm * nc, method-major
  auto rows = detail::parallel_map<Row>(
      static_cast<std::size_t>(cfg.seeds), detail::resolve_threads(cfg.threads),
      [&](std::size_t i) {
        const int rep = static_cast<int>(i);
        const std::uint64_t seed = detail::replicate_seed(cfg.seed, rep);
        Rng rng = Rng::derive(seed, "subsample");
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(n_pool));
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        for (Eigen::Index k = 0; k < n_sub; ++k) {
          const auto j = k + static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(n_pool - k)));
          std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(j)]);
        }
        idx.resize(static_cast<std::size_t>(n_sub));
        std::sort(idx.begin(), idx.end());
        SourceDataset src;
        Matrix loc(n_sub, data.pool.locations.dim());
        src.covariates.resize(n_sub, data.pool.num_covariates());
        src.responses.resize(n_sub);
        for (Eigen::Index k = 0; k < n_sub; ++k) {
          const auto r = idx[static_cast<std::size_t>(k)];
          loc.row(k) = data.pool.locations.coords.row(r);
          src.covariates.row(k) = data.pool.covariates.row(r);
          src.responses[k] = data.pool.responses[r];
        }
        src.locations = LocationSet(std::move(loc), data.pool.locations.angular_unit);
        src.intercept_included = data.pool.intercept_included;

        Row row(nm * nc);
        std::optional<LinearFit> fit;
        try {
          fit = ols_fit(src.covariates, src.responses);
        } catch (const Error& e) {
          for (auto& cell : row) cell.failure = SeedFailure{rep, e.code(), e.what()};
          return row;
        }
        const double s2 = fit->residuals.squaredNorm() / static_cast<double>(fit->dof);

        for (std::size_t m = 0; m < nm; ++m) {
          try {
            std::vector<IntervalResult> lip;
            std::optional<DensityRatioWeights> kw;
            if (cfg.methods[m] == Method::lipschitz) {
              CiOptions opt;
              opt.psi = cfg.psi;
              opt.seed = Rng::derive(seed, "psi").next();
              opt.sigma2 = cfg.sigma2;
              opt.estimator = cfg.estimator;
              lip = lipschitz_ci(src, data.target, cfg.L, cfg.alpha, data.metric, coefs, opt);
            } else if (cfg.methods[m] == Method::kdeiw) {
              kw = kde_importance_weights(src.locations, data.target.locations, cfg.cv_grid, 5,
                                          Rng::derive(seed, "kde").next());
            }
            for (std::size_t c = 0; c < nc; ++c) {
              const Eigen::Index p = coefs[c];
              const double extra = s2 * target_inv(p, p);
              SeedRecord d, pt;
              d.replicate = pt.replicate = rep;
              d.target = 0.0;
              pt.target = theta_star[p];
              double est = 0.0, lo = 0.0, hi = 0.0;
              if (cfg.methods[m] == Method::lipschitz) {
                const IntervalResult& r = lip[c];
                est = r.estimate;
                lo = r.lower;
                hi = r.upper;
                const double c2 = std::sqrt(r.randomness_scale * r.randomness_scale + extra);
                const IntervalResult wide =
                    interval_from_parts(0.0, r.bias_halfwidth, c2, cfg.alpha);
                d.lower = theta_star[p] - est + wide.lower;
                d.upper = theta_star[p] - est + wide.upper;
                d.bias_part = pt.bias_part = 2.0 * r.bias_halfwidth;
                pt.randomness_part = r.width() - pt.bias_part;
                d.randomness_part = wide.width() - d.bias_part;
              } else {
                BaselineInterval b;
                if (cfg.methods[m] == Method::ols)
                  b = ols_interval(*fit, p, cfg.alpha);
                else if (cfg.methods[m] == Method::sandwich)
                  b = sandwich_interval(src.covariates, src.responses, p, cfg.alpha);
                else
                  b = wls_interval(src.covariates, src.responses, kw->weights, p, cfg.alpha);
                est = b.estimate;
                lo = b.lower;
                hi = b.upper;
                const double half = b.quantile * std::sqrt(b.variance + extra);
                d.lower = theta_star[p] - est - half;
                d.upper = theta_star[p] - est + half;
              }
              pt.lower = lo;
              pt.upper = hi;
              d.hit = d.lower <= 0.0 && 0.0 <= d.upper;
              pt.hit = pt.lower <= pt.target && pt.target <= pt.upper;
              row[m * nc + c].diff = d;
              row[m * nc + c].point = pt;
            }
          } catch (const Error& e) {
            for (std::size_t c = 0; c < nc; ++c)
              row[m * nc + c].failure = SeedFailure{rep, e.code(), e.what()};
          }
        }
        return row;
      });

  RealDataReport out;
  for (std::size_t m = 0; m < nm; ++m)
    for (std::size_t c = 0; c < nc; ++c) {
      std::vector<SeedRecord> dr, pr;
      std::vector<SeedFailure> fails;
      for (const auto& row : rows) {
        const Cell& cell = row[m * nc + c];
        if (cell.diff) dr.push_back(*cell.diff);
        if (cell.point) pr.push_back(*cell.point);
        if (cell.failure) fails.push_back(*cell.failure);
      }
      out.difference.push_back(detail::summarize(to_string(cfg.methods[m]), coefs[c],
                                                 cfg.L, std::move(dr), fails));
      out.point.push_back(detail::summarize(to_string(cfg.methods[m]), coefs[c], cfg.L,
                                            std::move(pr), std::move(fails)));
    }
  return out;
}

}  // namespace lipci
