#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "lipci/harness.hpp"
#include "lipci/interval.hpp"
#include "lipci/io.hpp"
#include "lipci/regression.hpp"
#include "lipci/variance.hpp"

namespace lipci::cli {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchemaVersion = "1.0";

enum class Command { ci, variance, simulate, ablation, evaluate };

inline std::string to_string(Command c) {
  switch (c) {
    case Command::ci: return "ci";
    case Command::variance: return "variance";
    case Command::simulate: return "simulate";
    case Command::ablation: return "ablation";
    case Command::evaluate: return "evaluate";
  }
  return "unknown";
}

struct RunConfig {
  Command command = Command::ci;
  std::string source, target, output, csv_output, write_data;
  Metric metric = Metric::euclidean();
  std::optional<double> lipschitz;
  double alpha = 0.05;
  std::optional<double> sigma2;
  std::optional<NoiseMethod> sigma2_method;  // estimator when sigma2 is absent
  PsiKind psi;
  std::vector<Eigen::Index> coefficients;    // empty: every non-intercept coefficient
  bool intercept = true;
  bool baselines = false;
  bool simultaneous = false;
  std::uint64_t seed = 0;
  int threads = 0;

  // Experiments.
  Experiment experiment = Experiment::single_covariate;
  std::vector<double> shifts{0.0};
  int seeds = 50;
  std::optional<Eigen::Index> n, m;
  bool full_scale = false;
  std::vector<double> lipschitz_grid;
  NoiseMethod sigma2_mode = NoiseMethod::known;
  std::vector<Method> methods{Method::lipschitz, Method::ols, Method::sandwich, Method::kdeiw};
  double fraction = 0.2;
  bool synthetic = false;
};

/// Parses "nn1" or "knn:K".
inline PsiKind parse_psi(const std::string& s) {
  if (s == "nn1") return PsiKind::nearest();
  if (s.rfind("knn:", 0) == 0) {
    try {
      std::size_t used = 0;
      const long k = std::stol(s.substr(4), &used);
      if (used == s.size() - 4 && k >= 1) return PsiKind::knn(k);
    } catch (...) {
    }
  }
  throw Error("invalid-psi", "psi must be nn1 or knn:K with K >= 1, got '" + s + "'");
}

inline Metric parse_metric(const std::string& s) {
  if (s == "euclidean") return Metric::euclidean();
  if (s == "haversine") return Metric::haversine();
  throw Error("invalid-metric", "metric must be euclidean or haversine, got '" + s + "'");
}

inline NoiseMethod parse_noise(const std::string& s) {
  if (s == "known") return NoiseMethod::known;
  if (s == "qp") return NoiseMethod::qp;
  if (s == "nn") return NoiseMethod::nn;
  throw Error("invalid-sigma2-method", "expected known, qp or nn, got '" + s + "'");
}

inline Method parse_method(const std::string& s) {
  if (s == "lipschitz") return Method::lipschitz;
  if (s == "ols") return Method::ols;
  if (s == "sandwich") return Method::sandwich;
  if (s == "kdeiw") return Method::kdeiw;
  throw Error("invalid-method", "unknown method '" + s + "'");
}

inline Experiment parse_experiment(const std::string& s) {
  if (s == "single" || s == "single_covariate") return Experiment::single_covariate;
  if (s == "three" || s == "three_covariate") return Experiment::three_covariate;
  throw Error("invalid-experiment", "experiment must be single or three, got '" + s + "'");
}

namespace detail {

inline Json interval_json(const IntervalResult& r) {
  Json j;
  j["coefficient"] = r.coefficient_index;
  j["estimate"] = r.estimate;
  j["lower"] = r.lower;
  j["upper"] = r.upper;
  j["B"] = r.bias_halfwidth;
  j["c"] = r.randomness_scale;
  j["delta"] = r.delta;
  j["sigma2"] = r.sigma2;
  j["sigma2_method"] = to_string(r.sigma2_source);
  j["alpha"] = r.alpha;
  return j;
}

inline Json baseline_json(const BaselineInterval& b) {
  Json j;
  j["method"] = to_string(b.method);
  j["coefficient"] = b.coefficient_index;
  j["estimate"] = b.estimate;
  j["lower"] = b.lower;
  j["upper"] = b.upper;
  j["variance"] = b.variance;
  j["quantile"] = b.quantile;
  return j;
}

inline Json report_json(const CoverageReport& r, const std::string& protocol = "") {
  Json j;
  j["method"] = r.method;
  if (!protocol.empty()) j["protocol"] = protocol;
  j["coefficient"] = r.coefficient;
  j["shift_or_L"] = r.shift_or_L;
  j["hits"] = r.hits;
  j["trials"] = r.trials;
  j["coverage"] = r.coverage;
  j["cov_lo"] = r.cov_lo;
  j["cov_hi"] = r.cov_hi;
  j["mean_width"] = r.mean_width;
  j["width_sd"] = r.width_sd;
  j["mean_bias_part"] = r.mean_bias_part;
  j["mean_randomness_part"] = r.mean_randomness_part;
  Json fails = Json::array();
  for (const auto& f : r.failures)
    fails.push_back({{"replicate", f.replicate}, {"code", f.code}, {"message", f.message}});
  j["failures"] = fails;
  return j;
}

inline void write_coverage_csv(const std::string& path,
                               const std::vector<const CoverageReport*>& reports) {
  std::ofstream out(path);
  if (!out) throw Error("file-not-writable", "cannot write '" + path + "'");
  out << "method,coefficient,shift_or_L,coverage,cov_lo,cov_hi,mean_width,width_sd\n";
  for (const auto* r : reports)
    out << r->method << ',' << r->coefficient << ',' << io::format_double(r->shift_or_L) << ','
        << io::format_double(r->coverage) << ',' << io::format_double(r->cov_lo) << ','
        << io::format_double(r->cov_hi) << ',' << io::format_double(r->mean_width) << ','
        << io::format_double(r->width_sd) << '\n';
}

inline Json methods_json(const std::vector<Method>& ms) {
  Json a = Json::array();
  for (Method m : ms) a.push_back(to_string(m));
  return a;
}

inline Json base_config(const RunConfig& c) {
  Json j;
  j["command"] = to_string(c.command);
  j["metric"] = to_string(c.metric.kind);
  if (c.lipschitz) j["lipschitz"] = *c.lipschitz;
  j["alpha"] = c.alpha;
  j["seed"] = c.seed;
  return j;
}

inline void require_lipschitz(const RunConfig& c) {
  lipci::detail::require(c.lipschitz.has_value(), "missing-lipschitz", "--lipschitz is required");
  lipci::detail::require(std::isfinite(*c.lipschitz) && *c.lipschitz > 0.0, "invalid-lipschitz",
                         "Lipschitz constant must be positive");
}

inline void require_alpha(const RunConfig& c) {
  lipci::detail::require(std::isfinite(c.alpha) && c.alpha > 0.0 && c.alpha < 1.0,
                         "invalid-alpha", "alpha must lie strictly inside (0, 1)");
}

inline std::vector<Eigen::Index> resolve_coefficients(const RunConfig& c, Eigen::Index p) {
  if (!c.coefficients.empty()) {
    for (Eigen::Index k : c.coefficients)
      lipci::detail::require(k >= 0 && k < p, "invalid-coefficient",
                             "coefficient " + std::to_string(k) + " out of range [0, " +
                                 std::to_string(p) + ")");
    return c.coefficients;
  }
  std::vector<Eigen::Index> all;
  for (Eigen::Index k = c.intercept ? 1 : 0; k < p; ++k) all.push_back(k);
  return all;
}

inline Json run_ci(const RunConfig& c) {
  require_lipschitz(c);
  require_alpha(c);
  const SourceDataset src = io::parse_source_csv(c.source, c.metric, c.intercept);
  const TargetSet tgt = io::parse_target_csv(c.target, c.metric, c.intercept);
  const auto coefs = resolve_coefficients(c, src.num_covariates());

  CiOptions opt;
  opt.sigma2 = c.sigma2;
  opt.estimator = c.sigma2_method;
  opt.psi = c.psi;
  opt.seed = Rng::derive(c.seed, "psi").next();
  opt.simultaneous = c.simultaneous;
  const CiReport rep = lipschitz_ci_report(src, tgt, *c.lipschitz, c.alpha, c.metric, coefs, opt);

  Json doc;
  doc["schema_version"] = kSchemaVersion;
  Json cfg = base_config(c);
  cfg["source"] = c.source;
  cfg["target"] = c.target;
  cfg["sigma2"] = c.sigma2 ? Json(*c.sigma2) : Json(nullptr);
  cfg["psi"] = c.psi.name();
  cfg["coefficients"] = coefs;
  cfg["intercept"] = c.intercept;
  cfg["simultaneous"] = c.simultaneous;
  doc["config"] = cfg;
  Json results = Json::array(), diag = Json::array();
  for (const auto& r : rep.intervals) {
    results.push_back(interval_json(r));
    diag.push_back({{"coefficient", r.coefficient_index},
                    {"B", r.bias_halfwidth},
                    {"A", r.contrast_mass},
                    {"w1", r.transport},
                    {"v_norm", r.contrast_norm},
                    {"delta", r.delta}});
  }
  doc["results"] = results;
  if (c.baselines) {
    Json base = Json::array();
    const LinearFit fit = ols_fit(src.covariates, src.responses);
    const auto kw = kde_importance_weights(
        src.locations, tgt.locations,
        c.metric.kind == MetricKind::haversine ? geographic_bandwidth_grid()
                                               : simulation_bandwidth_grid(),
        5, Rng::derive(c.seed, "kde").next());
    for (Eigen::Index p : coefs) {
      base.push_back(baseline_json(ols_interval(fit, p, c.alpha)));
      base.push_back(baseline_json(sandwich_interval(src.covariates, src.responses, p, c.alpha)));
      base.push_back(baseline_json(wls_interval(src.covariates, src.responses, kw.weights, p, c.alpha)));
    }
    doc["baselines"] = base;
  }
  Json d;
  d["n_source"] = src.size();
  d["n_target"] = tgt.size();
  d["sigma2"] = rep.noise.sigma2;
  d["sigma2_method"] = to_string(rep.noise.method);
  d["qp"] = {{"iterations", rep.noise.diagnostics.iterations},
             {"optimality_gap", rep.noise.diagnostics.optimality_gap},
             {"max_violation", rep.noise.diagnostics.max_violation}};
  Json codes = Json::array();
  for (const auto& f : rep.validation.findings) codes.push_back(f.code);
  d["validation"] = codes;
  d["coefficients"] = diag;
  doc["diagnostics"] = d;
  return doc;
}

inline Json run_variance(const RunConfig& c) {
  const SourceDataset src = io::parse_source_csv(c.source, c.metric, c.intercept);
  const NoiseMethod method = c.sigma2_method.value_or(NoiseMethod::qp);
  NoiseEstimate est;
  if (method == NoiseMethod::nn) {
    est = sigma2_nn(c.metric, src);
  } else {
    lipci::detail::require(method == NoiseMethod::qp, "invalid-sigma2-method",
                           "variance estimates with qp or nn");
    require_lipschitz(c);
    est = sigma2_qp(c.metric, src, *c.lipschitz);
  }
  Json doc;
  doc["schema_version"] = kSchemaVersion;
  Json cfg = base_config(c);
  cfg["source"] = c.source;
  cfg["sigma2_method"] = to_string(method);
  doc["config"] = cfg;
  doc["results"] = Json::array({{{"sigma2", est.sigma2}, {"sigma2_method", to_string(est.method)}}});
  doc["diagnostics"] = {{"n_source", src.size()},
                        {"iterations", est.diagnostics.iterations},
                        {"optimality_gap", est.diagnostics.optimality_gap},
                        {"max_violation", est.diagnostics.max_violation},
                        {"polished", est.diagnostics.polished}};
  return doc;
}

inline ExperimentConfig experiment_config(const RunConfig& c) {
  ExperimentConfig e;
  e.experiment = c.experiment;
  const bool three = c.experiment == Experiment::three_covariate;
  e.N = c.n.value_or(three ? (c.full_scale ? 10000 : 2000) : 300);
  e.M = c.m.value_or(100);
  e.seeds = c.seeds;
  e.seed = c.seed;
  e.alpha = c.alpha;
  e.L = c.lipschitz;
  e.sigma2_mode = c.sigma2_mode;
  e.methods = c.methods;
  e.psi = c.psi;
  e.threads = c.threads;
  if (!c.coefficients.empty()) e.coefficient = c.coefficients.front();
  return e;
}

inline Json experiment_config_json(const RunConfig& c, const ExperimentConfig& e) {
  Json cfg = base_config(c);
  cfg["experiment"] = to_string(e.experiment);
  cfg["N"] = e.N;
  cfg["M"] = e.M;
  cfg["seeds"] = e.seeds;
  cfg["sigma2_mode"] = to_string(e.sigma2_mode);
  cfg["psi"] = e.psi.name();
  return cfg;
}

inline Json run_simulate(const RunConfig& c, std::vector<CoverageReport>& all) {
  require_alpha(c);
  if (c.lipschitz) require_lipschitz(c);
  lipci::detail::require(!c.shifts.empty(), "invalid-config", "no shifts given");
  ExperimentConfig e = experiment_config(c);
  Json doc;
  doc["schema_version"] = kSchemaVersion;
  Json cfg = experiment_config_json(c, e);
  cfg["shifts"] = c.shifts;
  cfg["methods"] = methods_json(e.methods);
  doc["config"] = cfg;
  Json reports = Json::array();
  for (double s : c.shifts) {
    e.shift = s;
    for (auto& r : run_coverage(e)) {
      reports.push_back(report_json(r));
      all.push_back(std::move(r));
    }
  }
  doc["reports"] = reports;
  return doc;
}

inline Json run_ablation(const RunConfig& c, std::vector<CoverageReport>& all) {
  require_alpha(c);
  lipci::detail::require(!c.lipschitz_grid.empty(), "invalid-config",
                         "--lipschitz-grid is required");
  lipci::detail::require(c.shifts.size() == 1, "invalid-config",
                         "ablation takes exactly one shift");
  ExperimentConfig e = experiment_config(c);
  e.shift = c.shifts.front();
  e.L_grid = c.lipschitz_grid;
  Json doc;
  doc["schema_version"] = kSchemaVersion;
  Json cfg = experiment_config_json(c, e);
  cfg["shift"] = e.shift;
  cfg["lipschitz_grid"] = e.L_grid;
  doc["config"] = cfg;
  Json reports = Json::array();
  for (auto& row : lipschitz_ablation(e)) {
    reports.push_back(report_json(row.report));
    all.push_back(std::move(row.report));
  }
  doc["reports"] = reports;
  return doc;
}

inline Json run_evaluate(const RunConfig& c, std::vector<CoverageReport>& all) {
  require_lipschitz(c);
  require_alpha(c);
  RealDataPool data;
  if (c.synthetic) {
    data = gen_synthetic_geographic(c.n.value_or(850), c.m.value_or(133), c.seed);
    lipci::detail::require(c.metric.kind == MetricKind::haversine, "ambiguous-units",
                           "the synthetic geography needs the haversine metric");
    if (!c.write_data.empty()) {
      io::write_dataset_csv(c.write_data + "/pool.csv", data.pool.locations, data.pool.covariates,
                            true, &data.pool.responses);
      io::write_dataset_csv(c.write_data + "/target.csv", data.target.locations,
                            data.target.covariates, true, &data.target_responses);
    }
  } else {
    data.pool = io::parse_source_csv(c.source, c.metric, c.intercept);
    std::optional<Vector> y;
    data.target = io::parse_target_csv(c.target, c.metric, c.intercept, &y);
    lipci::detail::require(y.has_value(), "missing-columns",
                           "evaluate needs a y column in the target file");
    data.target_responses = *y;
    data.metric = c.metric;
    data.coefficient = c.intercept ? 1 : 0;
  }
  RealDataConfig r;
  r.subsample_fraction = c.fraction;
  r.seeds = c.seeds;
  r.seed = c.seed;
  r.methods = c.methods;
  r.L = *c.lipschitz;
  r.alpha = c.alpha;
  r.sigma2 = c.sigma2;
  r.estimator = c.sigma2_method;
  r.psi = c.psi;
  r.coefficients = c.coefficients;
  r.threads = c.threads;
  r.cv_grid = c.metric.kind == MetricKind::haversine ? geographic_bandwidth_grid()
                                                     : simulation_bandwidth_grid();
  const RealDataReport rep = real_data_coverage(data, r);

  Json doc;
  doc["schema_version"] = kSchemaVersion;
  Json cfg = base_config(c);
  cfg["source"] = c.synthetic ? Json("synthetic") : Json(c.source);
  cfg["target"] = c.synthetic ? Json("synthetic") : Json(c.target);
  cfg["fraction"] = c.fraction;
  cfg["seeds"] = c.seeds;
  cfg["methods"] = methods_json(c.methods);
  cfg["psi"] = c.psi.name();
  cfg["target_variance_rule"] =
      "RSS/(N-P) of the source OLS fit times e_p^T (X*^T X*)^{-1} e_p; added to baseline "
      "variances, folded into c for the lipschitz method";
  doc["config"] = cfg;
  Json reports = Json::array();
  for (const auto& x : rep.difference) {
    reports.push_back(report_json(x, "difference"));
    all.push_back(x);
  }
  for (const auto& x : rep.point) reports.push_back(report_json(x, "point"));
  doc["reports"] = reports;
  return doc;
}

}  // namespace detail

struct RunOutcome {
  int exit_code = 0;
  Json document;  // result document, or an error object on failure
};

inline Json error_json(const std::string& code, const std::string& message) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["error"] = {{"code", code}, {"message", message}};
  return j;
}

/// Runs one command. Writes the JSON document to `output` when set and the
/// coverage CSV when requested. Never throws.
inline RunOutcome run(const RunConfig& c) {
  RunOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    std::vector<CoverageReport> reports;
    switch (c.command) {
      case Command::ci: out.document = detail::run_ci(c); break;
      case Command::variance: out.document = detail::run_variance(c); break;
      case Command::simulate: out.document = detail::run_simulate(c, reports); break;
      case Command::ablation: out.document = detail::run_ablation(c, reports); break;
      case Command::evaluate: out.document = detail::run_evaluate(c, reports); break;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.document["timing"] = {{"seconds", secs}};
    if (!c.csv_output.empty()) {
      std::vector<const CoverageReport*> ptrs;
      for (const auto& r : reports) ptrs.push_back(&r);
      detail::write_coverage_csv(c.csv_output, ptrs);
    }
    if (!c.output.empty()) {
      std::ofstream f(c.output);
      if (!f) throw Error("file-not-writable", "cannot write '" + c.output + "'");
      f << out.document.dump(2) << '\n';
    }
  } catch (const Error& e) {
    out.exit_code = 1;
    out.document = error_json(e.code(), e.what());
  } catch (const std::exception& e) {
    out.exit_code = 1;
    out.document = error_json("internal-error", e.what());
  }
  return out;
}

}  // namespace lipci::cli
