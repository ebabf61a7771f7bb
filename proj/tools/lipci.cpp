#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "lipci/cli.hpp"

using lipci::cli::RunConfig;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> parse_numbers(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    const auto v = lipci::io::detail::parse_double(item);
    if (!v) throw lipci::Error("invalid-arguments", std::string("bad number in ") + what + ": '" + item + "'");
    out.push_back(*v);
  }
  return out;
}

struct Raw {
  std::string metric = "euclidean", psi = "nn1", sigma2_method, coefficients = "all";
  std::string experiment = "single", shifts = "0", grid, sigma2_mode = "known";
  std::string methods = "lipschitz,ols,sandwich,kdeiw";
  long long n = 0, m = 0;
  bool no_intercept = false;
};

void common(CLI::App* app, RunConfig& c, Raw& r) {
  app->add_option("--metric", r.metric, "euclidean or haversine");
  app->add_option("--alpha", c.alpha, "miscoverage level");
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--output,-o", c.output, "JSON output path (default stdout)");
  app->add_option("--psi", r.psi, "nn1 or knn:K");
  app->add_option("--threads", c.threads, "worker threads (default LIPCI_THREADS or all cores)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lipschitz-driven confidence intervals for spatial linear regression"};
  app.require_subcommand(1);
  RunConfig c;
  Raw r;
  double lipschitz = 0.0, sigma2 = 0.0;

  auto* ci = app.add_subcommand("ci", "interval for regression coefficients at target locations");
  auto* var = app.add_subcommand("variance", "noise variance of the source responses");
  auto* sim = app.add_subcommand("simulate", "coverage sweep on a built-in generator");
  auto* abl = app.add_subcommand("ablation", "coverage and width across Lipschitz constants");
  auto* ev = app.add_subcommand("evaluate", "subsampling coverage on fully observed data");

  for (auto* sc : {ci, var, sim, abl, ev}) {
    common(sc, c, r);
    sc->add_option("--lipschitz,-L", lipschitz, "Lipschitz constant of the conditional mean");
  }
  for (auto* sc : {ci, var, ev}) {
    sc->add_option("--source", c.source, "source CSV");
    sc->add_flag("--no-intercept", r.no_intercept, "do not prepend an intercept column");
    sc->add_option("--sigma2-method", r.sigma2_method, "qp or nn");
  }
  for (auto* sc : {ci, ev}) {
    sc->add_option("--target", c.target, "target CSV");
    sc->add_option("--sigma2", sigma2, "known noise variance");
    sc->add_option("--coefficients", r.coefficients, "comma-separated indices or 'all'");
  }
  ci->add_flag("--baselines", c.baselines, "also report OLS, sandwich and KDE-weighted intervals");
  ci->add_flag("--simultaneous", c.simultaneous, "Bonferroni across the requested coefficients");
  for (auto* sc : {sim, abl}) {
    sc->add_option("--experiment", r.experiment, "single or three");
    sc->add_option("--sigma2-mode", r.sigma2_mode, "known, qp or nn");
    sc->add_option("--N", r.n, "source size");
    sc->add_option("--M", r.m, "target size");
    sc->add_flag("--full-scale", c.full_scale, "three-covariate experiment at N = 10000");
  }
  for (auto* sc : {sim, abl, ev}) sc->add_option("--seeds", c.seeds, "number of replicates");
  sim->add_option("--shift", r.shifts, "shift or comma-separated shifts");
  abl->add_option("--shift", r.shifts, "shift");
  abl->add_option("--lipschitz-grid", r.grid, "comma-separated L values")->required();
  for (auto* sc : {sim, ev}) sc->add_option("--methods", r.methods, "comma-separated methods");
  for (auto* sc : {sim, abl, ev}) sc->add_option("--csv", c.csv_output, "coverage CSV output path");
  ev->add_option("--fraction", c.fraction, "source subsample fraction");
  ev->add_flag("--synthetic", c.synthetic, "use the built-in synthetic geography");
  ev->add_option("--write-data", c.write_data, "directory to write the synthetic pool/target CSVs");
  ev->add_option("--pool-size", r.n, "synthetic pool size");
  ev->add_option("--target-size", r.m, "synthetic target size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << lipci::cli::error_json("invalid-arguments", e.what()).dump(2) << '\n';
    return 2;
  }

  try {
    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    c.command = name == "ci"         ? lipci::cli::Command::ci
                : name == "variance" ? lipci::cli::Command::variance
                : name == "simulate" ? lipci::cli::Command::simulate
                : name == "ablation" ? lipci::cli::Command::ablation
                                     : lipci::cli::Command::evaluate;
    if (sub->count("--lipschitz")) c.lipschitz = lipschitz;
    if (sub->get_option_no_throw("--sigma2") && sub->count("--sigma2")) c.sigma2 = sigma2;
    c.metric = lipci::cli::parse_metric(r.metric);
    c.psi = lipci::cli::parse_psi(r.psi);
    c.intercept = !r.no_intercept;
    if (!r.sigma2_method.empty()) c.sigma2_method = lipci::cli::parse_noise(r.sigma2_method);
    c.sigma2_mode = lipci::cli::parse_noise(r.sigma2_mode);
    c.experiment = lipci::cli::parse_experiment(r.experiment);
    if (r.n > 0) c.n = r.n;
    if (r.m > 0) c.m = r.m;
    c.shifts = parse_numbers(r.shifts, "--shift");
    if (!r.grid.empty()) c.lipschitz_grid = parse_numbers(r.grid, "--lipschitz-grid");
    c.methods.clear();
    for (const auto& m : split_list(r.methods)) c.methods.push_back(lipci::cli::parse_method(m));
    if (r.coefficients != "all")
      for (double v : parse_numbers(r.coefficients, "--coefficients")) {
        if (v != static_cast<double>(static_cast<long long>(v)))
          throw lipci::Error("invalid-coefficient", "coefficient indices must be integers");
        c.coefficients.push_back(static_cast<Eigen::Index>(v));
      }
    if (c.command != lipci::cli::Command::ci && c.command != lipci::cli::Command::evaluate &&
        c.command != lipci::cli::Command::variance)
      c.intercept = true;
  } catch (const lipci::Error& e) {
    std::cerr << lipci::cli::error_json(e.code(), e.what()).dump(2) << '\n';
    return 2;
  }

  const auto outcome = lipci::cli::run(c);
  if (outcome.exit_code != 0) {
    std::cerr << outcome.document.dump(2) << '\n';
    return outcome.exit_code;
  }
  if (c.output.empty()) std::cout << outcome.document.dump(2) << '\n';
  return 0;
}
