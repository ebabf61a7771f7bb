#pragma once

// CLI commands over the bundled fixtures whose documents are frozen under
// tests/golden. Paths are relative to tests/data.

#include <string>
#include <vector>

#include "lipci/cli.hpp"

namespace lipci::testing {

struct FixtureCase {
  std::string name;
  cli::RunConfig config;
};

inline std::vector<FixtureCase> fixture_cases() {
  using cli::Command;
  std::vector<FixtureCase> out;

  cli::RunConfig geo;
  geo.command = Command::ci;
  geo.source = "geo_source.csv";
  geo.target = "geo_target.csv";
  geo.lipschitz = 0.2;
  geo.alpha = 0.05;
  geo.metric = Metric::haversine();
  out.push_back({"ci_geo", geo});

  cli::RunConfig plane;
  plane.command = Command::ci;
  plane.source = "plane_source.csv";
  plane.target = "plane_target.csv";
  plane.lipschitz = 1.0;
  plane.baselines = true;
  plane.coefficients = {0, 1};
  plane.simultaneous = true;
  out.push_back({"ci_plane_baselines", plane});

  cli::RunConfig knn = plane;
  knn.baselines = false;
  knn.simultaneous = false;
  knn.coefficients.clear();
  knn.psi = PsiKind::knn(3);
  knn.sigma2 = 0.01;
  out.push_back({"ci_plane_knn", knn});

  cli::RunConfig var;
  var.command = Command::variance;
  var.source = "plane_source.csv";
  var.lipschitz = 1.0;
  out.push_back({"variance_plane_qp", var});

  cli::RunConfig var_nn = var;
  var_nn.lipschitz.reset();
  var_nn.sigma2_method = NoiseMethod::nn;
  out.push_back({"variance_plane_nn", var_nn});

  cli::RunConfig sim;
  sim.command = Command::simulate;
  sim.shifts = {0.8};
  sim.seeds = 5;
  sim.seed = 7;
  out.push_back({"simulate_single", sim});

  cli::RunConfig abl;
  abl.command = Command::ablation;
  abl.shifts = {0.4};
  abl.seeds = 3;
  abl.seed = 3;
  abl.lipschitz_grid = {0.5, 2.0};
  abl.sigma2_mode = NoiseMethod::qp;
  out.push_back({"ablation_single", abl});

  cli::RunConfig ev;
  ev.command = Command::evaluate;
  ev.source = "geo_source.csv";
  ev.target = "geo_target_observed.csv";
  ev.metric = Metric::haversine();
  ev.lipschitz = 0.1;
  ev.seeds = 5;
  ev.seed = 2;
  ev.fraction = 0.5;
  out.push_back({"evaluate_geo", ev});

  cli::RunConfig bad = geo;
  bad.lipschitz = -1.0;
  out.push_back({"error_invalid_lipschitz", bad});
  return out;
}

}  // namespace lipci::testing
