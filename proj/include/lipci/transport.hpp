#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "lipci/detail/dense_lp.hpp"
#include "lipci/detail/network_simplex.hpp"
#include "lipci/error.hpp"
#include "lipci/geometry.hpp"
#include "lipci/weights.hpp"

namespace lipci {

/// Probability measure on finitely many atoms.
struct DiscreteMeasure {
  LocationSet atoms;
  Vector masses;
};

struct TransportPlan {
  double distance = 0.0;      // optimal cost = W1
  double dual_objective = 0.0;
  std::vector<detail::TransportSolution::Entry> coupling;  // indices into the
                                                           // original atoms
  std::int64_t pivots = 0;
};

/// Measures whose masses sum to 1 within this tolerance are accepted.
inline constexpr double kMassTolerance = 1e-9;

namespace detail {

inline std::vector<Eigen::Index> support(const Vector& masses, const char* which) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < masses.size(); ++i) {
    require(std::isfinite(masses[i]) && masses[i] >= 0.0, "invalid-measure",
            std::string(which) + " has a negative or non-finite mass");
    if (masses[i] > 0.0) idx.push_back(i);
  }
  require(!idx.empty(), "empty-support", std::string(which) + " has empty support");
  return idx;
}

inline LocationSet take_rows(const LocationSet& s, const std::vector<Eigen::Index>& idx) {
  Matrix c(static_cast<Eigen::Index>(idx.size()), s.dim());
  for (std::size_t k = 0; k < idx.size(); ++k) c.row(static_cast<Eigen::Index>(k)) = s.coords.row(idx[k]);
  return LocationSet(std::move(c), s.angular_unit);
}

}  // namespace detail

/// Exact W1 between two probability measures with ground cost given by the
/// metric. Returns the optimal coupling as a certificate.
inline TransportPlan wasserstein1_plan(const Metric& metric, const DiscreteMeasure& mu,
                                       const DiscreteMeasure& nu) {
  detail::require(mu.atoms.size() == mu.masses.size() &&
                      nu.atoms.size() == nu.masses.size(),
                  "dimension-mismatch", "atoms and masses differ in length");
  const auto si = detail::support(mu.masses, "mu");
  const auto sj = detail::support(nu.masses, "nu");
  const double total_mu = mu.masses.sum(), total_nu = nu.masses.sum();
  detail::require(std::abs(total_mu - 1.0) <= kMassTolerance &&
                      std::abs(total_nu - 1.0) <= kMassTolerance,
                  "mass-mismatch", "measures must each carry unit mass");

  const LocationSet a = detail::take_rows(mu.atoms, si);
  const LocationSet b = detail::take_rows(nu.atoms, sj);
  const Matrix cost = pairwise_distances(metric, a, b);

  Vector supply(static_cast<Eigen::Index>(si.size()));
  Vector demand(static_cast<Eigen::Index>(sj.size()));
  for (std::size_t k = 0; k < si.size(); ++k) supply[static_cast<Eigen::Index>(k)] = mu.masses[si[k]];
  for (std::size_t k = 0; k < sj.size(); ++k) demand[static_cast<Eigen::Index>(k)] = nu.masses[sj[k]];
  // Put both marginals on the same total so the network is balanced.
  demand *= supply.sum() / demand.sum();

  detail::NetworkSimplex solver(cost, supply, demand);
  detail::TransportSolution sol = solver.solve();

  TransportPlan plan;
  plan.distance = sol.cost;
  plan.dual_objective = sol.dual_objective;
  plan.pivots = sol.pivots;
  plan.coupling.reserve(sol.coupling.size());
  for (const auto& e : sol.coupling)
    plan.coupling.push_back({static_cast<int>(si[static_cast<std::size_t>(e.source)]),
                             static_cast<int>(sj[static_cast<std::size_t>(e.target)]), e.mass});
  return plan;
}

inline double wasserstein1(const Metric& metric, const DiscreteMeasure& mu,
                           const DiscreteMeasure& nu) {
  return wasserstein1_plan(metric, mu, nu).distance;
}

/// Worst-case bias B = A * L * W1 over L-Lipschitz conditional means.
struct BiasBound {
  double B = 0.0;
  double A = 0.0;   // half the total absolute contrast mass
  double w1 = 0.0;  // W1 between the two normalised signed parts
  double L = 0.0;
};

/// Two probability measures from the signed split of (w, v). Zero-mass atoms
/// are dropped.
struct SignedSplit {
  DiscreteMeasure positive;  // w >= 0 targets, v < 0 sources
  DiscreteMeasure negative;  // w < 0 targets, v >= 0 sources
  double A = 0.0;
};

inline void check_mass_balance(const ContrastVectors& cv) {
  const double sw = cv.w.sum(), sv = cv.v.sum();
  const double scale = std::max({1.0, cv.w.cwiseAbs().sum(), cv.v.cwiseAbs().sum()});
  detail::require(std::abs(sw - sv) <= kMassTolerance * scale, "mass-imbalance",
                  "sum(w) != sum(v): the weight matrix rows do not sum to one");
}

inline SignedSplit signed_split(const LocationSet& source, const LocationSet& target,
                                const ContrastVectors& cv) {
  detail::require(cv.w.size() == target.size() && cv.v.size() == source.size(),
                  "dimension-mismatch", "contrast lengths do not match locations");
  detail::require(source.dim() == target.dim(), "dimension-mismatch",
                  "location dimensions differ");
  SignedSplit out;
  out.A = 0.5 * (cv.w.cwiseAbs().sum() + cv.v.cwiseAbs().sum());
  if (out.A == 0.0) return out;

  std::vector<Eigen::RowVectorXd> pos_pts, neg_pts;
  std::vector<double> pos_m, neg_m;
  for (Eigen::Index m = 0; m < cv.w.size(); ++m) {
    const double x = cv.w[m];
    if (x == 0.0) continue;
    if (x > 0.0) {
      pos_pts.emplace_back(target.coords.row(m));
      pos_m.push_back(x / out.A);
    } else {
      neg_pts.emplace_back(target.coords.row(m));
      neg_m.push_back(-x / out.A);
    }
  }
  for (Eigen::Index n = 0; n < cv.v.size(); ++n) {
    const double x = cv.v[n];
    if (x == 0.0) continue;
    if (x < 0.0) {
      pos_pts.emplace_back(source.coords.row(n));
      pos_m.push_back(-x / out.A);
    } else {
      neg_pts.emplace_back(source.coords.row(n));
      neg_m.push_back(x / out.A);
    }
  }
  auto pack = [&](const std::vector<Eigen::RowVectorXd>& pts,
                  const std::vector<double>& ms) {
    DiscreteMeasure d;
    Matrix c(static_cast<Eigen::Index>(pts.size()), source.dim());
    Vector mass(static_cast<Eigen::Index>(ms.size()));
    for (std::size_t k = 0; k < pts.size(); ++k) {
      c.row(static_cast<Eigen::Index>(k)) = pts[k];
      mass[static_cast<Eigen::Index>(k)] = ms[k];
    }
    d.atoms = LocationSet(std::move(c), source.angular_unit);
    d.masses = std::move(mass);
    return d;
  };
  out.positive = pack(pos_pts, pos_m);
  out.negative = pack(neg_pts, neg_m);
  return out;
}

/// sup over L-Lipschitz g of |sum_m w_m g(S*_m) - sum_n v_n g(S_n)|, computed
/// through the transport reduction.
inline BiasBound bias_bound(const Metric& metric, const LocationSet& source,
                            const LocationSet& target, const ContrastVectors& cv,
                            double lipschitz) {
  detail::require(std::isfinite(lipschitz) && lipschitz >= 0.0, "invalid-lipschitz",
                  "Lipschitz constant must be nonnegative");
  check_mass_balance(cv);
  const SignedSplit split = signed_split(source, target, cv);
  BiasBound out;
  out.L = lipschitz;
  out.A = split.A;
  if (split.A == 0.0) return out;

  // Both parts carry mass A(1 +- rounding); renormalise before solving.
  DiscreteMeasure mu = split.positive, nu = split.negative;
  mu.masses /= mu.masses.sum();
  nu.masses /= nu.masses.sum();
  out.w1 = wasserstein1(metric, mu, nu);
  out.B = out.A * lipschitz * out.w1;
  return out;
}

/// Default cap on points for the direct dual LP.
inline constexpr Eigen::Index kDirectBiasMaxPoints = 40;

/// Same supremum solved directly as an LP over the function values at all
/// M + N locations. Small instances only; used to cross-check bias_bound.
inline double worst_case_bias_direct(const Metric& metric, const LocationSet& source,
                                     const LocationSet& target, const ContrastVectors& cv,
                                     double lipschitz,
                                     Eigen::Index max_points = kDirectBiasMaxPoints) {
  detail::require(std::isfinite(lipschitz) && lipschitz >= 0.0, "invalid-lipschitz",
                  "Lipschitz constant must be nonnegative");
  const Eigen::Index m = target.size(), n = source.size();
  detail::require(m + n <= max_points, "instance-too-large",
                  "direct bias LP is limited to small instances");
  detail::require(cv.w.size() == m && cv.v.size() == n, "dimension-mismatch",
                  "contrast lengths do not match locations");
  check_mass_balance(cv);

  const Eigen::Index k = m + n;
  Matrix pts(k, target.dim());
  pts.topRows(m) = target.coords;
  pts.bottomRows(n) = source.coords;
  const LocationSet all(pts, target.angular_unit);
  const Matrix d = pairwise_distances(metric, all, all);
  Vector coef(k);
  coef.head(m) = cv.w;
  coef.tail(n) = -cv.v;
  if (k == 1) return 0.0;

  // Anchor g at point 0 and shift h_a = g_a + L d(a, 0) >= 0.
  const Eigen::Index vars = k - 1;
  const Eigen::Index rows = vars * (vars - 1) + vars;
  Matrix a = Matrix::Zero(rows, vars);
  Vector b(rows);
  Eigen::Index r = 0;
  for (Eigen::Index i = 1; i < k; ++i) {
    for (Eigen::Index j = 1; j < k; ++j) {
      if (i == j) continue;
      a(r, i - 1) = 1.0;
      a(r, j - 1) = -1.0;
      b[r] = std::max(0.0, lipschitz * (d(i, j) + d(i, 0) - d(j, 0)));
      ++r;
    }
  }
  for (Eigen::Index i = 1; i < k; ++i) {
    a(r, i - 1) = 1.0;
    b[r] = 2.0 * lipschitz * d(i, 0);
    ++r;
  }
  const Vector c = coef.tail(vars);
  double offset = 0.0;
  for (Eigen::Index i = 1; i < k; ++i) offset += c[i - 1] * lipschitz * d(i, 0);

  const double up = detail::maximize_dense_lp(a, b, c).value - offset;
  const double down = detail::maximize_dense_lp(a, b, -c).value + offset;
  return std::max({0.0, up, down});
}

}  // namespace lipci
