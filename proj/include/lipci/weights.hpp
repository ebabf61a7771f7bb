#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "lipci/dataset.hpp"
#include "lipci/error.hpp"
#include "lipci/geometry.hpp"
#include "lipci/random.hpp"

namespace lipci {

/// Nonnegative M x N matrix with unit row sums mapping source responses to
/// target locations.
using WeightMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// w = e_p^T (X*^T X*)^{-1} X*^T and v = w Psi.
struct ContrastVectors {
  Vector w;
  Vector v;
  Eigen::Index coefficient_index = 0;
};

/// K nearest sources per target with weight 1/K. Exact distance ties at the
/// K-th position are resolved by a uniform draw from the seeded stream.
inline WeightMatrix knn_weights(const Metric& metric, const LocationSet& source,
                                const LocationSet& target, Eigen::Index k,
                                std::uint64_t seed) {
  const Eigen::Index n = source.size();
  const Eigen::Index m = target.size();
  detail::require(n >= 1, "empty-source", "source location set is empty");
  detail::require(m >= 1, "empty-target", "target location set is empty");
  detail::require(k >= 1 && k <= n, "invalid-k", "K must lie in [1, N]");

  const Matrix dist = pairwise_distances(metric, target, source);
  Rng rng(seed);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(m * k));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> tied;

  for (Eigen::Index r = 0; r < m; ++r) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    auto by_dist = [&](Eigen::Index a, Eigen::Index b) {
      const double da = dist(r, a), db = dist(r, b);
      return da < db || (da == db && a < b);
    };
    std::nth_element(order.begin(), order.begin() + (k - 1), order.end(), by_dist);
    const double kth = dist(r, order[static_cast<std::size_t>(k - 1)]);

    Eigen::Index strictly_closer = 0;
    tied.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (dist(r, j) < kth) {
        trip.emplace_back(r, j, 1.0 / static_cast<double>(k));
        ++strictly_closer;
      } else if (dist(r, j) == kth) {
        tied.push_back(j);
      }
    }
    // Partial Fisher-Yates over the tied group.
    const auto need = static_cast<std::size_t>(k - strictly_closer);
    for (std::size_t t = 0; t < need; ++t) {
      const auto pick = t + rng.index(tied.size() - t);
      std::swap(tied[t], tied[pick]);
      trip.emplace_back(r, tied[t], 1.0 / static_cast<double>(k));
    }
  }
  WeightMatrix psi(m, n);
  psi.setFromTriplets(trip.begin(), trip.end());
  psi.makeCompressed();
  return psi;
}

/// One-nearest-neighbour weights: a single 1 per row.
inline WeightMatrix one_nn_weights(const Metric& metric, const LocationSet& source,
                                   const LocationSet& target, std::uint64_t seed) {
  return knn_weights(metric, source, target, 1, seed);
}

inline ContrastVectors contrast_vectors(const Matrix& target_covariates,
                                        const WeightMatrix& psi,
                                        Eigen::Index coefficient_index) {
  const Eigen::Index p = target_covariates.cols();
  detail::require(coefficient_index >= 0 && coefficient_index < p,
                  "invalid-coefficient", "coefficient index out of range");
  detail::require(psi.rows() == target_covariates.rows(), "dimension-mismatch",
                  "Psi must have one row per target");
  const GramSolver gram(target_covariates);
  ContrastVectors out;
  out.coefficient_index = coefficient_index;
  out.w = target_covariates * gram.solve(Vector(Vector::Unit(p, coefficient_index)));
  out.v = psi.transpose() * out.w;
  return out;
}

}  // namespace lipci
