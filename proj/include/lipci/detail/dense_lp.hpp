#pragma once

// Small dense tableau simplex for  max c^T x  s.t.  A x <= b, x >= 0, b >= 0.
// The origin is feasible, so no phase one is needed. Bland's rule keeps it
// finite on degenerate problems. Meant for oracle-sized instances only.

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "lipci/error.hpp"

namespace lipci::detail {

struct DenseLpResult {
  double value = 0.0;
  Eigen::VectorXd x;
};

inline DenseLpResult maximize_dense_lp(const Eigen::MatrixXd& a,
                                       const Eigen::VectorXd& b,
                                       const Eigen::VectorXd& c,
                                       double tol = 1e-12) {
  const Eigen::Index m = a.rows(), n = a.cols();
  require(b.size() == m && c.size() == n, "dimension-mismatch",
          "LP dimensions disagree");
  require((b.array() >= 0.0).all(), "lp-infeasible-start",
          "dense LP needs b >= 0");

  // Tableau: m constraint rows + objective row; n structural + m slack cols.
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m + 1, n + m + 1);
  t.topLeftCorner(m, n) = a;
  t.block(0, n, m, m).setIdentity();
  t.topRightCorner(m, 1) = b;
  t.bottomLeftCorner(1, n) = -c.transpose();
  Eigen::VectorXi basis(m);
  for (Eigen::Index i = 0; i < m; ++i) basis[i] = static_cast<int>(n + i);

  const Eigen::Index rhs = n + m;
  const Eigen::Index max_iter = 100 * (n + m) + 1000;
  for (Eigen::Index iter = 0;; ++iter) {
    require(iter < max_iter, "lp-nonconvergence", "dense LP iteration cap");
    Eigen::Index enter = -1;
    for (Eigen::Index j = 0; j < n + m; ++j) {
      if (t(m, j) < -tol) {
        enter = j;
        break;
      }
    }
    if (enter < 0) break;

    Eigen::Index leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < m; ++i) {
      if (t(i, enter) > tol) {
        const double ratio = t(i, rhs) / t(i, enter);
        if (ratio < best - tol ||
            (std::abs(ratio - best) <= tol && leave >= 0 && basis[i] < basis[leave])) {
          best = ratio;
          leave = i;
        }
      }
    }
    require(leave >= 0, "lp-unbounded", "dense LP is unbounded");

    t.row(leave) /= t(leave, enter);
    for (Eigen::Index i = 0; i <= m; ++i) {
      if (i != leave && t(i, enter) != 0.0) t.row(i) -= t(i, enter) * t.row(leave);
    }
    basis[leave] = static_cast<int>(enter);
  }

  DenseLpResult out;
  out.x = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i)
    if (basis[i] < n) out.x[basis[i]] = t(i, rhs);
  out.value = c.dot(out.x);
  return out;
}

}  // namespace lipci::detail
