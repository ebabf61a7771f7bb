#pragma once

// Primal network simplex for the dense transportation problem
//
//   min sum_ij C_ij f_ij   s.t.  sum_j f_ij = a_i,  sum_i f_ij = b_j,  f >= 0
//
// on the complete bipartite graph plus an artificial root. The spanning tree
// is kept strongly feasible (the leaving-arc rule below), which rules out
// cycling on degenerate pivots. Tree bookkeeping is rebuilt by a BFS after
// every pivot: O(nodes) per pivot, fine for the few hundred atoms the bias
// bound produces.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lipci/error.hpp"

namespace lipci::detail {

struct TransportSolution {
  double cost = 0.0;
  double dual_objective = 0.0;  // sum a_i alpha_i + sum b_j beta_j
  struct Entry {
    int source;
    int target;
    double mass;
  };
  std::vector<Entry> coupling;  // nonzero flows only
  Eigen::VectorXd alpha;        // source potentials
  Eigen::VectorXd beta;         // target potentials
  std::int64_t pivots = 0;
};

class NetworkSimplex {
 public:
  NetworkSimplex(const Eigen::MatrixXd& cost, const Eigen::VectorXd& supply,
                 const Eigen::VectorXd& demand)
      : c_(cost),
        n1_(static_cast<int>(supply.size())),
        n2_(static_cast<int>(demand.size())) {
    require(cost.rows() == n1_ && cost.cols() == n2_, "dimension-mismatch",
            "cost matrix does not match marginals");
    require(n1_ >= 1 && n2_ >= 1, "empty-support", "empty marginal");
    nodes_ = n1_ + n2_;
    root_ = nodes_;
    real_arcs_ = static_cast<std::int64_t>(n1_) * n2_;

    supply_.resize(nodes_);
    for (int i = 0; i < n1_; ++i) supply_[i] = supply[i];
    for (int j = 0; j < n2_; ++j) supply_[n1_ + j] = -demand[j];

    max_cost_ = std::max(0.0, cost.maxCoeff());
    art_cost_ = (max_cost_ + 1.0) * static_cast<double>(nodes_ + 1);
    eps_ = 1e-12 * (max_cost_ + 1.0);

    const auto total = real_arcs_ + nodes_;
    flow_.assign(static_cast<std::size_t>(total), 0.0);
    state_.assign(static_cast<std::size_t>(total), kLower);
    art_src_.resize(nodes_);
    art_tgt_.resize(nodes_);
    art_cost_of_.resize(nodes_);

    tree_arcs_.reserve(nodes_);
    for (int u = 0; u < nodes_; ++u) {
      const std::int64_t e = real_arcs_ + u;
      if (supply_[u] >= 0.0) {
        art_src_[u] = u;
        art_tgt_[u] = root_;
        art_cost_of_[u] = 0.0;
        flow_[e] = supply_[u];
      } else {
        art_src_[u] = root_;
        art_tgt_[u] = u;
        art_cost_of_[u] = art_cost_;
        flow_[e] = -supply_[u];
      }
      state_[e] = kTree;
      tree_arcs_.push_back(e);
    }
    parent_.assign(nodes_ + 1, -1);
    pred_.assign(nodes_ + 1, -1);
    dir_.assign(nodes_ + 1, 0);
    depth_.assign(nodes_ + 1, 0);
    pi_.assign(nodes_ + 1, 0.0);
    adj_.resize(nodes_ + 1);
    rebuild_tree();

    block_ = std::max<std::int64_t>(
        10, static_cast<std::int64_t>(std::sqrt(static_cast<double>(real_arcs_))));
  }

  TransportSolution solve(std::int64_t max_pivots = -1) {
    if (max_pivots < 0) max_pivots = 50 * (real_arcs_ + nodes_) + 1000;
    TransportSolution out;
    std::int64_t in_arc;
    while (find_entering(in_arc)) {
      require(++out.pivots <= max_pivots, "transport-nonconvergence",
              "network simplex exceeded its pivot cap");
      pivot(in_arc);
    }

    double total = 0.0, art = 0.0;
    for (int u = 0; u < nodes_; ++u) {
      total += std::abs(supply_[u]);
      art += flow_[real_arcs_ + u];
    }
    require(art <= 1e-9 * std::max(1.0, total), "transport-infeasible",
            "artificial arcs carry flow at optimum (marginals unbalanced)");

    out.alpha.resize(n1_);
    out.beta.resize(n2_);
    for (int i = 0; i < n1_; ++i) out.alpha[i] = -pi_[i];
    for (int j = 0; j < n2_; ++j) out.beta[j] = pi_[n1_ + j];
    // Shift potentials so the dual objective is computed on a common scale.
    const double shift = out.alpha.minCoeff();
    out.alpha.array() -= shift;
    out.beta.array() += shift;

    for (std::int64_t e = 0; e < real_arcs_; ++e) {
      const double f = flow_[e];
      if (f > 0.0) {
        const int i = static_cast<int>(e / n2_), j = static_cast<int>(e % n2_);
        out.cost += f * c_(i, j);
        out.coupling.push_back({i, j, f});
      }
    }
    for (int i = 0; i < n1_; ++i) out.dual_objective += supply_[i] * out.alpha[i];
    for (int j = 0; j < n2_; ++j) out.dual_objective += -supply_[n1_ + j] * out.beta[j];
    return out;
  }

 private:
  static constexpr int kTree = 0;
  static constexpr int kLower = 1;
  static constexpr int kUp = 1;    // node is the source of its pred arc
  static constexpr int kDown = -1;

  int src(std::int64_t e) const {
    return e < real_arcs_ ? static_cast<int>(e / n2_) : art_src_[e - real_arcs_];
  }
  int tgt(std::int64_t e) const {
    return e < real_arcs_ ? n1_ + static_cast<int>(e % n2_)
                          : art_tgt_[e - real_arcs_];
  }
  double cost(std::int64_t e) const {
    return e < real_arcs_ ? c_(static_cast<int>(e / n2_), static_cast<int>(e % n2_))
                          : art_cost_of_[e - real_arcs_];
  }
  double reduced(std::int64_t e) const {
    return cost(e) + pi_[src(e)] - pi_[tgt(e)];
  }

  void rebuild_tree() {
    for (auto& a : adj_) a.clear();
    for (auto e : tree_arcs_) {
      adj_[src(e)].push_back(e);
      adj_[tgt(e)].push_back(e);
    }
    bfs_.clear();
    bfs_.push_back(root_);
    parent_[root_] = -1;
    pred_[root_] = -1;
    depth_[root_] = 0;
    pi_[root_] = 0.0;
    for (std::size_t h = 0; h < bfs_.size(); ++h) {
      const int u = bfs_[h];
      for (auto e : adj_[u]) {
        if (e == pred_[u]) continue;
        const int s = src(e), t = tgt(e);
        const int child = s == u ? t : s;
        parent_[child] = u;
        pred_[child] = e;
        depth_[child] = depth_[u] + 1;
        if (child == s) {
          dir_[child] = kUp;
          pi_[child] = pi_[u] - cost(e);
        } else {
          dir_[child] = kDown;
          pi_[child] = pi_[u] + cost(e);
        }
        bfs_.push_back(child);
      }
    }
    require(static_cast<int>(bfs_.size()) == nodes_ + 1, "transport-internal",
            "spanning tree lost connectivity");
  }

  // Block pricing: scan arcs cyclically, return the most negative reduced
  // cost within the first block that contains a candidate.
  bool find_entering(std::int64_t& in_arc) {
    double best = 0.0;
    std::int64_t cnt = block_;
    std::int64_t e = next_arc_;
    for (std::int64_t k = 0; k < real_arcs_; ++k) {
      if (state_[e] != kTree) {
        const double rc = reduced(e);
        if (rc < best) {
          best = rc;
          in_arc = e;
        }
      }
      if (++e == real_arcs_) e = 0;
      if (--cnt == 0) {
        if (best < -eps_) {
          next_arc_ = e;
          return true;
        }
        cnt = block_;
      }
    }
    if (best < -eps_) {
      next_arc_ = e;
      return true;
    }
    return false;
  }

  void pivot(std::int64_t in_arc) {
    const int first = src(in_arc), second = tgt(in_arc);
    int u = first, v = second;
    while (u != v) {
      if (depth_[u] > depth_[v]) {
        u = parent_[u];
      } else if (depth_[v] > depth_[u]) {
        v = parent_[v];
      } else {
        u = parent_[u];
        v = parent_[v];
      }
    }
    const int join = u;

    const double inf = std::numeric_limits<double>::infinity();
    double delta = inf;
    int u_out = -1;
    for (int w = first; w != join; w = parent_[w]) {
      const double d = dir_[w] == kUp ? flow_[pred_[w]] : inf;
      if (d < delta) {
        delta = d;
        u_out = w;
      }
    }
    for (int w = second; w != join; w = parent_[w]) {
      const double d = dir_[w] == kDown ? flow_[pred_[w]] : inf;
      if (d <= delta) {
        delta = d;
        u_out = w;
      }
    }
    require(u_out >= 0 && delta < inf, "transport-internal",
            "unbounded pivot in transportation problem");

    if (delta > 0.0) {
      flow_[in_arc] += delta;
      for (int w = first; w != join; w = parent_[w]) flow_[pred_[w]] -= dir_[w] * delta;
      for (int w = second; w != join; w = parent_[w]) flow_[pred_[w]] += dir_[w] * delta;
    }
    const std::int64_t out_arc = pred_[u_out];
    flow_[out_arc] = 0.0;
    state_[out_arc] = kLower;
    state_[in_arc] = kTree;
    *std::find(tree_arcs_.begin(), tree_arcs_.end(), out_arc) = in_arc;
    rebuild_tree();
  }

  static void require(bool ok, const char* code, const std::string& msg) {
    if (!ok) throw Error(code, msg);
  }

  const Eigen::MatrixXd& c_;
  int n1_, n2_, nodes_, root_;
  std::int64_t real_arcs_;
  double max_cost_, art_cost_, eps_;
  std::vector<double> supply_;
  std::vector<double> flow_;
  std::vector<std::int8_t> state_;
  std::vector<int> art_src_, art_tgt_;
  std::vector<double> art_cost_of_;
  std::vector<std::int64_t> tree_arcs_;
  std::vector<int> parent_, dir_, depth_, bfs_;
  std::vector<std::int64_t> pred_;
  std::vector<double> pi_;
  std::vector<std::vector<std::int64_t>> adj_;
  std::int64_t block_ = 10;
  std::int64_t next_arc_ = 0;
};

}  // namespace lipci::detail
