#pragma once

// Weighted projection onto Lipschitz-feasible value vectors:
//
//   min 1/2 sum_i n_i (G_i - Ybar_i)^2   s.t.  |G_a - G_b| <= c_ab  (a < b)
//
// Solved by a primal-dual interior-point method (Mehrotra predictor-corrector)
// over the pairwise constraints. Every constraint row is e_a - e_b, so the
// normal matrix is W plus a weighted graph Laplacian, factored densely.
// Iterates stay primal feasible since the slacks are affine in G.
//
// The polish guesses the active constraints from the ADMM multipliers, keeps
// a spanning forest of them, solves each tree exactly (offsets along the
// tree plus a weighted mean), and recovers multipliers by peeling leaves.
// Any multiplier vector y gives a dual lower bound, so every accepted answer
// carries a primal-dual gap certificate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lipci/error.hpp"

namespace lipci::detail {

struct LipschitzQpOptions {
  int max_iterations = 50000;
  double rel_gap_tol = 1e-6;
  double feas_tol = 1e-8;  // absolute; caller scales by (L * diam + 1)
};

struct LipschitzQpResult {
  std::vector<double> values;  // G per group
  double objective = 0.0;      // 1/2 sum n_i (G_i - Ybar_i)^2
  double dual_bound = 0.0;
  double max_violation = 0.0;
  int iterations = 0;
  bool polished = false;
};

class LipschitzQp {
 public:
  // bound[k] holds c_ab for the k-th pair (a < b) in row-major upper order.
  LipschitzQp(std::vector<double> weights, std::vector<double> targets,
              std::vector<double> bound, LipschitzQpOptions opt)
      : n_(static_cast<int>(weights.size())),
        w_(std::move(weights)),
        ybar_(std::move(targets)),
        c_(std::move(bound)),
        opt_(opt) {
    const std::size_t pairs = static_cast<std::size_t>(n_) * (n_ - 1) / 2;
    if (c_.size() != pairs || ybar_.size() != w_.size())
      throw Error("dimension-mismatch", "QP data sizes disagree");
  }

  LipschitzQpResult solve() {
    if (max_violation(ybar_) <= opt_.feas_tol) return finish(ybar_, {}, 0, true);

    const std::size_t m = c_.size();
    const int n = n_;
    // Strictly feasible start: the weighted mean satisfies every bound with
    // slack c_k > 0.
    double wsum = 0.0, wy = 0.0;
    for (int i = 0; i < n; ++i) {
      wsum += w_[i];
      wy += w_[i] * ybar_[i];
    }
    std::vector<double> g(static_cast<std::size_t>(n), wy / wsum);
    double resid_max = 0.0;
    for (int i = 0; i < n; ++i) resid_max = std::max(resid_max, std::abs(w_[i] * (g[i] - ybar_[i])));
    const double z0 = std::max(resid_max / n, 1e-12);
    std::vector<double> zp(m, z0), zm(m, z0), sp(m), sm(m), dp(m), dm(m);
    std::vector<double> ad(m), dsp_aff(m), dsm_aff(m), dzp_aff(m), dzm_aff(m), rhs_k(m);
    Eigen::MatrixXd h(n, n);
    Eigen::VectorXd rhs(n), dg(n);
    std::vector<double> yv(m);

    std::optional<LipschitzQpResult> best;
    const double deep = std::max(opt_.rel_gap_tol * 1e-4, 1e-14);
    int stall = 0, polish_tries = 0;
    double last_gap = std::numeric_limits<double>::infinity();

    auto slacks = [&] {
      std::size_t k = 0;
      for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b, ++k) {
          const double d = g[a] - g[b];
          sp[k] = std::max(c_[k] - d, 1e-300);
          sm[k] = std::max(c_[k] + d, 1e-300);
        }
    };
    // A^T v for a per-pair vector v.
    auto at = [&](const std::vector<double>& v, Eigen::VectorXd& out) {
      out.setZero();
      std::size_t k = 0;
      for (int a = 0; a < n; ++a) {
        double acc = 0.0;
        for (int b = a + 1; b < n; ++b, ++k) {
          acc += v[k];
          out[b] -= v[k];
        }
        out[a] += acc;
      }
    };
    auto apply_a = [&](const Eigen::VectorXd& x) {
      std::size_t k = 0;
      for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b, ++k) ad[k] = x[a] - x[b];
    };
    auto max_step = [&](const std::vector<double>& v, const std::vector<double>& dv) {
      double alpha = 1.0;
      for (std::size_t k = 0; k < m; ++k)
        if (dv[k] < 0.0) alpha = std::min(alpha, -v[k] / dv[k]);
      return alpha;
    };

    for (int it = 1; it <= opt_.max_iterations; ++it) {
      slacks();
      for (std::size_t k = 0; k < m; ++k) yv[k] = zp[k] - zm[k];
      auto cand = finish(g, yv, it, false);
      const double gap = cand.objective - cand.dual_bound;
      if (cand.max_violation <= opt_.feas_tol && certified(cand)) {
        if (!best || gap < best->objective - best->dual_bound) best = cand;
        if (polish_tries++ < 4)
          if (auto pol = polish(yv, it)) return *pol;
        if (gap <= deep * cand.objective) break;
      }
      if (gap < 0.5 * last_gap) {
        stall = 0;
        last_gap = gap;
      } else if (++stall > 8) {
        break;
      }

      // Normal matrix W + A^T diag(z+/s+ + z-/s-) A.
      h.setZero();
      double mu = 0.0;
      {
        std::size_t k = 0;
        for (int a = 0; a < n; ++a)
          for (int b = a + 1; b < n; ++b, ++k) {
            dp[k] = zp[k] / sp[k];
            dm[k] = zm[k] / sm[k];
            const double om = dp[k] + dm[k];
            h(a, a) += om;
            h(b, b) += om;
            h(b, a) -= om;
            mu += zp[k] * sp[k] + zm[k] * sm[k];
          }
      }
      mu /= 2.0 * static_cast<double>(m);
      for (int i = 0; i < n; ++i) h(i, i) += w_[i];
      Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(h);
      if (llt.info() != Eigen::Success) break;

      // Residual W(G - Ybar) + A^T (z+ - z-).
      Eigen::VectorXd rd(n);
      at(yv, rd);
      for (int i = 0; i < n; ++i) rd[i] += w_[i] * (g[i] - ybar_[i]);

      // Solve with per-pair complementarity targets t+/t-.
      auto direction = [&](const std::vector<double>& tp, const std::vector<double>& tm,
                           std::vector<double>& dsp, std::vector<double>& dsm,
                           std::vector<double>& dzp, std::vector<double>& dzm) {
        for (std::size_t k = 0; k < m; ++k)
          rhs_k[k] = (tp[k] / sp[k] - zp[k]) - (tm[k] / sm[k] - zm[k]);
        at(rhs_k, rhs);
        rhs = -rd - rhs;
        dg = llt.solve(rhs);
        apply_a(dg);
        for (std::size_t k = 0; k < m; ++k) {
          dsp[k] = -ad[k];
          dsm[k] = ad[k];
          dzp[k] = tp[k] / sp[k] - zp[k] + dp[k] * ad[k];
          dzm[k] = tm[k] / sm[k] - zm[k] - dm[k] * ad[k];
        }
      };

      std::vector<double> zero(m, 0.0);
      direction(zero, zero, dsp_aff, dsm_aff, dzp_aff, dzm_aff);
      const double ap = std::min(max_step(sp, dsp_aff), max_step(sm, dsm_aff));
      const double az = std::min(max_step(zp, dzp_aff), max_step(zm, dzm_aff));
      const double aa = std::min(ap, az);
      double mu_aff = 0.0;
      for (std::size_t k = 0; k < m; ++k)
        mu_aff += (sp[k] + aa * dsp_aff[k]) * (zp[k] + aa * dzp_aff[k]) +
                  (sm[k] + aa * dsm_aff[k]) * (zm[k] + aa * dzm_aff[k]);
      mu_aff /= 2.0 * static_cast<double>(m);
      const double sig = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

      std::vector<double> tp(m), tm(m), dsp(m), dsm(m), dzp(m), dzm(m);
      for (std::size_t k = 0; k < m; ++k) {
        tp[k] = sig * mu - dsp_aff[k] * dzp_aff[k];
        tm[k] = sig * mu - dsm_aff[k] * dzm_aff[k];
      }
      direction(tp, tm, dsp, dsm, dzp, dzm);
      const double amax = std::min({max_step(sp, dsp), max_step(sm, dsm), max_step(zp, dzp),
                                    max_step(zm, dzm)});
      const double alpha = std::min(1.0, 0.995 * amax);
      for (int i = 0; i < n; ++i) g[i] += alpha * dg[i];
      for (std::size_t k = 0; k < m; ++k) {
        zp[k] = std::max(zp[k] + alpha * dzp[k], 1e-300);
        zm[k] = std::max(zm[k] + alpha * dzm[k], 1e-300);
      }
    }
    if (best) return *best;
    throw Error("qp-nonconvergence",
                "Lipschitz QP did not certify within " +
                    std::to_string(opt_.max_iterations) + " iterations");
  }

  double max_violation(const std::vector<double>& g) const {
    double worst = 0.0;
    std::size_t k = 0;
    for (int a = 0; a < n_; ++a)
      for (int b = a + 1; b < n_; ++b, ++k)
        worst = std::max(worst, std::abs(g[a] - g[b]) - c_[k]);
    return worst;
  }

 private:
  std::size_t pair_index(int a, int b) const {
    // a < b
    return static_cast<std::size_t>(a) * (2 * n_ - a - 1) / 2 + (b - a - 1);
  }

  double primal(const std::vector<double>& g) const {
    double acc = 0.0;
    for (int i = 0; i < n_; ++i) acc += 0.5 * w_[i] * (g[i] - ybar_[i]) * (g[i] - ybar_[i]);
    return acc;
  }

  // D(y) = -1/2 sum (A^T y)_i^2 / n_i + sum_k y_k (ybar_a - ybar_b) - sum c_k |y_k|
  double dual(const std::vector<double>& y) const {
    if (y.empty()) return 0.0;
    std::vector<double> aty(n_, 0.0);
    double lin = 0.0;
    std::size_t k = 0;
    for (int a = 0; a < n_; ++a)
      for (int b = a + 1; b < n_; ++b, ++k) {
        if (y[k] == 0.0) continue;
        aty[a] += y[k];
        aty[b] -= y[k];
        lin += y[k] * (ybar_[a] - ybar_[b]) - c_[k] * std::abs(y[k]);
      }
    double quad = 0.0;
    for (int i = 0; i < n_; ++i) quad += aty[i] * aty[i] / w_[i];
    return lin - 0.5 * quad;
  }

  bool certified(const LipschitzQpResult& r) const {
    const double gap = r.objective - r.dual_bound;
    double scale = 0.0;
    for (int i = 0; i < n_; ++i) scale += w_[i] * ybar_[i] * ybar_[i];
    return gap <= opt_.rel_gap_tol * r.objective + 1e-15 * (scale + 1.0);
  }

  LipschitzQpResult finish(std::vector<double> g, const std::vector<double>& y,
                           int iterations, bool polished) const {
    LipschitzQpResult r;
    r.objective = primal(g);
    r.dual_bound = y.empty() ? r.objective : dual(y);
    r.max_violation = std::max(0.0, max_violation(g));
    r.iterations = iterations;
    r.polished = polished;
    r.values = std::move(g);
    return r;
  }

  struct Edge {
    int hi, lo;  // G_hi - G_lo = c
    std::size_t k;
    double strength;
  };

  std::optional<LipschitzQpResult> polish(const std::vector<double>& y, int it) const {
    double ymax = 0.0;
    for (double v : y) ymax = std::max(ymax, std::abs(v));
    if (ymax == 0.0) return std::nullopt;
    const double thresh = 1e-7 * ymax;

    std::vector<Edge> edges;
    {
      std::size_t k = 0;
      for (int a = 0; a < n_; ++a)
        for (int b = a + 1; b < n_; ++b, ++k) {
          if (y[k] > thresh) edges.push_back({a, b, k, y[k]});
          else if (y[k] < -thresh) edges.push_back({b, a, k, -y[k]});
        }
    }

    for (int round = 0; round < 40; ++round) {
      std::sort(edges.begin(), edges.end(),
                [](const Edge& p, const Edge& q) { return p.strength > q.strength; });
      // Spanning forest of the active edges.
      std::vector<int> uf(n_);
      std::iota(uf.begin(), uf.end(), 0);
      auto find = [&](int u) {
        while (uf[u] != u) u = uf[u] = uf[uf[u]];
        return u;
      };
      std::vector<std::vector<int>> adj(n_);  // indices into edges
      std::vector<char> in_tree(edges.size(), 0);
      for (std::size_t e = 0; e < edges.size(); ++e) {
        const int ru = find(edges[e].hi), rv = find(edges[e].lo);
        if (ru == rv) continue;
        uf[ru] = rv;
        in_tree[e] = 1;
        adj[edges[e].hi].push_back(static_cast<int>(e));
        adj[edges[e].lo].push_back(static_cast<int>(e));
      }

      // Offsets along each tree, then the weighted mean fixes the level.
      std::vector<double> g(n_), offset(n_, 0.0);
      std::vector<int> parent_edge(n_, -1), order;
      std::vector<char> seen(n_, 0);
      order.reserve(n_);
      for (int r = 0; r < n_; ++r) {
        if (seen[r]) continue;
        const std::size_t start = order.size();
        seen[r] = 1;
        order.push_back(r);
        for (std::size_t h = start; h < order.size(); ++h) {
          const int u = order[h];
          for (int e : adj[u]) {
            const Edge& ed = edges[static_cast<std::size_t>(e)];
            const int v = ed.hi == u ? ed.lo : ed.hi;
            if (seen[v]) continue;
            seen[v] = 1;
            parent_edge[v] = e;
            offset[v] = ed.hi == u ? offset[u] - c_[ed.k] : offset[u] + c_[ed.k];
            order.push_back(v);
          }
        }
        double num = 0.0, den = 0.0;
        for (std::size_t h = start; h < order.size(); ++h) {
          const int u = order[h];
          num += w_[u] * (ybar_[u] - offset[u]);
          den += w_[u];
        }
        const double level = num / den;
        for (std::size_t h = start; h < order.size(); ++h) g[order[h]] = level + offset[order[h]];
      }

      // Multipliers by leaf peeling: node residual n_i (ybar_i - G_i) must
      // equal the net multiplier flow (+lambda at hi, -lambda at lo).
      std::vector<double> resid(n_), lambda(edges.size(), 0.0);
      for (int i = 0; i < n_; ++i) resid[i] = w_[i] * (ybar_[i] - g[i]);
      for (auto h = order.size(); h-- > 0;) {
        const int u = order[h];
        const int e = parent_edge[u];
        if (e < 0) continue;
        const Edge& ed = edges[static_cast<std::size_t>(e)];
        const double lam = ed.hi == u ? resid[u] : -resid[u];
        lambda[static_cast<std::size_t>(e)] = lam;
        const int other = ed.hi == u ? ed.lo : ed.hi;
        resid[other] -= ed.hi == other ? lam : -lam;
      }

      double lam_scale = 0.0;
      for (double l : lambda) lam_scale = std::max(lam_scale, std::abs(l));
      const double lam_tol = 1e-12 * std::max(1.0, lam_scale);
      bool dropped = false;
      std::vector<Edge> kept;
      kept.reserve(edges.size());
      for (std::size_t e = 0; e < edges.size(); ++e) {
        if (in_tree[e] && lambda[e] < -lam_tol) {
          dropped = true;
          continue;
        }
        if (!in_tree[e]) continue;
        Edge ed = edges[e];
        ed.strength = std::max(lambda[e], 0.0) + 1e-300;
        kept.push_back(ed);
      }
      if (dropped) {
        edges = std::move(kept);
        continue;
      }

      // Primal feasibility over all pairs; add the worst violators.
      std::vector<std::pair<double, Edge>> viol;
      {
        std::size_t k = 0;
        for (int a = 0; a < n_; ++a)
          for (int b = a + 1; b < n_; ++b, ++k) {
            const double d = g[a] - g[b];
            const double v = std::abs(d) - c_[k];
            if (v > opt_.feas_tol)
              viol.push_back({v, d > 0 ? Edge{a, b, k, 0.0} : Edge{b, a, k, 0.0}});
          }
      }
      if (viol.empty()) {
        std::vector<double> ysig(c_.size(), 0.0);
        for (std::size_t e = 0; e < edges.size(); ++e) {
          if (!in_tree[e]) continue;
          const Edge& ed = edges[e];
          ysig[ed.k] = ed.hi < ed.lo ? lambda[e] : -lambda[e];
        }
        auto r = finish(std::move(g), ysig, it, true);
        if (certified(r)) return r;
        return std::nullopt;
      }
      std::sort(viol.begin(), viol.end(),
                [](const auto& p, const auto& q) { return p.first > q.first; });
      const std::size_t add = std::min<std::size_t>(viol.size(), 16);
      edges = std::move(kept);
      bool merged = false;
      for (std::size_t i = 0; i < add; ++i) {
        Edge ed = viol[i].second;
        if (find(ed.hi) != find(ed.lo)) merged = true;
        ed.strength = 0.0;
        edges.push_back(ed);
      }
      if (!merged) return std::nullopt;  // violators inside one tree
    }
    return std::nullopt;
  }

  int n_;
  std::vector<double> w_, ybar_, c_;
  LipschitzQpOptions opt_;
};

}  // namespace lipci::detail
