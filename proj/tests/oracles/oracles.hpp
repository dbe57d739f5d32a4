#pragma once

// Independent reference computations used by the tests. Deliberately naive:
// nothing here calls into the library except for plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <random>
#include <utility>
#include <vector>

#include "gnn_esr/graph.hpp"

namespace oracle {

using gnn_esr::Index;
using gnn_esr::Matrix;

inline constexpr Index kUnreachable = std::numeric_limits<Index>::max();

/// Shortest-path hop counts from `source` over an explicit edge list.
inline std::vector<Index> bfs_distances(Index n, const std::vector<gnn_esr::Edge>& edges, Index source) {
  std::vector<std::vector<Index>> adj(n);
  for (auto [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<Index> dist(n, kUnreachable);
  std::queue<Index> q;
  dist[source] = 0;
  q.push(source);
  while (!q.empty()) {
    Index u = q.front();
    q.pop();
    for (Index v : adj[u])
      if (dist[v] == kUnreachable) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
  }
  return dist;
}

inline double euclid(const Matrix& e, Index a, Index b) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < e.cols(); ++c) {
    const double d = e(static_cast<Eigen::Index>(a), c) - e(static_cast<Eigen::Index>(b), c);
    s += d * d;
  }
  return std::sqrt(s);
}

/// max over rows of the distance to the nearest center.
inline double covering_radius(const Matrix& e, const std::vector<Index>& centers) {
  double worst = 0.0;
  for (Index k = 0; k < static_cast<Index>(e.rows()); ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (Index c : centers) best = std::min(best, euclid(e, k, c));
    worst = std::max(worst, best);
  }
  return worst;
}

/// Sum over rows of the distance to the nearest center.
inline double coverage_sum(const Matrix& e, const std::vector<Index>& centers) {
  double total = 0.0;
  for (Index k = 0; k < static_cast<Index>(e.rows()); ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (Index c : centers) best = std::min(best, euclid(e, k, c));
    total += best;
  }
  return total;
}

/// Calls fn(subset) for every m-subset of {0..n-1}, in lexicographic order.
template <typename Fn>
void for_each_subset(Index n, Index m, Fn&& fn) {
  std::vector<Index> pick(m);
  for (Index i = 0; i < m; ++i) pick[i] = i;
  while (true) {
    fn(pick);
    Index i = m;
    while (i > 0 && pick[i - 1] == n - m + (i - 1)) --i;
    if (i == 0) return;
    ++pick[i - 1];
    for (Index j = i; j < m; ++j) pick[j] = pick[j - 1] + 1;
  }
}

/// Optimal k-center radius by enumerating every m-subset of rows as centers.
inline double brute_force_k_center(const Matrix& e, Index m) {
  double best = std::numeric_limits<double>::infinity();
  for_each_subset(static_cast<Index>(e.rows()), m,
                  [&](const std::vector<Index>& s) { best = std::min(best, covering_radius(e, s)); });
  return best;
}

/// Best 2-means partition of the rows: Lloyd iterations from every pair of
/// distinct rows as initial centers, keeping the lowest within-cluster sum of
/// squares. Returns a 0/1 assignment per row.
inline std::vector<int> two_means(const Matrix& e) {
  const auto n = e.rows();
  std::vector<int> best_assign(static_cast<std::size_t>(n), 0);
  double best_cost = std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a + 1; b < n; ++b) {
      Eigen::RowVectorXd c0 = e.row(a), c1 = e.row(b);
      std::vector<int> assign(static_cast<std::size_t>(n), -1);
      for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (Eigen::Index r = 0; r < n; ++r) {
          const int k = (e.row(r) - c0).squaredNorm() <= (e.row(r) - c1).squaredNorm() ? 0 : 1;
          if (assign[static_cast<std::size_t>(r)] != k) {
            assign[static_cast<std::size_t>(r)] = k;
            changed = true;
          }
        }
        if (!changed) break;
        Eigen::RowVectorXd s0 = Eigen::RowVectorXd::Zero(e.cols()), s1 = s0;
        double n0 = 0, n1 = 0;
        for (Eigen::Index r = 0; r < n; ++r) {
          if (assign[static_cast<std::size_t>(r)] == 0) {
            s0 += e.row(r);
            ++n0;
          } else {
            s1 += e.row(r);
            ++n1;
          }
        }
        if (n0 > 0) c0 = s0 / n0;
        if (n1 > 0) c1 = s1 / n1;
      }
      double cost = 0.0;
      for (Eigen::Index r = 0; r < n; ++r)
        cost += (e.row(r) - (assign[static_cast<std::size_t>(r)] == 0 ? c0 : c1)).squaredNorm();
      if (cost < best_cost) {
        best_cost = cost;
        best_assign = assign;
      }
    }
  return best_assign;
}

/// Fraction of rows on which a 0/1 clustering agrees with a 0/1 truth, up to
/// swapping the two cluster names.
inline double binary_agreement(const std::vector<int>& predicted, const std::vector<int>& truth) {
  Index same = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) same += predicted[i] == truth[i];
  const Index n = truth.size();
  return static_cast<double>(std::max(same, n - same)) / static_cast<double>(n);
}

/// Index of the largest entry; lowest index on ties.
inline int argmax_row(const Matrix& m, Eigen::Index r) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c)
    if (m(r, c) > m(r, best)) best = c;
  return static_cast<int>(best);
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

/// Erdos-Renyi edge list with edge probability p.
inline std::vector<gnn_esr::Edge> random_edges(Index n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  std::vector<gnn_esr::Edge> edges;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (coin(rng)) edges.emplace_back(i, j);
  return edges;
}

}  // namespace oracle
