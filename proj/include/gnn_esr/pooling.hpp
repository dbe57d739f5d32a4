#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "gnn_esr/autodiff.hpp"
#include "gnn_esr/graph.hpp"
#include "gnn_esr/random.hpp"

namespace gnn_esr {

/// Ordered, distinct node indices chosen by node sampling.
struct SampleSet {
  std::vector<Index> indices;

  Index size() const { return indices.size(); }

  void validate(Index n) const {
    if (indices.empty() || indices.size() > n) throw std::invalid_argument("sample set: size must be in [1, n]");
    std::vector<bool> seen(n, false);
    for (Index i : indices) {
      if (i >= n) throw std::invalid_argument("sample set: index " + std::to_string(i) + " out of range");
      if (seen[i]) throw std::invalid_argument("sample set: duplicate index " + std::to_string(i));
      seen[i] = true;
    }
  }

  std::vector<Eigen::Index> as_rows(Eigen::Index offset = 0) const {
    std::vector<Eigen::Index> r;
    r.reserve(indices.size());
    for (Index i : indices) r.push_back(offset + static_cast<Eigen::Index>(i));
    return r;
  }
};

struct PoolingConfig {
  /// Weight of the row-sampled features in the convex combination.
  double lambda = 0.5;
  /// Sampled nodes within this graph distance stay connected.
  Index reach_radius = 3;
  double p_norm = 2.0;

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("pooling: lambda must be in [0, 1]");
    if (reach_radius < 1) throw std::invalid_argument("pooling: reach radius must be >= 1");
    if (!(p_norm >= 1.0)) throw std::invalid_argument("pooling: p must be >= 1");
  }
};

/// min(n, min(30, max(5, floor(n / 4))))
inline Index sample_count(Index n) { return std::min(n, std::min<Index>(30, std::max<Index>(5, n / 4))); }

inline double p_distance(const Matrix& e, Index a, Index b, double p) {
  auto diff = (e.row(static_cast<Eigen::Index>(a)) - e.row(static_cast<Eigen::Index>(b))).array().abs();
  if (p == 2.0) return std::sqrt(diff.square().sum());
  if (p == 1.0) return diff.sum();
  return std::pow(diff.pow(p).sum(), 1.0 / p);
}

/// Sum over all rows of the distance to the nearest sampled row.
inline double coverage_objective(const Matrix& e, const SampleSet& s, double p = 2.0) {
  if (s.indices.empty()) throw std::invalid_argument("coverage_objective: empty sample set");
  const auto n = static_cast<Index>(e.rows());
  s.validate(n);
  double total = 0.0;
  for (Index k = 0; k < n; ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (Index i : s.indices) best = std::min(best, p_distance(e, k, i, p));
    total += best;
  }
  return total;
}

/// Greedy farthest-point sampling from a fixed first index: each step appends
/// the row with the largest Euclidean distance to its nearest chosen row,
/// lowest index on ties, until m rows are chosen.
inline SampleSet farthest_point_sampling_from(const Matrix& e, Index m, Index first) {
  const auto n = static_cast<Index>(e.rows());
  if (m < 1 || m > n)
    throw std::invalid_argument("farthest_point_sampling: m = " + std::to_string(m) + " outside [1, " +
                                std::to_string(n) + "]");
  if (first >= n) throw std::invalid_argument("farthest_point_sampling: first index out of range");
  SampleSet s;
  s.indices.reserve(m);
  s.indices.push_back(first);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);
  chosen[first] = true;
  Index last = first;
  while (s.indices.size() < m) {
    Index best = n;
    double best_dist = -1.0;
    for (Index t = 0; t < n; ++t) {
      nearest[t] = std::min(nearest[t], p_distance(e, t, last, 2.0));
      if (!chosen[t] && nearest[t] > best_dist) {
        best_dist = nearest[t];
        best = t;
      }
    }
    chosen[best] = true;
    s.indices.push_back(best);
    last = best;
  }
  return s;
}

/// Farthest-point sampling with the first index drawn uniformly from `seed`.
inline SampleSet farthest_point_sampling(const Matrix& e, Index m, std::uint64_t seed) {
  const auto n = static_cast<Index>(e.rows());
  if (m < 1 || m > n)
    throw std::invalid_argument("farthest_point_sampling: m = " + std::to_string(m) + " outside [1, " +
                                std::to_string(n) + "]");
  Rng rng(seed);
  return farthest_point_sampling_from(e, m, uniform_index(rng, n));
}

/// Method 1: X_s = rows of X at the sampled indices.
inline ad::Var downsample_features_method1(ad::Tape& t, ad::Var x, const SampleSet& s) {
  s.validate(static_cast<Index>(t.value(x).rows()));
  return ad::gather_rows(t, x, s.as_rows());
}

/// Attention assignments Q (m x n): row i is softmax(X p_i^T) with pivots
/// P = rows of X at the sampled indices.
inline ad::Var attention_assignments(ad::Tape& t, ad::Var x, const SampleSet& s) {
  ad::Var pivots = downsample_features_method1(t, x, s);
  return ad::row_softmax(t, ad::matmul_nt(t, pivots, x));
}

/// Method 2: X_s row i = q_i^T X.
inline ad::Var downsample_features_method2(ad::Tape& t, ad::Var x, const SampleSet& s) {
  return ad::matmul(t, attention_assignments(t, x, s), x);
}

/// lambda * X1 + (1 - lambda) * X2
inline ad::Var combine_features(ad::Tape& t, ad::Var x1, ad::Var x2, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("combine_features: lambda must be in [0, 1]");
  const auto& a = t.value(x1);
  const auto& b = t.value(x2);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ad::ShapeError("combine_features: shapes differ");
  return ad::add(t, ad::scale(t, x1, lambda), ad::scale(t, x2, 1.0 - lambda));
}

/// Adjacency of the pooled graph: sampled nodes are joined when their distance
/// in g is at most `radius`.
inline Graph downsample_adjacency(const Graph& g, const SampleSet& s, Index radius) {
  s.validate(g.num_nodes());
  return induced_subgraph(reachability_adjacency(g, radius), s.indices);
}

}  // namespace gnn_esr
