#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gnn_esr/types.hpp"

namespace gnn_esr {

/// Undirected, unweighted simple graph with optional categorical node labels.
///
/// Adjacency is kept as sorted neighbor lists; every edge appears in both
/// endpoint lists. Instances are immutable once built by build_graph().
class Graph {
 public:
  Graph() = default;

  Index num_nodes() const { return adjacency_.size(); }
  Index num_edges() const { return num_edges_; }

  std::span<const Index> neighbors(Index v) const { return adjacency_.at(v); }
  Index degree(Index v) const { return adjacency_.at(v).size(); }

  bool has_edge(Index u, Index v) const {
    if (u >= num_nodes() || v >= num_nodes()) return false;
    const auto& nb = adjacency_[u];
    return std::binary_search(nb.begin(), nb.end(), v);
  }

  bool has_labels() const { return labels_.has_value(); }
  const std::optional<std::vector<Label>>& node_labels() const { return labels_; }

  /// Each undirected edge once, as (i, j) with i < j, sorted lexicographically.
  std::vector<Edge> edge_list() const {
    std::vector<Edge> out;
    out.reserve(num_edges_);
    for (Index i = 0; i < adjacency_.size(); ++i)
      for (Index j : adjacency_[i])
        if (i < j) out.emplace_back(i, j);
    return out;
  }

  bool operator==(const Graph&) const = default;

 private:
  friend Graph build_graph(Index, std::span<const Edge>, std::optional<std::vector<Label>>);

  std::vector<std::vector<Index>> adjacency_;
  Index num_edges_ = 0;
  std::optional<std::vector<Label>> labels_;
};

/// Validates and canonicalizes an edge list. Duplicates and reversed copies of
/// an edge collapse into one undirected edge.
inline Graph build_graph(Index n, std::span<const Edge> edges,
                         std::optional<std::vector<Label>> node_labels = std::nullopt) {
  if (node_labels && node_labels->size() != n)
    throw std::invalid_argument("build_graph: label list has " + std::to_string(node_labels->size()) +
                                " entries for " + std::to_string(n) + " nodes");
  Graph g;
  g.adjacency_.assign(n, {});
  for (auto [u, v] : edges) {
    if (u >= n || v >= n)
      throw std::invalid_argument("build_graph: edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                  ") has an endpoint outside [0, " + std::to_string(n) + ")");
    if (u == v) throw std::invalid_argument("build_graph: self-loop at node " + std::to_string(u));
    g.adjacency_[u].push_back(v);
    g.adjacency_[v].push_back(u);
  }
  Index twice = 0;
  for (auto& nb : g.adjacency_) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    twice += nb.size();
  }
  g.num_edges_ = twice / 2;
  g.labels_ = std::move(node_labels);
  return g;
}

inline Graph build_graph(Index n, std::initializer_list<Edge> edges,
                         std::optional<std::vector<Label>> node_labels = std::nullopt) {
  return build_graph(n, std::span<const Edge>(edges.begin(), edges.size()), std::move(node_labels));
}

/// Sorted set of categorical node-label values shared by all graphs of a corpus.
struct LabelAlphabet {
  std::vector<Label> values;

  static LabelAlphabet from_values(std::vector<Label> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return {std::move(v)};
  }

  Index size() const { return values.size(); }
  bool empty() const { return values.empty(); }

  std::optional<Index> index_of(Label l) const {
    auto it = std::lower_bound(values.begin(), values.end(), l);
    if (it == values.end() || *it != l) return std::nullopt;
    return static_cast<Index>(it - values.begin());
  }

  bool operator==(const LabelAlphabet&) const = default;
};

/// Node-feature matrix F. One-hot over the alphabet for labeled graphs; a single
/// all-ones column for unlabeled graphs.
inline Matrix node_features(const Graph& g, const LabelAlphabet& alphabet) {
  const Index n = g.num_nodes();
  if (!g.has_labels()) return Matrix::Ones(static_cast<Eigen::Index>(n), 1);
  Matrix f = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(alphabet.size()));
  const auto& labels = *g.node_labels();
  for (Index i = 0; i < n; ++i) {
    auto col = alphabet.index_of(labels[i]);
    if (!col) throw std::invalid_argument("node_features: label " + std::to_string(labels[i]) + " not in alphabet");
    f(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(*col)) = 1.0;
  }
  return f;
}

inline std::vector<Index> degree_vector(const Graph& g) {
  std::vector<Index> d(g.num_nodes());
  for (Index i = 0; i < d.size(); ++i) d[i] = g.degree(i);
  return d;
}

/// Binary adjacency of A_r: nodes j != k are joined iff their shortest-path
/// distance is at most `radius`. Computed by depth-bounded BFS from every node.
inline Graph reachability_adjacency(const Graph& g, Index radius) {
  if (radius < 1) throw std::invalid_argument("reachability_adjacency: radius must be >= 1");
  const Index n = g.num_nodes();
  std::vector<Edge> edges;
  std::vector<Index> depth(n, 0);
  std::vector<Index> stamp(n, static_cast<Index>(-1));
  std::deque<Index> queue;
  for (Index s = 0; s < n; ++s) {
    queue.clear();
    queue.push_back(s);
    stamp[s] = s;
    depth[s] = 0;
    while (!queue.empty()) {
      Index u = queue.front();
      queue.pop_front();
      if (depth[u] == radius) continue;
      for (Index v : g.neighbors(u)) {
        if (stamp[v] == s) continue;
        stamp[v] = s;
        depth[v] = depth[u] + 1;
        if (s < v) edges.emplace_back(s, v);
        queue.push_back(v);
      }
    }
  }
  return build_graph(n, edges, g.node_labels());
}

/// Subgraph induced by `indices`; node a of the result is node indices[a] of g.
inline Graph induced_subgraph(const Graph& g, std::span<const Index> indices) {
  constexpr Index kAbsent = static_cast<Index>(-1);
  std::vector<Index> position(g.num_nodes(), kAbsent);
  for (Index a = 0; a < indices.size(); ++a) {
    Index v = indices[a];
    if (v >= g.num_nodes())
      throw std::invalid_argument("induced_subgraph: index " + std::to_string(v) + " out of range");
    if (position[v] != kAbsent)
      throw std::invalid_argument("induced_subgraph: duplicate index " + std::to_string(v));
    position[v] = a;
  }
  std::vector<Edge> edges;
  for (Index a = 0; a < indices.size(); ++a)
    for (Index w : g.neighbors(indices[a]))
      if (position[w] != kAbsent && a < position[w]) edges.emplace_back(a, position[w]);

  std::optional<std::vector<Label>> labels;
  if (g.has_labels()) {
    labels.emplace();
    labels->reserve(indices.size());
    for (Index v : indices) labels->push_back((*g.node_labels())[v]);
  }
  return build_graph(indices.size(), edges, std::move(labels));
}

/// Number of connected components (BFS).
inline Index connected_components(const Graph& g, std::vector<Index>* component_of = nullptr) {
  const Index n = g.num_nodes();
  constexpr Index kUnseen = static_cast<Index>(-1);
  std::vector<Index> comp(n, kUnseen);
  Index count = 0;
  std::vector<Index> stack;
  for (Index s = 0; s < n; ++s) {
    if (comp[s] != kUnseen) continue;
    comp[s] = count;
    stack.assign(1, s);
    while (!stack.empty()) {
      Index u = stack.back();
      stack.pop_back();
      for (Index v : g.neighbors(u))
        if (comp[v] == kUnseen) {
          comp[v] = count;
          stack.push_back(v);
        }
    }
    ++count;
  }
  if (component_of) *component_of = std::move(comp);
  return count;
}

inline bool is_connected(const Graph& g) { return g.num_nodes() <= 1 || connected_components(g) == 1; }

/// A graph-classification corpus: graphs, their class ids in [0, C), and the
/// node-label alphabet shared across graphs (empty when unlabeled).
struct LabeledGraphDataset {
  std::vector<Graph> graphs;
  std::vector<int> class_labels;
  int num_classes = 0;
  LabelAlphabet label_alphabet;
  /// Original class value for each class id, in first-appearance order.
  std::vector<Label> class_values;
  /// Continuous node attributes per graph, when the corpus provides them.
  std::optional<std::vector<Matrix>> node_attributes;

  Index size() const { return graphs.size(); }

  void validate() const {
    if (graphs.size() != class_labels.size())
      throw std::invalid_argument("dataset: graph count and class label count differ");
    if (num_classes < 1 && !graphs.empty()) throw std::invalid_argument("dataset: no classes");
    std::vector<Index> seen(static_cast<Index>(std::max(num_classes, 0)), 0);
    for (int c : class_labels) {
      if (c < 0 || c >= num_classes) throw std::invalid_argument("dataset: class label outside [0, C)");
      ++seen[static_cast<Index>(c)];
    }
    for (Index c = 0; c < seen.size(); ++c)
      if (seen[c] == 0) throw std::invalid_argument("dataset: class " + std::to_string(c) + " never occurs");
  }

  std::vector<Index> class_counts() const {
    std::vector<Index> counts(static_cast<Index>(std::max(num_classes, 0)), 0);
    for (int c : class_labels) ++counts[static_cast<Index>(c)];
    return counts;
  }
};

}  // namespace gnn_esr
