#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gnn_esr/graph.hpp"
#include "gnn_esr/random.hpp"

namespace gnn_esr {

/// Synthetic classification tasks built from clusters joined by bridges.
enum class TaskId { Hlld, Cnc, Cnlc, Nlc, Mdc, TwoThree };

inline constexpr std::array<TaskId, 6> kAllTasks = {TaskId::Hlld, TaskId::Cnc, TaskId::Cnlc,
                                                    TaskId::Nlc,  TaskId::Mdc, TaskId::TwoThree};

inline std::string_view task_name(TaskId t) {
  switch (t) {
    case TaskId::Hlld: return "hlld";
    case TaskId::Cnc: return "cnc";
    case TaskId::Cnlc: return "cnlc";
    case TaskId::Nlc: return "nlc";
    case TaskId::Mdc: return "mdc";
    case TaskId::TwoThree: return "twothree";
  }
  return "?";
}

inline std::optional<TaskId> parse_task(std::string_view s) {
  for (TaskId t : kAllTasks)
    if (task_name(t) == s) return t;
  return std::nullopt;
}

inline int task_num_classes(TaskId t) {
  switch (t) {
    case TaskId::Hlld: return 2;
    case TaskId::Cnc: return 4;
    case TaskId::Cnlc: return 3;
    case TaskId::Nlc: return 4;
    case TaskId::Mdc: return 2;
    case TaskId::TwoThree: return 2;
  }
  return 0;
}

/// NLC and MDC carry binary node labels; the other tasks are unlabeled.
inline bool task_is_labeled(TaskId t) { return t == TaskId::Nlc || t == TaskId::Mdc; }

enum class Topology { Chain, Loop, ChainOfLoops, Disconnected };

struct ClusterGraphSpec {
  std::vector<Index> cluster_sizes;
  Index intra_degree = 5;
  Index bridge_width = 3;
  Topology topology = Topology::Chain;
  /// Cluster count of each loop; only read for ChainOfLoops.
  std::vector<Index> loop_sizes;
  /// Per-cluster node label in {0, 1}; empty for unlabeled graphs.
  std::vector<int> cluster_binary_labels;
};

/// A generated graph together with the partition it was planted from.
struct PlantedGraph {
  Graph graph;
  int label = 0;
  std::vector<Index> cluster_of;
  std::vector<Edge> cluster_links;
  std::vector<int> cluster_labels;
  Index num_clusters = 0;
};

namespace detail {

inline std::vector<Edge> random_cluster_edges(Index size, Index intra_degree, Rng& rng) {
  std::vector<Edge> edges;
  edges.reserve(size * intra_degree);
  std::vector<Index> others(size - 1);
  for (Index v = 0; v < size; ++v) {
    Index k = 0;
    for (Index u = 0; u < size; ++u)
      if (u != v) others[k++] = u;
    // partial Fisher-Yates: the first intra_degree slots become the partners
    for (Index i = 0; i < intra_degree; ++i) {
      Index j = uniform_in(rng, i, others.size() - 1);
      std::swap(others[i], others[j]);
      edges.emplace_back(v, others[i]);
    }
  }
  return edges;
}

/// Complete bipartite bridge between `width` random members of each side.
inline void append_bridge(std::vector<Edge>& edges, std::span<const Index> a, std::span<const Index> b, Index width,
                          Rng& rng) {
  if (width == 0) return;
  std::vector<Index> pa(a.begin(), a.end()), pb(b.begin(), b.end());
  std::shuffle(pa.begin(), pa.end(), rng);
  std::shuffle(pb.begin(), pb.end(), rng);
  for (Index i = 0; i < width; ++i)
    for (Index j = 0; j < width; ++j) edges.emplace_back(pa[i], pb[j]);
}

}  // namespace detail

/// Random cluster where every node links to `intra_degree` distinct random
/// partners; resampled until connected.
inline Graph gen_cluster(Index size, Index intra_degree, std::uint64_t seed) {
  if (size <= intra_degree)
    throw std::invalid_argument("gen_cluster: size " + std::to_string(size) + " must exceed intra_degree " +
                                std::to_string(intra_degree));
  Rng rng(seed);
  for (;;) {
    auto edges = detail::random_cluster_edges(size, intra_degree, rng);
    Graph g = build_graph(size, edges);
    if (is_connected(g)) return g;
  }
}

/// Adds a width x width complete bipartite bridge between two disjoint node sets.
inline Graph bridge_clusters(const Graph& g, std::span<const Index> cluster_a, std::span<const Index> cluster_b,
                             Index width, std::uint64_t seed) {
  if (width > cluster_a.size() || width > cluster_b.size())
    throw std::invalid_argument("bridge_clusters: width exceeds a cluster size");
  std::set<Index> a(cluster_a.begin(), cluster_a.end());
  for (Index v : cluster_b)
    if (a.count(v)) throw std::invalid_argument("bridge_clusters: clusters overlap");
  for (Index v : cluster_a)
    if (v >= g.num_nodes()) throw std::invalid_argument("bridge_clusters: node out of range");
  for (Index v : cluster_b)
    if (v >= g.num_nodes()) throw std::invalid_argument("bridge_clusters: node out of range");
  Rng rng(seed);
  auto edges = g.edge_list();
  detail::append_bridge(edges, cluster_a, cluster_b, width, rng);
  return build_graph(g.num_nodes(), edges, g.node_labels());
}

/// Builds a clustered graph with the requested cluster-level topology.
///
/// ChainOfLoops joins loops so that consecutive loops share exactly one
/// cluster; cluster_sizes must then hold sum(loop_sizes) - (loops - 1) entries.
inline PlantedGraph gen_cluster_graph(const ClusterGraphSpec& spec, Rng& rng) {
  const Index k = spec.cluster_sizes.size();
  if (k == 0) throw std::invalid_argument("gen_cluster_graph: no clusters");
  const Index min_size = *std::min_element(spec.cluster_sizes.begin(), spec.cluster_sizes.end());
  if (spec.topology != Topology::Disconnected && k > 1 && spec.bridge_width > min_size)
    throw std::invalid_argument("gen_cluster_graph: bridge width exceeds smallest cluster");
  if (!spec.cluster_binary_labels.empty() && spec.cluster_binary_labels.size() != k)
    throw std::invalid_argument("gen_cluster_graph: one label per cluster required");

  PlantedGraph out;
  out.num_clusters = k;
  out.cluster_labels = spec.cluster_binary_labels;

  switch (spec.topology) {
    case Topology::Chain:
      for (Index c = 0; c + 1 < k; ++c) out.cluster_links.emplace_back(c, c + 1);
      break;
    case Topology::Loop:
      for (Index c = 0; c + 1 < k; ++c) out.cluster_links.emplace_back(c, c + 1);
      if (k >= 3) out.cluster_links.emplace_back(k - 1, 0);
      break;
    case Topology::ChainOfLoops: {
      const auto& loops = spec.loop_sizes;
      if (loops.empty()) throw std::invalid_argument("gen_cluster_graph: loop sizes required");
      Index expected = std::accumulate(loops.begin(), loops.end(), Index{0}) - (loops.size() - 1);
      if (expected != k) throw std::invalid_argument("gen_cluster_graph: cluster count does not match loop sizes");
      Index next = 0;
      std::vector<Index> previous;  // clusters of the previous loop not shared with the one before it
      for (Index l = 0; l < loops.size(); ++l) {
        if (loops[l] < 3) throw std::invalid_argument("gen_cluster_graph: loops need >= 3 clusters");
        std::vector<Index> members;
        if (l > 0) members.push_back(previous[uniform_index(rng, previous.size())]);
        while (members.size() < loops[l]) members.push_back(next++);
        for (Index i = 0; i < members.size(); ++i)
          out.cluster_links.emplace_back(members[i], members[(i + 1) % members.size()]);
        previous.assign(members.begin() + (l > 0 ? 1 : 0), members.end());
      }
      break;
    }
    case Topology::Disconnected:
      break;
  }

  std::vector<std::vector<Index>> nodes_of(k);
  std::vector<Edge> edges;
  Index offset = 0;
  for (Index c = 0; c < k; ++c) {
    Graph cluster = gen_cluster(spec.cluster_sizes[c], spec.intra_degree, rng());
    for (auto [u, v] : cluster.edge_list()) edges.emplace_back(offset + u, offset + v);
    for (Index v = 0; v < cluster.num_nodes(); ++v) {
      nodes_of[c].push_back(offset + v);
      out.cluster_of.push_back(c);
    }
    offset += cluster.num_nodes();
  }
  for (auto [a, b] : out.cluster_links) detail::append_bridge(edges, nodes_of[a], nodes_of[b], spec.bridge_width, rng);

  std::optional<std::vector<Label>> labels;
  if (!spec.cluster_binary_labels.empty()) {
    labels.emplace();
    for (Index c : out.cluster_of) labels->push_back(spec.cluster_binary_labels[c]);
  }
  out.graph = build_graph(offset, edges, std::move(labels));
  return out;
}

/// Size ranges shared by every task.
inline constexpr Index kMinClusterSize = 20;
inline constexpr Index kMaxClusterSize = 45;
inline constexpr Index kIntraDegree = 5;
inline constexpr Index kBridgeWidth = 3;

/// One graph of `task` whose class is fixed to `cls`.
inline PlantedGraph gen_task_graph_with_class(TaskId task, int cls, std::uint64_t seed) {
  if (cls < 0 || cls >= task_num_classes(task))
    throw std::invalid_argument("gen_task_graph: class out of range for task");
  Rng rng(seed);
  ClusterGraphSpec spec;
  spec.intra_degree = kIntraDegree;
  spec.bridge_width = kBridgeWidth;
  auto draw_sizes = [&](Index k) {
    std::vector<Index> s(k);
    for (auto& x : s) x = uniform_in(rng, kMinClusterSize, kMaxClusterSize);
    return s;
  };

  switch (task) {
    case TaskId::Hlld: {
      spec.cluster_sizes = draw_sizes(uniform_in(rng, 3, 6));
      spec.topology = cls == 1 ? Topology::Loop : Topology::Chain;
      break;
    }
    case TaskId::Cnc: {
      spec.cluster_sizes = draw_sizes(static_cast<Index>(cls) + 3);
      spec.topology = uniform_index(rng, 2) ? Topology::Loop : Topology::Chain;
      break;
    }
    case TaskId::Cnlc: {
      Index loops = static_cast<Index>(cls) + 2;
      spec.loop_sizes.resize(loops);
      for (auto& s : spec.loop_sizes) s = uniform_in(rng, 3, 5);
      Index total = std::accumulate(spec.loop_sizes.begin(), spec.loop_sizes.end(), Index{0}) - (loops - 1);
      spec.cluster_sizes = draw_sizes(total);
      spec.topology = Topology::ChainOfLoops;
      break;
    }
    case TaskId::Nlc: {
      Index k = uniform_in(rng, 6, 8);
      Index ones = static_cast<Index>(cls) + 2;
      std::vector<Index> order(k);
      std::iota(order.begin(), order.end(), Index{0});
      std::shuffle(order.begin(), order.end(), rng);
      spec.cluster_binary_labels.assign(k, 0);
      for (Index i = 0; i < ones; ++i) spec.cluster_binary_labels[order[i]] = 1;
      spec.cluster_sizes = draw_sizes(k);
      spec.topology = Topology::Loop;
      break;
    }
    case TaskId::Mdc: {
      Index k = 2 * uniform_in(rng, 3, 5);
      Index half = k / 2;
      std::vector<int> labels(k);
      for (Index c = 0; c < half; ++c) {
        labels[c] = static_cast<int>(uniform_index(rng, 2));
        labels[c + half] = labels[c];
      }
      if (cls == 0) {
        Index mismatched = uniform_in(rng, 1, half);
        std::vector<Index> pairs(half);
        std::iota(pairs.begin(), pairs.end(), Index{0});
        std::shuffle(pairs.begin(), pairs.end(), rng);
        for (Index i = 0; i < mismatched; ++i) labels[pairs[i] + half] ^= 1;
      }
      spec.cluster_binary_labels = std::move(labels);
      spec.cluster_sizes = draw_sizes(k);
      spec.topology = Topology::Loop;
      break;
    }
    case TaskId::TwoThree: {
      spec.cluster_sizes = draw_sizes(static_cast<Index>(cls) + 2);
      spec.topology = Topology::Disconnected;
      break;
    }
  }
  PlantedGraph pg = gen_cluster_graph(spec, rng);
  pg.label = cls;
  return pg;
}

/// One graph of `task` with a uniformly drawn class.
inline PlantedGraph gen_task_graph(TaskId task, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xC1A55ULL));
  int cls = static_cast<int>(uniform_index(rng, static_cast<Index>(task_num_classes(task))));
  return gen_task_graph_with_class(task, cls, seed);
}

/// `size` graphs with classes assigned round-robin, so class counts differ by at
/// most one. Graph i is generated from derive_seed(seed, i).
inline LabeledGraphDataset gen_dataset(TaskId task, Index size, std::uint64_t seed) {
  const int classes = task_num_classes(task);
  if (size < static_cast<Index>(classes))
    throw std::invalid_argument("gen_dataset: size " + std::to_string(size) + " is below class count " +
                                std::to_string(classes));
  LabeledGraphDataset ds;
  ds.num_classes = classes;
  ds.graphs.reserve(size);
  ds.class_labels.reserve(size);
  for (Index i = 0; i < size; ++i) {
    int cls = static_cast<int>(i % static_cast<Index>(classes));
    PlantedGraph pg = gen_task_graph_with_class(task, cls, derive_seed(seed, i));
    ds.graphs.push_back(std::move(pg.graph));
    ds.class_labels.push_back(cls);
  }
  for (int c = 0; c < classes; ++c) ds.class_values.push_back(c);
  if (task_is_labeled(task)) ds.label_alphabet = LabelAlphabet{{0, 1}};
  return ds;
}

}  // namespace gnn_esr
