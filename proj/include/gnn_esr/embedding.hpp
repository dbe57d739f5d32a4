#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "gnn_esr/graph.hpp"
#include "gnn_esr/random.hpp"

namespace gnn_esr {

/// DeepWalk hyperparameters. Embedding width defaults to 12.
struct EmbeddingConfig {
  Index dim = 12;
  Index walks_per_node = 20;
  Index window = 4;
  Index negatives = 5;
  Index epochs = 5;
  /// SGD step size, decayed linearly towards step_size * 1e-4 over training.
  double step_size = 0.025;
  std::uint64_t seed = 0;
  /// When set, node j starts from a vector drawn from (init_seed, j) instead of
  /// from `seed`, so equal node ids start equal across graphs.
  std::optional<std::uint64_t> init_seed;

  void validate() const {
    if (dim < 1) throw std::invalid_argument("embedding: dim must be >= 1");
    if (window < 1) throw std::invalid_argument("embedding: window must be >= 1");
    if (negatives < 1) throw std::invalid_argument("embedding: negatives must be >= 1");
  }

  /// Hash of every field, stored in cache headers.
  std::uint64_t fingerprint() const {
    return derive_seed(seed, {dim, walks_per_node, window, negatives, epochs, std::bit_cast<std::uint64_t>(step_size),
                              init_seed ? mix64(*init_seed) : 0});
  }
};

using WalkCorpus = std::vector<std::vector<Index>>;

/// max(4, min(floor(n / 10), 10))
inline Index walk_length(Index n) { return std::max<Index>(4, std::min<Index>(n / 10, 10)); }

/// walks_per_node uniform random walks from every node, each walk_length(n)
/// nodes long. A walk ends early only when it starts at an isolated node.
/// Walks are emitted round by round: all start nodes once, then again.
inline WalkCorpus generate_walks(const Graph& g, const EmbeddingConfig& cfg) {
  const Index n = g.num_nodes();
  const Index len = walk_length(std::max<Index>(n, 1));
  Rng rng(derive_seed(cfg.seed, 0x3a1c5ULL));
  WalkCorpus corpus;
  corpus.reserve(n * cfg.walks_per_node);
  for (Index round = 0; round < cfg.walks_per_node; ++round) {
    for (Index start = 0; start < n; ++start) {
      std::vector<Index> walk{start};
      walk.reserve(len);
      while (walk.size() < len) {
        auto nb = g.neighbors(walk.back());
        if (nb.empty()) break;
        walk.push_back(nb[uniform_index(rng, nb.size())]);
      }
      corpus.push_back(std::move(walk));
    }
  }
  return corpus;
}

struct SkipGramStats {
  /// Mean per-pair loss with the initial vectors.
  double initial_loss = 0.0;
  /// Mean per-pair loss after the last epoch, on the same pairs and negatives.
  double final_loss = 0.0;
  Index pairs_per_epoch = 0;
};

namespace skipgram_detail {

inline double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

/// Draws node ids proportional to occurrences^0.75 from a precomputed table.
class NegativeSampler {
 public:
  NegativeSampler(const WalkCorpus& corpus, Index n) {
    std::vector<double> weight(n, 0.0);
    for (const auto& w : corpus)
      for (Index v : w) weight[v] += 1.0;
    double total = 0.0;
    for (auto& c : weight) total += (c = std::pow(c, 0.75));
    const Index size = std::max<Index>(1024, 256 * n);
    table_.reserve(size);
    double cumulative = 0.0;
    for (Index v = 0; v < n; ++v) {
      cumulative += weight[v] / total;
      while (table_.size() < size && static_cast<double>(table_.size()) < cumulative * static_cast<double>(size))
        table_.push_back(v);
    }
    while (table_.size() < size) table_.push_back(n - 1);
  }

  Index operator()(Rng& rng) const { return table_[uniform_index(rng, table_.size())]; }

 private:
  std::vector<Index> table_;
};

/// Visits (center, context) pairs within the window, in corpus order.
template <typename Fn>
void for_each_pair(const WalkCorpus& corpus, Index window, Fn&& fn) {
  for (const auto& walk : corpus)
    for (Index i = 0; i < walk.size(); ++i) {
      Index lo = i >= window ? i - window : 0;
      Index hi = std::min(walk.size() - 1, i + window);
      for (Index j = lo; j <= hi; ++j)
        if (j != i) fn(walk[i], walk[j]);
    }
}

template <Index Fixed = 0>
inline double dot(const double* a, const double* b, Index d) {
  if constexpr (Fixed > 0) {
    using Vec = Eigen::Map<const Eigen::Matrix<double, static_cast<int>(Fixed), 1>>;
    return Vec(a).dot(Vec(b));
  } else {
    double s = 0.0;
    for (Index i = 0; i < d; ++i) s += a[i] * b[i];
    return s;
  }
}

inline double mean_loss(const WalkCorpus& corpus, const Matrix& in, const Matrix& out, const EmbeddingConfig& cfg,
                        const NegativeSampler& sampler, std::uint64_t seed) {
  Rng rng(seed);
  double total = 0.0;
  Index pairs = 0;
  for_each_pair(corpus, cfg.window, [&](Index c, Index ctx) {
    const double* center = in.row(static_cast<Eigen::Index>(c)).data();
    total -= log_sigmoid(dot(center, out.row(static_cast<Eigen::Index>(ctx)).data(), cfg.dim));
    for (Index k = 0; k < cfg.negatives; ++k)
      total -= log_sigmoid(-dot(center, out.row(static_cast<Eigen::Index>(sampler(rng))).data(), cfg.dim));
    ++pairs;
  });
  return pairs ? total / static_cast<double>(pairs) : 0.0;
}

}  // namespace skipgram_detail

/// Skip-gram with negative sampling over a walk corpus.
///
/// Returns the n x dim matrix of center ("input") vectors; context vectors are
/// discarded. Rows of nodes that never appear in a pair keep their random
/// initialization.
inline Matrix train_skipgram(const WalkCorpus& corpus, Index n, const EmbeddingConfig& cfg,
                             SkipGramStats* stats = nullptr) {
  using namespace skipgram_detail;
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("train_skipgram: empty corpus");
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  const auto nn = static_cast<Eigen::Index>(n);

  Rng rng(derive_seed(cfg.seed, 0x5e6aULL));
  std::uniform_real_distribution<double> init(-0.5 / static_cast<double>(cfg.dim), 0.5 / static_cast<double>(cfg.dim));
  Matrix in(nn, d), out = Matrix::Zero(nn, d);
  for (Eigen::Index j = 0; j < nn; ++j) {
    if (cfg.init_seed) {
      Rng node_rng(derive_seed(*cfg.init_seed, static_cast<std::uint64_t>(j)));
      for (Eigen::Index i = 0; i < d; ++i) in(j, i) = init(node_rng);
    } else {
      for (Eigen::Index i = 0; i < d; ++i) in(j, i) = init(rng);
    }
  }

  const NegativeSampler sampler(corpus, n);
  const std::uint64_t probe_seed = derive_seed(cfg.seed, 0x10557ULL);
  Index pairs = 0;
  for_each_pair(corpus, cfg.window, [&](Index, Index) { ++pairs; });
  if (stats) {
    stats->pairs_per_epoch = pairs;
    stats->initial_loss = mean_loss(corpus, in, out, cfg, sampler, probe_seed);
  }

  const double total_steps = static_cast<double>(pairs * cfg.epochs);
  double done = 0.0;
  auto run = [&]<Index Fixed>(std::integral_constant<Index, Fixed>) {
    const Index dim = Fixed ? Fixed : cfg.dim;
    std::vector<double> grad_in(dim);
    for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
      for_each_pair(corpus, cfg.window, [&](Index c, Index ctx) {
        const double lr = cfg.step_size * std::max(1e-4, 1.0 - done / std::max(total_steps, 1.0));
        done += 1.0;
        double* center = in.row(static_cast<Eigen::Index>(c)).data();
        std::fill(grad_in.begin(), grad_in.end(), 0.0);
        auto update = [&](Index target, double label) {
          double* ov = out.row(static_cast<Eigen::Index>(target)).data();
          const double g = (label - sigmoid(dot<Fixed>(center, ov, dim))) * lr;
          for (Index i = 0; i < dim; ++i) {
            grad_in[i] += g * ov[i];
            ov[i] += g * center[i];
          }
        };
        update(ctx, 1.0);
        for (Index k = 0; k < cfg.negatives; ++k) {
          const Index neg = sampler(rng);
          if (neg == ctx) continue;
          update(neg, 0.0);
        }
        for (Index i = 0; i < dim; ++i) center[i] += grad_in[i];
      });
    }
  };
  // the default width gets a fully unrolled inner loop
  if (cfg.dim == 12)
    run(std::integral_constant<Index, 12>{});
  else
    run(std::integral_constant<Index, 0>{});

  if (stats) stats->final_loss = mean_loss(corpus, in, out, cfg, sampler, probe_seed);
  return in;
}

/// generate_walks followed by train_skipgram.
inline Matrix embed_graph(const Graph& g, const EmbeddingConfig& cfg, SkipGramStats* stats = nullptr) {
  auto corpus = generate_walks(g, cfg);
  if (corpus.empty()) return Matrix(0, static_cast<Eigen::Index>(cfg.dim));
  return train_skipgram(corpus, g.num_nodes(), cfg, stats);
}

// Embedding cache: one file per graph.
//   "GESREMB1" | n:u64 | dim:u64 | fingerprint:u64 | n*dim f64, row-major
// All integers and reals little-endian.

namespace binary_detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("truncated binary file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace binary_detail

inline constexpr char kEmbeddingMagic[8] = {'G', 'E', 'S', 'R', 'E', 'M', 'B', '1'};

inline void write_embedding_cache(const std::filesystem::path& file, const Matrix& e, std::uint64_t fingerprint) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out.write(kEmbeddingMagic, 8);
  binary_detail::put_u64(out, static_cast<std::uint64_t>(e.rows()));
  binary_detail::put_u64(out, static_cast<std::uint64_t>(e.cols()));
  binary_detail::put_u64(out, fingerprint);
  for (Eigen::Index r = 0; r < e.rows(); ++r)
    for (Eigen::Index c = 0; c < e.cols(); ++c) binary_detail::put_f64(out, e(r, c));
  if (!out) throw std::runtime_error("I/O failure writing " + file.string());
}

/// Returns nullopt when the file is absent or was written for a different
/// configuration.
inline std::optional<Matrix> read_embedding_cache(const std::filesystem::path& file, std::uint64_t fingerprint) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kEmbeddingMagic))
    throw std::runtime_error(file.string() + ": not an embedding cache file");
  auto rows = binary_detail::get_u64(in);
  auto cols = binary_detail::get_u64(in);
  if (binary_detail::get_u64(in) != fingerprint) return std::nullopt;
  Matrix e(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < e.rows(); ++r)
    for (Eigen::Index c = 0; c < e.cols(); ++c) e(r, c) = binary_detail::get_f64(in);
  return e;
}

}  // namespace gnn_esr
