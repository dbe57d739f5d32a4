#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "gnn_esr/embedding.hpp"
#include "gnn_esr/synth.hpp"
#include "oracles/oracles.hpp"

using namespace gnn_esr;

namespace {

Graph two_cliques(Index size) {
  std::vector<Edge> e;
  for (Index base : {Index{0}, size})
    for (Index i = 0; i < size; ++i)
      for (Index j = i + 1; j < size; ++j) e.emplace_back(base + i, base + j);
  return build_graph(2 * size, e);
}

}  // namespace

TEST(WalkLength, Formula) {
  EXPECT_EQ(walk_length(40), 4u);
  EXPECT_EQ(walk_length(200), 10u);
  EXPECT_EQ(walk_length(75), 7u);
  EXPECT_EQ(walk_length(1), 4u);
}

TEST(Walks, EdgelessGraphGivesSingletons) {
  EmbeddingConfig cfg;
  auto corpus = generate_walks(build_graph(3, std::vector<Edge>{}), cfg);
  EXPECT_EQ(corpus.size(), 3 * cfg.walks_per_node);
  for (const auto& w : corpus) EXPECT_EQ(w.size(), 1u);
}

TEST(Walks, K2Alternates) {
  EmbeddingConfig cfg;
  auto corpus = generate_walks(build_graph(2, {{0, 1}}), cfg);
  for (const auto& w : corpus) {
    ASSERT_EQ(w.size(), 4u);
    for (Index i = 1; i < w.size(); ++i) EXPECT_NE(w[i], w[i - 1]);
  }
}

TEST(Walks, CorpusSizeAndValidSteps) {
  EmbeddingConfig cfg;
  cfg.seed = 4;
  Graph g = gen_cluster(30, 5, 2);
  auto corpus = generate_walks(g, cfg);
  EXPECT_EQ(corpus.size(), g.num_nodes() * cfg.walks_per_node);
  std::vector<Index> starts(g.num_nodes(), 0);
  for (const auto& w : corpus) {
    EXPECT_EQ(w.size(), walk_length(g.num_nodes()));
    ++starts[w.front()];
    for (Index i = 1; i < w.size(); ++i) EXPECT_TRUE(g.has_edge(w[i - 1], w[i]));
  }
  for (Index s : starts) EXPECT_EQ(s, cfg.walks_per_node);
}

TEST(SkipGram, LossDecreases) {
  EmbeddingConfig cfg;
  cfg.seed = 8;
  Graph g = gen_task_graph(TaskId::Hlld, 3).graph;
  SkipGramStats stats;
  Matrix e = train_skipgram(generate_walks(g, cfg), g.num_nodes(), cfg, &stats);
  EXPECT_GT(stats.pairs_per_epoch, 0u);
  EXPECT_LT(stats.final_loss, stats.initial_loss);
  EXPECT_TRUE(e.allFinite());
}

TEST(SkipGram, CliquesSeparate) {
  Graph g = two_cliques(12);
  int holds = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    EmbeddingConfig cfg;
    cfg.seed = s;
    Matrix e = embed_graph(g, cfg);
    double intra = 0, inter = 0;
    Index ni = 0, nx = 0;
    for (Index a = 0; a < 24; ++a)
      for (Index b = a + 1; b < 24; ++b) {
        const double d = oracle::euclid(e, a, b);
        if ((a < 12) == (b < 12)) {
          intra += d;
          ++ni;
        } else {
          inter += d;
          ++nx;
        }
      }
    holds += intra / static_cast<double>(ni) < inter / static_cast<double>(nx);
  }
  EXPECT_GT(holds, 5);
}

TEST(EmbedGraph, ShapeAndSingleNode) {
  EmbeddingConfig cfg;
  Matrix one = embed_graph(build_graph(1, std::vector<Edge>{}), cfg);
  EXPECT_EQ(one.rows(), 1);
  EXPECT_EQ(one.cols(), 12);
  EXPECT_TRUE(one.allFinite());
  Graph g = gen_cluster(25, 5, 1);
  EXPECT_EQ(embed_graph(g, cfg).rows(), 25);
}

TEST(EmbedGraph, Deterministic) {
  EmbeddingConfig cfg;
  cfg.seed = 77;
  Graph g = gen_task_graph(TaskId::Cnc, 5).graph;
  EXPECT_EQ(embed_graph(g, cfg), embed_graph(g, cfg));
  cfg.init_seed = 3;
  EXPECT_EQ(embed_graph(g, cfg), embed_graph(g, cfg));
  EmbeddingConfig other = cfg;
  other.seed = 78;
  EXPECT_NE(embed_graph(g, cfg), embed_graph(g, other));
}

TEST(EmbedGraph, SharedInitialVectorsForIsolatedNodes) {
  // isolated nodes never train, so their rows are the initial vectors
  Graph g = build_graph(4, {{0, 1}});
  EmbeddingConfig a, b;
  a.seed = 1;
  b.seed = 2;
  a.init_seed = b.init_seed = 5;
  Matrix ea = embed_graph(g, a), eb = embed_graph(g, b);
  EXPECT_EQ(ea.row(2), eb.row(2));
  EXPECT_EQ(ea.row(3), eb.row(3));
  EXPECT_NE(ea.row(2), ea.row(3));
  a.init_seed.reset();
  b.init_seed.reset();
  EXPECT_NE(embed_graph(g, a).row(2), embed_graph(g, b).row(2));
}

TEST(EmbedGraph, TwoClusterPartitionRecovered) {
  PlantedGraph pg = gen_task_graph_with_class(TaskId::TwoThree, 0, 12);
  EmbeddingConfig cfg;
  cfg.seed = 12;
  Matrix e = embed_graph(pg.graph, cfg);
  std::vector<int> truth(pg.cluster_of.begin(), pg.cluster_of.end());
  EXPECT_GE(oracle::binary_agreement(oracle::two_means(e), truth), 0.9);
}

TEST(EmbeddingCache, RoundTripAndFingerprint) {
  auto file = std::filesystem::temp_directory_path() / "gnn_esr_cache_test.emb";
  std::mt19937_64 rng(1);
  Matrix e = oracle::random_matrix(7, 12, rng);
  write_embedding_cache(file, e, 0xABCDULL);
  auto back = read_embedding_cache(file, 0xABCDULL);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(*back, e);
  EXPECT_FALSE(read_embedding_cache(file, 0xABCEULL).has_value());
  std::filesystem::remove(file);
  EXPECT_FALSE(read_embedding_cache(file, 0xABCDULL).has_value());
}

TEST(EmbeddingConfig, FingerprintCoversFields) {
  EmbeddingConfig a, b;
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  b.window = 5;
  EXPECT_NE(a.fingerprint(), b.fingerprint());
  b = a;
  b.init_seed = 1;
  EXPECT_NE(a.fingerprint(), b.fingerprint());
}

TEST(EmbeddingConfig, Validation) {
  EmbeddingConfig c;
  c.dim = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.negatives = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.window = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
