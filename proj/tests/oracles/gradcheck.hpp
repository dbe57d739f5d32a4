#pragma once

#include <random>
#include <string>
#include <vector>

#include "gnn_esr/model.hpp"
#include "gnn_esr/pooling.hpp"
#include "gnn_esr/synth.hpp"
#include "oracles/oracles.hpp"

namespace gradcheck {

using namespace gnn_esr;

/// sum(y .* r) with r constant; turns any tensor into a scalar that depends
/// on every entry with its own weight.
inline ad::Var weighted_sum(ad::Tape& t, ad::Var y, const Matrix& r) {
  Matrix out(1, 1);
  out(0, 0) = t.value(y).cwiseProduct(r).sum();
  return t.record(std::move(out), {y}, [y, r](ad::Tape& t, const Matrix& g) { t.accumulate(y, r * g(0, 0)); });
}

struct Case {
  std::string name;
  ad::FiniteDifferenceResult result;
};

/// Wraps fn so its output is reduced by a fixed random weighting.
inline ad::ScalarFn reduce(std::function<ad::Var(ad::Tape&, ad::Var)> fn, Eigen::Index rows, Eigen::Index cols,
                           std::mt19937_64& rng) {
  Matrix r = oracle::random_matrix(rows, cols, rng);
  return [fn = std::move(fn), r](ad::Tape& t, ad::Var x) { return weighted_sum(t, fn(t, x), r); };
}

inline std::vector<Case> primitive_cases(double tol, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  std::vector<Case> out;
  auto check = [&](const std::string& name, std::function<ad::Var(ad::Tape&, ad::Var)> fn, Eigen::Index rows,
                   Eigen::Index cols, Eigen::Index out_rows, Eigen::Index out_cols) {
    Matrix point = oracle::random_matrix(rows, cols, rng);
    out.push_back({name, ad::finite_difference_check(reduce(std::move(fn), out_rows, out_cols, rng), point, tol)});
  };

  const Matrix b = oracle::random_matrix(4, 3, rng);
  const Matrix a = oracle::random_matrix(2, 5, rng);
  const Matrix bias = oracle::random_matrix(1, 4, rng);
  const Matrix other = oracle::random_matrix(5, 4, rng);

  check("matmul_left", [b](ad::Tape& t, ad::Var x) { return ad::matmul(t, x, t.constant(b)); }, 5, 4, 5, 3);
  check("matmul_right", [a](ad::Tape& t, ad::Var x) { return ad::matmul(t, t.constant(a), x); }, 5, 4, 2, 4);
  check("matmul_nt_left", [other](ad::Tape& t, ad::Var x) { return ad::matmul_nt(t, x, t.constant(other)); }, 3, 4, 3, 5);
  check("matmul_nt_right", [other](ad::Tape& t, ad::Var x) { return ad::matmul_nt(t, t.constant(other), x); }, 3, 4, 5, 3);
  check("matmul_nt_self", [](ad::Tape& t, ad::Var x) { return ad::matmul_nt(t, x, x); }, 3, 4, 3, 3);
  check("add", [other](ad::Tape& t, ad::Var x) { return ad::add(t, x, ad::scale(t, x, 2.0)); }, 5, 4, 5, 4);
  check("add_bias_x", [bias](ad::Tape& t, ad::Var x) { return ad::add_bias(t, x, t.constant(bias)); }, 5, 4, 5, 4);
  check("add_bias_bias", [other](ad::Tape& t, ad::Var x) { return ad::add_bias(t, t.constant(other), x); }, 1, 4, 5, 4);
  check("scale", [](ad::Tape& t, ad::Var x) { return ad::scale(t, x, -1.7); }, 3, 3, 3, 3);
  check("relu", [](ad::Tape& t, ad::Var x) { return ad::relu(t, x); }, 6, 4, 6, 4);
  check("sum", [](ad::Tape& t, ad::Var x) { return ad::sum(t, x); }, 3, 4, 1, 1);
  check("concat_cols", [other](ad::Tape& t, ad::Var x) {
    std::vector<ad::Var> parts{x, t.constant(other), x};
    return ad::concat_cols(t, parts);
  }, 5, 2, 5, 8);
  check("concat_rows", [other](ad::Tape& t, ad::Var x) {
    std::vector<ad::Var> parts{t.constant(other), x};
    return ad::concat_rows(t, parts);
  }, 2, 4, 7, 4);
  check("slice_rows", [](ad::Tape& t, ad::Var x) { return ad::slice_rows(t, x, 1, 3); }, 5, 3, 3, 3);
  check("gather_rows", [](ad::Tape& t, ad::Var x) { return ad::gather_rows(t, x, {4, 0, 4, 2}); }, 5, 3, 4, 3);
  check("segment_max", [](ad::Tape& t, ad::Var x) {
    std::vector<Eigen::Index> offsets{0, 3, 4, 7};
    return ad::segment_max(t, x, offsets);
  }, 7, 4, 3, 4);
  check("row_softmax", [](ad::Tape& t, ad::Var x) { return ad::row_softmax(t, x); }, 4, 5, 4, 5);
  check("dropout", [](ad::Tape& t, ad::Var x) { return ad::dropout(t, x, 0.4, true); }, 6, 5, 6, 5);

  {
    auto sp = std::make_shared<SparseMatrix>(to_sparse(build_graph(5, {{0, 1}, {1, 2}, {3, 4}, {0, 4}})));
    check("sparse_matmul_symmetric", [sp](ad::Tape& t, ad::Var x) { return ad::sparse_matmul(t, *sp, x, true); }, 5,
          3, 5, 3);
    auto rect = std::make_shared<SparseMatrix>(3, 5);
    rect->insert(0, 1) = 2.0;
    rect->insert(0, 4) = -1.0;
    rect->insert(2, 0) = 0.5;
    rect->insert(2, 3) = 1.5;
    rect->makeCompressed();
    check("sparse_matmul", [rect](ad::Tape& t, ad::Var x) { return ad::sparse_matmul(t, *rect, x); }, 5, 3, 3, 3);
  }

  const Matrix gamma = oracle::random_matrix(1, 4, rng, 0.5, 1.5);
  const Matrix beta = oracle::random_matrix(1, 4, rng);
  for (bool training : {true, false}) {
    const std::string mode = training ? "train" : "eval";
    auto state = std::make_shared<ad::BatchNormState>(4);
    state->running_mean = oracle::random_matrix(1, 4, rng);
    state->running_var = oracle::random_matrix(1, 4, rng, 0.5, 2.0);
    check("batch_norm_" + mode + "_x", [=](ad::Tape& t, ad::Var x) {
      return ad::batch_norm(t, x, t.constant(gamma), t.constant(beta), *state, training);
    }, 6, 4, 6, 4);
    const Matrix xs = oracle::random_matrix(6, 4, rng);
    check("batch_norm_" + mode + "_gamma", [=](ad::Tape& t, ad::Var g) {
      return ad::batch_norm(t, t.constant(xs), g, t.constant(beta), *state, training);
    }, 1, 4, 6, 4);
    check("batch_norm_" + mode + "_beta", [=](ad::Tape& t, ad::Var bt) {
      return ad::batch_norm(t, t.constant(xs), t.constant(gamma), bt, *state, training);
    }, 1, 4, 6, 4);
  }

  {
    std::vector<int> targets{2, 0, 1, 2};
    Matrix point = oracle::random_matrix(4, 3, rng, -2.0, 2.0);
    out.push_back({"softmax_cross_entropy", ad::finite_difference_check(
                                                [targets](ad::Tape& t, ad::Var x) {
                                                  return ad::softmax_cross_entropy(t, x, targets);
                                                },
                                                point, tol)});
  }

  SampleSet s{{3, 0, 5}};
  check("pool_method1", [s](ad::Tape& t, ad::Var x) { return downsample_features_method1(t, x, s); }, 6, 4, 3, 4);
  check("pool_method2", [s](ad::Tape& t, ad::Var x) { return downsample_features_method2(t, x, s); }, 6, 4, 3, 4);
  check("pool_combine", [s](ad::Tape& t, ad::Var x) {
    return combine_features(t, downsample_features_method1(t, x, s), downsample_features_method2(t, x, s), 0.5);
  }, 6, 4, 3, 4);
  {
    auto sp = std::make_shared<SparseMatrix>(to_sparse(build_graph(4, {{0, 1}, {1, 2}, {2, 3}})));
    const Matrix wn = oracle::random_matrix(3, 5, rng), ws = oracle::random_matrix(3, 5, rng);
    for (bool normalized : {false, true})
      check(normalized ? "spatial_conv_normalized" : "spatial_conv", [=](ad::Tape& t, ad::Var x) {
        return spatial_conv(t, *sp, x, t.constant(wn), t.constant(ws), normalized);
      }, 4, 3, 4, 5);
  }
  return out;
}

/// A tiny batch of planted graphs with random embeddings, ready for `cfg`.
inline std::vector<GraphSample> tiny_batch(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GraphSample> out;
  for (int g = 0; g < 3; ++g) {
    const Index n = 7 + static_cast<Index>(rng() % 6);
    auto edges = oracle::random_edges(n, 0.35, rng);
    for (Index v = 0; v + 1 < n; v += 2) edges.emplace_back(v, v + 1);
    Graph graph = build_graph(n, edges);
    Matrix f = Matrix::Ones(static_cast<Eigen::Index>(n), 1);
    Matrix e = oracle::random_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.embedding_dim), rng);
    out.push_back(prepare_sample(graph, f, &e, g % cfg.num_classes, cfg, seed + static_cast<std::uint64_t>(g)));
  }
  return out;
}

inline ModelConfig tiny_config(PoolingMode pooling) {
  ModelConfig cfg;
  cfg.variant = Variant::GnnEsr;
  cfg.pooling = pooling;
  cfg.conv_width = 4;
  cfg.classifier_hidden = {5, 3};
  cfg.num_classes = 3;
  cfg.dropout = 0.3;
  cfg.init_seed = 5;
  return cfg;
}

/// Checks d(loss)/d(parameter) for every parameter of a small GNN-ESR, in
/// training mode with dropout (masks repeat through the tape seed).
inline std::vector<Case> model_cases(PoolingMode pooling, double tol) {
  ModelConfig cfg = tiny_config(pooling);
  GnnClassifier model(cfg);
  auto samples = tiny_batch(cfg, 21);
  GraphBatch batch = make_batch(samples);
  std::vector<Case> out;
  for (ad::Parameter* p : model.parameters()) {
    ad::Parameter* target = p;
    auto fn = [&, target](ad::Tape& t, ad::Var x) {
      ParamBinder bind = [&](ad::Tape& tt, ad::Parameter& q) { return &q == target ? x : tt.param(q); };
      ad::Var logits = model.forward(t, batch, true, bind);
      return ad::softmax_cross_entropy(t, logits, batch.labels);
    };
    std::string name = std::string(pooling_name(pooling)) + ":" + p->name;
    out.push_back({name, ad::finite_difference_check(fn, p->value, tol, 1e-5, 99)});
  }
  return out;
}

}  // namespace gradcheck
