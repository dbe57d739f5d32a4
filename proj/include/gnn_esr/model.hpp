#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gnn_esr/autodiff.hpp"
#include "gnn_esr/graph.hpp"
#include "gnn_esr/optim.hpp"
#include "gnn_esr/pooling.hpp"
#include "gnn_esr/random.hpp"

namespace gnn_esr {

enum class Variant { Gnn, GnnEsr };
enum class PoolingMode { None, Spatial };

inline std::string_view variant_name(Variant v) { return v == Variant::Gnn ? "gnn" : "gnn-esr"; }
inline std::string_view pooling_name(PoolingMode p) { return p == PoolingMode::None ? "none" : "spatial"; }

struct ModelConfig {
  Variant variant = Variant::GnnEsr;
  PoolingMode pooling = PoolingMode::None;
  /// d_f, the width of F.
  Index feature_width = 1;
  Index embedding_dim = 12;
  Index conv_width = 64;
  // Block sizes: k1 + k2 convolutions before pooling, k3 after it, k4 pooling layers.
  Index k1 = 1;
  Index k2 = 2;
  Index k3 = 2;
  Index k4 = 1;
  bool normalized_conv = false;
  std::vector<Index> classifier_hidden{128, 64};
  double dropout = 0.5;
  int num_classes = 2;
  PoolingConfig pool;
  std::uint64_t init_seed = 0;

  bool uses_embedding() const { return variant == Variant::GnnEsr; }
  bool uses_pooling() const { return pooling == PoolingMode::Spatial; }
  Index input_width() const { return feature_width + (uses_embedding() ? embedding_dim : 0); }
  Index pre_pool_layers() const { return k1 + k2; }
  Index post_pool_layers() const { return uses_pooling() ? k3 : 0; }
  /// Width of the graph representation fed to the classifier.
  Index readout_width() const { return conv_width * (pre_pool_layers() + post_pool_layers()); }

  void validate() const {
    if (feature_width < 1 || conv_width < 1 || embedding_dim < 1)
      throw std::invalid_argument("model config: widths must be >= 1");
    if (pre_pool_layers() < 1) throw std::invalid_argument("model config: need at least one convolution");
    if (uses_pooling() && (k4 != 1 || k3 < 1))
      throw std::invalid_argument("model config: spatial pooling needs k4 = 1 and k3 >= 1");
    for (Index h : classifier_hidden)
      if (h < 1) throw std::invalid_argument("model config: classifier widths must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("model config: need at least two classes");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("model config: dropout must be in [0, 1)");
    pool.validate();
  }

  /// Resolved configuration as "key = value" lines.
  std::string to_text() const {
    std::ostringstream s;
    s.precision(17);
    s << "model.variant = " << variant_name(variant) << '\n'
      << "model.pooling = " << pooling_name(pooling) << '\n'
      << "model.feature_width = " << feature_width << '\n'
      << "model.embedding_dim = " << embedding_dim << '\n'
      << "model.conv_width = " << conv_width << '\n'
      << "model.k = " << k1 << ',' << k2 << ',' << k3 << ',' << k4 << '\n'
      << "model.normalized_conv = " << (normalized_conv ? "true" : "false") << '\n'
      << "model.classifier_hidden = ";
    for (Index i = 0; i < classifier_hidden.size(); ++i) s << (i ? "," : "") << classifier_hidden[i];
    s << '\n'
      << "model.dropout = " << dropout << '\n'
      << "model.num_classes = " << num_classes << '\n'
      << "model.lambda = " << pool.lambda << '\n'
      << "model.reach_radius = " << pool.reach_radius << '\n';
    return s.str();
  }
};

inline ad::SparseMatrix to_sparse(const Graph& g) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * g.num_edges());
  for (Index v = 0; v < g.num_nodes(); ++v)
    for (Index w : g.neighbors(v))
      trip.emplace_back(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(w), 1.0);
  ad::SparseMatrix a(static_cast<Eigen::Index>(g.num_nodes()), static_cast<Eigen::Index>(g.num_nodes()));
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

/// Node sampling result plus the coarsened graph it induces.
struct PoolingPlan {
  SampleSet samples;
  Graph coarse_graph;
};

/// Farthest-point sampling over the embedding rows followed by reachability
/// coarsening. `first` pins the initial index; otherwise it is drawn from `seed`.
inline PoolingPlan make_pooling_plan(const Graph& g, const Matrix& embedding, const PoolingConfig& cfg,
                                     std::uint64_t seed, std::optional<Index> first = std::nullopt) {
  const Index m = sample_count(g.num_nodes());
  PoolingPlan plan;
  plan.samples = first ? farthest_point_sampling_from(embedding, m, *first)
                       : farthest_point_sampling(embedding, m, seed);
  plan.coarse_graph = downsample_adjacency(g, plan.samples, cfg.reach_radius);
  return plan;
}

/// One graph prepared for the network: adjacency, input features and, with
/// pooling, its fixed pooling plan.
struct GraphSample {
  ad::SparseMatrix adjacency;
  Matrix features;
  int label = 0;
  std::optional<SampleSet> samples;
  ad::SparseMatrix pooled_adjacency;

  Index num_nodes() const { return static_cast<Index>(features.rows()); }
};

/// Builds [F | E] (ESR) or [F] (plain GNN) and, when pooling, the pooling plan.
inline GraphSample prepare_sample(const Graph& g, const Matrix& features, const Matrix* embedding, int label,
                                  const ModelConfig& cfg, std::uint64_t fps_seed,
                                  std::optional<Index> fps_first = std::nullopt) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  if (n == 0) throw std::invalid_argument("prepare_sample: graph has no nodes");
  if (features.rows() != n || features.cols() != static_cast<Eigen::Index>(cfg.feature_width))
    throw std::invalid_argument("prepare_sample: feature matrix shape does not match graph/config");
  if ((cfg.uses_embedding() || cfg.uses_pooling()) &&
      (!embedding || embedding->rows() != n || embedding->cols() != static_cast<Eigen::Index>(cfg.embedding_dim)))
    throw std::invalid_argument("prepare_sample: embedding matrix missing or misshaped");

  GraphSample s;
  s.label = label;
  s.adjacency = to_sparse(g);
  if (cfg.uses_embedding()) {
    s.features.resize(n, features.cols() + embedding->cols());
    s.features << features, *embedding;
  } else {
    s.features = features;
  }
  if (cfg.uses_pooling()) {
    PoolingPlan plan = make_pooling_plan(g, *embedding, cfg.pool, fps_seed, fps_first);
    s.pooled_adjacency = to_sparse(plan.coarse_graph);
    s.samples = std::move(plan.samples);
  }
  return s;
}

/// Several graphs stacked block-diagonally. Graph b owns rows
/// [offsets[b], offsets[b+1]) of the node matrices.
struct GraphBatch {
  ad::SparseMatrix adjacency;
  Matrix features;
  std::vector<Eigen::Index> offsets{0};
  std::vector<int> labels;
  ad::SparseMatrix pooled_adjacency;
  std::vector<Eigen::Index> pooled_offsets{0};
  std::vector<SampleSet> samples;

  Index size() const { return labels.size(); }
};

inline GraphBatch make_batch(std::span<const GraphSample* const> graphs) {
  if (graphs.empty()) throw std::invalid_argument("make_batch: empty batch");
  GraphBatch b;
  const bool pooled = graphs.front()->samples.has_value();
  Eigen::Index rows = 0, pooled_rows = 0, nnz = 0, pooled_nnz = 0;
  for (const GraphSample* g : graphs) {
    if (g->samples.has_value() != pooled) throw std::invalid_argument("make_batch: mixed pooled and unpooled graphs");
    rows += g->features.rows();
    nnz += g->adjacency.nonZeros();
    b.offsets.push_back(rows);
    b.labels.push_back(g->label);
    if (pooled) {
      pooled_rows += static_cast<Eigen::Index>(g->samples->size());
      pooled_nnz += g->pooled_adjacency.nonZeros();
      b.pooled_offsets.push_back(pooled_rows);
      b.samples.push_back(*g->samples);
    }
  }
  const Eigen::Index width = graphs.front()->features.cols();
  b.features.resize(rows, width);
  std::vector<Eigen::Triplet<double>> trip, pooled_trip;
  trip.reserve(static_cast<std::size_t>(nnz));
  pooled_trip.reserve(static_cast<std::size_t>(pooled_nnz));
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const GraphSample& g = *graphs[i];
    if (g.features.cols() != width) throw std::invalid_argument("make_batch: feature widths differ");
    const Eigen::Index off = b.offsets[i];
    b.features.middleRows(off, g.features.rows()) = g.features;
    for (Eigen::Index r = 0; r < g.adjacency.outerSize(); ++r)
      for (ad::SparseMatrix::InnerIterator it(g.adjacency, r); it; ++it)
        trip.emplace_back(off + it.row(), off + it.col(), it.value());
    if (pooled) {
      const Eigen::Index poff = b.pooled_offsets[i];
      for (Eigen::Index r = 0; r < g.pooled_adjacency.outerSize(); ++r)
        for (ad::SparseMatrix::InnerIterator it(g.pooled_adjacency, r); it; ++it)
          pooled_trip.emplace_back(poff + it.row(), poff + it.col(), it.value());
    }
  }
  b.adjacency.resize(rows, rows);
  b.adjacency.setFromTriplets(trip.begin(), trip.end());
  if (pooled) {
    b.pooled_adjacency.resize(pooled_rows, pooled_rows);
    b.pooled_adjacency.setFromTriplets(pooled_trip.begin(), pooled_trip.end());
  }
  return b;
}

inline GraphBatch make_batch(std::span<const GraphSample> graphs) {
  std::vector<const GraphSample*> ptrs;
  for (const auto& g : graphs) ptrs.push_back(&g);
  return make_batch(std::span<const GraphSample* const>(ptrs));
}

/// Multiplies row r of x by scale[r]; `scale` is constant.
inline ad::Var row_scale(ad::Tape& t, ad::Var x, Eigen::VectorXd scale) {
  if (scale.size() != t.value(x).rows()) throw ad::ShapeError("row_scale: length mismatch");
  ad::Matrix out = t.value(x).array().colwise() * scale.array();
  return t.record(std::move(out), {x}, [x, scale = std::move(scale)](ad::Tape& t, const ad::Matrix& g) {
    t.accumulate(x, (g.array().colwise() * scale.array()).matrix());
  });
}

/// Spatial convolution A f(X phi_neighbor) + f(X phi_self), f = ReLU. With
/// `normalized`, the neighbor term of each row is divided by its degree; rows
/// of isolated nodes keep only the self term.
inline ad::Var spatial_conv(ad::Tape& t, const ad::SparseMatrix& adjacency, ad::Var x, ad::Var phi_neighbor,
                            ad::Var phi_self, bool normalized = false) {
  const auto& xv = t.value(x);
  if (xv.cols() != t.value(phi_neighbor).rows() || xv.cols() != t.value(phi_self).rows())
    throw ad::ShapeError("spatial_conv: input width does not match weights");
  if (adjacency.rows() != xv.rows()) throw ad::ShapeError("spatial_conv: adjacency size does not match rows");
  ad::Var neighbor = ad::sparse_matmul(t, adjacency, ad::relu(t, ad::matmul(t, x, phi_neighbor)), true);
  if (normalized) {
    Eigen::VectorXd inv(adjacency.rows());
    for (Eigen::Index r = 0; r < adjacency.rows(); ++r) {
      const double d = adjacency.row(r).sum();
      inv(r) = d > 0.0 ? 1.0 / d : 0.0;
    }
    neighbor = row_scale(t, neighbor, std::move(inv));
  }
  return ad::add(t, neighbor, ad::relu(t, ad::matmul(t, x, phi_self)));
}

/// Makes the tape variable for a parameter. Replaceable so tests can route a
/// parameter through a differentiable input.
using ParamBinder = std::function<ad::Var(ad::Tape&, ad::Parameter&)>;

/// GNN / GNN-ESR graph classifier, with optional spatial pooling.
class GnnClassifier {
 public:
  explicit GnnClassifier(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(derive_seed(cfg_.init_seed, 0x1417ULL));
    const auto w = static_cast<Eigen::Index>(cfg_.conv_width);
    Eigen::Index in = static_cast<Eigen::Index>(cfg_.input_width());
    for (Index l = 0; l < cfg_.pre_pool_layers(); ++l) {
      convs_.push_back(make_conv("conv" + std::to_string(l), in, w, rng));
      in = w;
    }
    for (Index l = 0; l < cfg_.post_pool_layers(); ++l)
      post_convs_.push_back(make_conv("pool_conv" + std::to_string(l), w, w, rng));

    in = static_cast<Eigen::Index>(cfg_.readout_width());
    for (Index l = 0; l < cfg_.classifier_hidden.size(); ++l) {
      const auto out = static_cast<Eigen::Index>(cfg_.classifier_hidden[l]);
      Dense d;
      const std::string p = "fc" + std::to_string(l);
      d.weight = ad::Parameter(p + ".weight", glorot(in, out, rng));
      d.bias = ad::Parameter(p + ".bias", Matrix::Zero(1, out));
      d.gamma = ad::Parameter(p + ".bn.gamma", Matrix::Ones(1, out));
      d.beta = ad::Parameter(p + ".bn.beta", Matrix::Zero(1, out));
      d.bn = ad::BatchNormState(out);
      hidden_.push_back(std::move(d));
      in = out;
    }
    out_weight_ = ad::Parameter("out.weight", glorot(in, cfg_.num_classes, rng));
    out_bias_ = ad::Parameter("out.bias", Matrix::Zero(1, cfg_.num_classes));
  }

  GnnClassifier(const GnnClassifier&) = delete;
  GnnClassifier& operator=(const GnnClassifier&) = delete;
  GnnClassifier(GnnClassifier&&) = default;
  GnnClassifier& operator=(GnnClassifier&&) = default;

  const ModelConfig& config() const { return cfg_; }

  /// Logits (B x C). Training mode enables dropout and batch statistics.
  ad::Var forward(ad::Tape& t, const GraphBatch& batch, bool training, const ParamBinder& bind = {}) {
    auto p = [&](ad::Parameter& param) { return bind ? bind(t, param) : t.param(param); };
    if (batch.features.cols() != static_cast<Eigen::Index>(cfg_.input_width()))
      throw ad::ShapeError("forward: batch feature width " + std::to_string(batch.features.cols()) +
                           " does not match model input width " + std::to_string(cfg_.input_width()));
    if (batch.offsets.size() != batch.size() + 1 || batch.offsets.back() != batch.features.rows())
      throw std::invalid_argument("forward: batch membership is inconsistent");

    ad::Var h = t.constant(batch.features);
    std::vector<ad::Var> levels;
    for (auto& c : convs_) {
      h = conv_forward(t, c, batch.adjacency, h, training, p);
      levels.push_back(h);
    }
    ad::Var readout = ad::segment_max(t, ad::concat_cols(t, levels), batch.offsets);

    if (cfg_.uses_pooling()) {
      if (batch.samples.size() != batch.size()) throw std::invalid_argument("forward: batch has no pooling plans");
      std::vector<ad::Var> pooled;
      for (Index b = 0; b < batch.size(); ++b) {
        const Eigen::Index begin = batch.offsets[b], rows = batch.offsets[b + 1] - begin;
        ad::Var xb = ad::slice_rows(t, h, begin, rows);
        ad::Var sampled = downsample_features_method1(t, xb, batch.samples[b]);
        ad::Var attended = downsample_features_method2(t, xb, batch.samples[b]);
        pooled.push_back(combine_features(t, sampled, attended, cfg_.pool.lambda));
      }
      ad::Var hs = ad::concat_rows(t, pooled);
      std::vector<ad::Var> post_levels;
      for (auto& c : post_convs_) {
        hs = conv_forward(t, c, batch.pooled_adjacency, hs, training, p);
        post_levels.push_back(hs);
      }
      ad::Var pooled_readout = ad::segment_max(t, ad::concat_cols(t, post_levels), batch.pooled_offsets);
      std::vector<ad::Var> both{readout, pooled_readout};
      readout = ad::concat_cols(t, both);
    }

    ad::Var z = readout;
    for (auto& d : hidden_) {
      z = ad::add_bias(t, ad::matmul(t, z, p(d.weight)), p(d.bias));
      z = ad::batch_norm(t, z, p(d.gamma), p(d.beta), d.bn, training);
      z = ad::relu(t, z);
      z = ad::dropout(t, z, cfg_.dropout, training);
    }
    return ad::add_bias(t, ad::matmul(t, z, p(out_weight_)), p(out_bias_));
  }

  /// Evaluation-mode logits.
  Matrix predict(const GraphBatch& batch) {
    ad::Tape t;
    return t.value(forward(t, batch, false));
  }

  std::vector<ad::Parameter*> parameters() {
    std::vector<ad::Parameter*> out;
    for (auto* layers : {&convs_, &post_convs_})
      for (auto& c : *layers)
        for (auto* q : {&c.phi_neighbor, &c.phi_self, &c.gamma, &c.beta}) out.push_back(q);
    for (auto& d : hidden_)
      for (auto* q : {&d.weight, &d.bias, &d.gamma, &d.beta}) out.push_back(q);
    out.push_back(&out_weight_);
    out.push_back(&out_bias_);
    return out;
  }

  ad::Parameter* find_parameter(std::string_view name) {
    for (auto* q : parameters())
      if (q->name == name) return q;
    return nullptr;
  }

  void zero_grad() {
    for (auto* q : parameters()) q->zero_grad();
  }

  /// Parameters plus batch-norm running statistics, for checkpoints.
  std::vector<ad::NamedTensor> state() {
    std::vector<ad::NamedTensor> out;
    for (auto* q : parameters()) out.push_back({q->name, q->value});
    for (auto& [name, bn] : batch_norms()) {
      out.push_back({name + ".running_mean", bn->running_mean});
      out.push_back({name + ".running_var", bn->running_var});
    }
    return out;
  }

  void load_state(std::span<const ad::NamedTensor> tensors) {
    auto find = [&](const std::string& name) -> const Matrix& {
      for (const auto& t : tensors)
        if (t.name == name) return t.value;
      throw std::invalid_argument("checkpoint lacks tensor '" + name + "'");
    };
    for (auto* q : parameters()) {
      const Matrix& v = find(q->name);
      if (v.rows() != q->value.rows() || v.cols() != q->value.cols())
        throw ad::ShapeError("checkpoint tensor '" + q->name + "' has the wrong shape");
      q->value = v;
    }
    for (auto& [name, bn] : batch_norms()) {
      bn->running_mean = find(name + ".running_mean");
      bn->running_var = find(name + ".running_var");
    }
  }

 private:
  struct Conv {
    ad::Parameter phi_neighbor, phi_self, gamma, beta;
    ad::BatchNormState bn;
    std::string name;
  };
  struct Dense {
    ad::Parameter weight, bias, gamma, beta;
    ad::BatchNormState bn;
  };

  static Matrix glorot(Eigen::Index in, Eigen::Index out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix m(in, out);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
  }

  static Conv make_conv(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng) {
    Conv c;
    c.name = name;
    c.phi_neighbor = ad::Parameter(name + ".phi_neighbor", glorot(in, out, rng));
    c.phi_self = ad::Parameter(name + ".phi_self", glorot(in, out, rng));
    c.gamma = ad::Parameter(name + ".bn.gamma", Matrix::Ones(1, out));
    c.beta = ad::Parameter(name + ".bn.beta", Matrix::Zero(1, out));
    c.bn = ad::BatchNormState(out);
    return c;
  }

  template <typename Bind>
  ad::Var conv_forward(ad::Tape& t, Conv& c, const ad::SparseMatrix& adjacency, ad::Var x, bool training, Bind& p) {
    ad::Var y = spatial_conv(t, adjacency, x, p(c.phi_neighbor), p(c.phi_self), cfg_.normalized_conv);
    return ad::batch_norm(t, y, p(c.gamma), p(c.beta), c.bn, training);
  }

  std::vector<std::pair<std::string, ad::BatchNormState*>> batch_norms() {
    std::vector<std::pair<std::string, ad::BatchNormState*>> out;
    for (auto* layers : {&convs_, &post_convs_})
      for (auto& c : *layers) out.emplace_back(c.name + ".bn", &c.bn);
    for (Index l = 0; l < hidden_.size(); ++l) out.emplace_back("fc" + std::to_string(l) + ".bn", &hidden_[l].bn);
    return out;
  }

  ModelConfig cfg_;
  std::vector<Conv> convs_;
  std::vector<Conv> post_convs_;
  std::vector<Dense> hidden_;
  ad::Parameter out_weight_;
  ad::Parameter out_bias_;
};

}  // namespace gnn_esr
