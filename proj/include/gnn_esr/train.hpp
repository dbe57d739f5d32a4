#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "gnn_esr/embedding.hpp"
#include "gnn_esr/graph.hpp"
#include "gnn_esr/model.hpp"
#include "gnn_esr/optim.hpp"
#include "gnn_esr/synth.hpp"
#include "gnn_esr/tu_format.hpp"

namespace gnn_esr {

struct TrainConfig {
  Index epochs = 200;
  Index batch_size = 32;
  double lr_start = 0.005;
  double lr_end = 0.0005;
  /// First epoch trained at lr_end.
  Index decay_epoch = 100;
  Index folds = 10;
  std::uint64_t seed = 0;
  /// Worker threads for embedding and folds.
  Index jobs = 1;

  void validate() const {
    if (!(lr_end > 0.0 && lr_end <= lr_start)) throw std::invalid_argument("train config: need 0 < lr_end <= lr_start");
    if (folds < 2) throw std::invalid_argument("train config: folds must be >= 2");
    if (batch_size < 1) throw std::invalid_argument("train config: batch size must be >= 1");
    if (jobs < 1) throw std::invalid_argument("train config: jobs must be >= 1");
  }

  /// Step schedule: lr_start before decay_epoch, lr_end from then on. When
  /// the run is shorter than decay_epoch the step happens at its last epoch.
  double learning_rate(Index epoch) const {
    const Index step_at = std::min(decay_epoch, epochs > 0 ? epochs - 1 : 0);
    return epoch < step_at ? lr_start : lr_end;
  }

  std::string to_text() const {
    std::ostringstream s;
    s.precision(17);
    s << "train.epochs = " << epochs << '\n'
      << "train.batch_size = " << batch_size << '\n'
      << "train.lr_start = " << lr_start << '\n'
      << "train.lr_end = " << lr_end << '\n'
      << "train.decay_epoch = " << decay_epoch << '\n'
      << "train.folds = " << folds << '\n'
      << "train.seed = " << seed << '\n';
    return s.str();
  }
};

/// Runs fn(i) for i in [0, count) on up to `jobs` threads.
inline void parallel_for(Index count, Index jobs, const std::function<void(Index)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::jthread> workers;
  for (Index w = 0; w < std::min(jobs, count); ++w)
    workers.emplace_back([&] {
      for (Index i; (i = next++) < count;) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  workers.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Class-stratified folds. Each class is shuffled and dealt round-robin, the
/// dealing position carrying over between classes, so per-class and total
/// fold sizes both differ by at most one.
inline std::vector<std::vector<Index>> stratified_kfold(std::span<const int> class_labels, int num_classes,
                                                        Index folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("stratified_kfold: need at least two folds");
  std::vector<std::vector<Index>> members(static_cast<Index>(num_classes));
  for (Index i = 0; i < class_labels.size(); ++i) {
    const int c = class_labels[i];
    if (c < 0 || c >= num_classes) throw std::invalid_argument("stratified_kfold: class out of range");
    members[static_cast<Index>(c)].push_back(i);
  }
  for (Index c = 0; c < members.size(); ++c)
    if (members[c].size() < folds)
      throw std::invalid_argument("stratified_kfold: class " + std::to_string(c) + " has " +
                                  std::to_string(members[c].size()) + " graphs, fewer than " + std::to_string(folds) +
                                  " folds");
  Rng rng(seed);
  std::vector<std::vector<Index>> out(folds);
  Index cursor = 0;
  for (auto& m : members) {
    std::shuffle(m.begin(), m.end(), rng);
    for (Index i : m) out[cursor++ % folds].push_back(i);
  }
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

struct TrainResult {
  GnnClassifier model;
  std::vector<double> epoch_loss;
};

/// Minibatch Adam on softmax cross-entropy. Batches are reshuffled every epoch
/// from a seed derived from (seed, epoch); a trailing batch of one graph is
/// merged into the previous batch so batch statistics stay defined.
inline TrainResult train_fold(const ModelConfig& model_cfg, std::span<const GraphSample* const> train,
                              const TrainConfig& cfg, std::uint64_t seed,
                              const std::function<void(Index, double)>& on_epoch = {}) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("train_fold: empty training set");
  ModelConfig mc = model_cfg;
  mc.init_seed = derive_seed(seed, 0x1A17ULL);
  TrainResult result{GnnClassifier(mc), {}};
  GnnClassifier& model = result.model;
  auto params = model.parameters();
  ad::AdamState adam;

  std::vector<Index> order(train.size());
  std::iota(order.begin(), order.end(), Index{0});
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(seed, {0xE90C7ULL, epoch}));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::pair<Index, Index>> spans;
    for (Index b = 0; b < order.size(); b += cfg.batch_size) spans.emplace_back(b, std::min(order.size(), b + cfg.batch_size));
    if (spans.size() > 1 && spans.back().second - spans.back().first == 1) {
      spans[spans.size() - 2].second = spans.back().second;
      spans.pop_back();
    }
    const double lr = cfg.learning_rate(epoch);
    double loss_sum = 0.0;
    for (Index bi = 0; bi < spans.size(); ++bi) {
      std::vector<const GraphSample*> members;
      for (Index k = spans[bi].first; k < spans[bi].second; ++k) members.push_back(train[order[k]]);
      GraphBatch batch = make_batch(members);
      ad::Tape tape(derive_seed(seed, {0xD40Full, epoch, bi}));
      ad::Var logits = model.forward(tape, batch, true);
      ad::Var loss = ad::softmax_cross_entropy(tape, logits, batch.labels);
      model.zero_grad();
      tape.backward(loss);
      ad::adam_step(params, adam, lr);
      loss_sum += tape.value(loss)(0, 0) * static_cast<double>(members.size());
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(train.size()));
    if (on_epoch) on_epoch(epoch, result.epoch_loss.back());
  }
  return result;
}

/// Index of the largest entry of each row, lowest index on ties.
inline std::vector<int> predict_classes(const Matrix& logits) {
  std::vector<int> out(static_cast<Index>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(r, c) > logits(r, best)) best = c;
    out[static_cast<Index>(r)] = static_cast<int>(best);
  }
  return out;
}

inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw std::invalid_argument("accuracy: size mismatch");
  Index hits = 0;
  for (Index i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

/// Eval-mode argmax accuracy in [0, 1].
inline double evaluate(GnnClassifier& model, std::span<const GraphSample* const> test, Index batch_size = 64) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  std::vector<int> predicted, truth;
  for (Index b = 0; b < test.size(); b += batch_size) {
    auto part = test.subspan(b, std::min(batch_size, test.size() - b));
    GraphBatch batch = make_batch(part);
    auto pred = predict_classes(model.predict(batch));
    predicted.insert(predicted.end(), pred.begin(), pred.end());
    truth.insert(truth.end(), batch.labels.begin(), batch.labels.end());
  }
  return accuracy(predicted, truth);
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// Either a synthetic task (generated in memory) or a corpus on disk.
struct DataSource {
  std::optional<TaskId> task;
  Index size = 1000;
  std::optional<CorpusLocation> corpus;

  std::string name() const {
    if (task) return std::string(task_name(*task));
    if (corpus) return corpus->name;
    return "unknown";
  }
};

struct ExperimentSpec {
  DataSource source;
  ModelConfig model;
  TrainConfig train;
  EmbeddingConfig embedding;
  /// Discard node labels (unlabeled protocol for labeled corpora).
  bool drop_node_labels = false;
  std::optional<std::filesystem::path> embedding_cache;
  /// Progress lines; empty for silence.
  std::function<void(const std::string&)> log;
};

struct ExperimentReport {
  std::string dataset;
  std::string variant;
  std::string pooling;
  std::string config_text;
  std::uint64_t config_fingerprint = 0;
  std::uint64_t seed = 0;
  Index num_graphs = 0;
  int num_classes = 0;
  std::vector<Label> class_values;
  std::vector<double> fold_accuracy;
  std::vector<double> fold_final_loss;
  double mean = 0.0;
  double stddev = 0.0;
  double wall_seconds = 0.0;

  /// Deterministic part of the report: identical for identical inputs.
  std::string body() const {
    std::ostringstream s;
    char buf[64];
    s << "dataset = " << dataset << '\n'
      << "variant = " << variant << '\n'
      << "pooling = " << pooling << '\n'
      << "seed = " << seed << '\n'
      << "graphs = " << num_graphs << '\n'
      << "classes = " << num_classes << '\n'
      << "class_map =";
    for (Index c = 0; c < class_values.size(); ++c) s << ' ' << class_values[c] << "->" << c;
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_fingerprint));
    s << '\n' << "config_fingerprint = " << buf << '\n' << config_text;
    std::snprintf(buf, sizeof buf, "%.6f", mean);
    s << "mean_accuracy = " << buf << '\n';
    std::snprintf(buf, sizeof buf, "%.6f", stddev);
    s << "std_accuracy = " << buf << '\n' << "\nfold\taccuracy\tfinal_train_loss\n";
    for (Index f = 0; f < fold_accuracy.size(); ++f) {
      std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\n", f, fold_accuracy[f], fold_final_loss[f]);
      s << buf;
    }
    return s.str();
  }

  /// Run-specific metadata kept apart from the body.
  std::string header(std::string_view timestamp) const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", wall_seconds);
    return "# gnn-esr experiment report\n# finished: " + std::string(timestamp) + "\n# wall_clock_seconds: " + buf +
           "\n\n";
  }

  static std::string csv_header() { return "dataset,variant,pooling,seed,graphs,folds,mean,std,fold_accuracies\n"; }

  std::string csv_row() const {
    std::ostringstream s;
    char buf[64];
    s << dataset << ',' << variant << ',' << pooling << ',' << seed << ',' << num_graphs << ','
      << fold_accuracy.size() << ',';
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,", mean, stddev);
    s << buf;
    for (Index f = 0; f < fold_accuracy.size(); ++f) {
      std::snprintf(buf, sizeof buf, "%s%.6f", f ? ";" : "", fold_accuracy[f]);
      s << buf;
    }
    s << '\n';
    return s.str();
  }
};

inline std::pair<double, double> mean_and_std(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

inline LabeledGraphDataset load_dataset(const DataSource& src, std::uint64_t seed) {
  if (src.task) return gen_dataset(*src.task, src.size, derive_seed(seed, 0xDA7AULL));
  if (src.corpus) return read_tu_dataset(*src.corpus);
  throw std::invalid_argument("experiment: no task or corpus given");
}

/// Per-graph embeddings, optionally served from / stored to a cache directory.
/// Walks and negatives are seeded per graph; initial vectors are seeded per
/// node id and shared by every graph of the dataset unless `base` fixes them.
inline std::vector<Matrix> embed_dataset(const LabeledGraphDataset& ds, const EmbeddingConfig& base, std::uint64_t seed,
                                         Index jobs, const std::optional<std::filesystem::path>& cache = std::nullopt) {
  std::vector<Matrix> out(ds.size());
  if (cache) std::filesystem::create_directories(*cache);
  const std::uint64_t init_seed = base.init_seed.value_or(derive_seed(seed, 0x1417E3BULL));
  parallel_for(ds.size(), jobs, [&](Index i) {
    EmbeddingConfig cfg = base;
    cfg.init_seed = init_seed;
    cfg.seed = derive_seed(seed, {0xE3BEDULL, i});
    std::optional<std::filesystem::path> file;
    if (cache) {
      file = *cache / ("graph_" + std::to_string(i) + ".emb");
      if (auto hit = read_embedding_cache(*file, cfg.fingerprint());
          hit && hit->rows() == static_cast<Eigen::Index>(ds.graphs[i].num_nodes())) {
        out[i] = std::move(*hit);
        return;
      }
    }
    out[i] = embed_graph(ds.graphs[i], cfg);
    if (file) write_embedding_cache(*file, out[i], cfg.fingerprint());
  });
  return out;
}

/// Full pipeline: data, embeddings, stratified folds, per-fold training and
/// evaluation, aggregate report.
inline ExperimentReport run_experiment(const ExperimentSpec& spec) {
  const auto started = std::chrono::steady_clock::now();
  auto log = [&](const std::string& m) {
    if (spec.log) spec.log(m);
  };
  spec.train.validate();
  const std::uint64_t seed = spec.train.seed;

  LabeledGraphDataset ds = load_dataset(spec.source, seed);
  if (spec.drop_node_labels) {
    for (auto& g : ds.graphs) g = build_graph(g.num_nodes(), g.edge_list());
    ds.label_alphabet = {};
  }
  ds.validate();
  log("loaded " + std::to_string(ds.size()) + " graphs, " + std::to_string(ds.num_classes) + " classes");

  ModelConfig mc = spec.model;
  mc.num_classes = ds.num_classes;
  mc.feature_width = ds.label_alphabet.empty() ? 1 : ds.label_alphabet.size();
  mc.embedding_dim = spec.embedding.dim;
  mc.validate();

  std::vector<Matrix> embeddings;
  if (mc.uses_embedding() || mc.uses_pooling()) {
    embeddings = embed_dataset(ds, spec.embedding, seed, spec.train.jobs, spec.embedding_cache);
    log("embedded " + std::to_string(ds.size()) + " graphs");
  }

  std::vector<GraphSample> samples(ds.size());
  parallel_for(ds.size(), spec.train.jobs, [&](Index i) {
    Matrix f = node_features(ds.graphs[i], ds.label_alphabet);
    samples[i] = prepare_sample(ds.graphs[i], f, embeddings.empty() ? nullptr : &embeddings[i], ds.class_labels[i], mc,
                                derive_seed(seed, {0xF95ULL, i}));
  });

  auto folds = stratified_kfold(ds.class_labels, ds.num_classes, spec.train.folds, derive_seed(seed, 0xF01DULL));

  ExperimentReport report;
  report.fold_accuracy.resize(folds.size());
  report.fold_final_loss.resize(folds.size());
  parallel_for(folds.size(), spec.train.jobs, [&](Index f) {
    std::vector<bool> in_test(ds.size(), false);
    for (Index i : folds[f]) in_test[i] = true;
    std::vector<const GraphSample*> train, test;
    for (Index i = 0; i < ds.size(); ++i) (in_test[i] ? test : train).push_back(&samples[i]);
    TrainResult tr = train_fold(mc, train, spec.train, derive_seed(seed, {0xF0DULL, f}));
    report.fold_accuracy[f] = evaluate(tr.model, test);
    report.fold_final_loss[f] = tr.epoch_loss.empty() ? 0.0 : tr.epoch_loss.back();
    char buf[96];
    std::snprintf(buf, sizeof buf, "fold %zu: accuracy %.4f, final train loss %.4f", f, report.fold_accuracy[f],
                  report.fold_final_loss[f]);
    log(buf);
  });

  std::tie(report.mean, report.stddev) = mean_and_std(report.fold_accuracy);
  report.dataset = spec.source.name();
  report.variant = std::string(variant_name(mc.variant));
  report.pooling = std::string(pooling_name(mc.pooling));
  report.seed = seed;
  report.num_graphs = ds.size();
  report.num_classes = ds.num_classes;
  report.class_values = ds.class_values;
  std::ostringstream cfg;
  cfg << "data.source = " << report.dataset << '\n';
  if (spec.source.task) cfg << "data.size = " << spec.source.size << '\n';
  cfg << "data.drop_node_labels = " << (spec.drop_node_labels ? "true" : "false") << '\n'
      << mc.to_text() << spec.train.to_text() << "embedding.dim = " << spec.embedding.dim << '\n'
      << "embedding.walks_per_node = " << spec.embedding.walks_per_node << '\n'
      << "embedding.window = " << spec.embedding.window << '\n'
      << "embedding.negatives = " << spec.embedding.negatives << '\n'
      << "embedding.epochs = " << spec.embedding.epochs << '\n'
      << "embedding.step_size = " << spec.embedding.step_size << '\n'
      << "embedding.initial_vectors = per node id\n";
  report.config_text = cfg.str();
  std::uint64_t h = 0;
  for (char ch : report.config_text) h = mix64(h ^ static_cast<unsigned char>(ch));
  report.config_fingerprint = h;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace gnn_esr
