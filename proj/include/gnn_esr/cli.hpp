#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gnn_esr/embedding.hpp"
#include "gnn_esr/synth.hpp"
#include "gnn_esr/train.hpp"
#include "gnn_esr/tu_format.hpp"

namespace gnn_esr::cli {

/// Exit statuses of the command-line tool.
enum Exit : int { kOk = 0, kFailure = 1, kUsage = 2 };

/// Quick scale used by --quick.
inline constexpr Index kQuickSize = 200;
inline constexpr Index kQuickFolds = 3;

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

inline void write_file(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << text;
  if (!out) throw std::runtime_error("I/O failure writing " + file.string());
}

/// Error raised for files or directories that do not exist.
class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline CorpusLocation locate_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw MissingInput("dataset directory not found: " + dir.string());
  auto name = detect_corpus_name(dir);
  if (!name) throw MissingInput("no *_A.txt corpus file in " + dir.string());
  return {dir, *name};
}

struct Options {
  std::string task;
  std::string dataset_dir;
  std::string model = "gnn-esr";
  std::string pooling = "none";
  double lambda = 0.5;
  std::uint64_t seed = 0;
  std::optional<Index> epochs;
  std::optional<Index> folds;
  std::optional<Index> size;
  Index jobs = 1;
  std::string out;
  bool quick = false;
  bool drop_labels = false;
  bool verbose = false;
};

inline void add_common(CLI::App* app, Options& o) {
  app->add_option("--seed", o.seed, "Master seed");
  app->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

inline void add_training(CLI::App* app, Options& o) {
  app->add_option("--epochs", o.epochs, "Training epochs (default 200)")->check(CLI::PositiveNumber);
  app->add_option("--folds", o.folds, "Cross-validation folds (default 10)")->check(CLI::Range(2, 1000));
  app->add_flag("--quick", o.quick, "Smoke scale: 200 graphs, 3 folds");
  app->add_flag("-v,--verbose", o.verbose, "Progress lines on stderr");
}

inline TrainConfig train_config(const Options& o) {
  TrainConfig t;
  t.seed = o.seed;
  t.jobs = o.jobs;
  t.folds = o.folds.value_or(o.quick ? kQuickFolds : t.folds);
  if (o.epochs) {
    t.epochs = *o.epochs;
    t.decay_epoch = std::max<Index>(1, t.epochs / 2);
  }
  return t;
}

/// Runs one experiment and writes config.txt, report.txt and results.csv into `dir`.
inline ExperimentReport run_and_write(const ExperimentSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ExperimentReport report = run_experiment(spec);
  write_file(dir / "config.txt", report.config_text);
  write_file(dir / "report.txt", report.header(utc_timestamp()) + report.body());
  write_file(dir / "results.csv", ExperimentReport::csv_header() + report.csv_row());
  return report;
}

inline std::string percent(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * v;
  return s.str();
}

inline int cmd_generate(const Options& o, std::ostream& out) {
  const auto task = parse_task(o.task);
  const Index size = o.size.value_or(o.quick ? kQuickSize : 1000);
  LabeledGraphDataset ds = gen_dataset(*task, size, o.seed);
  const std::string name(task_name(*task));
  std::filesystem::create_directories(o.out);
  write_tu_dataset(ds, {o.out, name});
  std::ostringstream cfg;
  cfg << "task = " << name << "\nsize = " << size << "\nseed = " << o.seed << '\n';
  write_file(std::filesystem::path(o.out) / "config.txt", cfg.str());
  out << "wrote " << ds.size() << " " << name << " graphs to " << o.out << '\n';
  return kOk;
}

inline int cmd_embed(const Options& o, std::ostream& out) {
  const CorpusLocation loc = locate_corpus(o.dataset_dir);
  LabeledGraphDataset ds = read_tu_dataset(loc);
  EmbeddingConfig cfg;
  std::filesystem::create_directories(o.out);
  embed_dataset(ds, cfg, o.seed, o.jobs, std::filesystem::path(o.out));
  std::ostringstream text;
  text << "corpus = " << loc.name << "\ngraphs = " << ds.size() << "\nseed = " << o.seed
       << "\nembedding.dim = " << cfg.dim << "\nembedding.walks_per_node = " << cfg.walks_per_node
       << "\nembedding.window = " << cfg.window << "\nembedding.negatives = " << cfg.negatives
       << "\nembedding.epochs = " << cfg.epochs << "\nembedding.step_size = " << cfg.step_size << '\n';
  write_file(std::filesystem::path(o.out) / "config.txt", text.str());
  out << "embedded " << ds.size() << " graphs into " << o.out << '\n';
  return kOk;
}

inline ExperimentSpec base_spec(const Options& o) {
  ExperimentSpec spec;
  spec.train = train_config(o);
  spec.model.variant = o.model == "gnn" ? Variant::Gnn : Variant::GnnEsr;
  spec.model.pooling = o.pooling == "spatial" ? PoolingMode::Spatial : PoolingMode::None;
  spec.model.pool.lambda = o.lambda;
  spec.drop_node_labels = o.drop_labels;
  if (o.verbose) spec.log = [](const std::string& m) { std::cerr << m << std::endl; };
  return spec;
}

inline int cmd_train(const Options& o, std::ostream& out) {
  ExperimentSpec spec = base_spec(o);
  if (!o.dataset_dir.empty()) {
    spec.source.corpus = locate_corpus(o.dataset_dir);
  } else {
    spec.source.task = parse_task(o.task);
    spec.source.size = o.size.value_or(o.quick ? kQuickSize : 1000);
  }
  const std::filesystem::path dir = o.out.empty() ? std::filesystem::path("runs") / spec.source.name() : std::filesystem::path(o.out);
  spec.embedding_cache = dir / "embeddings";
  const ExperimentReport r = run_and_write(spec, dir);
  out << r.dataset << ' ' << r.variant << ' ' << r.pooling << ": " << percent(r.mean) << " +- " << percent(r.stddev)
      << " over " << r.fold_accuracy.size() << " folds\n"
      << "report written to " << (dir / "report.txt").string() << '\n';
  return kOk;
}

/// One row of the comparison produced by `reproduce`.
struct ReproRow {
  TaskId task;
  Variant variant;
  PoolingMode pooling;
  /// Comparison group the row belongs to.
  std::string group;
};

inline std::vector<ReproRow> reproduction_plan() {
  using enum TaskId;
  std::vector<ReproRow> rows;
  for (TaskId t : {Hlld, Cnc, Cnlc})
    for (Variant v : {Variant::Gnn, Variant::GnnEsr}) rows.push_back({t, v, PoolingMode::None, "topology"});
  for (TaskId t : {Nlc, Mdc})
    for (Variant v : {Variant::Gnn, Variant::GnnEsr}) rows.push_back({t, v, PoolingMode::None, "labels"});
  rows.push_back({Mdc, Variant::GnnEsr, PoolingMode::Spatial, "pooling"});
  for (Variant v : {Variant::Gnn, Variant::GnnEsr}) rows.push_back({TwoThree, v, PoolingMode::None, "two-three"});
  return rows;
}

inline int cmd_reproduce(const Options& o, std::ostream& out) {
  const std::filesystem::path root = o.out.empty() ? std::filesystem::path("reproduce") : std::filesystem::path(o.out);
  const Index size = o.size.value_or(o.quick ? kQuickSize : 1000);
  std::ostringstream csv, table;
  csv << "group," << ExperimentReport::csv_header();
  table << std::left << std::setw(11) << "group" << std::setw(10) << "task" << std::setw(9) << "model" << std::setw(9)
        << "pooling" << "accuracy\n";
  for (const ReproRow& row : reproduction_plan()) {
    Options ro = o;
    ro.model = std::string(variant_name(row.variant));
    ro.pooling = std::string(pooling_name(row.pooling));
    ExperimentSpec spec = base_spec(ro);
    spec.source.task = row.task;
    spec.source.size = size;
    // one embedding cache per task, shared by every model
    spec.embedding_cache = root / "embeddings" / std::string(task_name(row.task));
    const std::string run = std::string(task_name(row.task)) + "_" + ro.model + "_" + ro.pooling;
    if (o.verbose) std::cerr << "== " << run << std::endl;
    const ExperimentReport r = run_and_write(spec, root / run);
    csv << row.group << ',' << r.csv_row();
    table << std::left << std::setw(11) << row.group << std::setw(10) << task_name(row.task) << std::setw(9)
          << ro.model << std::setw(9) << ro.pooling << percent(r.mean) << " +- " << percent(r.stddev)
          << '\n';
  }
  write_file(root / "summary.csv", csv.str());
  write_file(root / "comparison.txt", table.str());
  out << table.str() << "summary written to " << (root / "summary.csv").string() << '\n';
  return kOk;
}

inline int cmd_inspect(const Options& o, std::ostream& out) {
  const CorpusLocation loc = locate_corpus(o.dataset_dir);
  LabeledGraphDataset ds = read_tu_dataset(loc);
  Index min_n = std::numeric_limits<Index>::max(), max_n = 0, nodes = 0, edges = 0, disconnected = 0;
  for (const Graph& g : ds.graphs) {
    min_n = std::min(min_n, g.num_nodes());
    max_n = std::max(max_n, g.num_nodes());
    nodes += g.num_nodes();
    edges += g.num_edges();
    disconnected += !is_connected(g);
  }
  const double count = std::max<double>(1.0, static_cast<double>(ds.size()));
  out << "corpus: " << loc.name << '\n'
      << "graphs: " << ds.size() << '\n'
      << "classes: " << ds.num_classes << '\n';
  const auto counts = ds.class_counts();
  for (Index c = 0; c < counts.size(); ++c)
    out << "  class " << ds.class_values[c] << ": " << counts[c] << " graphs\n";
  out << std::fixed << std::setprecision(2) << "nodes per graph: min " << (ds.size() ? min_n : 0) << ", max " << max_n
      << ", mean " << static_cast<double>(nodes) / count << '\n'
      << "edges per graph: mean " << static_cast<double>(edges) / count << '\n'
      << "disconnected graphs: " << disconnected << '\n'
      << "node labels: " << (ds.label_alphabet.empty() ? std::string("none") : std::to_string(ds.label_alphabet.size()) + " values")
      << '\n'
      << "node attributes: " << (ds.node_attributes ? "yes" : "no") << '\n';
  return kOk;
}

}  // namespace detail

/// Entry point of the `gnn-esr` tool. Returns the process exit status.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using detail::Options;
  Options o;
  CLI::App app{"Graph classification with spatial representations (GNN-ESR) and spatial pooling", "gnn-esr"};
  app.require_subcommand(1);
  app.fallthrough(false);

  const auto task_names = [] {
    std::vector<std::string> v;
    for (TaskId t : kAllTasks) v.emplace_back(task_name(t));
    return v;
  }();

  CLI::App* gen = app.add_subcommand("generate", "Write a synthetic task dataset in TU format");
  gen->add_option("--task", o.task, "Synthetic task")->required()->check(CLI::IsMember(task_names));
  gen->add_option("--size", o.size, "Number of graphs (default 1000)")->check(CLI::PositiveNumber);
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_flag("--quick", o.quick, "200 graphs");
  gen->add_option("--seed", o.seed, "Master seed");

  CLI::App* emb = app.add_subcommand("embed", "Compute the embedding cache of a TU corpus");
  emb->add_option("--dataset-dir", o.dataset_dir, "Directory holding the corpus files")->required();
  emb->add_option("--out", o.out, "Cache directory")->required();
  detail::add_common(emb, o);

  CLI::App* train = app.add_subcommand("train", "Cross-validate one model on one dataset");
  auto* task_opt = train->add_option("--task", o.task, "Synthetic task")->check(CLI::IsMember(task_names));
  auto* dir_opt = train->add_option("--dataset-dir", o.dataset_dir, "Directory holding a TU corpus");
  task_opt->excludes(dir_opt);
  train->add_option("--size", o.size, "Synthetic dataset size (default 1000)")->check(CLI::PositiveNumber);
  train->add_option("--model", o.model, "Model variant")->check(CLI::IsMember({"gnn", "gnn-esr"}));
  train->add_option("--pooling", o.pooling, "Pooling layer")->check(CLI::IsMember({"none", "spatial"}));
  train->add_option("--lambda", o.lambda, "Pooling mix weight")->check(CLI::Range(0.0, 1.0));
  train->add_flag("--drop-node-labels", o.drop_labels, "Ignore node labels of the corpus");
  train->add_option("--out", o.out, "Run directory (default runs/<dataset>)");
  detail::add_common(train, o);
  detail::add_training(train, o);

  CLI::App* repro = app.add_subcommand("reproduce", "Run every GNN / GNN-ESR comparison on the synthetic tasks");
  repro->add_option("--size", o.size, "Dataset size (default 1000)")->check(CLI::PositiveNumber);
  repro->add_option("--lambda", o.lambda, "Pooling mix weight")->check(CLI::Range(0.0, 1.0));
  repro->add_option("--out", o.out, "Output directory (default reproduce/)");
  detail::add_common(repro, o);
  detail::add_training(repro, o);

  CLI::App* inspect = app.add_subcommand("inspect", "Summary statistics of a TU corpus");
  inspect->add_option("--dataset-dir", o.dataset_dir, "Directory holding the corpus files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << (e.get_name() == "CallForAllHelp" ? app.help("", CLI::AppFormatMode::All) : app.help());
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "gnn-esr: " << e.what() << "\n\n";
    CLI::App* context = &app;
    for (CLI::App* sub : app.get_subcommands()) context = sub;
    err << context->help();
    return kUsage;
  }

  if (train->parsed() && o.task.empty() && o.dataset_dir.empty()) {
    err << "gnn-esr: train needs --task or --dataset-dir\n\n" << train->help();
    return kUsage;
  }

  try {
    if (gen->parsed()) return detail::cmd_generate(o, out);
    if (emb->parsed()) return detail::cmd_embed(o, out);
    if (train->parsed()) return detail::cmd_train(o, out);
    if (repro->parsed()) return detail::cmd_reproduce(o, out);
    if (inspect->parsed()) return detail::cmd_inspect(o, out);
  } catch (const std::exception& e) {
    err << "gnn-esr: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace gnn_esr::cli
