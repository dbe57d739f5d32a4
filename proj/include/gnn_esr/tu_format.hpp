#pragma once

// Reader and writer for the line-oriented benchmark corpus format:
//
//   <name>_A.txt               "i, j" per line, 1-indexed global node ids
//   <name>_graph_indicator.txt graph id (1-indexed) of node i on line i
//   <name>_graph_labels.txt    class value of graph g on line g
//   <name>_node_labels.txt     optional, categorical label of node i on line i
//   <name>_node_attributes.txt optional, comma-separated reals of node i

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gnn_esr/graph.hpp"

namespace gnn_esr {

struct CorpusLocation {
  std::filesystem::path directory;
  std::string name;

  std::filesystem::path file(std::string_view suffix) const {
    return directory / (name + "_" + std::string(suffix) + ".txt");
  }
};

class CorpusFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace tu_detail {

inline std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline long long parse_int(std::string_view token, const std::filesystem::path& file, Index line) {
  token = trim(token);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size())
    throw CorpusFormatError(file.string() + ":" + std::to_string(line) + ": expected integer, got '" +
                            std::string(token) + "'");
  return v;
}

inline double parse_real(std::string_view token, const std::filesystem::path& file, Index line) {
  std::string t(trim(token));
  try {
    std::size_t used = 0;
    double v = std::stod(t, &used);
    if (used == t.size()) return v;
  } catch (const std::exception&) {
  }
  throw CorpusFormatError(file.string() + ":" + std::to_string(line) + ": expected number, got '" + t + "'");
}

/// Non-blank lines of a file, with their 1-based line numbers.
inline std::vector<std::pair<Index, std::string>> read_lines(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw CorpusFormatError("cannot open " + file.string());
  std::vector<std::pair<Index, std::string>> out;
  std::string line;
  Index number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!trim(line).empty()) out.emplace_back(number, line);
  }
  return out;
}

inline std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  for (;;) {
    auto p = s.find(',');
    out.push_back(s.substr(0, p));
    if (p == std::string_view::npos) break;
    s.remove_prefix(p + 1);
  }
  return out;
}

}  // namespace tu_detail

/// Loads a corpus. Node ids and classes are remapped to contiguous 0-based ids
/// (classes in first-appearance order); self-loops are dropped and edges are
/// symmetrized and deduplicated.
inline LabeledGraphDataset read_tu_dataset(const CorpusLocation& loc) {
  using namespace tu_detail;
  const auto indicator_file = loc.file("graph_indicator");
  const auto labels_file = loc.file("graph_labels");
  const auto edges_file = loc.file("A");
  for (const auto& f : {indicator_file, labels_file, edges_file})
    if (!std::filesystem::exists(f)) throw CorpusFormatError("missing file " + f.string());

  LabeledGraphDataset ds;
  std::map<long long, int> class_id;
  for (auto& [line, text] : read_lines(labels_file)) {
    long long v = parse_int(text, labels_file, line);
    auto [it, inserted] = class_id.emplace(v, static_cast<int>(class_id.size()));
    if (inserted) ds.class_values.push_back(v);
    ds.class_labels.push_back(it->second);
  }
  const Index num_graphs = ds.class_labels.size();
  ds.num_classes = static_cast<int>(class_id.size());

  std::vector<Index> graph_of, local_id;
  std::vector<Index> nodes_in(num_graphs, 0);
  for (auto& [line, text] : read_lines(indicator_file)) {
    long long gid = parse_int(text, indicator_file, line);
    if (gid < 1 || static_cast<Index>(gid) > num_graphs)
      throw CorpusFormatError(indicator_file.string() + ":" + std::to_string(line) + ": node references graph " +
                              std::to_string(gid) + " but only " + std::to_string(num_graphs) + " graphs exist");
    Index g = static_cast<Index>(gid - 1);
    graph_of.push_back(g);
    local_id.push_back(nodes_in[g]++);
  }
  const Index total_nodes = graph_of.size();

  std::vector<std::vector<Edge>> edges(num_graphs);
  for (auto& [line, text] : read_lines(edges_file)) {
    auto parts = split_commas(text);
    if (parts.size() != 2)
      throw CorpusFormatError(edges_file.string() + ":" + std::to_string(line) + ": expected 'i, j'");
    long long u = parse_int(parts[0], edges_file, line);
    long long v = parse_int(parts[1], edges_file, line);
    for (long long x : {u, v})
      if (x < 1 || static_cast<Index>(x) > total_nodes)
        throw CorpusFormatError(edges_file.string() + ":" + std::to_string(line) + ": dangling endpoint " +
                                std::to_string(x));
    Index a = static_cast<Index>(u - 1), b = static_cast<Index>(v - 1);
    if (graph_of[a] != graph_of[b])
      throw CorpusFormatError(edges_file.string() + ":" + std::to_string(line) + ": edge joins two graphs");
    if (a == b) continue;
    edges[graph_of[a]].emplace_back(local_id[a], local_id[b]);
  }

  std::optional<std::vector<std::vector<Label>>> node_labels;
  if (auto f = loc.file("node_labels"); std::filesystem::exists(f)) {
    auto lines = read_lines(f);
    if (lines.size() != total_nodes) throw CorpusFormatError(f.string() + ": one label per node required");
    node_labels.emplace(num_graphs);
    std::vector<Label> all;
    for (Index g = 0; g < num_graphs; ++g) (*node_labels)[g].resize(nodes_in[g]);
    for (Index i = 0; i < total_nodes; ++i) {
      Label l = parse_int(lines[i].second, f, lines[i].first);
      (*node_labels)[graph_of[i]][local_id[i]] = l;
      all.push_back(l);
    }
    ds.label_alphabet = LabelAlphabet::from_values(std::move(all));
  }

  if (auto f = loc.file("node_attributes"); std::filesystem::exists(f)) {
    auto lines = read_lines(f);
    if (lines.size() != total_nodes) throw CorpusFormatError(f.string() + ": one attribute row per node required");
    std::vector<std::vector<double>> rows(total_nodes);
    for (Index i = 0; i < total_nodes; ++i)
      for (auto tok : split_commas(lines[i].second)) rows[i].push_back(parse_real(tok, f, lines[i].first));
    const Index width = total_nodes ? rows[0].size() : 0;
    ds.node_attributes.emplace();
    for (Index g = 0; g < num_graphs; ++g)
      ds.node_attributes->emplace_back(static_cast<Eigen::Index>(nodes_in[g]), static_cast<Eigen::Index>(width));
    for (Index i = 0; i < total_nodes; ++i) {
      if (rows[i].size() != width) throw CorpusFormatError(f.string() + ": ragged attribute rows");
      for (Index c = 0; c < width; ++c)
        (*ds.node_attributes)[graph_of[i]](static_cast<Eigen::Index>(local_id[i]), static_cast<Eigen::Index>(c)) =
            rows[i][c];
    }
  }

  ds.graphs.reserve(num_graphs);
  for (Index g = 0; g < num_graphs; ++g) {
    std::optional<std::vector<Label>> labels;
    if (node_labels) labels = std::move((*node_labels)[g]);
    ds.graphs.push_back(build_graph(nodes_in[g], edges[g], std::move(labels)));
  }
  ds.validate();
  return ds;
}

/// Writes `ds` so that read_tu_dataset() reproduces it. Every undirected edge is
/// emitted in both directions; the node-label file is written only for labeled
/// corpora.
inline void write_tu_dataset(const LabeledGraphDataset& ds, const CorpusLocation& loc) {
  std::error_code ec;
  std::filesystem::create_directories(loc.directory, ec);
  auto open = [&](std::string_view suffix) {
    std::ofstream out(loc.file(suffix));
    if (!out) throw std::runtime_error("cannot write " + loc.file(suffix).string());
    return out;
  };

  auto edges_out = open("A");
  auto indicator_out = open("graph_indicator");
  auto labels_out = open("graph_labels");
  bool labeled = !ds.graphs.empty() && ds.graphs.front().has_labels();
  std::optional<std::ofstream> node_labels_out;
  if (labeled) node_labels_out = open("node_labels");

  Index base = 1;
  for (Index g = 0; g < ds.graphs.size(); ++g) {
    const Graph& graph = ds.graphs[g];
    for (Index v = 0; v < graph.num_nodes(); ++v) {
      indicator_out << (g + 1) << '\n';
      for (Index w : graph.neighbors(v)) edges_out << (base + v) << ", " << (base + w) << '\n';
    }
    if (labeled) {
      if (!graph.has_labels()) throw std::invalid_argument("write_tu_dataset: mixed labeled and unlabeled graphs");
      for (Label l : *graph.node_labels()) *node_labels_out << l << '\n';
    }
    const int c = ds.class_labels[g];
    Label value = static_cast<Index>(c) < ds.class_values.size() ? ds.class_values[static_cast<Index>(c)] : c;
    labels_out << value << '\n';
    base += graph.num_nodes();
  }

  if (ds.node_attributes) {
    auto attr_out = open("node_attributes");
    attr_out.precision(17);
    for (const auto& m : *ds.node_attributes)
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) attr_out << (c ? ", " : "") << m(r, c);
        attr_out << '\n';
      }
  }

  for (auto* s : {&edges_out, &indicator_out, &labels_out})
    if (!s->flush()) throw std::runtime_error("write_tu_dataset: I/O failure in " + loc.directory.string());
}

/// Finds the unique `<name>_A.txt` in a directory and returns its prefix.
inline std::optional<std::string> detect_corpus_name(const std::filesystem::path& dir) {
  std::optional<std::string> found;
  if (!std::filesystem::is_directory(dir)) return std::nullopt;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    auto fname = entry.path().filename().string();
    constexpr std::string_view suffix = "_A.txt";
    if (fname.size() > suffix.size() && fname.ends_with(suffix)) {
      if (found) return std::nullopt;
      found = fname.substr(0, fname.size() - suffix.size());
    }
  }
  return found;
}

}  // namespace gnn_esr
