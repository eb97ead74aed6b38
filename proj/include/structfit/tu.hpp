#pragma once

// Reader for the TU graph-classification text format:
//   <name>_A.txt                 "i, j" per line, 1-indexed global node ids
//   <name>_graph_indicator.txt   graph id (1-indexed) of each node
//   <name>_graph_labels.txt      one label per graph
//   <name>_node_labels.txt       optional, one integer per node
//   <name>_node_attributes.txt   optional, comma separated reals per node

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "structfit/error.hpp"
#include "structfit/graph.hpp"

namespace structfit {

struct TuDataset {
  std::string name;
  Dataset graphs;
  int num_classes = 0;
  bool has_node_attributes = false;
  bool has_node_labels = false;
  std::vector<long long> label_values;       // dense label k was label_values[k] on disk
  std::vector<long long> node_label_values;  // one-hot column k
  std::vector<std::string> warnings;
  // No node labels or attributes: features hold a placeholder ones column
  // until augment_degree_feature replaces it.
  [[nodiscard]] bool featureless() const { return !has_node_attributes && !has_node_labels; }
};

namespace tu_detail {

struct Line {
  int number = 0;
  std::vector<std::string_view> fields;
};

inline std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct File {
  std::string path;
  std::vector<std::string> raw;
  std::vector<Line> lines;  // blank lines skipped, numbers kept

  [[noreturn]] void fail(int line, const std::string& what) const {
    throw IoError(path + ":" + std::to_string(line) + ": " + what);
  }
};

inline File read_file(const std::filesystem::path& p) {
  File f;
  f.path = p.string();
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + f.path);
  std::string s;
  while (std::getline(in, s)) f.raw.push_back(s);
  for (std::size_t i = 0; i < f.raw.size(); ++i) {
    std::string_view v = trim(f.raw[i]);
    if (v.empty()) continue;
    Line l;
    l.number = static_cast<int>(i) + 1;
    std::size_t start = 0;
    while (true) {
      auto comma = v.find(',', start);
      l.fields.push_back(trim(v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    f.lines.push_back(std::move(l));
  }
  return f;
}

inline long long to_int(const File& f, const Line& l, std::string_view s) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size())
    f.fail(l.number, "expected integer, got '" + std::string(s) + "'");
  return v;
}

inline double to_real(const File& f, const Line& l, std::string_view s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size())
    f.fail(l.number, "expected number, got '" + std::string(s) + "'");
  return v;
}

inline void expect_fields(const File& f, const Line& l, std::size_t k) {
  if (l.fields.size() != k)
    f.fail(l.number, "expected " + std::to_string(k) + " field(s), got " + std::to_string(l.fields.size()));
}

}  // namespace tu_detail

inline TuDataset parse_tu(const std::filesystem::path& dir, const std::string& name) {
  using namespace tu_detail;
  auto path = [&](const char* suffix) { return dir / (name + suffix); };
  for (const char* s : {"_A.txt", "_graph_indicator.txt", "_graph_labels.txt"})
    if (!std::filesystem::exists(path(s))) throw IoError("missing mandatory file " + path(s).string());

  TuDataset ds;
  ds.name = name;

  // Indicator: node -> graph, contiguous blocks 1..G.
  File ind = read_file(path("_graph_indicator.txt"));
  std::vector<int> node_graph;
  std::vector<int> first_node{0};
  for (const auto& l : ind.lines) {
    expect_fields(ind, l, 1);
    long long gid = to_int(ind, l, l.fields[0]);
    const long long current = static_cast<long long>(first_node.size());  // 1-indexed id of the open graph
    if (node_graph.empty()) {
      if (gid != 1) ind.fail(l.number, "graph ids must start at 1, got " + std::to_string(gid));
    } else if (gid == current + 1) {
      first_node.push_back(static_cast<int>(node_graph.size()));
    } else if (gid != current) {
      ind.fail(l.number, "non-contiguous graph indicator: " + std::to_string(gid) + " after " + std::to_string(current));
    }
    node_graph.push_back(static_cast<int>(gid) - 1);
  }
  if (node_graph.empty()) throw IoError(ind.path + ": no nodes");
  const int num_nodes = static_cast<int>(node_graph.size());
  const int num_graphs = static_cast<int>(first_node.size());
  first_node.push_back(num_nodes);

  // Graph labels, remapped densely in ascending order.
  File gl = read_file(path("_graph_labels.txt"));
  if (static_cast<int>(gl.lines.size()) != num_graphs)
    throw IoError(gl.path + ": " + std::to_string(gl.lines.size()) + " labels for " + std::to_string(num_graphs) +
                  " graphs");
  std::vector<long long> raw_labels;
  for (const auto& l : gl.lines) {
    expect_fields(gl, l, 1);
    raw_labels.push_back(to_int(gl, l, l.fields[0]));
  }
  ds.label_values = raw_labels;
  std::sort(ds.label_values.begin(), ds.label_values.end());
  ds.label_values.erase(std::unique(ds.label_values.begin(), ds.label_values.end()), ds.label_values.end());
  ds.num_classes = static_cast<int>(ds.label_values.size());

  // Edges.
  File a = read_file(path("_A.txt"));
  std::vector<std::vector<Edge>> edges(num_graphs);
  for (const auto& l : a.lines) {
    expect_fields(a, l, 2);
    long long i = to_int(a, l, l.fields[0]), j = to_int(a, l, l.fields[1]);
    if (i < 1 || j < 1 || i > num_nodes || j > num_nodes)
      a.fail(l.number, "node id out of range [1," + std::to_string(num_nodes) + "]");
    int u = static_cast<int>(i) - 1, v = static_cast<int>(j) - 1;
    if (node_graph[u] != node_graph[v]) a.fail(l.number, "edge crosses graph boundary");
    if (u == v) {
      ds.warnings.push_back(a.path + ":" + std::to_string(l.number) + ": self-loop on node " + std::to_string(i) +
                            " dropped");
      continue;
    }
    const int off = first_node[node_graph[u]];
    edges[node_graph[u]].push_back(make_edge(u - off, v - off));
  }

  // Node labels, one-hot over the sorted alphabet.
  std::vector<std::vector<double>> node_feat(num_nodes);
  if (std::filesystem::exists(path("_node_labels.txt"))) {
    File nl = read_file(path("_node_labels.txt"));
    if (static_cast<int>(nl.lines.size()) != num_nodes)
      throw IoError(nl.path + ": " + std::to_string(nl.lines.size()) + " node labels for " +
                    std::to_string(num_nodes) + " nodes");
    std::vector<long long> vals;
    for (const auto& l : nl.lines) {
      expect_fields(nl, l, 1);
      vals.push_back(to_int(nl, l, l.fields[0]));
    }
    ds.node_label_values = vals;
    std::sort(ds.node_label_values.begin(), ds.node_label_values.end());
    ds.node_label_values.erase(std::unique(ds.node_label_values.begin(), ds.node_label_values.end()),
                               ds.node_label_values.end());
    const std::size_t k = ds.node_label_values.size();
    for (int i = 0; i < num_nodes; ++i) {
      node_feat[i].assign(k, 0.0);
      auto pos = std::lower_bound(ds.node_label_values.begin(), ds.node_label_values.end(), vals[i]);
      node_feat[i][pos - ds.node_label_values.begin()] = 1.0;
    }
    ds.has_node_labels = true;
  }
  if (std::filesystem::exists(path("_node_attributes.txt"))) {
    File na = read_file(path("_node_attributes.txt"));
    if (static_cast<int>(na.lines.size()) != num_nodes)
      throw IoError(na.path + ": " + std::to_string(na.lines.size()) + " attribute rows for " +
                    std::to_string(num_nodes) + " nodes");
    std::size_t width = na.lines.front().fields.size();
    for (int i = 0; i < num_nodes; ++i) {
      const auto& l = na.lines[i];
      expect_fields(na, l, width);
      for (auto f : l.fields) node_feat[i].push_back(to_real(na, l, f));
    }
    ds.has_node_attributes = true;
  }

  for (int gi = 0; gi < num_graphs; ++gi) {
    const int lo = first_node[gi], n = first_node[gi + 1] - lo;
    auto& es = edges[gi];
    std::sort(es.begin(), es.end());
    es.erase(std::unique(es.begin(), es.end()), es.end());
    Matrix x;
    if (ds.featureless()) {
      x = Matrix::Ones(n, 1);
    } else {
      x.resize(n, static_cast<Eigen::Index>(node_feat[lo].size()));
      for (int i = 0; i < n; ++i)
        for (std::size_t c = 0; c < node_feat[lo + i].size(); ++c) x(i, static_cast<Eigen::Index>(c)) = node_feat[lo + i][c];
    }
    int label = static_cast<int>(std::lower_bound(ds.label_values.begin(), ds.label_values.end(), raw_labels[gi]) -
                                 ds.label_values.begin());
    ds.graphs.push_back({Graph(Topology(n, std::move(es)), std::move(x)), label});
  }
  return ds;
}

// Featureless datasets get the raw degree as their only node feature.
inline TuDataset augment_degree_feature(TuDataset ds) {
  if (!ds.featureless()) return ds;
  for (auto& lg : ds.graphs) {
    Matrix x(lg.graph.n(), 1);
    for (int i = 0; i < lg.graph.n(); ++i) x(i, 0) = lg.graph.degree(i);
    lg.graph = lg.graph.with_features(std::move(x));
  }
  return ds;
}

}  // namespace structfit
