#pragma once

// Canonical JSON-lines graph format, one object per line:
//   {"n":int, "edges":[[i,j],...], "x":[[...],...], "ef":[[i,j,f],...], "y":int}
// "ef" and "y" are optional. Edges are stored with i < j in sorted order.

#include "json.hpp"

#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "structfit/error.hpp"
#include "structfit/graph.hpp"

namespace structfit {

using json = nlohmann::json;

inline json graph_to_json(const Graph& g, std::optional<int> label = {}) {
  json j;
  j["n"] = g.n();
  json edges = json::array();
  for (const auto& e : g.edges()) edges.push_back({e.u, e.v});
  j["edges"] = std::move(edges);
  json x = json::array();
  for (int i = 0; i < g.n(); ++i) {
    json row = json::array();
    for (int c = 0; c < g.d(); ++c) row.push_back(g.features()(i, c));
    x.push_back(std::move(row));
  }
  j["x"] = std::move(x);
  if (g.has_edge_features()) {
    json ef = json::array();
    for (std::size_t k = 0; k < g.edges().size(); ++k)
      ef.push_back({g.edges()[k].u, g.edges()[k].v, g.edge_features()[k]});
    j["ef"] = std::move(ef);
  }
  if (label) j["y"] = *label;
  return j;
}

struct ParsedGraph {
  Graph graph;
  std::optional<int> label;
};

inline ParsedGraph graph_from_json(const json& j) {
  try {
    const int n = j.at("n").get<int>();
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    const auto& xs = j.at("x");
    require(static_cast<int>(xs.size()) == n, "\"x\" must have n rows");
    const int d = n > 0 ? static_cast<int>(xs.at(0).size()) : 0;
    Matrix x(n, d);
    for (int i = 0; i < n; ++i) {
      require(static_cast<int>(xs[i].size()) == d, "ragged \"x\"");
      for (int c = 0; c < d; ++c) x(i, c) = xs[i][c].get<double>();
    }
    Topology topo(n, std::move(edges));
    std::optional<std::vector<double>> ef;
    if (j.contains("ef")) {
      std::vector<double> vals(topo.num_edges(), 0.0);
      std::vector<bool> seen(topo.num_edges(), false);
      for (const auto& t : j.at("ef")) {
        long idx = topo.edge_index(t.at(0).get<int>(), t.at(1).get<int>());
        require(idx >= 0, "\"ef\" references a missing edge");
        require(!seen[idx], "\"ef\" lists an edge twice");
        seen[idx] = true;
        vals[idx] = t.at(2).get<double>();
      }
      require(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }), "\"ef\" must cover every edge");
      ef = std::move(vals);
    }
    std::optional<int> y;
    if (j.contains("y")) y = j.at("y").get<int>();
    return {Graph(std::move(topo), std::move(x), std::move(ef)), y};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed graph record: ") + e.what());
  }
}

inline void write_jsonl(std::ostream& os, const Dataset& ds) {
  for (const auto& lg : ds) os << graph_to_json(lg.graph, lg.label).dump() << '\n';
}

inline void write_jsonl(std::ostream& os, const std::vector<Graph>& graphs) {
  for (const auto& g : graphs) os << graph_to_json(g).dump() << '\n';
}

inline std::vector<ParsedGraph> read_jsonl(std::istream& is) {
  std::vector<ParsedGraph> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(graph_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<ParsedGraph> read_jsonl_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_jsonl(in);
}

// Graphs without a "y" field get label 0.
inline Dataset to_dataset(std::vector<ParsedGraph> parsed) {
  Dataset ds;
  ds.reserve(parsed.size());
  for (auto& p : parsed) ds.push_back({std::move(p.graph), p.label.value_or(0)});
  return ds;
}

}  // namespace structfit
