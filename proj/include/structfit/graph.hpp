#pragma once

// Simple undirected graphs with dense node features, degree statistics and
// the pooled aggregates consumed by the linear analysis:
//   pooled_sum           sum_i x_i
//   degree_weighted_sum  sum_i deg(i) x_i  (== sum_i sum_{j in N(i)} x_j)
//   delta_sum            sum_i (deg(i) - r') x_i

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "structfit/error.hpp"

namespace structfit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Edge {
  int u = 0;
  int v = 0;
  auto operator<=>(const Edge&) const = default;
};

inline Edge make_edge(int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; }

// Node count plus a canonical (u < v, sorted, unique) edge list.
class Topology {
 public:
  Topology() = default;

  Topology(int n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)) {
    require(n >= 1, "graph must have at least one node");
    for (auto& e : edges_) {
      require(e.u != e.v, "self-loop (" + std::to_string(e.u) + "," + std::to_string(e.v) + ")");
      require(e.u >= 0 && e.v >= 0 && e.u < n && e.v < n,
              "edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ") out of range");
      e = make_edge(e.u, e.v);
    }
    std::sort(edges_.begin(), edges_.end());
    require(std::adjacent_find(edges_.begin(), edges_.end()) == edges_.end(), "duplicate edge");
    build_adjacency();
  }

  [[nodiscard]] int n() const { return n_; }
  [[nodiscard]] const std::vector<Edge>& edges() const { return edges_; }
  [[nodiscard]] std::size_t num_edges() const { return edges_.size(); }
  [[nodiscard]] std::span<const int> neighbors(int i) const {
    return {adjacency_.data() + offsets_[i], adjacency_.data() + offsets_[i + 1]};
  }
  [[nodiscard]] int degree(int i) const { return offsets_[i + 1] - offsets_[i]; }
  [[nodiscard]] std::vector<int> degrees() const {
    std::vector<int> out(n_);
    for (int i = 0; i < n_; ++i) out[i] = degree(i);
    return out;
  }
  [[nodiscard]] bool has_edge(int a, int b) const {
    if (a == b) return false;
    return std::binary_search(edges_.begin(), edges_.end(), make_edge(a, b));
  }
  // Index of the edge in the canonical list, or -1.
  [[nodiscard]] long edge_index(int a, int b) const {
    auto e = make_edge(a, b);
    auto it = std::lower_bound(edges_.begin(), edges_.end(), e);
    return (it != edges_.end() && *it == e) ? it - edges_.begin() : -1;
  }

  bool operator==(const Topology& o) const { return n_ == o.n_ && edges_ == o.edges_; }

 private:
  void build_adjacency() {
    offsets_.assign(n_ + 1, 0);
    for (const auto& e : edges_) {
      ++offsets_[e.u + 1];
      ++offsets_[e.v + 1];
    }
    for (int i = 0; i < n_; ++i) offsets_[i + 1] += offsets_[i];
    adjacency_.assign(offsets_[n_], 0);
    std::vector<int> fill(offsets_.begin(), offsets_.end() - 1);
    for (const auto& e : edges_) {
      adjacency_[fill[e.u]++] = e.v;
      adjacency_[fill[e.v]++] = e.u;
    }
    for (int i = 0; i < n_; ++i)
      std::sort(adjacency_.begin() + offsets_[i], adjacency_.begin() + offsets_[i + 1]);
  }

  int n_ = 1;
  std::vector<Edge> edges_;
  std::vector<int> offsets_{0, 0};
  std::vector<int> adjacency_;
};

// Immutable graph value: topology, n x d node features and optional per-edge
// scalars aligned with the canonical edge list.
class Graph {
 public:
  Graph() : features_(Matrix::Zero(1, 1)) {}

  Graph(Topology topology, Matrix features, std::optional<std::vector<double>> edge_feature = {})
      : topology_(std::move(topology)), features_(std::move(features)), edge_feature_(std::move(edge_feature)) {
    require(features_.rows() == topology_.n(),
            "feature rows (" + std::to_string(features_.rows()) + ") != node count (" +
                std::to_string(topology_.n()) + ")");
    require(features_.cols() >= 1, "feature dimension must be >= 1");
    if (edge_feature_)
      require(edge_feature_->size() == topology_.num_edges(), "edge features must cover every edge exactly once");
  }

  [[nodiscard]] int n() const { return topology_.n(); }
  [[nodiscard]] int d() const { return static_cast<int>(features_.cols()); }
  [[nodiscard]] const Topology& topology() const { return topology_; }
  [[nodiscard]] const std::vector<Edge>& edges() const { return topology_.edges(); }
  [[nodiscard]] std::span<const int> neighbors(int i) const { return topology_.neighbors(i); }
  [[nodiscard]] int degree(int i) const { return topology_.degree(i); }
  [[nodiscard]] std::vector<int> degrees() const { return topology_.degrees(); }
  [[nodiscard]] const Matrix& features() const { return features_; }
  [[nodiscard]] bool has_edge_features() const { return edge_feature_.has_value(); }
  [[nodiscard]] const std::vector<double>& edge_features() const {
    require(edge_feature_.has_value(), "graph has no edge features");
    return *edge_feature_;
  }
  [[nodiscard]] double edge_feature(int a, int b) const {
    long idx = topology_.edge_index(a, b);
    require(idx >= 0, "no such edge");
    return edge_features()[static_cast<std::size_t>(idx)];
  }

  [[nodiscard]] Graph with_topology(Topology t) const { return Graph(std::move(t), features_); }
  [[nodiscard]] Graph with_features(Matrix x) const { return Graph(topology_, std::move(x), edge_feature_); }
  [[nodiscard]] Graph with_edge_features(std::vector<double> ef) const {
    return Graph(topology_, features_, std::move(ef));
  }
  [[nodiscard]] Graph without_edges() const { return Graph(Topology(n(), {}), features_); }

  bool operator==(const Graph& o) const {
    return topology_ == o.topology_ && features_.rows() == o.features_.rows() &&
           features_.cols() == o.features_.cols() && features_ == o.features_ && edge_feature_ == o.edge_feature_;
  }

 private:
  Topology topology_;
  Matrix features_;
  std::optional<std::vector<double>> edge_feature_;
};

struct LabeledGraph {
  Graph graph;
  int label = 0;
};

using Dataset = std::vector<LabeledGraph>;

struct DegreeStats {
  std::vector<int> degrees;
  double mean = 0.0;
  double std = 0.0;  // population
  double cov = 0.0;  // std / mean, 0 when mean == 0
};

inline DegreeStats degree_stats(const std::vector<int>& degrees) {
  DegreeStats s;
  s.degrees = degrees;
  const double n = static_cast<double>(degrees.size());
  double sum = 0.0;
  for (int d : degrees) sum += d;
  s.mean = sum / n;
  double ss = 0.0;
  for (int d : degrees) ss += (d - s.mean) * (d - s.mean);
  s.std = std::sqrt(ss / n);
  s.cov = s.mean > 0.0 ? s.std / s.mean : 0.0;
  return s;
}

inline DegreeStats degree_stats(const Topology& t) { return degree_stats(t.degrees()); }
inline DegreeStats degree_stats(const Graph& g) { return degree_stats(g.degrees()); }

inline Vector pooled_sum(const Graph& g) { return g.features().colwise().sum().transpose(); }

inline Vector degree_weighted_sum(const Graph& g) {
  Vector out = Vector::Zero(g.d());
  for (int i = 0; i < g.n(); ++i) out += g.degree(i) * g.features().row(i).transpose();
  return out;
}

inline Vector delta_sum(const Graph& g, int r_prime) {
  require(r_prime >= 0 && r_prime <= g.n() - 1,
          "r' = " + std::to_string(r_prime) + " outside [0, n-1]");
  Vector out = Vector::Zero(g.d());
  for (int i = 0; i < g.n(); ++i) out += (g.degree(i) - r_prime) * g.features().row(i).transpose();
  return out;
}

// Degree shared by every node, if the graph is regular.
inline std::optional<int> regular_degree(const Topology& t) {
  int r = t.degree(0);
  for (int i = 1; i < t.n(); ++i)
    if (t.degree(i) != r) return std::nullopt;
  return r;
}

// Relabel nodes: node i of the input becomes node perm[i].
inline Graph permute_nodes(const Graph& g, const std::vector<int>& perm) {
  require(static_cast<int>(perm.size()) == g.n(), "permutation size mismatch");
  std::vector<Edge> edges;
  std::vector<std::pair<Edge, double>> tagged;
  for (std::size_t k = 0; k < g.edges().size(); ++k) {
    const auto& e = g.edges()[k];
    Edge pe = make_edge(perm[e.u], perm[e.v]);
    edges.push_back(pe);
    if (g.has_edge_features()) tagged.emplace_back(pe, g.edge_features()[k]);
  }
  Matrix x(g.n(), g.d());
  for (int i = 0; i < g.n(); ++i) x.row(perm[i]) = g.features().row(i);
  Topology t(g.n(), std::move(edges));
  if (!g.has_edge_features()) return Graph(std::move(t), std::move(x));
  std::sort(tagged.begin(), tagged.end());
  std::vector<double> ef;
  for (auto& [e, f] : tagged) ef.push_back(f);
  return Graph(std::move(t), std::move(x), std::move(ef));
}

}  // namespace structfit
