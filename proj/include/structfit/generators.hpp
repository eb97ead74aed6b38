#pragma once

// Random graph families, i.i.d. Gaussian node features and the graph-less
// Sum-task teacher y = sign(w* . sum_i x_i).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "structfit/error.hpp"
#include "structfit/graph.hpp"
#include "structfit/io.hpp"
#include "structfit/rng.hpp"

namespace structfit {

inline Topology gen_empty(int n) { return Topology(n, {}); }

inline Topology gen_complete(int n) {
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) edges.push_back({i, j});
  return Topology(n, std::move(edges));
}

inline Topology gen_gnp(int n, double p, Rng& rng) {
  require(n >= 1, "gnp: n must be >= 1");
  require(p >= 0.0 && p <= 1.0, "gnp: p must lie in [0, 1]");
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) edges.push_back({i, j});
  return Topology(n, std::move(edges));
}

inline Topology gen_star(int n) {
  require(n >= 2, "star: n must be >= 2");
  std::vector<Edge> edges;
  for (int j = 1; j < n; ++j) edges.push_back({0, j});
  return Topology(n, std::move(edges));
}

// Circulant r-regular graph: node i joins i +/- 1..r/2 and, for odd r, its
// antipode i + n/2. Deterministic fallback when stub matching keeps failing.
inline Topology circulant_regular(int n, int r) {
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) {
    for (int k = 1; k <= r / 2; ++k) {
      int j = (i + k) % n;
      edges.push_back(make_edge(i, j));
    }
    if (r % 2 == 1 && i < n / 2) edges.push_back(make_edge(i, i + n / 2));
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return Topology(n, std::move(edges));
}

// Configuration model with full restart on any self-loop or multi-edge.
inline Topology gen_regular(int n, int r, Rng& rng, int retry_budget = -1) {
  require(n >= 1, "regular: n must be >= 1");
  require(r >= 0 && r <= n - 1, "regular: need 0 <= r <= n-1 (got r=" + std::to_string(r) + ")");
  require((static_cast<long>(n) * r) % 2 == 0, "regular: n*r must be even");
  if (r == 0) return gen_empty(n);
  if (r == n - 1) return gen_complete(n);
  const int budget = retry_budget < 0 ? 10 * n : retry_budget;
  std::vector<int> stubs;
  stubs.reserve(static_cast<std::size_t>(n) * r);
  for (int attempt = 0; attempt < budget; ++attempt) {
    stubs.clear();
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < r; ++k) stubs.push_back(i);
    // Fisher-Yates with our own generator so the result is library independent.
    for (std::size_t i = stubs.size(); i > 1; --i) std::swap(stubs[i - 1], stubs[rng.below(i)]);
    std::vector<Edge> edges;
    edges.reserve(stubs.size() / 2);
    bool ok = true;
    for (std::size_t k = 0; k < stubs.size(); k += 2) {
      if (stubs[k] == stubs[k + 1]) {
        ok = false;
        break;
      }
      edges.push_back(make_edge(stubs[k], stubs[k + 1]));
    }
    if (!ok) continue;
    std::sort(edges.begin(), edges.end());
    if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) continue;
    return Topology(n, std::move(edges));
  }
  return circulant_regular(n, r);
}

// Preferential attachment seeded with a clique on m_attach + 1 nodes. Each
// arrival draws m_attach distinct targets, each with probability proportional
// to current degree among the not-yet-chosen nodes.
inline Topology gen_ba(int n, int m_attach, Rng& rng) {
  require(m_attach >= 1 && m_attach < n, "ba: need 1 <= m_attach < n");
  const int seed_nodes = m_attach + 1;
  std::vector<Edge> edges;
  std::vector<int> degree(n, 0);
  for (int i = 0; i < seed_nodes; ++i)
    for (int j = i + 1; j < seed_nodes; ++j) {
      edges.push_back({i, j});
      ++degree[i];
      ++degree[j];
    }
  std::vector<int> targets;
  for (int v = seed_nodes; v < n; ++v) {
    targets.clear();
    long total = 0;
    for (int u = 0; u < v; ++u) total += degree[u];
    for (int k = 0; k < m_attach; ++k) {
      long draw = static_cast<long>(rng.below(static_cast<std::uint64_t>(total)));
      int pick = -1;
      for (int u = 0; u < v; ++u) {
        if (std::find(targets.begin(), targets.end(), u) != targets.end()) continue;
        if (draw < degree[u]) {
          pick = u;
          break;
        }
        draw -= degree[u];
      }
      targets.push_back(pick);
      total -= degree[pick];
    }
    for (int u : targets) {
      edges.push_back(make_edge(u, v));
      ++degree[u];
      ++degree[v];
    }
  }
  return Topology(n, std::move(edges));
}

inline long ba_edge_count(int n, int m_attach) {
  return static_cast<long>(m_attach) * (m_attach + 1) / 2 + static_cast<long>(n - m_attach - 1) * m_attach;
}

inline Matrix sample_features(int n, int d, Rng& rng) {
  require(n >= 1 && d >= 1, "features: n and d must be >= 1");
  Matrix x(n, d);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) x(i, c) = rng.normal();
  return x;
}

// ---------------------------------------------------------------------------

enum class DistKind { gnp, regular, ba, star, empty };

struct GraphDist {
  DistKind kind = DistKind::empty;
  double p = 0.0;   // gnp
  int r = 0;        // regular
  int m_attach = 0; // ba

  static GraphDist gnp(double p) { return {DistKind::gnp, p, 0, 0}; }
  static GraphDist regular(int r) { return {DistKind::regular, 0.0, r, 0}; }
  static GraphDist ba(int m) { return {DistKind::ba, 0.0, 0, m}; }
  static GraphDist star() { return {DistKind::star, 0.0, 0, 0}; }
  static GraphDist empty() { return {DistKind::empty, 0.0, 0, 0}; }

  // Short name used in tables and stream tags: gnp0.5, regular10, ba3, star, empty.
  [[nodiscard]] std::string name() const {
    switch (kind) {
      case DistKind::gnp: {
        std::string s = std::to_string(p);
        s.erase(s.find_last_not_of('0') + 1);
        if (s.back() == '.') s.pop_back();
        return "gnp" + s;
      }
      case DistKind::regular: return "regular" + std::to_string(r);
      case DistKind::ba: return "ba" + std::to_string(m_attach);
      case DistKind::star: return "star";
      case DistKind::empty: return "empty";
    }
    return "?";
  }

  static GraphDist parse(const std::string& s) {
    auto num = [&](std::size_t off) { return s.substr(off); };
    try {
      if (s == "star") return star();
      if (s == "empty") return empty();
      if (s.rfind("gnp", 0) == 0) return gnp(std::stod(num(3)));
      if (s.rfind("regular", 0) == 0) return regular(std::stoi(num(7)));
      if (s.rfind("ba", 0) == 0) return ba(std::stoi(num(2)));
    } catch (const std::exception&) {
    }
    throw ConfigError("unknown graph distribution '" + s + "'");
  }

  [[nodiscard]] Topology sample(int n, Rng& rng) const {
    switch (kind) {
      case DistKind::gnp: return gen_gnp(n, p, rng);
      case DistKind::regular: return gen_regular(n, r, rng);
      case DistKind::ba: return gen_ba(n, m_attach, rng);
      case DistKind::star: return gen_star(n);
      case DistKind::empty: return gen_empty(n);
    }
    return gen_empty(n);
  }
};

struct TeacherModel {
  Vector w_star;

  static TeacherModel sample(int d, Rng rng) {
    TeacherModel t;
    t.w_star = Vector(d);
    for (int c = 0; c < d; ++c) t.w_star(c) = rng.normal();
    require(t.w_star.norm() > 0.0, "teacher must be nonzero");
    return t;
  }

  [[nodiscard]] double score(const Matrix& x) const {
    require(x.cols() == w_star.size(), "teacher/feature dimension mismatch");
    return w_star.dot(x.colwise().sum().transpose());
  }
};

struct TeacherLabel {
  int label = 0;        // +1/-1, 0 when flagged
  bool flagged = false; // |score| < margin_eps, resample the features
  double score = 0.0;
};

inline TeacherLabel teacher_label(const TeacherModel& t, const Graph& g, double margin_eps) {
  require(t.w_star.size() == g.d(), "teacher dimension " + std::to_string(t.w_star.size()) +
                                        " != feature dimension " + std::to_string(g.d()));
  const double s = t.w_star.dot(pooled_sum(g));
  if (std::abs(s) < margin_eps || s == 0.0) return {0, true, s};
  return {s > 0 ? 1 : -1, false, s};
}

inline double default_margin_eps(int d) { return 1e-3 * std::sqrt(static_cast<double>(d)); }

struct DatasetSpec {
  int m = 100;
  int n = 20;
  int d = 128;
  GraphDist dist = GraphDist::gnp(0.5);
  std::uint64_t seed = 0;
  double margin_eps = -1.0;  // < 0 selects default_margin_eps(d)

  [[nodiscard]] double eps() const { return margin_eps < 0 ? default_margin_eps(d) : margin_eps; }
};

inline json to_json(const DatasetSpec& s) {
  return json{{"m", s.m}, {"n", s.n}, {"d", s.d}, {"dist", s.dist.name()}, {"seed", s.seed}, {"margin_eps", s.eps()}};
}

inline DatasetSpec dataset_spec_from_json(const json& j) {
  DatasetSpec s;
  s.m = j.value("m", s.m);
  s.n = j.value("n", s.n);
  s.d = j.value("d", s.d);
  if (j.contains("dist")) s.dist = GraphDist::parse(j.at("dist").get<std::string>());
  s.seed = j.value("seed", s.seed);
  s.margin_eps = j.value("margin_eps", s.margin_eps);
  return s;
}

// Per-instance feature matrix that the teacher labels with margin >= eps.
// Flagged draws are replaced from the next resample stream so the dataset
// keeps exactly m instances and stays separable in pooled-sum space.
struct LabeledFeatures {
  Matrix x;
  int label = 0;
  int resamples = 0;
};

inline LabeledFeatures labeled_features(const Rng& root, std::uint64_t index, int n, int d,
                                        const TeacherModel& teacher, double eps) {
  Rng frng = root.split("features", index);
  Matrix x = sample_features(n, d, frng);
  for (int attempt = 0;; ++attempt) {
    const double s = teacher.score(x);
    if (std::abs(s) >= eps && s != 0.0) return {std::move(x), s > 0 ? 1 : -1, attempt};
    if (attempt > 1000) throw NumericalError("teacher margin filter rejected 1000 resamples");
    Rng rrng = root.split("resample", index * 1024 + static_cast<std::uint64_t>(attempt));
    x = sample_features(n, d, rrng);
  }
}

inline Topology sample_topology(const Rng& root, const GraphDist& dist, std::uint64_t index, int n) {
  Rng grng = root.split("graph/" + dist.name(), index);
  return dist.sample(n, grng);
}

inline TeacherModel sum_task_teacher(const Rng& root, int d) { return TeacherModel::sample(d, root.split("teacher")); }

// Sum-task dataset: features and labels depend only on (seed, index), so two
// specs that differ only in `dist` yield the same features and labels.
inline Dataset make_sum_dataset(const DatasetSpec& spec, std::uint64_t first_index = 0) {
  Rng root(spec.seed);
  TeacherModel teacher = sum_task_teacher(root, spec.d);
  Dataset ds;
  ds.reserve(spec.m);
  for (int l = 0; l < spec.m; ++l) {
    const std::uint64_t idx = first_index + static_cast<std::uint64_t>(l);
    auto lf = labeled_features(root, idx, spec.n, spec.d, teacher, spec.eps());
    ds.push_back({Graph(sample_topology(root, spec.dist, idx, spec.n), std::move(lf.x)), lf.label});
  }
  return ds;
}

struct ClassCounts {
  int negative = 0;
  int positive = 0;
};

inline ClassCounts class_counts(const Dataset& ds) {
  ClassCounts c;
  for (const auto& lg : ds) (lg.label > 0 ? c.positive : c.negative)++;
  return c;
}

}  // namespace structfit
