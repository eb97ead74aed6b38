#pragma once

// R-COV: add edges between low-degree nodes until the degree coefficient of
// variation drops to a fraction of the original. Original edges are tagged
// with feature_original, added ones with feature_added.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "structfit/error.hpp"
#include "structfit/graph.hpp"
#include "structfit/parallel.hpp"

namespace structfit {

struct RcovConfig {
  double target_fraction = 0.5;
  std::optional<long> max_added;
  double feature_original = 1.0;
  double feature_added = 0.5;
  // Target fraction * mean cov over the dataset instead of each graph's own cov.
  bool dataset_average = false;

  void validate() const {
    if (!(target_fraction >= 0.0 && target_fraction <= 1.0))
      throw ConfigError("target_fraction must be in [0,1], got " + std::to_string(target_fraction));
    if (max_added && *max_added < 0) throw ConfigError("max_added must be >= 0");
    if (feature_original == feature_added) throw ConfigError("feature_original and feature_added must differ");
  }
};

enum class RcovStop { target_met, no_candidate, budget, complete };

inline std::string to_string(RcovStop s) {
  switch (s) {
    case RcovStop::target_met: return "target_met";
    case RcovStop::no_candidate: return "no_candidate";
    case RcovStop::budget: return "budget";
    case RcovStop::complete: return "complete";
  }
  return "?";
}

struct RcovResult {
  Graph graph;
  double cov_before = 0.0;  // of the original edge set
  double cov_after = 0.0;
  double target = 0.0;
  long added = 0;  // total edges tagged as added
  bool reached = false;
  RcovStop stop = RcovStop::target_met;
  std::vector<double> trajectory;  // cov after each accepted addition, starting with the input
};

namespace detail {

struct RcovState {
  int n = 0;
  std::vector<Edge> original;
  std::vector<Edge> added;
  std::vector<int> deg;
  std::vector<std::vector<char>> adj;
  __int128 s = 0;  // sum of degrees
  __int128 q = 0;  // sum of squared degrees

  explicit RcovState(int nodes) : n(nodes), deg(nodes, 0), adj(nodes, std::vector<char>(nodes, 0)) {}

  void add(int u, int v, bool is_original) {
    (is_original ? original : added).push_back(make_edge(u, v));
    adj[u][v] = adj[v][u] = 1;
    q += 2 * (deg[u] + deg[v]) + 2;
    s += 2;
    ++deg[u];
    ++deg[v];
  }

  [[nodiscard]] long num_edges() const { return static_cast<long>(original.size() + added.size()); }
  [[nodiscard]] bool complete() const { return num_edges() == static_cast<long>(n) * (n - 1) / 2; }
  [[nodiscard]] double cov() const { return degree_stats(deg).cov; }

  // cov^2 = (n q - s^2) / s^2; compared exactly by cross-multiplication.
  [[nodiscard]] bool decreases(int u, int v) const {
    const __int128 s2 = s + 2;
    const __int128 q2 = q + 2 * (deg[u] + deg[v]) + 2;
    if (s == 0) return false;  // empty graph has cov 0
    return (n * q2 - s2 * s2) * (s * s) < (n * q - s * s) * (s2 * s2);
  }
};

inline std::vector<int> by_degree(const RcovState& st) {
  std::vector<int> order(st.n);
  for (int i = 0; i < st.n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return st.deg[a] < st.deg[b]; });
  return order;
}

// First cov-decreasing non-adjacent pair among `nodes`, ordered by degree sum
// then smallest index.
inline std::optional<Edge> best_pair(const RcovState& st, const std::vector<int>& nodes) {
  std::optional<Edge> best;
  int best_sum = 0;
  for (std::size_t a = 0; a < nodes.size(); ++a)
    for (std::size_t b = a + 1; b < nodes.size(); ++b) {
      int u = nodes[a], v = nodes[b];
      if (st.adj[u][v]) continue;
      Edge e = make_edge(u, v);
      int sum = st.deg[u] + st.deg[v];
      if (best && (sum > best_sum || (sum == best_sum && !(e < *best)))) continue;
      if (!st.decreases(u, v)) continue;
      best = e;
      best_sum = sum;
    }
  return best;
}

inline constexpr int kFrontier = 8;

// Greedy loop shared by reduce_cov and cov_curve.
inline RcovStop run_greedy(RcovState& st, double target, std::optional<long> budget,
                           std::vector<double>& trajectory) {
  while (true) {
    if (st.cov() <= target) return RcovStop::target_met;
    if (st.complete()) return RcovStop::complete;
    if (budget && static_cast<long>(st.added.size()) >= *budget) return RcovStop::budget;
    auto order = by_degree(st);
    std::vector<int> frontier(order.begin(), order.begin() + std::min<int>(kFrontier, st.n));
    auto pick = best_pair(st, frontier);
    if (!pick && st.n > kFrontier) pick = best_pair(st, order);
    if (pick) {
      st.add(pick->u, pick->v, false);
      trajectory.push_back(st.cov());
      continue;
    }
    // Stalled: every single addition raises cov (parity barriers, e.g. a star
    // whose leaves all sit one below the hub). Add lowest-degree pairs as one
    // batch until cov falls below the stall value; completion always does.
    const double stall = st.cov();
    RcovState trial = st;
    long batch = 0;
    while (!trial.complete() && trial.cov() >= stall) {
      auto all = by_degree(trial);
      std::optional<Edge> e;
      int best_sum = 0;
      for (std::size_t a = 0; a < all.size(); ++a)
        for (std::size_t b = a + 1; b < all.size(); ++b) {
          int u = all[a], v = all[b];
          if (trial.adj[u][v]) continue;
          int sum = trial.deg[u] + trial.deg[v];
          Edge c = make_edge(u, v);
          if (!e || sum < best_sum || (sum == best_sum && c < *e)) {
            e = c;
            best_sum = sum;
          }
        }
      if (!e) break;
      trial.add(e->u, e->v, false);
      ++batch;
    }
    if (trial.cov() >= stall) return RcovStop::no_candidate;
    if (budget && static_cast<long>(st.added.size()) + batch > *budget) return RcovStop::budget;
    st = std::move(trial);
    trajectory.push_back(st.cov());
  }
}

// Recover the untransformed edge set: a graph already tagged by a previous
// pass keeps only its feature_original edges as the reference.
inline RcovState initial_state(const Graph& g, const RcovConfig& cfg) {
  RcovState st(g.n());
  bool tagged = g.has_edge_features() && !g.edges().empty();
  if (tagged)
    for (double f : g.edge_features())
      if (f != cfg.feature_original && f != cfg.feature_added) tagged = false;
  for (std::size_t k = 0; k < g.edges().size(); ++k)
    if (!tagged || g.edge_features()[k] == cfg.feature_original) st.add(g.edges()[k].u, g.edges()[k].v, true);
  for (std::size_t k = 0; tagged && k < g.edges().size(); ++k)
    if (g.edge_features()[k] == cfg.feature_added) st.add(g.edges()[k].u, g.edges()[k].v, false);
  return st;
}

inline Graph build_graph(const Graph& g, const RcovState& st, const RcovConfig& cfg) {
  std::vector<std::pair<Edge, double>> tagged;
  for (const auto& e : st.original) tagged.emplace_back(e, cfg.feature_original);
  for (const auto& e : st.added) tagged.emplace_back(e, cfg.feature_added);
  std::sort(tagged.begin(), tagged.end());
  std::vector<Edge> edges;
  std::vector<double> ef;
  for (auto& [e, f] : tagged) {
    edges.push_back(e);
    ef.push_back(f);
  }
  return Graph(Topology(g.n(), std::move(edges)), g.features(), std::move(ef));
}

inline double original_cov(const Graph& g, const RcovConfig& cfg) {
  auto st = initial_state(g, cfg);
  std::vector<int> deg(g.n(), 0);
  for (const auto& e : st.original) {
    ++deg[e.u];
    ++deg[e.v];
  }
  return degree_stats(deg).cov;
}

inline RcovResult reduce_cov_to(const Graph& g, const RcovConfig& cfg, double target) {
  auto st = initial_state(g, cfg);
  RcovResult r;
  r.cov_before = original_cov(g, cfg);
  r.target = target;
  r.trajectory.push_back(st.cov());
  std::optional<long> budget = cfg.max_added;
  r.stop = run_greedy(st, target, budget, r.trajectory);
  r.cov_after = st.cov();
  r.reached = r.cov_after <= target;
  r.added = static_cast<long>(st.added.size());
  r.graph = build_graph(g, st, cfg);
  return r;
}

}  // namespace detail

inline RcovResult reduce_cov(const Graph& g, const RcovConfig& cfg) {
  cfg.validate();
  return detail::reduce_cov_to(g, cfg, cfg.target_fraction * detail::original_cov(g, cfg));
}

inline std::vector<RcovResult> reduce_cov(const Dataset& ds, const RcovConfig& cfg, int jobs = 1) {
  cfg.validate();
  std::optional<double> shared;
  if (cfg.dataset_average && !ds.empty()) {
    double total = 0.0;
    for (const auto& lg : ds) total += detail::original_cov(lg.graph, cfg);
    shared = cfg.target_fraction * total / static_cast<double>(ds.size());
  }
  std::vector<RcovResult> out(ds.size());
  parallel_for(ds.size(), jobs, [&](std::size_t i) {
    const auto& g = ds[i].graph;
    out[i] = detail::reduce_cov_to(g, cfg, shared ? *shared : cfg.target_fraction * detail::original_cov(g, cfg));
  });
  return out;
}

inline Dataset transformed(const Dataset& ds, const std::vector<RcovResult>& rs) {
  require(ds.size() == rs.size(), "result count mismatch");
  Dataset out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out.push_back({rs[i].graph, ds[i].label});
  return out;
}

struct CovCurvePoint {
  double fraction = 0.0;
  double achieved_cov = 0.0;
  long added_edges = 0;
  bool reached = false;
  RcovStop stop = RcovStop::target_met;
  Graph graph;
};

// Successive fractions continue from the previous graph, so edge sets nest.
inline std::vector<CovCurvePoint> cov_curve(const Graph& g, const std::vector<double>& fractions,
                                            const RcovConfig& base = {}) {
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    RcovConfig c = base;
    c.target_fraction = fractions[i];
    c.validate();
    if (i > 0 && fractions[i] > fractions[i - 1]) throw ConfigError("cov_curve fractions must be descending");
  }
  auto st = detail::initial_state(g, base);
  const double cov0 = detail::original_cov(g, base);
  std::vector<CovCurvePoint> out;
  std::vector<double> trajectory;
  for (double f : fractions) {
    CovCurvePoint p;
    p.fraction = f;
    p.stop = detail::run_greedy(st, f * cov0, base.max_added, trajectory);
    p.achieved_cov = st.cov();
    p.reached = p.achieved_cov <= f * cov0;
    p.added_edges = static_cast<long>(st.added.size());
    p.graph = detail::build_graph(g, st, base);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace structfit
