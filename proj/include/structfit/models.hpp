#pragma once

// Message-passing graph classifiers with sum pooling and an optional linear
// readout. Per layer, with node states as rows and weights shaped (out x in):
//
//   graphconv       x' = W1 x_i + W2 sum_j x_j [+ sum_j relu(W3 e_ij)] + b
//   graphconv_mean  same, neighbor terms divided by deg(i) (0 when isolated)
//   gin             x' = W4((1+eps) x_i + W2 sum_j m_ij) + b
//                     m_ij = x_j without edge features,
//                     m_ij = relu(x_i + relu(W3 e_ij)) with them (x_j when
//                     gin_neighbor_fix is set)
//   gatv2           x' = a_ii W1 x_i + sum_j a_ij W2 x_j + b,
//                     a_ij = softmax over N(i)+{i} of
//                            a^T leaky_relu(W1 x_i + W2 x_j + relu(W3 e_ij))
//                     (the self entry carries no edge term)
//   transformer     x' = W1 x_i + sum_j a_ij (W2 x_j + relu(W5 e_ij)) + b,
//                     a_ij = softmax over N(i) of
//                            (W3 x_i)^T (W4 x_j + W5 e_ij) / sqrt(out)
//
// The activation follows every layer. j ranges over N(i) throughout.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "structfit/autodiff.hpp"
#include "structfit/error.hpp"
#include "structfit/graph.hpp"
#include "structfit/rng.hpp"

namespace structfit {

enum class Arch { graphconv, gin, gatv2, transformer, graphconv_mean };
enum class Activation { relu, identity };

inline std::string to_string(Arch a) {
  switch (a) {
    case Arch::graphconv: return "graphconv";
    case Arch::gin: return "gin";
    case Arch::gatv2: return "gatv2";
    case Arch::transformer: return "transformer";
    case Arch::graphconv_mean: return "graphconv_mean";
  }
  return "?";
}

inline Arch parse_arch(const std::string& s) {
  for (Arch a : {Arch::graphconv, Arch::gin, Arch::gatv2, Arch::transformer, Arch::graphconv_mean})
    if (to_string(a) == s) return a;
  throw ConfigError("unknown architecture '" + s + "'");
}

inline constexpr Arch kAllArchs[] = {Arch::graphconv, Arch::gin, Arch::gatv2, Arch::transformer,
                                     Arch::graphconv_mean};

struct GnnConfig {
  Arch arch = Arch::graphconv;
  int in_dim = 1;
  int layers = 1;
  int hidden = 64;
  double dropout = 0.0;
  bool use_bias = true;
  bool edge_features = false;
  int out_classes = 1;  // 1 = binary score, sign gives the class
  bool readout = true;
  Activation activation = Activation::relu;
  bool gin_neighbor_fix = false;

  [[nodiscard]] int layer_in(int k) const { return k == 0 ? in_dim : hidden; }
  [[nodiscard]] int layer_out(int k) const { return (k == layers - 1 && !readout) ? out_classes : hidden; }

  void validate() const {
    require(layers >= 1, "layers must be >= 1");
    require(hidden >= 1, "hidden must be >= 1");
    require(in_dim >= 1, "in_dim must be >= 1");
    require(out_classes >= 1, "out_classes must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  }
};

// 1-layer, scalar-width, no readout/bias, identity activation: the linear GNN.
inline GnnConfig linear_gnn_config(int d) {
  GnnConfig c;
  c.arch = Arch::graphconv;
  c.in_dim = d;
  c.layers = 1;
  c.hidden = 1;
  c.use_bias = false;
  c.out_classes = 1;
  c.readout = false;
  c.activation = Activation::identity;
  return c;
}

struct ModelParams {
  std::map<std::string, Matrix> tensors;

  [[nodiscard]] const Matrix& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("missing parameter " + name);
    return it->second;
  }
  Matrix& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("missing parameter " + name);
    return it->second;
  }
  [[nodiscard]] bool has(const std::string& name) const { return tensors.count(name) > 0; }

  [[nodiscard]] Eigen::Index size() const {
    Eigen::Index s = 0;
    for (const auto& [_, m] : tensors) s += m.size();
    return s;
  }
  [[nodiscard]] Vector flatten() const {
    Vector v(size());
    Eigen::Index off = 0;
    for (const auto& [_, m] : tensors) {
      v.segment(off, m.size()) = m.reshaped();
      off += m.size();
    }
    return v;
  }
  [[nodiscard]] bool all_finite() const {
    for (const auto& [_, m] : tensors)
      if (!m.allFinite()) return false;
    return true;
  }
};

struct LinearGnnParams {
  Vector w1;
  Vector w2;
};

inline std::string layer_key(int k, const char* name) { return "l" + std::to_string(k) + "." + name; }

inline const char* root_weight_name(Arch a) { return a == Arch::gin ? "W4" : "W1"; }

struct TensorShape {
  std::string name;
  int rows;
  int cols;
  int fan_in;  // 0 marks zero-initialised tensors (bias, eps)
};

inline std::vector<TensorShape> parameter_shapes(const GnnConfig& cfg) {
  cfg.validate();
  std::vector<TensorShape> out;
  for (int k = 0; k < cfg.layers; ++k) {
    const int in = cfg.layer_in(k), o = cfg.layer_out(k);
    auto add = [&](const char* n, int r, int c, int fan) { out.push_back({layer_key(k, n), r, c, fan}); };
    switch (cfg.arch) {
      case Arch::graphconv:
      case Arch::graphconv_mean:
        add("W1", o, in, in);
        add("W2", o, in, in);
        if (cfg.edge_features) add("W3", o, 1, 1);
        break;
      case Arch::gin:
        add("W4", o, in, in);
        add("W2", in, in, in);
        add("eps", 1, 1, 0);
        if (cfg.edge_features) add("W3", in, 1, 1);
        break;
      case Arch::gatv2:
        add("W1", o, in, in);
        add("W2", o, in, in);
        add("a", o, 1, o);
        if (cfg.edge_features) add("W3", o, 1, 1);
        break;
      case Arch::transformer:
        add("W1", o, in, in);
        add("W2", o, in, in);
        add("W3", o, in, in);
        add("W4", o, in, in);
        if (cfg.edge_features) add("W5", o, 1, 1);
        break;
    }
    if (cfg.use_bias) add("b", 1, o, 0);
  }
  if (cfg.readout) {
    out.push_back({"readout.W", cfg.out_classes, cfg.hidden, cfg.hidden});
    if (cfg.use_bias) out.push_back({"readout.b", 1, cfg.out_classes, 0});
  }
  return out;
}

// Uniform(-s/sqrt(fan_in), s/sqrt(fan_in)) weights, zero bias and eps.
inline ModelParams init_params(const GnnConfig& cfg, std::uint64_t seed, double scale = 1.0) {
  ModelParams p;
  Rng rng = Rng(seed).split("init");
  for (const auto& s : parameter_shapes(cfg)) {
    Matrix m = Matrix::Zero(s.rows, s.cols);
    if (s.fan_in > 0) {
      const double bound = scale / std::sqrt(static_cast<double>(s.fan_in));
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
    }
    p.tensors.emplace(s.name, std::move(m));
  }
  return p;
}

inline void check_params(const GnnConfig& cfg, const ModelParams& p) {
  auto shapes = parameter_shapes(cfg);
  require(shapes.size() == p.tensors.size(), "parameter set does not match the configuration");
  for (const auto& s : shapes) {
    const Matrix& m = p.at(s.name);
    require(m.rows() == s.rows && m.cols() == s.cols,
            "parameter " + s.name + " has shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                ", expected " + std::to_string(s.rows) + "x" + std::to_string(s.cols));
  }
}

// ---------------------------------------------------------------------------
// Batches: a disjoint union of graphs with precomputed message indices.

struct GraphBatch {
  int num_graphs = 0;
  Matrix x;
  std::vector<int> node_graph;
  ad::EdgeIndex edges;           // both directions of every edge, grouped by dst
  Matrix edge_feat;              // one row per entry of `edges`
  ad::EdgeIndex edges_self;      // edges plus one self entry per node (attention)
  Matrix edge_feat_self;         // self entries carry 0
  std::vector<int> self_value_index;  // gather index into [W1 x; W2 x] per self-augmented entry
  Vector inv_degree;             // 1/deg, 0 for isolated nodes
};

inline GraphBatch make_batch(std::span<const Graph* const> graphs, bool need_edge_features) {
  GraphBatch b;
  b.num_graphs = static_cast<int>(graphs.size());
  require(!graphs.empty(), "empty batch");
  const int d = graphs.front()->d();
  int total = 0;
  for (const Graph* g : graphs) {
    require(g->d() == d, "batch mixes feature dimensions");
    if (need_edge_features) require(g->has_edge_features(), "model requires edge features but the graph has none");
    total += g->n();
  }
  b.x.resize(total, d);
  b.node_graph.resize(total);
  b.inv_degree = Vector::Zero(total);

  struct Entry {
    int dst, src;
    double ef;
  };
  std::vector<Entry> plain, self;
  int off = 0;
  for (int gi = 0; gi < b.num_graphs; ++gi) {
    const Graph& g = *graphs[gi];
    b.x.middleRows(off, g.n()) = g.features();
    for (int i = 0; i < g.n(); ++i) {
      b.node_graph[off + i] = gi;
      if (g.degree(i) > 0) b.inv_degree(off + i) = 1.0 / g.degree(i);
      self.push_back({off + i, off + i, 0.0});
    }
    for (std::size_t k = 0; k < g.edges().size(); ++k) {
      const auto& e = g.edges()[k];
      const double f = g.has_edge_features() ? g.edge_features()[k] : 0.0;
      plain.push_back({off + e.v, off + e.u, f});
      plain.push_back({off + e.u, off + e.v, f});
      self.push_back({off + e.v, off + e.u, f});
      self.push_back({off + e.u, off + e.v, f});
    }
    off += g.n();
  }
  auto by_dst = [](const Entry& a, const Entry& c) { return a.dst != c.dst ? a.dst < c.dst : a.src < c.src; };
  std::sort(plain.begin(), plain.end(), by_dst);
  std::sort(self.begin(), self.end(), by_dst);

  auto fill = [total](const std::vector<Entry>& es, ad::EdgeIndex& idx, Matrix& ef) {
    idx.num_nodes = total;
    idx.src.resize(es.size());
    idx.dst.resize(es.size());
    idx.dst_offsets.assign(total + 1, 0);
    ef.resize(static_cast<Eigen::Index>(es.size()), 1);
    for (std::size_t k = 0; k < es.size(); ++k) {
      idx.src[k] = es[k].src;
      idx.dst[k] = es[k].dst;
      ef(static_cast<Eigen::Index>(k), 0) = es[k].ef;
      ++idx.dst_offsets[es[k].dst + 1];
    }
    for (int i = 0; i < total; ++i) idx.dst_offsets[i + 1] += idx.dst_offsets[i];
  };
  fill(plain, b.edges, b.edge_feat);
  fill(self, b.edges_self, b.edge_feat_self);
  b.self_value_index.resize(self.size());
  for (std::size_t k = 0; k < self.size(); ++k)
    b.self_value_index[k] = self[k].src == self[k].dst ? self[k].dst : total + self[k].src;
  return b;
}

inline GraphBatch make_batch(const Graph& g, bool need_edge_features) {
  const Graph* ptr = &g;
  return make_batch(std::span<const Graph* const>(&ptr, 1), need_edge_features);
}

// ---------------------------------------------------------------------------

using ParamVars = std::map<std::string, ad::Var>;

inline ParamVars bind_params(ad::Tape& tape, const ModelParams& p) {
  ParamVars vars;
  for (const auto& [name, m] : p.tensors) vars.emplace(name, tape.parameter(m));
  return vars;
}

struct ForwardOptions {
  bool training = false;  // enables dropout
  Rng* dropout_rng = nullptr;
};

namespace detail {

inline ad::Var param(const ParamVars& v, int k, const char* name) {
  auto it = v.find(layer_key(k, name));
  if (it == v.end()) throw ConfigError("missing parameter " + layer_key(k, name));
  return it->second;
}

inline ad::Var layer_forward(const GnnConfig& cfg, const ParamVars& v, int k, ad::Var h, const GraphBatch& b) {
  ad::Tape& t = *h.tape;
  const bool ef = cfg.edge_features;
  ad::Var out;
  switch (cfg.arch) {
    case Arch::graphconv:
    case Arch::graphconv_mean: {
      ad::Var root = ad::matmul_nt(h, param(v, k, "W1"));
      ad::Var agg = ad::neighbor_gather_sum(ad::matmul_nt(h, param(v, k, "W2")), b.edges);
      if (ef) {
        ad::Var e = t.constant(b.edge_feat);
        agg = ad::add(agg, ad::scatter_sum(ad::relu(ad::matmul_nt(e, param(v, k, "W3"))), b.edges));
      }
      if (cfg.arch == Arch::graphconv_mean) agg = ad::scale_rows_const(agg, b.inv_degree);
      out = ad::add(root, agg);
      break;
    }
    case Arch::gin: {
      ad::Var agg;
      if (ef) {
        ad::Var e = ad::relu(ad::matmul_nt(t.constant(b.edge_feat), param(v, k, "W3")));
        ad::Var base = ad::gather_rows(h, cfg.gin_neighbor_fix ? b.edges.src : b.edges.dst);
        agg = ad::scatter_sum(ad::relu(ad::add(base, e)), b.edges);
      } else {
        agg = ad::neighbor_gather_sum(h, b.edges);
      }
      ad::Var inner = ad::add(ad::add(h, ad::scale_by(h, param(v, k, "eps"))), ad::matmul_nt(agg, param(v, k, "W2")));
      out = ad::matmul_nt(inner, param(v, k, "W4"));
      break;
    }
    case Arch::gatv2: {
      ad::Var p1 = ad::matmul_nt(h, param(v, k, "W1"));
      ad::Var p2 = ad::matmul_nt(h, param(v, k, "W2"));
      const auto& es = b.edges_self;
      ad::Var pre = ad::add(ad::gather_rows(p1, es.dst), ad::gather_rows(p2, es.src));
      if (ef) pre = ad::add(pre, ad::relu(ad::matmul_nt(t.constant(b.edge_feat_self), param(v, k, "W3"))));
      ad::Var logits = ad::matmul(ad::leaky_relu(pre, ad::kLeakySlope), param(v, k, "a"));
      ad::Var alpha = ad::masked_softmax(logits, es);
      ad::Var values = ad::gather_rows(ad::vstack(p1, p2), b.self_value_index);
      out = ad::scatter_sum(ad::scale_rows(values, alpha), es);
      break;
    }
    case Arch::transformer: {
      const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.layer_out(k)));
      ad::Var root = ad::matmul_nt(h, param(v, k, "W1"));
      ad::Var q = ad::gather_rows(ad::matmul_nt(h, param(v, k, "W3")), b.edges.dst);
      ad::Var key = ad::gather_rows(ad::matmul_nt(h, param(v, k, "W4")), b.edges.src);
      ad::Var val = ad::gather_rows(ad::matmul_nt(h, param(v, k, "W2")), b.edges.src);
      if (ef) {
        ad::Var e = ad::matmul_nt(t.constant(b.edge_feat), param(v, k, "W5"));
        key = ad::add(key, e);
        val = ad::add(val, ad::relu(e));
      }
      ad::Var alpha = ad::masked_softmax(ad::scale(ad::row_dot(q, key), inv_sqrt), b.edges);
      out = ad::add(root, ad::scatter_sum(ad::scale_rows(val, alpha), b.edges));
      break;
    }
  }
  if (cfg.use_bias) out = ad::add(out, param(v, k, "b"));
  if (cfg.activation == Activation::relu) out = ad::relu(out);
  return out;
}

}  // namespace detail

// Logits, one row per graph of the batch.
inline ad::Var forward(const GnnConfig& cfg, const ParamVars& vars, const GraphBatch& batch,
                       const ForwardOptions& opt = {}) {
  require(batch.x.cols() == cfg.in_dim, "feature dimension " + std::to_string(batch.x.cols()) +
                                            " does not match in_dim " + std::to_string(cfg.in_dim));
  ad::Tape& tape = *vars.begin()->second.tape;
  ad::Var h = tape.constant(batch.x);
  for (int k = 0; k < cfg.layers; ++k) {
    h = detail::layer_forward(cfg, vars, k, h, batch);
    if (opt.training && cfg.dropout > 0.0 && k + 1 < cfg.layers) {
      require(opt.dropout_rng != nullptr, "dropout needs an rng");
      Matrix mask(h.rows(), h.cols());
      const double keep = 1.0 - cfg.dropout;
      for (Eigen::Index i = 0; i < mask.size(); ++i)
        mask.data()[i] = opt.dropout_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
      h = ad::mul_const(h, std::move(mask));
    }
  }
  ad::Var pooled = ad::segment_sum(h, batch.node_graph, batch.num_graphs);
  if (!cfg.readout) return pooled;
  ad::Var logits = ad::matmul_nt(pooled, vars.at("readout.W"));
  if (cfg.use_bias) logits = ad::add(logits, vars.at("readout.b"));
  return logits;
}

// Evaluation-mode logits for one graph.
inline Vector forward(const GnnConfig& cfg, const ModelParams& params, const Graph& g) {
  check_params(cfg, params);
  GraphBatch b = make_batch(g, cfg.edge_features);
  ad::Tape tape;
  ParamVars vars = bind_params(tape, params);
  return forward(cfg, vars, b).value().row(0).transpose();
}

// Edge-free computation path: every node is encoded by its root weights
// alone, then summed and read out. Written directly in Eigen.
inline Vector forward_deepsets(const GnnConfig& cfg, const ModelParams& p, const Matrix& x) {
  Matrix h = x;
  for (int k = 0; k < cfg.layers; ++k) {
    Matrix z;
    if (cfg.arch == Arch::gin) {
      const double eps = p.at(layer_key(k, "eps"))(0, 0);
      z = (1.0 + eps) * h * p.at(layer_key(k, "W4")).transpose();
    } else {
      z = h * p.at(layer_key(k, "W1")).transpose();
    }
    if (cfg.use_bias) z.rowwise() += p.at(layer_key(k, "b")).row(0);
    if (cfg.activation == Activation::relu) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  Eigen::RowVectorXd pooled = h.colwise().sum();
  if (!cfg.readout) return pooled.transpose();
  Eigen::RowVectorXd logits = pooled * p.at("readout.W").transpose();
  if (cfg.use_bias) logits += p.at("readout.b").row(0);
  return logits.transpose();
}

inline double forward_linear(const LinearGnnParams& p, const Graph& g) {
  require(p.w1.size() == g.d() && p.w2.size() == g.d(), "linear GNN dimension mismatch");
  return p.w1.dot(pooled_sum(g)) + p.w2.dot(degree_weighted_sum(g));
}

// Input row of the linear GNN: [sum_i x_i, sum_i deg(i) x_i].
inline Vector linear_input(const Graph& g) {
  Vector z(2 * g.d());
  z << pooled_sum(g), degree_weighted_sum(g);
  return z;
}

inline Matrix linear_inputs(std::span<const LabeledGraph> ds) {
  require(!ds.empty(), "linear_inputs: empty dataset");
  Matrix z(static_cast<Eigen::Index>(ds.size()), 2 * ds.front().graph.d());
  for (std::size_t l = 0; l < ds.size(); ++l) {
    require(ds[l].graph.d() == ds.front().graph.d(), "linear_inputs: mixed feature dimensions");
    z.row(static_cast<Eigen::Index>(l)) = linear_input(ds[l].graph).transpose();
  }
  return z;
}

inline ModelParams to_model_params(const LinearGnnParams& lp) {
  ModelParams p;
  p.tensors.emplace("l0.W1", Matrix(lp.w1.transpose()));
  p.tensors.emplace("l0.W2", Matrix(lp.w2.transpose()));
  return p;
}

inline LinearGnnParams to_linear_params(const ModelParams& p) {
  return {p.at("l0.W1").row(0).transpose(), p.at("l0.W2").row(0).transpose()};
}

// Zeroes the topological weights and the edge-feature projections. For every
// architecture except gatv2 the result ignores the edge set; gatv2 still
// spreads attention mass over neighbours, so its self weight drops below 1.
inline ModelParams without_topology(const GnnConfig& cfg, ModelParams p) {
  const char* edge_proj = cfg.arch == Arch::transformer ? "W5" : "W3";
  for (int k = 0; k < cfg.layers; ++k) {
    p.at(layer_key(k, "W2")).setZero();
    if (cfg.edge_features) p.at(layer_key(k, edge_proj)).setZero();
  }
  return p;
}

struct NormRatio {
  std::vector<double> per_layer;  // ||W2||_F / ||root||_F, +inf when the root is zero
  double aggregate = 0.0;         // over all layers jointly
};

inline NormRatio norm_ratio(const GnnConfig& cfg, const ModelParams& p) {
  NormRatio r;
  double top2 = 0.0, root2 = 0.0;
  for (int k = 0; k < cfg.layers; ++k) {
    const double top = p.at(layer_key(k, "W2")).norm();
    const double root = p.at(layer_key(k, root_weight_name(cfg.arch))).norm();
    r.per_layer.push_back(root > 0.0 ? top / root : std::numeric_limits<double>::infinity());
    top2 += top * top;
    root2 += root * root;
  }
  r.aggregate = root2 > 0.0 ? std::sqrt(top2 / root2) : std::numeric_limits<double>::infinity();
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoints: {"config": {...}, "tensors": {name: {"rows","cols","data"}}}
// with column-major data.

inline nlohmann::json config_to_json(const GnnConfig& c) {
  return {{"arch", to_string(c.arch)},
          {"in_dim", c.in_dim},
          {"layers", c.layers},
          {"hidden", c.hidden},
          {"dropout", c.dropout},
          {"use_bias", c.use_bias},
          {"edge_features", c.edge_features},
          {"out_classes", c.out_classes},
          {"readout", c.readout},
          {"activation", c.activation == Activation::relu ? "relu" : "identity"},
          {"gin_neighbor_fix", c.gin_neighbor_fix}};
}

inline GnnConfig config_from_json(const nlohmann::json& j) {
  GnnConfig c;
  c.arch = parse_arch(j.value("arch", std::string("graphconv")));
  c.in_dim = j.value("in_dim", c.in_dim);
  c.layers = j.value("layers", c.layers);
  c.hidden = j.value("hidden", c.hidden);
  c.dropout = j.value("dropout", c.dropout);
  c.use_bias = j.value("use_bias", c.use_bias);
  c.edge_features = j.value("edge_features", c.edge_features);
  c.out_classes = j.value("out_classes", c.out_classes);
  c.readout = j.value("readout", c.readout);
  const std::string act = j.value("activation", std::string("relu"));
  require(act == "relu" || act == "identity", "unknown activation '" + act + "'");
  c.activation = act == "relu" ? Activation::relu : Activation::identity;
  c.gin_neighbor_fix = j.value("gin_neighbor_fix", c.gin_neighbor_fix);
  c.validate();
  return c;
}

inline nlohmann::json checkpoint_to_json(const GnnConfig& cfg, const ModelParams& p) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, m] : p.tensors) {
    std::vector<double> data(m.data(), m.data() + m.size());
    tensors[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
  }
  return {{"config", config_to_json(cfg)}, {"tensors", tensors}};
}

inline std::pair<GnnConfig, ModelParams> checkpoint_from_json(const nlohmann::json& j) {
  GnnConfig cfg = config_from_json(j.at("config"));
  ModelParams p;
  for (const auto& [name, t] : j.at("tensors").items()) {
    const auto rows = t.at("rows").get<Eigen::Index>(), cols = t.at("cols").get<Eigen::Index>();
    auto data = t.at("data").get<std::vector<double>>();
    require(static_cast<Eigen::Index>(data.size()) == rows * cols, "tensor " + name + " has the wrong size");
    p.tensors.emplace(name, Eigen::Map<Matrix>(data.data(), rows, cols));
  }
  check_params(cfg, p);
  return {cfg, p};
}

}  // namespace structfit
