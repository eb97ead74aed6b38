#pragma once

// Optimisation loops, evaluation and the experiment protocols built on them
// (learning curves on the Sum task, stratified k-fold).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "structfit/autodiff.hpp"
#include "structfit/error.hpp"
#include "structfit/generators.hpp"
#include "structfit/graph.hpp"
#include "structfit/models.hpp"
#include "structfit/parallel.hpp"
#include "structfit/rng.hpp"

namespace structfit {

enum class Optimizer { gd, adam };
enum class LossKind { logistic, exponential, softmax_xent };

inline std::string to_string(Optimizer o) { return o == Optimizer::gd ? "gd" : "adam"; }
inline std::string to_string(LossKind l) {
  switch (l) {
    case LossKind::logistic: return "logistic";
    case LossKind::exponential: return "exponential";
    case LossKind::softmax_xent: return "softmax_xent";
  }
  return "?";
}
inline Optimizer parse_optimizer(const std::string& s) {
  if (s == "gd") return Optimizer::gd;
  if (s == "adam") return Optimizer::adam;
  throw ConfigError("unknown optimizer '" + s + "'");
}
inline LossKind parse_loss(const std::string& s) {
  if (s == "logistic") return LossKind::logistic;
  if (s == "exponential" || s == "exp") return LossKind::exponential;
  if (s == "softmax_xent") return LossKind::softmax_xent;
  throw ConfigError("unknown loss '" + s + "'");
}

struct TrainConfig {
  Optimizer optimizer = Optimizer::adam;
  double lr = 1e-3;
  int epochs = 1000;
  double weight_decay = 0.0;
  int patience = 100;  // epochs without validation-loss improvement
  int batch = 32;      // 0 means full batch
  LossKind loss = LossKind::logistic;
  std::uint64_t seed = 0;
  int eval_every = 1;
  double init_scale = 1.0;
  std::optional<int> regular_degree;  // enables the alignment residual column
  bool snapshots = false;             // keep the normalised parameter direction per record
  // Linear fast path only: GD steps scaled by 1/L(w). Same fixed direction as
  // plain GD on separable data, reached in far fewer steps.
  bool normalized_gd = false;

  void validate() const {
    require(lr >= 0.0 && std::isfinite(lr), "lr must be finite and non-negative");
    require(epochs >= 0, "epochs must be >= 0");
    require(weight_decay >= 0.0, "weight_decay must be >= 0");
    require(patience >= 1, "patience must be >= 1");
    require(batch >= 0, "batch must be >= 0");
    require(eval_every >= 1, "eval_every must be >= 1");
    require(init_scale >= 0.0, "init_scale must be >= 0");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j = {{"optimizer", to_string(c.optimizer)},
                      {"lr", c.lr},
                      {"epochs", c.epochs},
                      {"weight_decay", c.weight_decay},
                      {"patience", c.patience},
                      {"batch", c.batch},
                      {"loss", to_string(c.loss)},
                      {"seed", c.seed},
                      {"eval_every", c.eval_every},
                      {"init_scale", c.init_scale},
                      {"snapshots", c.snapshots},
                      {"normalized_gd", c.normalized_gd}};
  if (c.regular_degree) j["regular_degree"] = *c.regular_degree;
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("optimizer")) c.optimizer = parse_optimizer(j["optimizer"].get<std::string>());
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.patience = j.value("patience", c.patience);
  c.batch = j.value("batch", c.batch);
  if (j.contains("loss")) c.loss = parse_loss(j["loss"].get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.snapshots = j.value("snapshots", c.snapshots);
  c.normalized_gd = j.value("normalized_gd", c.normalized_gd);
  if (j.contains("regular_degree") && !j["regular_degree"].is_null()) c.regular_degree = j["regular_degree"].get<int>();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

inline double binary_target(int label) { return label > 0 ? 1.0 : -1.0; }

// max_j |w2_j - r w1_j| / max(||w1||_inf, tiny)
inline double alignment_residual(const Vector& w1, const Vector& w2, double r) {
  require(w1.size() == w2.size(), "alignment_residual: size mismatch");
  const double scale = std::max(w1.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  return (w2 - r * w1).cwiseAbs().maxCoeff() / scale;
}

struct TrainRecord {
  int epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double val_acc = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> norm_ratio;
  double align_resid = std::numeric_limits<double>::quiet_NaN();
};

inline std::string format_number(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct TrainLog {
  std::vector<TrainRecord> records;
  std::vector<Vector> directions;  // parallel to records when snapshots are on
  int best_epoch = 0;
  int last_epoch = 0;
  bool diverged = false;
  bool early_stopped = false;

  [[nodiscard]] std::string to_csv() const {
    std::size_t layers = records.empty() ? 0 : records.front().norm_ratio.size();
    std::string out = "epoch,loss,train_acc,val_acc";
    for (std::size_t k = 0; k < layers; ++k) out += ",norm_ratio_l" + std::to_string(k);
    out += ",align_resid\n";
    for (const auto& r : records) {
      out += std::to_string(r.epoch) + "," + format_number(r.loss) + "," + format_number(r.train_acc) + "," +
             format_number(r.val_acc);
      for (double v : r.norm_ratio) out += "," + format_number(v);
      out += "," + format_number(r.align_resid) + "\n";
    }
    return out;
  }
};

struct TrainResult {
  ModelParams params;
  TrainLog log;
};

// ---------------------------------------------------------------------------
// Losses and evaluation.

namespace detail {

inline void check_loss(const GnnConfig& cfg, LossKind loss) {
  if (loss == LossKind::softmax_xent)
    require(cfg.out_classes >= 2, "softmax_xent needs out_classes >= 2");
  else
    require(cfg.out_classes == 1, "logistic/exponential losses need out_classes == 1");
}

inline ad::Var loss_node(LossKind kind, ad::Var logits, std::span<const int> labels) {
  if (kind == LossKind::softmax_xent) return ad::softmax_xent(logits, std::vector<int>(labels.begin(), labels.end()));
  std::vector<double> y(labels.size());
  for (std::size_t l = 0; l < labels.size(); ++l) y[l] = binary_target(labels[l]);
  return kind == LossKind::logistic ? ad::logistic_loss(logits, std::move(y)) : ad::exp_loss(logits, std::move(y));
}

inline bool correct(const Eigen::RowVectorXd& logits, int label) {
  if (logits.size() == 1) return (logits(0) > 0.0 ? 1 : -1) == (label > 0 ? 1 : -1);
  Eigen::Index arg = 0;
  logits.maxCoeff(&arg);
  return static_cast<int>(arg) == label;
}

}  // namespace detail

// A dataset pre-split into evaluation batches, reused across epochs.
struct BatchedSet {
  std::vector<GraphBatch> batches;
  std::vector<std::vector<int>> labels;
  std::size_t size = 0;
};

inline BatchedSet make_batched(const Dataset& ds, bool edge_features, std::size_t chunk = 256) {
  BatchedSet out;
  out.size = ds.size();
  for (std::size_t start = 0; start < ds.size(); start += chunk) {
    const std::size_t end = std::min(ds.size(), start + chunk);
    std::vector<const Graph*> ptrs;
    std::vector<int> labels;
    for (std::size_t l = start; l < end; ++l) {
      ptrs.push_back(&ds[l].graph);
      labels.push_back(ds[l].label);
    }
    out.batches.push_back(make_batch(ptrs, edge_features));
    out.labels.push_back(std::move(labels));
  }
  return out;
}

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

inline EvalResult evaluate(const GnnConfig& cfg, const ModelParams& params, const BatchedSet& set, LossKind loss) {
  require(set.size > 0, "evaluate: empty dataset");
  detail::check_loss(cfg, loss);
  EvalResult r;
  std::size_t hits = 0;
  for (std::size_t b = 0; b < set.batches.size(); ++b) {
    ad::Tape tape;
    ParamVars vars = bind_params(tape, params);
    ad::Var logits = forward(cfg, vars, set.batches[b]);
    const auto& labels = set.labels[b];
    r.loss += detail::loss_node(loss, logits, labels).scalar() * static_cast<double>(labels.size());
    for (std::size_t l = 0; l < labels.size(); ++l)
      hits += detail::correct(logits.value().row(static_cast<Eigen::Index>(l)), labels[l]);
  }
  r.loss /= static_cast<double>(set.size);
  r.accuracy = static_cast<double>(hits) / static_cast<double>(set.size);
  return r;
}

inline EvalResult evaluate(const GnnConfig& cfg, const ModelParams& params, const Dataset& ds, LossKind loss) {
  require(!ds.empty(), "evaluate: empty dataset");
  check_params(cfg, params);
  return evaluate(cfg, params, make_batched(ds, cfg.edge_features), loss);
}

// +1/-1 for binary models, the argmax class otherwise.
inline int predict(const GnnConfig& cfg, const ModelParams& params, const Graph& g) {
  Vector logits = forward(cfg, params, g);
  if (logits.size() == 1) return logits(0) > 0.0 ? 1 : -1;
  Eigen::Index arg = 0;
  logits.maxCoeff(&arg);
  return static_cast<int>(arg);
}

// ---------------------------------------------------------------------------
// Optimisers over named tensors.

namespace detail {

struct Optim {
  const TrainConfig& cfg;
  std::map<std::string, Matrix> m, v;
  long step_count = 0;

  void step(ModelParams& p, const std::map<std::string, Matrix>& grads) {
    ++step_count;
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (auto& [name, w] : p.tensors) {
      Matrix g = grads.at(name);
      if (cfg.weight_decay > 0.0) g += cfg.weight_decay * w;
      if (cfg.optimizer == Optimizer::gd) {
        w -= cfg.lr * g;
        continue;
      }
      auto& mm = m.try_emplace(name, Matrix::Zero(w.rows(), w.cols())).first->second;
      auto& vv = v.try_emplace(name, Matrix::Zero(w.rows(), w.cols())).first->second;
      mm = b1 * mm + (1.0 - b1) * g;
      vv = b2 * vv + (1.0 - b2) * g.cwiseProduct(g);
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_count));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_count));
      w.array() -= cfg.lr * (mm.array() / c1) / ((vv.array() / c2).sqrt() + eps);
    }
  }
};

inline bool grads_finite(const std::map<std::string, Matrix>& g) {
  for (const auto& [_, m] : g)
    if (!m.allFinite()) return false;
  return true;
}

// Shared early-stopping and logging bookkeeping for both training paths.
template <class Params>
struct Tracker {
  const TrainConfig& cfg;
  bool has_val;
  TrainLog log;
  Params best;
  double best_val = std::numeric_limits<double>::infinity();

  // Returns true when training should stop.
  bool record(const TrainRecord& rec, const Params& current, std::optional<Vector> direction) {
    log.records.push_back(rec);
    if (direction) log.directions.push_back(std::move(*direction));
    log.last_epoch = rec.epoch;
    if (!has_val) return false;
    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      best = current;
      log.best_epoch = rec.epoch;
    } else if (rec.epoch - log.best_epoch >= cfg.patience) {
      log.early_stopped = true;
      return true;
    }
    return false;
  }
};

}  // namespace detail

// Mini-batch (or full-batch) training of any architecture. With a validation
// set, early-stops on validation loss and returns the best-validation
// parameters; otherwise returns the final ones. A non-finite loss or gradient
// aborts with the last finite parameters and sets log.diverged.
inline TrainResult train(const GnnConfig& mcfg, const TrainConfig& tcfg, const Dataset& train_set,
                         const Dataset& val_set, const ModelParams* init = nullptr) {
  mcfg.validate();
  tcfg.validate();
  require(!train_set.empty(), "train: empty training set");
  detail::check_loss(mcfg, tcfg.loss);
  require(!tcfg.normalized_gd, "normalized_gd is only available for the linear GNN (train_linear)");
  ModelParams params = init ? *init : init_params(mcfg, tcfg.seed, tcfg.init_scale);
  check_params(mcfg, params);

  const Rng root(tcfg.seed);
  Rng shuffle = root.split("shuffle");
  Rng dropout = root.split("dropout");
  const BatchedSet train_eval = make_batched(train_set, mcfg.edge_features);
  const std::optional<BatchedSet> val_eval =
      val_set.empty() ? std::nullopt : std::optional(make_batched(val_set, mcfg.edge_features));

  const std::size_t m = train_set.size();
  const std::size_t bs = tcfg.batch == 0 ? m : std::min<std::size_t>(static_cast<std::size_t>(tcfg.batch), m);
  const bool full = bs == m;
  std::optional<GraphBatch> full_batch;
  std::vector<int> all_labels;
  if (full) {
    std::vector<const Graph*> ptrs;
    for (const auto& lg : train_set) {
      ptrs.push_back(&lg.graph);
      all_labels.push_back(lg.label);
    }
    full_batch = make_batch(ptrs, mcfg.edge_features);
  }

  detail::Optim opt{tcfg, {}, {}, 0};
  detail::Tracker<ModelParams> tracker{tcfg, val_eval.has_value(), {}, params, std::numeric_limits<double>::infinity()};

  auto snapshot = [&](int epoch) {
    TrainRecord rec;
    rec.epoch = epoch;
    EvalResult tr = evaluate(mcfg, params, train_eval, tcfg.loss);
    rec.loss = tr.loss;
    rec.train_acc = tr.accuracy;
    if (val_eval) {
      EvalResult va = evaluate(mcfg, params, *val_eval, tcfg.loss);
      rec.val_loss = va.loss;
      rec.val_acc = va.accuracy;
    }
    rec.norm_ratio = norm_ratio(mcfg, params).per_layer;
    if (tcfg.regular_degree && params.has("l0.W1") && params.has("l0.W2") &&
        params.at("l0.W1").size() == params.at("l0.W2").size())
      rec.align_resid = alignment_residual(params.at("l0.W1").reshaped(), params.at("l0.W2").reshaped(),
                                           *tcfg.regular_degree);
    std::optional<Vector> dir;
    if (tcfg.snapshots) {
      Vector f = params.flatten();
      const double norm = f.norm();
      dir = norm > 0.0 ? Vector(f / norm) : f;
    }
    if (!std::isfinite(rec.loss)) return true;
    return tracker.record(rec, params, std::move(dir));
  };

  bool stop = snapshot(0);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= tcfg.epochs && !stop; ++epoch) {
    if (!full)
      for (std::size_t i = m; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    for (std::size_t start = 0; start < m; start += bs) {
      std::optional<GraphBatch> mini;
      std::vector<int> mini_labels;
      if (!full) {
        std::vector<const Graph*> ptrs;
        for (std::size_t k = start; k < std::min(m, start + bs); ++k) {
          ptrs.push_back(&train_set[order[k]].graph);
          mini_labels.push_back(train_set[order[k]].label);
        }
        mini = make_batch(ptrs, mcfg.edge_features);
      }
      const GraphBatch& batch = full ? *full_batch : *mini;
      const std::vector<int>& labels = full ? all_labels : mini_labels;

      ad::Tape tape;
      ParamVars vars = bind_params(tape, params);
      ForwardOptions fo;
      fo.training = true;
      fo.dropout_rng = &dropout;
      ad::Var loss = detail::loss_node(tcfg.loss, forward(mcfg, vars, batch, fo), labels);
      std::map<std::string, Matrix> grads;
      bool finite = std::isfinite(loss.scalar());
      if (finite) {
        tape.backward(loss);
        for (const auto& [name, v] : vars) grads.emplace(name, tape.grad(v));
        finite = detail::grads_finite(grads);
      }
      ModelParams before = params;
      if (finite) {
        opt.step(params, grads);
        finite = params.all_finite();
      }
      if (!finite) {
        params = std::move(before);
        tracker.log.diverged = true;
        stop = true;
        break;
      }
    }
    if (stop) break;
    if (epoch % tcfg.eval_every == 0 || epoch == tcfg.epochs) {
      stop = snapshot(epoch);
      if (!tracker.log.records.empty() && tracker.log.records.back().epoch != epoch) {
        // Non-finite evaluation loss: treat as divergence.
        tracker.log.diverged = true;
        stop = true;
      }
    }
  }
  TrainResult out;
  out.params = val_eval ? tracker.best : params;
  if (!val_eval) tracker.log.best_epoch = tracker.log.last_epoch;
  out.log = std::move(tracker.log);
  return out;
}

// ---------------------------------------------------------------------------
// Linear GNN fast path: the model is w . z with z = [sum x, sum deg x], so the
// inputs are precomputed once and each epoch is a pair of mat-vec products.
// Always full batch.

struct LinearRun {
  Vector w;  // [w1; w2]
  TrainLog log;
};

namespace detail {

struct LinearEval {
  double loss;
  double acc;
};

inline LinearEval linear_eval(const Matrix& z, const Vector& y, const Vector& w, LossKind kind) {
  Vector s = z * w;
  double loss = 0.0;
  std::size_t hits = 0;
  for (Eigen::Index l = 0; l < s.size(); ++l) {
    const double margin = y(l) * s(l);
    loss += kind == LossKind::exponential ? std::exp(-margin)
                                          : (margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin)));
    hits += (s(l) > 0.0 ? 1.0 : -1.0) == y(l);
  }
  return {loss / static_cast<double>(s.size()), static_cast<double>(hits) / static_cast<double>(s.size())};
}

}  // namespace detail

inline LinearRun train_linear_z(const TrainConfig& tcfg, const Matrix& z, const Vector& y, Vector w0,
                                const Matrix* z_val = nullptr, const Vector* y_val = nullptr) {
  tcfg.validate();
  require(tcfg.loss != LossKind::softmax_xent, "linear GNN training uses logistic or exponential loss");
  require(z.rows() > 0 && z.rows() == y.size(), "train_linear: inputs and labels disagree");
  require(w0.size() == z.cols() && z.cols() % 2 == 0, "train_linear: weight size mismatch");
  const bool has_val = z_val != nullptr && z_val->rows() > 0;
  const Eigen::Index d = z.cols() / 2;
  const double m = static_cast<double>(z.rows());

  Vector w = std::move(w0);
  Vector adam_m = Vector::Zero(w.size()), adam_v = Vector::Zero(w.size());
  detail::Tracker<Vector> tracker{tcfg, has_val, {}, w, std::numeric_limits<double>::infinity()};

  auto snapshot = [&](int epoch) {
    TrainRecord rec;
    rec.epoch = epoch;
    auto tr = detail::linear_eval(z, y, w, tcfg.loss);
    rec.loss = tr.loss;
    rec.train_acc = tr.acc;
    if (has_val) {
      auto va = detail::linear_eval(*z_val, *y_val, w, tcfg.loss);
      rec.val_loss = va.loss;
      rec.val_acc = va.acc;
    }
    const double n1 = w.head(d).norm();
    rec.norm_ratio = {n1 > 0.0 ? w.tail(d).norm() / n1 : std::numeric_limits<double>::infinity()};
    if (tcfg.regular_degree) rec.align_resid = alignment_residual(w.head(d), w.tail(d), *tcfg.regular_degree);
    std::optional<Vector> dir;
    if (tcfg.snapshots) dir = w.norm() > 0.0 ? Vector(w / w.norm()) : w;
    if (!std::isfinite(rec.loss)) return true;
    return tracker.record(rec, w, std::move(dir));
  };

  bool stop = snapshot(0);
  for (int epoch = 1; epoch <= tcfg.epochs && !stop; ++epoch) {
    Vector s = z * w;
    Vector coef(s.size());
    if (tcfg.normalized_gd && tcfg.loss == LossKind::exponential) {
      // grad / loss is invariant to shifting every margin, so shift by the
      // smallest one to keep the weights representable.
      const double lo = y.cwiseProduct(s).minCoeff();
      double total = 0.0;
      for (Eigen::Index l = 0; l < s.size(); ++l) total += (coef(l) = std::exp(-(y(l) * s(l) - lo)));
      for (Eigen::Index l = 0; l < s.size(); ++l) coef(l) *= -y(l) * m / total;
    } else {
      double loss = 0.0;
      for (Eigen::Index l = 0; l < s.size(); ++l) {
        const double margin = y(l) * s(l);
        // d loss / d s_l
        coef(l) = tcfg.loss == LossKind::exponential ? -y(l) * std::exp(-margin) : -y(l) / (1.0 + std::exp(margin));
        loss += tcfg.loss == LossKind::exponential ? std::exp(-margin) : std::log1p(std::exp(-margin));
      }
      if (tcfg.normalized_gd) {
        if (loss == 0.0) break;  // every margin is beyond double range
        coef *= m / loss;
      }
    }
    Vector g = z.transpose() * coef / m;
    if (tcfg.weight_decay > 0.0) g += tcfg.weight_decay * w;
    if (!g.allFinite()) {
      tracker.log.diverged = true;
      break;
    }
    Vector next = w;
    if (tcfg.optimizer == Optimizer::gd) {
      next -= tcfg.lr * g;
    } else {
      adam_m = 0.9 * adam_m + 0.1 * g;
      adam_v = 0.999 * adam_v + 0.001 * g.cwiseProduct(g);
      const double c1 = 1.0 - std::pow(0.9, epoch), c2 = 1.0 - std::pow(0.999, epoch);
      next.array() -= tcfg.lr * (adam_m.array() / c1) / ((adam_v.array() / c2).sqrt() + 1e-8);
    }
    if (!next.allFinite()) {
      tracker.log.diverged = true;
      break;
    }
    w = std::move(next);
    if (epoch % tcfg.eval_every == 0 || epoch == tcfg.epochs) {
      stop = snapshot(epoch);
      if (tracker.log.records.back().epoch != epoch) {
        tracker.log.diverged = true;
        stop = true;
      }
    }
  }
  LinearRun out;
  out.w = has_val ? tracker.best : w;
  if (!has_val) tracker.log.best_epoch = tracker.log.last_epoch;
  out.log = std::move(tracker.log);
  return out;
}

inline Vector binary_targets(std::span<const LabeledGraph> ds) {
  Vector y(static_cast<Eigen::Index>(ds.size()));
  for (std::size_t l = 0; l < ds.size(); ++l) y(static_cast<Eigen::Index>(l)) = binary_target(ds[l].label);
  return y;
}

// Linear GNN on a dataset; same initialisation as init_params(linear_gnn_config(d)).
inline TrainResult train_linear(const TrainConfig& tcfg, const Dataset& train_set, const Dataset& val_set,
                                const LinearGnnParams* init = nullptr) {
  require(!train_set.empty(), "train_linear: empty training set");
  const int d = train_set.front().graph.d();
  LinearGnnParams start = init ? *init : to_linear_params(init_params(linear_gnn_config(d), tcfg.seed, tcfg.init_scale));
  Vector w0(2 * d);
  w0 << start.w1, start.w2;
  Matrix z = linear_inputs(train_set);
  Vector y = binary_targets(train_set);
  std::optional<Matrix> zv;
  std::optional<Vector> yv;
  if (!val_set.empty()) {
    zv = linear_inputs(val_set);
    yv = binary_targets(val_set);
  }
  LinearRun run = train_linear_z(tcfg, z, y, std::move(w0), zv ? &*zv : nullptr, yv ? &*yv : nullptr);
  TrainResult out;
  out.params = to_model_params(LinearGnnParams{run.w.head(d), run.w.tail(d)});
  out.log = std::move(run.log);
  return out;
}

// Safe constant step for full-batch GD on the linear model: 1 / lambda_max(Z^T Z / m),
// the curvature bound of either loss at the origin.
inline double linear_gd_step(const Matrix& z) {
  Eigen::SelfAdjointEigenSolver<Matrix> es((z.transpose() * z) / static_cast<double>(z.rows()),
                                           Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues().maxCoeff();
  require(top > 0.0, "linear_gd_step: all inputs are zero");
  return 1.0 / top;
}

// ---------------------------------------------------------------------------
// Sum-task learning curves. Seed s of a curve uses dataset seed base.seed + s;
// training, validation and test instances come from disjoint index ranges of
// the same stream, so every distribution sees the same features and labels.

inline constexpr std::uint64_t kValIndexBase = 1ULL << 40;
inline constexpr std::uint64_t kTestIndexBase = 2ULL << 40;

struct SumTaskSetup {
  DatasetSpec base;  // n, d, seed, margin_eps; m and dist are set per run
  int val_size = 500;
  int test_size = 500;
  GnnConfig model;
  TrainConfig train;
};

struct SumTaskRun {
  TrainResult result;
  double test_acc = 0.0;
  double train_acc = 0.0;
};

inline Dataset sum_task_split(const SumTaskSetup& s, const GraphDist& dist, int size, int seed_index,
                              std::uint64_t first_index) {
  DatasetSpec spec = s.base;
  spec.m = size;
  spec.dist = dist;
  spec.seed = s.base.seed + static_cast<std::uint64_t>(seed_index);
  return make_sum_dataset(spec, first_index);
}

inline SumTaskRun run_sum_task(const SumTaskSetup& s, const GraphDist& dist, int size, int seed_index) {
  Dataset tr = sum_task_split(s, dist, size, seed_index, 0);
  Dataset va = s.val_size > 0 ? sum_task_split(s, dist, s.val_size, seed_index, kValIndexBase) : Dataset{};
  Dataset te = sum_task_split(s, dist, s.test_size, seed_index, kTestIndexBase);
  TrainConfig tc = s.train;
  tc.seed = s.base.seed + static_cast<std::uint64_t>(seed_index);
  GnnConfig mc = s.model;
  mc.in_dim = s.base.d;
  SumTaskRun run;
  run.result = train(mc, tc, tr, va);
  run.test_acc = evaluate(mc, run.result.params, te, tc.loss).accuracy;
  run.train_acc = evaluate(mc, run.result.params, tr, tc.loss).accuracy;
  return run;
}

struct CurvePoint {
  std::string dist;
  int size = 0;
  double mean_acc = 0.0;
  double std_acc = 0.0;
  std::vector<double> accs;
  std::vector<double> train_accs;
  std::vector<double> final_ratio;  // aggregate norm ratio of the returned params
};

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

inline std::vector<CurvePoint> learning_curve(const SumTaskSetup& s, const std::vector<GraphDist>& dists,
                                              const std::vector<int>& sizes, int seeds, int jobs = 1) {
  require(seeds >= 1, "learning_curve: seeds must be >= 1");
  require(!sizes.empty() && std::is_sorted(sizes.begin(), sizes.end()) &&
              std::adjacent_find(sizes.begin(), sizes.end()) == sizes.end(),
          "learning_curve: sizes must be strictly ascending");
  require(sizes.front() >= 1, "learning_curve: sizes must be positive");
  struct Job {
    std::size_t point;
    int seed;
  };
  std::vector<CurvePoint> points;
  std::vector<Job> jobs_list;
  for (const auto& dist : dists)
    for (int size : sizes) {
      CurvePoint p;
      p.dist = dist.name();
      p.size = size;
      p.accs.assign(static_cast<std::size_t>(seeds), 0.0);
      p.train_accs.assign(static_cast<std::size_t>(seeds), 0.0);
      p.final_ratio.assign(static_cast<std::size_t>(seeds), 0.0);
      points.push_back(std::move(p));
      for (int sd = 0; sd < seeds; ++sd) jobs_list.push_back({points.size() - 1, sd});
    }
  GnnConfig mc = s.model;
  mc.in_dim = s.base.d;
  parallel_for(jobs_list.size(), jobs, [&](std::size_t j) {
    const Job& job = jobs_list[j];
    CurvePoint& p = points[job.point];
    SumTaskRun run = run_sum_task(s, dists[job.point / sizes.size()], p.size, job.seed);
    p.accs[static_cast<std::size_t>(job.seed)] = run.test_acc;
    p.train_accs[static_cast<std::size_t>(job.seed)] = run.train_acc;
    p.final_ratio[static_cast<std::size_t>(job.seed)] = norm_ratio(mc, run.result.params).aggregate;
  });
  for (auto& p : points) std::tie(p.mean_acc, p.std_acc) = mean_std(p.accs);
  return points;
}

// ---------------------------------------------------------------------------
// Stratified k-fold.

// Fold id per instance. Members of each class are shuffled and dealt
// round-robin, continuing the deal across classes so fold sizes differ by at
// most one. k == size runs plain leave-one-out.
inline std::vector<int> stratified_folds(const std::vector<int>& labels, int k, std::uint64_t seed) {
  require(k >= 2, "kfold: k must be >= 2");
  require(labels.size() >= static_cast<std::size_t>(k), "kfold: dataset smaller than k");
  Rng rng = Rng(seed).split("folds");
  std::vector<int> fold(labels.size());
  if (labels.size() == static_cast<std::size_t>(k)) {
    std::iota(fold.begin(), fold.end(), 0);
    for (std::size_t i = fold.size(); i > 1; --i) std::swap(fold[i - 1], fold[rng.below(i)]);
    return fold;
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::size_t deal = 0;
  for (auto& [cls, members] : by_class) {
    require(members.size() >= static_cast<std::size_t>(k),
            "kfold: class " + std::to_string(cls) + " has " + std::to_string(members.size()) +
                " members, fewer than k=" + std::to_string(k));
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
    for (std::size_t idx : members) fold[idx] = static_cast<int>(deal++ % static_cast<std::size_t>(k));
  }
  return fold;
}

struct KFoldResult {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> scores;  // seed-major, then fold
};

// fn(train, val, test, seed) -> test metric.
using FoldFn = std::function<double(const Dataset&, const Dataset&, const Dataset&, std::uint64_t)>;

// Within each training part, a stratified val_fraction is held out for early
// stopping (none when that rounds to zero).
inline KFoldResult kfold(const Dataset& ds, int k, int seeds, std::uint64_t base_seed, const FoldFn& fn,
                         double val_fraction = 0.1, int jobs = 1) {
  require(seeds >= 1, "kfold: seeds must be >= 1");
  require(val_fraction >= 0.0 && val_fraction < 1.0, "kfold: val_fraction must lie in [0, 1)");
  std::vector<int> labels;
  for (const auto& lg : ds) labels.push_back(lg.label);
  std::vector<std::vector<int>> folds;
  for (int s = 0; s < seeds; ++s) folds.push_back(stratified_folds(labels, k, base_seed + static_cast<std::uint64_t>(s)));
  KFoldResult res;
  res.scores.assign(static_cast<std::size_t>(seeds * k), 0.0);
  parallel_for(res.scores.size(), jobs, [&](std::size_t job) {
    const int s = static_cast<int>(job) / k, f = static_cast<int>(job) % k;
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(s);
    Dataset rest, test;
    for (std::size_t i = 0; i < ds.size(); ++i) (folds[s][i] == f ? test : rest).push_back(ds[i]);
    Dataset tr, va;
    const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(rest.size())));
    if (n_val == 0) {
      tr = std::move(rest);
    } else {
      // Stratified holdout: shuffle within class, take the first share of each.
      Rng rng = Rng(seed).split("val", static_cast<std::uint64_t>(f));
      std::map<int, std::vector<std::size_t>> by_class;
      for (std::size_t i = 0; i < rest.size(); ++i) by_class[rest[i].label].push_back(i);
      std::vector<bool> in_val(rest.size(), false);
      for (auto& [_, members] : by_class) {
        for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
        const auto take = static_cast<std::size_t>(
            std::round(val_fraction * static_cast<double>(members.size())));
        for (std::size_t i = 0; i < std::min(take, members.size()); ++i) in_val[members[i]] = true;
      }
      for (std::size_t i = 0; i < rest.size(); ++i) (in_val[i] ? va : tr).push_back(std::move(rest[i]));
    }
    res.scores[job] = fn(tr, va, test, seed);
  });
  std::tie(res.mean, res.std) = mean_std(res.scores);
  return res;
}

inline KFoldResult kfold(const Dataset& ds, int k, int seeds, const GnnConfig& mcfg, const TrainConfig& tcfg,
                         double val_fraction = 0.1, int jobs = 1) {
  FoldFn fn = [&](const Dataset& tr, const Dataset& va, const Dataset& te, std::uint64_t seed) {
    TrainConfig tc = tcfg;
    tc.seed = seed;
    TrainResult r = train(mcfg, tc, tr, va);
    return evaluate(mcfg, r.params, te, tc.loss).accuracy;
  };
  return kfold(ds, k, seeds, tcfg.seed, fn, val_fraction, jobs);
}

}  // namespace structfit
