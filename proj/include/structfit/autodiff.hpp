#pragma once

// Reverse-mode differentiation over dense float64 matrices.
//
// A Tape owns every intermediate value. Ops append a node holding the value
// and a closure that pushes the node's gradient into its inputs; backward()
// walks the tape in reverse creation order, which is a valid topological
// order since inputs always precede outputs. Only the primitives needed by
// the message-passing models and their losses are provided.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "structfit/error.hpp"
#include "structfit/rng.hpp"

namespace structfit::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  [[nodiscard]] const Matrix& value() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] double scalar() const { return value()(0, 0); }
};

// Directed message structure of a (batched) graph. Entry k sends from src[k]
// to dst[k]; entries are grouped by dst and dst_offsets delimits each group.
// Ops that take an EdgeIndex keep a reference to it: it must outlive the tape.
struct EdgeIndex {
  int num_nodes = 0;
  std::vector<int> src;
  std::vector<int> dst;
  std::vector<int> dst_offsets;  // size num_nodes + 1

  [[nodiscard]] std::size_t size() const { return src.size(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

  Var parameter(Matrix value) {
    Var v = push(std::move(value), true, nullptr);
    params_.push_back(v.id);
    return v;
  }

  [[nodiscard]] const Matrix& value(int id) const { return nodes_[id].value; }
  [[nodiscard]] bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] const std::vector<int>& parameters() const { return params_; }

  // Gradient of the last backward() target; zero for nodes it does not reach.
  [[nodiscard]] Matrix grad(Var v) const {
    const auto& node = nodes_[v.id];
    if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
    return node.grad;
  }

  Matrix& grad_ref(int id) {
    auto& node = nodes_[id];
    if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
    return node.grad;
  }

  void backward(Var loss) {
    require(loss.tape == this, "loss belongs to another tape");
    const auto& lv = nodes_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1)
      throw ConfigError("backward: loss must be scalar, got " + std::to_string(lv.rows()) + "x" +
                        std::to_string(lv.cols()));
    for (auto& node : nodes_) node.grad.resize(0, 0);
    grad_ref(loss.id)(0, 0) = 1.0;
    for (int id = loss.id; id >= 0; --id) {
      auto& node = nodes_[id];
      if (!node.requires_grad || !node.backward || node.grad.size() == 0) continue;
      node.backward(*this, id);
    }
  }

  Var push(Matrix value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back({std::move(value), Matrix(), std::move(fn), requires_grad});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  // Sign pattern of every piecewise-linear input seen so far; two evaluations
  // with equal signatures lie on the same linear piece.
  // Off by default; grad_check switches it on.
  void track_kinks(bool on) { track_kinks_ = on; }

  void record_kinks(const Matrix& preact) {
    if (!track_kinks_) return;
    for (Eigen::Index k = 0; k < preact.size(); ++k) {
      kink_hash_ ^= preact.data()[k] > 0.0 ? 0x9E37u : 0x7F4Au;
      kink_hash_ *= 0x100000001B3ULL;
      min_abs_preact_ = std::min(min_abs_preact_, std::abs(preact.data()[k]));
    }
  }
  [[nodiscard]] std::uint64_t kink_signature() const { return kink_hash_; }
  [[nodiscard]] double min_abs_preactivation() const { return min_abs_preact_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<int> params_;
  std::uint64_t kink_hash_ = 0xCBF29CE484222325ULL;
  double min_abs_preact_ = std::numeric_limits<double>::infinity();
  bool track_kinks_ = false;
};

inline const Matrix& Var::value() const { return tape->value(id); }

namespace detail {

inline bool any_grad(std::initializer_list<Var> vs) {
  for (const auto& v : vs)
    if (v.tape->requires_grad(v.id)) return true;
  return false;
}

inline void accumulate(Tape& t, Var v, const Matrix& g) {
  if (t.requires_grad(v.id)) t.grad_ref(v.id) += g;
}

inline std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

inline void check_shape(bool ok, const char* op, const Matrix& a, const Matrix& b) {
  if (!ok) throw ConfigError(std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
}

// out.row(oi(k)) += in.row(ii(k)) for k < count. Walks column by column so
// both matrices are read contiguously in Eigen's column-major layout.
template <class O, class I>
void row_add(Matrix& out, const Matrix& in, std::size_t count, O oi, I ii) {
  for (Eigen::Index c = 0; c < in.cols(); ++c) {
    double* o = out.col(c).data();
    const double* x = in.col(c).data();
    for (std::size_t k = 0; k < count; ++k) o[oi(k)] += x[ii(k)];
  }
}

}  // namespace detail

// ---------------------------------------------------------------- linear algebra

inline Var matmul(Var a, Var b) {
  detail::check_shape(a.cols() == b.rows(), "matmul", a.value(), b.value());
  Tape& t = *a.tape;
  return t.push(a.value() * b.value(), detail::any_grad({a, b}), [a, b](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(a.id)) t.grad_ref(a.id).noalias() += g * b.value().transpose();
    if (t.requires_grad(b.id)) t.grad_ref(b.id).noalias() += a.value().transpose() * g;
  });
}

// a * b^T; node states are rows, weights are (out x in).
inline Var matmul_nt(Var a, Var b) {
  detail::check_shape(a.cols() == b.cols(), "matmul_nt", a.value(), b.value());
  Tape& t = *a.tape;
  return t.push(a.value() * b.value().transpose(), detail::any_grad({a, b}), [a, b](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(a.id)) t.grad_ref(a.id).noalias() += g * b.value();
    if (t.requires_grad(b.id)) t.grad_ref(b.id).noalias() += g.transpose() * a.value();
  });
}

// Elementwise sum; a 1 x c right operand is broadcast over the rows of a.
inline Var add(Var a, Var b) {
  const bool broadcast = b.rows() == 1 && a.rows() != 1 && a.cols() == b.cols();
  detail::check_shape(broadcast || (a.rows() == b.rows() && a.cols() == b.cols()), "add", a.value(), b.value());
  Tape& t = *a.tape;
  Matrix out = broadcast ? Matrix(a.value().rowwise() + b.value().row(0)) : Matrix(a.value() + b.value());
  return t.push(std::move(out), detail::any_grad({a, b}), [a, b, broadcast](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    detail::accumulate(t, a, g);
    if (t.requires_grad(b.id)) {
      if (broadcast)
        t.grad_ref(b.id) += g.colwise().sum();
      else
        t.grad_ref(b.id) += g;
    }
  });
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape;
  return t.push(a.value() * s, detail::any_grad({a}), [a, s](Tape& t, int self) {
    detail::accumulate(t, a, t.grad_ref(self) * s);
  });
}

// a scaled by the 1x1 value s.
inline Var scale_by(Var a, Var s) {
  require(s.rows() == 1 && s.cols() == 1, "scale_by: scalar expected");
  Tape& t = *a.tape;
  return t.push(a.value() * s.scalar(), detail::any_grad({a, s}), [a, s](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(a.id)) t.grad_ref(a.id) += g * s.scalar();
    if (t.requires_grad(s.id)) t.grad_ref(s.id)(0, 0) += g.cwiseProduct(a.value()).sum();
  });
}

// Elementwise product with a constant mask (dropout).
inline Var mul_const(Var a, Matrix mask) {
  detail::check_shape(a.rows() == mask.rows() && a.cols() == mask.cols(), "mul_const", a.value(), mask);
  Tape& t = *a.tape;
  Matrix out = a.value().cwiseProduct(mask);
  return t.push(std::move(out), detail::any_grad({a}), [a, mask = std::move(mask)](Tape& t, int self) {
    detail::accumulate(t, a, t.grad_ref(self).cwiseProduct(mask));
  });
}

inline Var concat(Var a, Var b) {
  detail::check_shape(a.rows() == b.rows(), "concat", a.value(), b.value());
  Tape& t = *a.tape;
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const auto ca = a.cols();
  return t.push(std::move(out), detail::any_grad({a, b}), [a, b, ca](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(a.id)) t.grad_ref(a.id) += g.leftCols(ca);
    if (t.requires_grad(b.id)) t.grad_ref(b.id) += g.rightCols(g.cols() - ca);
  });
}

// Rows of a followed by rows of b.
inline Var vstack(Var a, Var b) {
  detail::check_shape(a.cols() == b.cols(), "vstack", a.value(), b.value());
  Tape& t = *a.tape;
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a.value(), b.value();
  const auto ra = a.rows();
  return t.push(std::move(out), detail::any_grad({a, b}), [a, b, ra](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(a.id)) t.grad_ref(a.id) += g.topRows(ra);
    if (t.requires_grad(b.id)) t.grad_ref(b.id) += g.bottomRows(g.rows() - ra);
  });
}

// ---------------------------------------------------------------- activations

inline Var leaky_relu(Var a, double slope) {
  Tape& t = *a.tape;
  t.record_kinks(a.value());
  Matrix out = a.value().unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
  return t.push(std::move(out), detail::any_grad({a}), [a, slope](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    Matrix local = a.value().unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    detail::accumulate(t, a, g.cwiseProduct(local));
  });
}

inline Var relu(Var a) { return leaky_relu(a, 0.0); }

inline constexpr double kLeakySlope = 0.2;

// ---------------------------------------------------------------- reductions

// Sum over rows: r x c -> 1 x c.
inline Var row_sum(Var a) {
  Tape& t = *a.tape;
  return t.push(a.value().colwise().sum(), detail::any_grad({a}), [a](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(a.id)) t.grad_ref(a.id).rowwise() += g.row(0);
  });
}

// Rows of a summed into `segments` buckets: out[seg[i]] += a[i].
inline Var segment_sum(Var a, std::vector<int> seg, int segments) {
  require(static_cast<Eigen::Index>(seg.size()) == a.rows(), "segment_sum: index size mismatch");
  Tape& t = *a.tape;
  Matrix out = Matrix::Zero(segments, a.cols());
  detail::row_add(out, a.value(), seg.size(), [&](std::size_t i) { return seg[i]; }, [](std::size_t i) { return i; });
  return t.push(std::move(out), detail::any_grad({a}), [a, seg = std::move(seg)](Tape& t, int self) {
    if (!t.requires_grad(a.id)) return;
    const Matrix& g = t.grad_ref(self);
    Matrix& ga = t.grad_ref(a.id);
    detail::row_add(ga, g, seg.size(), [](std::size_t i) { return i; }, [&](std::size_t i) { return seg[i]; });
  });
}

inline Var sum_squares(Var a) {
  Tape& t = *a.tape;
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return t.push(std::move(out), detail::any_grad({a}), [a](Tape& t, int self) {
    detail::accumulate(t, a, 2.0 * t.grad_ref(self)(0, 0) * a.value());
  });
}

// ---------------------------------------------------------------- graph ops

// out[k] = a[idx[k]].
inline Var gather_rows(Var a, std::vector<int> idx) {
  Tape& t = *a.tape;
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(idx.size()), a.cols());
  detail::row_add(out, a.value(), idx.size(), [](std::size_t k) { return k; }, [&](std::size_t k) { return idx[k]; });
  return t.push(std::move(out), detail::any_grad({a}), [a, idx = std::move(idx)](Tape& t, int self) {
    if (!t.requires_grad(a.id)) return;
    const Matrix& g = t.grad_ref(self);
    Matrix& ga = t.grad_ref(a.id);
    detail::row_add(ga, g, idx.size(), [&](std::size_t k) { return idx[k]; }, [](std::size_t k) { return k; });
  });
}

// out[i] = sum_{k : dst[k] == i} a[k]; the message-to-node reduction.
inline Var scatter_sum(Var messages, const EdgeIndex& edges) {
  require(static_cast<std::size_t>(messages.rows()) == edges.size(), "scatter_sum: one row per edge expected");
  Tape& t = *messages.tape;
  Matrix out = Matrix::Zero(edges.num_nodes, messages.cols());
  detail::row_add(out, messages.value(), edges.size(), [&](std::size_t k) { return edges.dst[k]; },
                  [](std::size_t k) { return k; });
  return t.push(std::move(out), detail::any_grad({messages}), [messages, &edges](Tape& t, int self) {
    if (!t.requires_grad(messages.id)) return;
    const Matrix& g = t.grad_ref(self);
    Matrix& gm = t.grad_ref(messages.id);
    detail::row_add(gm, g, edges.size(), [](std::size_t k) { return k; }, [&](std::size_t k) { return edges.dst[k]; });
  });
}

// out[i] = sum_{j in N(i)} a[j]. For undirected structure the adjoint is the
// same operation.
inline Var neighbor_gather_sum(Var a, const EdgeIndex& edges) {
  require(a.rows() == edges.num_nodes, "neighbor_gather_sum: one row per node expected");
  Tape& t = *a.tape;
  Matrix out = Matrix::Zero(a.rows(), a.cols());
  detail::row_add(out, a.value(), edges.size(), [&](std::size_t k) { return edges.dst[k]; },
                  [&](std::size_t k) { return edges.src[k]; });
  return t.push(std::move(out), detail::any_grad({a}), [a, &edges](Tape& t, int self) {
    if (!t.requires_grad(a.id)) return;
    const Matrix& g = t.grad_ref(self);
    Matrix& ga = t.grad_ref(a.id);
    detail::row_add(ga, g, edges.size(), [&](std::size_t k) { return edges.src[k]; },
                    [&](std::size_t k) { return edges.dst[k]; });
  });
}

// Softmax of a column of edge logits within each destination group. Nodes
// without incoming entries simply own no weights, so they aggregate to zero.
inline Var masked_softmax(Var logits, const EdgeIndex& edges) {
  require(logits.cols() == 1 && static_cast<std::size_t>(logits.rows()) == edges.size(),
          "masked_softmax: expects one logit per edge");
  Tape& t = *logits.tape;
  Matrix out(logits.rows(), 1);
  const Matrix& z = logits.value();
  for (int i = 0; i < edges.num_nodes; ++i) {
    const int lo = edges.dst_offsets[i], hi = edges.dst_offsets[i + 1];
    if (lo == hi) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = lo; k < hi; ++k) mx = std::max(mx, z(k, 0));
    double total = 0.0;
    for (int k = lo; k < hi; ++k) total += (out(k, 0) = std::exp(z(k, 0) - mx));
    for (int k = lo; k < hi; ++k) out(k, 0) /= total;
  }
  return t.push(std::move(out), detail::any_grad({logits}), [logits, &edges](Tape& t, int self) {
    if (!t.requires_grad(logits.id)) return;
    const Matrix& g = t.grad_ref(self);
    const Matrix& p = t.value(self);
    Matrix& gz = t.grad_ref(logits.id);
    for (int i = 0; i < edges.num_nodes; ++i) {
      const int lo = edges.dst_offsets[i], hi = edges.dst_offsets[i + 1];
      double dot = 0.0;
      for (int k = lo; k < hi; ++k) dot += g(k, 0) * p(k, 0);
      for (int k = lo; k < hi; ++k) gz(k, 0) += p(k, 0) * (g(k, 0) - dot);
    }
  });
}

// out[k] = a[k] * w[k] for a column w of row weights.
inline Var scale_rows(Var a, Var w) {
  detail::check_shape(w.cols() == 1 && w.rows() == a.rows(), "scale_rows", a.value(), w.value());
  Tape& t = *a.tape;
  Matrix out = a.value().array().colwise() * w.value().col(0).array();
  return t.push(std::move(out), detail::any_grad({a, w}), [a, w](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(a.id)) t.grad_ref(a.id).array() += g.array().colwise() * w.value().col(0).array();
    if (t.requires_grad(w.id)) t.grad_ref(w.id).col(0) += g.cwiseProduct(a.value()).rowwise().sum();
  });
}

inline Var scale_rows_const(Var a, Eigen::VectorXd w) {
  require(w.size() == a.rows(), "scale_rows_const: one weight per row expected");
  Tape& t = *a.tape;
  Matrix out = a.value().array().colwise() * w.array();
  return t.push(std::move(out), detail::any_grad({a}), [a, w = std::move(w)](Tape& t, int self) {
    if (t.requires_grad(a.id)) t.grad_ref(a.id).array() += t.grad_ref(self).array().colwise() * w.array();
  });
}

// Row-wise inner products: r x c, r x c -> r x 1.
inline Var row_dot(Var a, Var b) {
  detail::check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "row_dot", a.value(), b.value());
  Tape& t = *a.tape;
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return t.push(std::move(out), detail::any_grad({a, b}), [a, b](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(a.id)) t.grad_ref(a.id).array() += b.value().array().colwise() * g.col(0).array();
    if (t.requires_grad(b.id)) t.grad_ref(b.id).array() += a.value().array().colwise() * g.col(0).array();
  });
}

// ---------------------------------------------------------------- losses

// Mean of log(1 + exp(-y s)) over an m x 1 column of scores, y in {-1, +1}.
inline Var logistic_loss(Var scores, std::vector<double> y) {
  require(scores.cols() == 1 && static_cast<std::size_t>(scores.rows()) == y.size(), "logistic_loss: m x 1 scores");
  Tape& t = *scores.tape;
  const double m = static_cast<double>(y.size());
  double total = 0.0;
  for (std::size_t l = 0; l < y.size(); ++l) {
    const double u = -y[l] * scores.value()(static_cast<Eigen::Index>(l), 0);
    total += u > 0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
  }
  Matrix out(1, 1);
  out(0, 0) = total / m;
  return t.push(std::move(out), detail::any_grad({scores}), [scores, y = std::move(y), m](Tape& t, int self) {
    if (!t.requires_grad(scores.id)) return;
    const double g = t.grad_ref(self)(0, 0);
    Matrix& gs = t.grad_ref(scores.id);
    for (std::size_t l = 0; l < y.size(); ++l) {
      const double s = scores.value()(static_cast<Eigen::Index>(l), 0);
      const double sig = 1.0 / (1.0 + std::exp(y[l] * s));  // sigmoid(-y s)
      gs(static_cast<Eigen::Index>(l), 0) += g * (-y[l] * sig) / m;
    }
  });
}

// Mean of exp(-y s).
inline Var exp_loss(Var scores, std::vector<double> y) {
  require(scores.cols() == 1 && static_cast<std::size_t>(scores.rows()) == y.size(), "exp_loss: m x 1 scores");
  Tape& t = *scores.tape;
  const double m = static_cast<double>(y.size());
  double total = 0.0;
  for (std::size_t l = 0; l < y.size(); ++l) total += std::exp(-y[l] * scores.value()(static_cast<Eigen::Index>(l), 0));
  Matrix out(1, 1);
  out(0, 0) = total / m;
  return t.push(std::move(out), detail::any_grad({scores}), [scores, y = std::move(y), m](Tape& t, int self) {
    if (!t.requires_grad(scores.id)) return;
    const double g = t.grad_ref(self)(0, 0);
    Matrix& gs = t.grad_ref(scores.id);
    for (std::size_t l = 0; l < y.size(); ++l) {
      const double s = scores.value()(static_cast<Eigen::Index>(l), 0);
      gs(static_cast<Eigen::Index>(l), 0) += g * (-y[l] * std::exp(-y[l] * s)) / m;
    }
  });
}

// Mean cross-entropy of row-wise softmax(logits) against class indices.
inline Var softmax_xent(Var logits, std::vector<int> labels) {
  require(static_cast<std::size_t>(logits.rows()) == labels.size(), "softmax_xent: one row per label");
  Tape& t = *logits.tape;
  const Eigen::Index m = logits.rows(), c = logits.cols();
  Matrix probs(m, c);
  double total = 0.0;
  for (Eigen::Index l = 0; l < m; ++l) {
    require(labels[l] >= 0 && labels[l] < c, "softmax_xent: label out of range");
    const double mx = logits.value().row(l).maxCoeff();
    probs.row(l) = (logits.value().row(l).array() - mx).exp();
    const double z = probs.row(l).sum();
    probs.row(l) /= z;
    total += -(logits.value()(l, labels[l]) - mx - std::log(z));
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(m);
  return t.push(std::move(out), detail::any_grad({logits}),
                [logits, labels = std::move(labels), probs = std::move(probs)](Tape& t, int self) {
                  if (!t.requires_grad(logits.id)) return;
                  const double g = t.grad_ref(self)(0, 0) / static_cast<double>(probs.rows());
                  Matrix d = probs;
                  for (Eigen::Index l = 0; l < d.rows(); ++l) d(l, labels[l]) -= 1.0;
                  t.grad_ref(logits.id) += g * d;
                });
}

// ---------------------------------------------------------------- gradient check

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  int max_coords = 200;    // random sample when there are more coordinates
  // Denominator floor: entries smaller than this are compared absolutely, since
  // central differences carry ~1e-11 of rounding noise on O(1) losses.
  double abs_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  int checked = 0;
  int skipped_kinks = 0;
  bool passed = false;
};

using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

// Compares tape gradients with central differences. A coordinate whose +/-eps
// perturbation changes the sign pattern of any ReLU/LeakyReLU input sits on a
// kink and is excluded (counted in skipped_kinks).
inline GradCheckReport grad_check(const LossBuilder& f, const std::vector<Matrix>& params,
                                  const GradCheckOptions& opt = {}) {
  struct Eval {
    double loss;
    std::uint64_t kinks;
  };
  auto evaluate = [&](const std::vector<Matrix>& ps) {
    Tape tape;
    tape.track_kinks(true);
    std::vector<Var> vars;
    for (const auto& p : ps) vars.push_back(tape.parameter(p));
    Var loss = f(tape, vars);
    return Eval{loss.scalar(), tape.kink_signature()};
  };

  Tape tape;
  tape.track_kinks(true);
  std::vector<Var> vars;
  for (const auto& p : params) {
    require(p.allFinite(), "grad_check: parameters must be finite");
    vars.push_back(tape.parameter(p));
  }
  Var loss = f(tape, vars);
  tape.backward(loss);
  const std::uint64_t base_kinks = tape.kink_signature();

  std::vector<std::pair<int, Eigen::Index>> coords;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (Eigen::Index k = 0; k < params[p].size(); ++k) coords.emplace_back(static_cast<int>(p), k);
  Rng rng(opt.seed);
  if (static_cast<int>(coords.size()) > opt.max_coords) {
    for (std::size_t i = coords.size(); i > 1; --i) std::swap(coords[i - 1], coords[rng.below(i)]);
    coords.resize(static_cast<std::size_t>(opt.max_coords));
  }

  GradCheckReport report;
  std::vector<Matrix> work = params;
  for (auto [p, k] : coords) {
    const double analytic = tape.grad(vars[p]).data()[k];
    const double orig = work[p].data()[k];
    work[p].data()[k] = orig + opt.eps;
    Eval plus = evaluate(work);
    work[p].data()[k] = orig - opt.eps;
    Eval minus = evaluate(work);
    work[p].data()[k] = orig;
    if (!std::isfinite(plus.loss) || !std::isfinite(minus.loss))
      throw NumericalError("grad_check: non-finite loss at a perturbed point");
    if (plus.kinks != base_kinks || minus.kinks != base_kinks) {
      ++report.skipped_kinks;
      continue;
    }
    const double numeric = (plus.loss - minus.loss) / (2.0 * opt.eps);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.abs_floor});
    report.max_rel_error = std::max(report.max_rel_error, std::abs(analytic - numeric) / denom);
    ++report.checked;
  }
  report.passed = report.max_rel_error <= opt.tol;
  return report;
}

}  // namespace structfit::ad
