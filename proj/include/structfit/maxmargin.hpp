#pragma once

// Hard-margin problems over the linear GNN inputs z = [sum x, sum deg x] and
// checks of what their solutions imply for extrapolation.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "structfit/error.hpp"
#include "structfit/generators.hpp"
#include "structfit/graph.hpp"
#include "structfit/models.hpp"
#include "structfit/parallel.hpp"
#include "structfit/rng.hpp"
#include "structfit/trainer.hpp"

namespace structfit {

struct MarginProblem {
  Matrix z;  // m x 2d
  Vector y;  // +-1
  std::optional<int> r;

  [[nodiscard]] Eigen::Index m() const { return z.rows(); }
  [[nodiscard]] Eigen::Index d() const { return z.cols() / 2; }
};

struct MarginSolution {
  Vector w;      // [w1; w2]
  Vector alpha;  // dual values
  double margin = 0.0;
  double kkt_residual = 0.0;
  long sweeps = 0;

  [[nodiscard]] Vector w1() const { return w.head(w.size() / 2); }
  [[nodiscard]] Vector w2() const { return w.tail(w.size() / 2); }
};

inline void check_problem(const MarginProblem& p) {
  require(p.z.rows() >= 1, "margin problem needs at least one instance");
  require(p.z.rows() == p.y.size(), "margin problem: inputs and labels disagree");
  require(p.z.allFinite(), "margin problem: non-finite inputs");
  for (Eigen::Index l = 0; l < p.y.size(); ++l)
    require(p.y(l) == 1.0 || p.y(l) == -1.0, "margin problem: labels must be +1 or -1");
}

inline MarginProblem build_problem(const Dataset& ds) {
  require(!ds.empty(), "build_problem: empty dataset");
  MarginProblem p;
  p.z = linear_inputs(ds);
  p.y.resize(static_cast<Eigen::Index>(ds.size()));
  std::optional<int> common;
  bool all_regular = true;
  for (std::size_t l = 0; l < ds.size(); ++l) {
    const int label = ds[l].label;
    require(label == 1 || label == -1, "build_problem: labels must be +1 or -1, got " + std::to_string(label));
    p.y(static_cast<Eigen::Index>(l)) = label;
    auto r = regular_degree(ds[l].graph.topology());
    if (!r || (common && *common != *r)) all_regular = false;
    if (r && !common) common = r;
  }
  if (all_regular) p.r = common;
  return p;
}

// Largest violation of the four optimality conditions: alpha >= 0, primal
// feasibility, stationarity and complementary slackness.
inline double kkt_residual(const MarginProblem& p, const Vector& w, const Vector& alpha) {
  double res = std::max(0.0, -alpha.minCoeff());
  Vector yw = p.y.cwiseProduct(p.z * w);
  for (Eigen::Index l = 0; l < p.m(); ++l) {
    res = std::max(res, 1.0 - yw(l));
    res = std::max(res, std::abs(alpha(l) * (yw(l) - 1.0)));
  }
  const Vector stat = w - p.z.transpose() * alpha.cwiseProduct(p.y);
  return std::max(res, stat.cwiseAbs().maxCoeff());
}

struct QpOptions {
  double tol = 1e-8;
  long max_sweeps = 1000000;
  double dual_bound = 1e12;  // dual objective beyond this means non-separable
  std::uint64_t seed = 0;
};

// Dual coordinate ascent on max sum(alpha) - |sum alpha_l y_l z_l|^2 / 2,
// alpha >= 0, with a random permutation per sweep. w is rebuilt from alpha
// after the loop.
inline MarginSolution solve_qp(const MarginProblem& p, const QpOptions& opt = {}) {
  check_problem(p);
  const Eigen::Index m = p.m();
  Vector sq = p.z.rowwise().squaredNorm();
  for (Eigen::Index l = 0; l < m; ++l) require(sq(l) > 0.0, "solve_qp: zero input row " + std::to_string(l) + " cannot be separated");
  Vector alpha = Vector::Zero(m);
  Vector w = Vector::Zero(p.z.cols());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(opt.seed).split("qp");
  MarginSolution sol;
  for (long sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (Eigen::Index l : order) {
      const double margin = p.y(l) * p.z.row(l).dot(w);
      const double next = std::max(0.0, alpha(l) + (1.0 - margin) / sq(l));
      const double delta = next - alpha(l);
      if (delta != 0.0) {
        w += (delta * p.y(l)) * p.z.row(l).transpose();
        alpha(l) = next;
      }
    }
    sol.sweeps = sweep;
    const double dual = alpha.sum() - 0.5 * w.squaredNorm();
    if (!std::isfinite(dual) || dual > opt.dual_bound)
      throw NumericalError("solve_qp: dual objective exceeded " + std::to_string(opt.dual_bound) +
                           "; the problem is not separable");
    if (sweep % 10 == 0 || sweep == 1) {
      Vector wr = p.z.transpose() * alpha.cwiseProduct(p.y);
      if (kkt_residual(p, wr, alpha) <= opt.tol) break;
      w = wr;  // refresh against drift from incremental updates
    }
  }
  sol.alpha = alpha;
  sol.w = p.z.transpose() * alpha.cwiseProduct(p.y);
  sol.kkt_residual = kkt_residual(p, sol.w, alpha);
  if (sol.kkt_residual > opt.tol) {
    const double dual = alpha.sum() - 0.5 * sol.w.squaredNorm();
    if (dual > opt.dual_bound) throw NumericalError("solve_qp: the problem is not separable");
    throw NumericalError("solve_qp: no convergence within " + std::to_string(opt.max_sweeps) +
                         " sweeps (KKT residual " + std::to_string(sol.kkt_residual) + ")");
  }
  sol.margin = 1.0 / sol.w.norm();
  return sol;
}

// Enumerates candidate support sets S, solves y_l w.z_l = 1 on S with w in the
// span of S, keeps candidates with alpha >= 0 that are feasible everywhere,
// and returns the one of minimum norm.
inline MarginSolution brute_force_solve(const MarginProblem& p, double feas_tol = 1e-9) {
  check_problem(p);
  const Eigen::Index m = p.m();
  require(m <= 12, "brute_force_solve: at most 12 instances");
  std::optional<MarginSolution> best;
  for (unsigned mask = 1; mask < (1u << m); ++mask) {
    std::vector<Eigen::Index> s;
    for (Eigen::Index l = 0; l < m; ++l)
      if (mask & (1u << l)) s.push_back(l);
    const auto k = static_cast<Eigen::Index>(s.size());
    if (k > p.z.cols()) continue;  // more than 2d active rows cannot be independent
    Matrix a(k, p.z.cols());
    for (Eigen::Index i = 0; i < k; ++i) a.row(i) = p.y(s[i]) * p.z.row(s[i]);
    Matrix gram = a * a.transpose();
    Eigen::FullPivLU<Matrix> lu(gram);
    if (lu.rank() < k) continue;
    Vector beta = lu.solve(Vector::Ones(k));
    if (beta.minCoeff() < -feas_tol) continue;
    Vector w = a.transpose() * beta;
    if ((p.y.cwiseProduct(p.z * w).array() < 1.0 - feas_tol).any()) continue;
    if (!best || w.squaredNorm() < best->w.squaredNorm()) {
      MarginSolution sol;
      sol.w = w;
      sol.alpha = Vector::Zero(m);
      for (Eigen::Index i = 0; i < k; ++i) sol.alpha(s[i]) = std::max(0.0, beta(i));
      best = sol;
    }
  }
  if (!best) throw NumericalError("brute_force_solve: no feasible support set; the problem is not separable");
  best->kkt_residual = kkt_residual(p, best->w, best->alpha);
  best->margin = 1.0 / best->w.norm();
  return *best;
}

inline double alignment_check(const MarginSolution& sol, double r) {
  return alignment_residual(sol.w1(), sol.w2(), r);
}

inline nlohmann::json to_json(const MarginSolution& s) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"w1", vec(s.w1())},
          {"w2", vec(s.w2())},
          {"alpha", vec(s.alpha)},
          {"margin", s.margin},
          {"kkt_residual", s.kkt_residual}};
}

// ---------------------------------------------------------------------------
// Extrapolation of an aligned solution (w2 = r w1).

// |r w1 . sum (deg - r') x| / |w1 . x~ + r' r w1 . x~|
inline double extrapolation_ratio(const Vector& w1, int r, const Graph& g, int r_prime) {
  require(w1.size() == g.d(), "extrapolation_ratio: dimension mismatch");
  const double num = std::abs(static_cast<double>(r) * w1.dot(delta_sum(g, r_prime)));
  const double s = w1.dot(pooled_sum(g));
  const double den = std::abs(s + static_cast<double>(r_prime) * static_cast<double>(r) * s);
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

struct ConditionResult {
  double min_ratio = std::numeric_limits<double>::infinity();
  int r_prime_star = 0;
  bool satisfied = false;
  // The variant that picks r' by minimising the denominator alone.
  double denom_rule_ratio = std::numeric_limits<double>::infinity();
  int denom_rule_r_prime = 0;
};

inline ConditionResult sufficient_condition(const Vector& w1, int r, const Graph& g) {
  ConditionResult c;
  double best_den = std::numeric_limits<double>::infinity();
  const double s = w1.dot(pooled_sum(g));
  for (int rp = 0; rp <= g.n() - 1; ++rp) {
    const double ratio = extrapolation_ratio(w1, r, g, rp);
    if (ratio < c.min_ratio) {
      c.min_ratio = ratio;
      c.r_prime_star = rp;
    }
    const double den = std::abs(s * (1.0 + static_cast<double>(rp) * r));
    if (den < best_den) {
      best_den = den;
      c.denom_rule_r_prime = rp;
      c.denom_rule_ratio = ratio;
    }
  }
  c.satisfied = c.min_ratio <= 1.0;
  return c;
}

// ---------------------------------------------------------------------------
// Star-graph failure of a regular-trained predictor.

struct StarFailureStats {
  double rho_xw = 0.0;
  double rho_xteacher = 0.0;
  double error_rate = 0.0;
  long trials = 0;
};

inline double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// Scalar features on star(n) with the center at node 0. The predictor is the
// aligned model w1 x~ + r w1 sum deg x, the teacher is w_star x~. X is the
// center-node term r w1 (n-1) x_0 of the predictor score W.
inline StarFailureStats star_failure_stats(int n, int r, double w1, double w_star, long trials, const Rng& rng,
                                           int jobs = 1) {
  require(n >= 2, "star_failure_stats: n must be >= 2");
  require(trials >= 100, "star_failure_stats: at least 100 trials");
  require(w1 != 0.0 && w_star != 0.0, "star_failure_stats: weights must be nonzero");
  std::vector<double> x_term(static_cast<std::size_t>(trials)), score(x_term.size()), teacher(x_term.size());
  parallel_for(x_term.size(), jobs, [&](std::size_t t) {
    Rng local = rng.split("trial", t);
    const double center = local.normal();
    double leaves = 0.0;
    for (int i = 1; i < n; ++i) leaves += local.normal();
    const double pooled = center + leaves;
    const double deg_weighted = (n - 1) * center + leaves;
    x_term[t] = r * w1 * (n - 1) * center;
    score[t] = w1 * pooled + r * w1 * deg_weighted;
    teacher[t] = w_star * pooled;
  });
  StarFailureStats s;
  s.trials = trials;
  s.rho_xw = correlation(x_term, score);
  s.rho_xteacher = correlation(x_term, teacher);
  long wrong = 0;
  for (std::size_t t = 0; t < score.size(); ++t) wrong += (score[t] > 0.0) != (teacher[t] > 0.0);
  s.error_rate = static_cast<double>(wrong) / static_cast<double>(trials);
  return s;
}

}  // namespace structfit
