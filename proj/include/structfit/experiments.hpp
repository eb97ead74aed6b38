#pragma once

// Experiment protocols shared by the command-line tool and the acceptance
// suite: weight alignment on regular data, extrapolation across degrees, the
// sufficient-condition ratios, the star failure, the empty-vs-graph gap and
// the R-COV benchmark.

#include <string>
#include <vector>

#include "structfit/cov_transform.hpp"
#include "structfit/generators.hpp"
#include "structfit/maxmargin.hpp"
#include "structfit/models.hpp"
#include "structfit/trainer.hpp"

namespace structfit {

// Plain full-batch GD with exponential loss from a near-origin start, step
// 1/lambda_max of the input covariance.
inline TrainConfig linear_gd_config(const Matrix& z, int epochs, double init_scale, int eval_every,
                                    std::uint64_t seed) {
  TrainConfig t;
  t.optimizer = Optimizer::gd;
  t.loss = LossKind::exponential;
  t.batch = 0;
  t.lr = linear_gd_step(z);
  t.epochs = epochs;
  t.init_scale = init_scale;
  t.eval_every = eval_every;
  t.patience = std::max(1, epochs + 1);
  t.seed = seed;
  return t;
}

// ---------------------------------------------------------------------------

struct AlignmentSetup {
  int r = 5;
  int m = 200;
  int n = 20;
  int d = 16;
  std::uint64_t seed = 0;
  int epochs = 50000;
  double init_scale = 1e-4;
  int eval_every = 500;
};

struct AlignmentOutcome {
  TrainLog log;
  double final_residual = 0.0;
  double final_ratio = 0.0;  // ||w2|| / ||w1||
  double qp_residual = 0.0;
  double qp_kkt = 0.0;
};

inline Dataset regular_dataset(int r, int m, int n, int d, std::uint64_t seed) {
  DatasetSpec s;
  s.m = m;
  s.n = n;
  s.d = d;
  s.dist = GraphDist::regular(r);
  s.seed = seed;
  return make_sum_dataset(s);
}

inline AlignmentOutcome alignment_experiment(const AlignmentSetup& a) {
  Dataset ds = regular_dataset(a.r, a.m, a.n, a.d, a.seed);
  TrainConfig t = linear_gd_config(linear_inputs(ds), a.epochs, a.init_scale, a.eval_every, a.seed);
  t.regular_degree = a.r;
  TrainResult res = train_linear(t, ds, {});
  if (res.log.diverged) throw NumericalError("alignment run diverged at r=" + std::to_string(a.r));
  AlignmentOutcome out;
  const auto& last = res.log.records.back();
  out.final_residual = last.align_resid;
  out.final_ratio = last.norm_ratio.front();
  MarginSolution sol = solve_qp(build_problem(ds), QpOptions{.seed = a.seed});
  out.qp_residual = alignment_check(sol, a.r);
  out.qp_kkt = sol.kkt_residual;
  out.log = std::move(res.log);
  return out;
}

// ---------------------------------------------------------------------------
// Extrapolation from r-regular training graphs. Test sets place the features
// of the first `test_size` training instances on fresh topologies, so every
// test set shares its node features with the others and with training.

struct ExtrapolationSetup {
  int r = 5;
  int m = 200;
  int n = 20;
  int d = 16;
  std::uint64_t seed = 0;
  int test_size = 100;
  int epochs = 50000;
  double init_scale = 1e-4;
};

struct ExtrapolationModel {
  Dataset train;
  Vector oracle_w1;            // QP root weights; the oracle predictor is (w1, r w1)
  LinearGnnParams gd;          // GD-trained weights
  MarginSolution qp;
};

inline ExtrapolationModel fit_extrapolation_model(const ExtrapolationSetup& s) {
  require(s.test_size >= 1 && s.test_size <= s.m, "test_size must lie in [1, m]");
  ExtrapolationModel em;
  em.train = regular_dataset(s.r, s.m, s.n, s.d, s.seed);
  em.qp = solve_qp(build_problem(em.train), QpOptions{.seed = s.seed});
  em.oracle_w1 = em.qp.w1();
  TrainConfig t = linear_gd_config(linear_inputs(em.train), s.epochs, s.init_scale, s.epochs, s.seed);
  TrainResult res = train_linear(t, em.train, {});
  if (res.log.diverged) throw NumericalError("extrapolation training diverged");
  em.gd = to_linear_params(res.params);
  return em;
}

inline constexpr std::uint64_t kExtrapTopologyBase = 3ULL << 40;

// Training features of instances [0, count) on topologies drawn from `dist`.
inline Dataset shared_feature_set(const ExtrapolationModel& em, const GraphDist& dist, int count,
                                  std::uint64_t seed) {
  Rng root(seed);
  Dataset out;
  const std::size_t m = em.train.size();
  for (int i = 0; i < count; ++i) {
    const auto& src = em.train[static_cast<std::size_t>(i) % m];
    Topology t = sample_topology(root, dist, kExtrapTopologyBase + static_cast<std::uint64_t>(i), src.graph.n());
    out.push_back({Graph(std::move(t), src.graph.features()), src.label});
  }
  return out;
}

inline double linear_accuracy(const LinearGnnParams& p, const Dataset& ds) {
  std::size_t hits = 0;
  for (const auto& lg : ds) hits += (forward_linear(p, lg.graph) > 0.0 ? 1 : -1) == lg.label;
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

inline LinearGnnParams aligned_oracle(const ExtrapolationModel& em, int r) {
  return {em.oracle_w1, static_cast<double>(r) * em.oracle_w1};
}

struct ExtrapolationRow {
  std::string dist;
  double oracle_acc = 0.0;
  double gd_acc = 0.0;
};

inline std::vector<ExtrapolationRow> extrapolation_experiment(const ExtrapolationSetup& s,
                                                              const std::vector<GraphDist>& dists,
                                                              const ExtrapolationModel* fitted = nullptr) {
  ExtrapolationModel local;
  if (!fitted) {
    local = fit_extrapolation_model(s);
    fitted = &local;
  }
  std::vector<ExtrapolationRow> rows;
  const auto oracle = aligned_oracle(*fitted, s.r);
  for (const auto& dist : dists) {
    Dataset test = shared_feature_set(*fitted, dist, s.test_size, s.seed);
    rows.push_back({dist.name(), linear_accuracy(oracle, test), linear_accuracy(fitted->gd, test)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Sufficient-condition ratios of the aligned oracle on non-regular graphs.

struct RatioRow {
  std::string dist;
  int index = 0;
  double min_ratio = 0.0;
  int r_prime_star = 0;
  bool correct = false;
};

inline std::vector<RatioRow> ratio_experiment(const ExtrapolationSetup& s, const std::vector<GraphDist>& dists,
                                              int per_dist, const ExtrapolationModel* fitted = nullptr,
                                              int jobs = 1) {
  ExtrapolationModel local;
  if (!fitted) {
    local = fit_extrapolation_model(s);
    fitted = &local;
  }
  const auto oracle = aligned_oracle(*fitted, s.r);
  std::vector<RatioRow> rows;
  for (const auto& dist : dists) {
    Dataset test = shared_feature_set(*fitted, dist, per_dist, s.seed);
    std::vector<RatioRow> part(test.size());
    parallel_for(test.size(), jobs, [&](std::size_t i) {
      auto c = sufficient_condition(fitted->oracle_w1, s.r, test[i].graph);
      part[i] = {dist.name(), static_cast<int>(i), c.min_ratio, c.r_prime_star,
                 (forward_linear(oracle, test[i].graph) > 0.0 ? 1 : -1) == test[i].label};
    });
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Star failure: scalar root weight from the QP on r-regular scalar data.

struct StarFailureSetup {
  int n = 10000;
  int r = 10;
  long trials = 10000;
  int train_m = 200;
  int train_n = 20;
  std::uint64_t seed = 0;
};

struct StarFailureOutcome {
  double w1 = 0.0;
  double w_star = 0.0;
  StarFailureStats stats;
};

inline StarFailureOutcome star_failure_experiment(const StarFailureSetup& s, int jobs = 1) {
  DatasetSpec spec;
  spec.m = s.train_m;
  spec.n = s.train_n;
  spec.d = 1;
  spec.dist = GraphDist::regular(s.r);
  spec.seed = s.seed;
  Dataset ds = make_sum_dataset(spec);
  MarginSolution sol = solve_qp(build_problem(ds), QpOptions{.seed = s.seed});
  StarFailureOutcome out;
  out.w1 = sol.w1()(0);
  out.w_star = sum_task_teacher(Rng(s.seed), 1).w_star(0);
  out.stats = star_failure_stats(s.n, s.r, out.w1, out.w_star, s.trials, Rng(s.seed).split("trial"), jobs);
  return out;
}

// ---------------------------------------------------------------------------
// Graph vs edge-stripped training on the Sum task.

struct OverfitRow {
  int seed = 0;
  double acc_graph = 0.0;
  double acc_empty = 0.0;
  double ratio_graph = 0.0;
};

inline std::vector<OverfitRow> overfit_experiment(const SumTaskSetup& s, const GraphDist& dist, int size, int seeds,
                                                  int jobs = 1) {
  std::vector<OverfitRow> rows(static_cast<std::size_t>(seeds));
  GnnConfig mc = s.model;
  mc.in_dim = s.base.d;
  parallel_for(2 * rows.size(), jobs, [&](std::size_t j) {
    const int sd = static_cast<int>(j / 2);
    const bool empty = j % 2 == 1;
    SumTaskRun run = run_sum_task(s, empty ? GraphDist::empty() : dist, size, sd);
    if (run.result.log.diverged) throw NumericalError("training diverged (seed " + std::to_string(sd) + ")");
    auto& row = rows[static_cast<std::size_t>(sd)];
    row.seed = sd;
    if (empty) {
      row.acc_empty = run.test_acc;
    } else {
      row.acc_graph = run.test_acc;
      row.ratio_graph = norm_ratio(mc, run.result.params).aggregate;
    }
  });
  return rows;
}

// ---------------------------------------------------------------------------
// k-fold accuracy on original, R-COV transformed and edge-stripped graphs.
// All three feed the model edge features (1 on original edges).

struct BenchRow {
  std::string setting;
  double mean = 0.0;
  double std = 0.0;
};

inline Dataset tag_original(const Dataset& ds) {
  RcovConfig c;
  c.target_fraction = 1.0;
  return transformed(ds, reduce_cov(ds, c));
}

inline Dataset strip_edges(const Dataset& ds) {
  Dataset out;
  for (const auto& lg : ds) out.push_back({lg.graph.without_edges().with_edge_features({}), lg.label});
  return out;
}

inline std::vector<BenchRow> bench_rcov(const Dataset& ds, const std::vector<double>& fractions, int folds, int seeds,
                                        const GnnConfig& model, const TrainConfig& train_cfg, int jobs = 1) {
  GnnConfig mc = model;
  mc.edge_features = true;
  std::vector<std::pair<std::string, Dataset>> settings;
  settings.emplace_back("original", tag_original(ds));
  for (double f : fractions) {
    RcovConfig c;
    c.target_fraction = f;
    settings.emplace_back("rcov_" + format_number(f), transformed(ds, reduce_cov(ds, c, jobs)));
  }
  settings.emplace_back("empty", strip_edges(ds));
  std::vector<BenchRow> rows;
  for (const auto& [name, data] : settings) {
    KFoldResult r = kfold(data, folds, seeds, mc, train_cfg, 0.1, jobs);
    rows.push_back({name, r.mean, r.std});
  }
  return rows;
}

}  // namespace structfit
