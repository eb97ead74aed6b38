#include <gtest/gtest.h>

#include <cstring>

#include "structfit/autodiff.hpp"
#include "structfit/generators.hpp"
#include "structfit/models.hpp"

using namespace structfit;
using ad::Tape;
using ad::Var;

namespace {

ad::EdgeIndex edge_index(const Topology& g) {
  ad::EdgeIndex e;
  e.num_nodes = g.n();
  e.dst_offsets.push_back(0);
  for (int i = 0; i < g.n(); ++i) {
    for (int j : g.neighbors(i)) {
      e.src.push_back(j);
      e.dst.push_back(i);
    }
    e.dst_offsets.push_back(static_cast<int>(e.src.size()));
  }
  return e;
}

Graph random_graph(Rng& rng, int n, int d, double p, bool edge_feats) {
  Topology t = gen_gnp(n, p, rng);
  Matrix x = sample_features(n, d, rng);
  if (!edge_feats) return Graph(t, x);
  std::vector<double> ef;
  for (std::size_t k = 0; k < t.num_edges(); ++k) ef.push_back(rng.normal());
  return Graph(t, x, ef);
}

}  // namespace

TEST(Primitives, ReluAllNegative) {
  Tape t;
  Var a = t.parameter(Matrix::Constant(2, 3, -1.5));
  Var r = ad::relu(a);
  EXPECT_TRUE(r.value().isZero());
  t.backward(ad::sum_squares(ad::row_sum(r)));
  EXPECT_TRUE(t.grad(a).isZero());
}

TEST(Primitives, HalfSquaredNormGradient) {
  Tape t;
  Matrix w(2, 2);
  w << 1, -2, 3.5, 0.25;
  Var W = t.parameter(w);
  t.backward(ad::scale(ad::sum_squares(W), 0.5));
  EXPECT_TRUE(t.grad(W).isApprox(w, 1e-15));
}

TEST(Primitives, LossMustBeScalar) {
  Tape t;
  Var a = t.parameter(Matrix::Ones(2, 1));
  EXPECT_THROW(t.backward(a), ConfigError);
}

TEST(Primitives, ShapeMismatchThrows) {
  Tape t;
  Var a = t.parameter(Matrix::Ones(2, 3));
  Var b = t.parameter(Matrix::Ones(2, 3));
  EXPECT_THROW(ad::matmul(a, b), ConfigError);
  EXPECT_THROW(ad::add(a, t.constant(Matrix::Ones(3, 3))), ConfigError);
}

TEST(Primitives, NeighborSumOnRegularGraph) {
  Rng rng(1);
  Topology g = gen_regular(12, 4, rng);
  auto e = edge_index(g);
  Tape t;
  Matrix c = Matrix::Constant(12, 3, 0.7);
  Var out = ad::neighbor_gather_sum(t.constant(c), e);
  EXPECT_TRUE(out.value().isApprox(Matrix::Constant(12, 3, 4 * 0.7), 1e-14));
}

TEST(Primitives, SoftmaxSingleNeighborIsOne) {
  Topology g(3, {{0, 1}});
  auto e = edge_index(g);
  Tape t;
  Var logits = t.parameter((Matrix(2, 1) << 17.0, -40.0).finished());
  Var a = ad::masked_softmax(logits, e);
  EXPECT_DOUBLE_EQ(a.value()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(a.value()(1, 0), 1.0);
}

TEST(Primitives, SoftmaxRowsSumToOneAndIsolatedContributeNothing) {
  Rng rng(5);
  Topology g = gen_gnp(15, 0.3, rng);
  Topology with_isolated(16, std::vector<Edge>(g.edges().begin(), g.edges().end()));
  auto e = edge_index(with_isolated);
  Tape t;
  Matrix l(static_cast<Eigen::Index>(e.size()), 1);
  for (Eigen::Index k = 0; k < l.rows(); ++k) l(k, 0) = 5.0 * rng.normal();
  Var a = ad::masked_softmax(t.parameter(l), e);
  for (int i = 0; i < e.num_nodes; ++i) {
    double s = 0.0;
    for (int k = e.dst_offsets[i]; k < e.dst_offsets[i + 1]; ++k) s += a.value()(k, 0);
    if (e.dst_offsets[i + 1] > e.dst_offsets[i]) {
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
  Var msgs = ad::scale_rows(t.constant(Matrix::Ones(l.rows(), 2)), a);
  Var out = ad::scatter_sum(msgs, e);
  EXPECT_TRUE(out.value().row(15).isZero());
  EXPECT_TRUE(out.value().allFinite());
}

TEST(Primitives, LossValues) {
  Tape t;
  Var s = t.constant((Matrix(2, 1) << 0.0, 2.0).finished());
  EXPECT_NEAR(ad::logistic_loss(s, {1, -1}).scalar(), 0.5 * (std::log(2.0) + std::log1p(std::exp(2.0))), 1e-14);
  EXPECT_NEAR(ad::exp_loss(s, {1, -1}).scalar(), 0.5 * (1.0 + std::exp(2.0)), 1e-14);
  Var logits = t.constant((Matrix(1, 3) << 1.0, 2.0, 3.0).finished());
  const double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  EXPECT_NEAR(ad::softmax_xent(logits, {0}).scalar(), lse - 1.0, 1e-14);
  // Large margins stay finite.
  Var big = t.constant((Matrix(1, 1) << 800.0).finished());
  EXPECT_TRUE(std::isfinite(ad::logistic_loss(big, {-1}).scalar()));
}

TEST(Backward, LinearGnnExpLossMatchesHandDerivation) {
  Rng rng(11);
  Graph g(gen_ba(9, 2, rng), sample_features(9, 3, rng));
  LinearGnnParams lp{Vector::Random(3), Vector::Random(3)};
  const double y = -1.0;
  GnnConfig cfg = linear_gnn_config(3);
  Tape t;
  ParamVars vars = bind_params(t, to_model_params(lp));
  GraphBatch b = make_batch(g, false);
  Var loss = ad::exp_loss(forward(cfg, vars, b), {y});
  t.backward(loss);
  const double f = forward_linear(lp, g);
  const double coef = -y * std::exp(-y * f);
  Vector g1 = coef * pooled_sum(g), g2 = coef * degree_weighted_sum(g);
  EXPECT_TRUE(t.grad(vars.at("l0.W1")).row(0).transpose().isApprox(g1, 1e-12));
  EXPECT_TRUE(t.grad(vars.at("l0.W2")).row(0).transpose().isApprox(g2, 1e-12));
}

TEST(Backward, DeterministicAcrossIdenticalTapes) {
  Rng rng(3);
  Graph g = random_graph(rng, 8, 4, 0.5, true);
  GnnConfig cfg;
  cfg.arch = Arch::gatv2;
  cfg.in_dim = 4;
  cfg.hidden = 6;
  cfg.layers = 2;
  cfg.edge_features = true;
  ModelParams p = init_params(cfg, 7);
  GraphBatch b = make_batch(g, true);
  std::vector<Matrix> grads[2];
  for (auto& out : grads) {
    Tape t;
    ParamVars vars = bind_params(t, p);
    t.backward(ad::logistic_loss(forward(cfg, vars, b), {1.0}));
    for (const auto& [name, v] : vars) out.push_back(t.grad(v));
  }
  for (std::size_t k = 0; k < grads[0].size(); ++k)
    EXPECT_EQ(0, std::memcmp(grads[0][k].data(), grads[1][k].data(), sizeof(double) * grads[0][k].size()));
}

TEST(GradCheck, LinearModelIsExact) {
  Rng rng(2);
  Graph g(gen_gnp(7, 0.5, rng), sample_features(7, 3, rng));
  GnnConfig cfg = linear_gnn_config(3);
  GraphBatch b = make_batch(g, false);
  ModelParams p = init_params(cfg, 1);
  std::vector<std::string> names;
  std::vector<Matrix> init;
  for (const auto& [n, m] : p.tensors) {
    names.push_back(n);
    init.push_back(m);
  }
  auto f = [&](Tape&, std::span<const Var> ps) {
    ParamVars vars;
    for (std::size_t k = 0; k < names.size(); ++k) vars.emplace(names[k], ps[k]);
    return ad::row_sum(forward(cfg, vars, b));
  };
  auto rep = ad::grad_check(f, init);
  EXPECT_LE(rep.max_rel_error, 1e-8);
  EXPECT_EQ(rep.checked, 6);
}

TEST(GradCheck, KinkCoordinateIsExcluded) {
  // relu(w) at w = 0 exactly: both one-sided perturbations flip the sign pattern.
  auto f = [](Tape& t, std::span<const Var> ps) {
    return ad::matmul(ad::relu(ps[0]), t.constant(Matrix::Ones(3, 1)));
  };
  Matrix w(1, 3);
  w << 0.0, 1.0, -1.0;
  auto rep = ad::grad_check(f, {w});
  EXPECT_EQ(rep.skipped_kinks, 1);
  EXPECT_EQ(rep.checked, 2);
  EXPECT_TRUE(rep.passed);
}

TEST(GradCheck, NonFiniteLossThrows) {
  auto f = [](Tape&, std::span<const Var> ps) {
    // exp(1000 w) overflows once w is nudged upwards.
    return ad::exp_loss(ad::scale(ps[0], 1000.0), {-1.0});
  };
  EXPECT_THROW(ad::grad_check(f, {Matrix::Constant(1, 1, 0.70978)}), NumericalError);
}

TEST(GradCheck, Gatv2SmallGraph) {
  Rng rng(17);
  Graph g = random_graph(rng, 5, 4, 0.6, false);
  GnnConfig cfg;
  cfg.arch = Arch::gatv2;
  cfg.in_dim = 4;
  cfg.hidden = 4;
  GraphBatch b = make_batch(g, false);
  ModelParams p = init_params(cfg, 3);
  std::vector<std::string> names;
  std::vector<Matrix> init;
  for (const auto& [n, m] : p.tensors) {
    names.push_back(n);
    init.push_back(m);
  }
  auto f = [&](Tape&, std::span<const Var> ps) {
    ParamVars vars;
    for (std::size_t k = 0; k < names.size(); ++k) vars.emplace(names[k], ps[k]);
    return ad::logistic_loss(forward(cfg, vars, b), {1.0});
  };
  auto rep = ad::grad_check(f, init);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
  EXPECT_GT(rep.checked, 0);
}

class ArchGradCheck : public ::testing::TestWithParam<std::tuple<Arch, bool>> {};

TEST_P(ArchGradCheck, TwentySeeds) {
  auto [arch, ef] = GetParam();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = Rng(1000 + seed).split("graphs");
    std::vector<Graph> gs;
    for (int k = 0; k < 3; ++k) gs.push_back(random_graph(rng, 4 + k, 3, 0.5, ef));
    std::vector<const Graph*> ptrs;
    for (const auto& g : gs) ptrs.push_back(&g);
    GnnConfig cfg;
    cfg.arch = arch;
    cfg.in_dim = 3;
    cfg.hidden = 5;
    cfg.layers = 2;
    cfg.edge_features = ef;
    GraphBatch b = make_batch(ptrs, ef);
    ModelParams p = init_params(cfg, seed);
    if (arch == Arch::gin) p.at("l0.eps")(0, 0) = 0.3;
    std::vector<std::string> names;
    std::vector<Matrix> init;
    for (const auto& [n, m] : p.tensors) {
      names.push_back(n);
      init.push_back(m);
    }
    auto f = [&](Tape&, std::span<const Var> ps) {
      ParamVars vars;
      for (std::size_t k = 0; k < names.size(); ++k) vars.emplace(names[k], ps[k]);
      return ad::logistic_loss(forward(cfg, vars, b), {1.0, -1.0, 1.0});
    };
    ad::GradCheckOptions opt;
    opt.seed = seed;
    auto rep = ad::grad_check(f, init, opt);
    EXPECT_TRUE(rep.passed) << to_string(arch) << " ef=" << ef << " seed=" << seed << " err=" << rep.max_rel_error;
    EXPECT_GT(rep.checked, 0);
  }
}

INSTANTIATE_TEST_SUITE_P(AllArchs, ArchGradCheck,
                         ::testing::Combine(::testing::ValuesIn(kAllArchs), ::testing::Bool()),
                         [](const auto& info) {
                           return to_string(std::get<0>(info.param)) +
                                  (std::get<1>(info.param) ? "_edge" : "_plain");
                         });
