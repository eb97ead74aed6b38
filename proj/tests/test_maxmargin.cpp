#include <gtest/gtest.h>

#include "structfit/maxmargin.hpp"

using namespace structfit;

namespace {

Dataset sum_data(int m, int n, int d, GraphDist dist, std::uint64_t seed, std::uint64_t first = 0) {
  DatasetSpec s;
  s.m = m;
  s.n = n;
  s.d = d;
  s.dist = dist;
  s.seed = seed;
  return make_sum_dataset(s, first);
}

// Random problem labelled by a hidden direction, rows with tiny margin dropped.
MarginProblem random_problem(Rng& rng, int m, int dim) {
  Vector u(dim);
  for (int j = 0; j < dim; ++j) u(j) = rng.normal();
  MarginProblem p;
  p.z.resize(m, dim);
  p.y.resize(m);
  for (int l = 0; l < m;) {
    Vector z(dim);
    for (int j = 0; j < dim; ++j) z(j) = rng.normal();
    const double s = u.dot(z) / u.norm();
    if (std::abs(s) < 0.1) continue;
    p.z.row(l) = z.transpose();
    p.y(l) = s > 0 ? 1.0 : -1.0;
    ++l;
  }
  return p;
}

void expect_kkt(const MarginProblem& p, const MarginSolution& s, double tol) {
  EXPECT_GE(s.alpha.minCoeff(), 0.0);
  Vector yw = p.y.cwiseProduct(p.z * s.w);
  EXPECT_GE(yw.minCoeff(), 1.0 - tol);
  EXPECT_LE((s.w - p.z.transpose() * s.alpha.cwiseProduct(p.y)).cwiseAbs().maxCoeff(), tol);
  for (Eigen::Index l = 0; l < p.m(); ++l) EXPECT_LE(std::abs(s.alpha(l) * (yw(l) - 1.0)), tol);
}

}  // namespace

TEST(BuildProblem, RegularSecondBlockIsScaledFirst) {
  Dataset ds = sum_data(20, 12, 3, GraphDist::regular(4), 1);
  MarginProblem p = build_problem(ds);
  EXPECT_EQ(p.r, std::optional<int>(4));
  EXPECT_TRUE(p.z.rightCols(3).isApprox(4.0 * p.z.leftCols(3), 1e-13));
}

TEST(BuildProblem, EmptyGraphsHaveZeroSecondBlock) {
  MarginProblem p = build_problem(sum_data(10, 6, 2, GraphDist::empty(), 2));
  EXPECT_TRUE(p.z.rightCols(2).isZero());
  EXPECT_EQ(p.r, std::optional<int>(0));
}

TEST(BuildProblem, MixedGnpRowsMatchDoubleLoop) {
  Dataset ds = sum_data(15, 9, 3, GraphDist::gnp(0.4), 3);
  MarginProblem p = build_problem(ds);
  for (std::size_t l = 0; l < ds.size(); ++l) {
    const Graph& g = ds[l].graph;
    Vector sum = Vector::Zero(3), weighted = Vector::Zero(3);
    for (int i = 0; i < g.n(); ++i) {
      sum += g.features().row(i).transpose();
      for (int j = 0; j < g.n(); ++j)
        if (g.topology().has_edge(i, j)) weighted += g.features().row(i).transpose();
    }
    EXPECT_TRUE(p.z.row(l).head(3).transpose().isApprox(sum, 1e-13));
    EXPECT_TRUE(p.z.row(l).tail(3).transpose().isApprox(weighted, 1e-13));
    EXPECT_EQ(p.y(l), ds[l].label);
  }
  ds[0].label = 0;
  EXPECT_THROW(build_problem(ds), ConfigError);
}

TEST(SolveQp, OppositePair) {
  Vector u(4);
  u << 1.0, -2.0, 0.5, 3.0;
  MarginProblem p;
  p.z.resize(2, 4);
  p.z.row(0) = u.transpose();
  p.z.row(1) = -u.transpose();
  p.y = Vector::Ones(2);
  p.y(1) = -1.0;
  auto s = solve_qp(p);
  EXPECT_TRUE(s.w.isApprox(u / u.squaredNorm(), 1e-9));
  EXPECT_NEAR(s.margin, u.norm(), 1e-8);
  auto b = brute_force_solve(p);
  EXPECT_TRUE(b.w.isApprox(u / u.squaredNorm(), 1e-12));
  EXPECT_NEAR(b.margin, u.norm(), 1e-12);
}

TEST(SolveQp, DuplicatesDoNotMoveTheSolution) {
  Rng rng(4);
  MarginProblem p = random_problem(rng, 10, 4);
  MarginProblem dup = p;
  dup.z.conservativeResize(13, Eigen::NoChange);
  dup.y.conservativeResize(13);
  for (int k = 0; k < 3; ++k) {
    dup.z.row(10 + k) = p.z.row(k);
    dup.y(10 + k) = p.y(k);
  }
  EXPECT_LE((solve_qp(p).w - solve_qp(dup).w).norm(), 1e-6);
}

TEST(SolveQp, NonSeparableIsReported) {
  MarginProblem p;
  p.z = Matrix::Ones(2, 2);
  p.y = Vector::Ones(2);
  p.y(1) = -1.0;
  EXPECT_THROW(solve_qp(p), NumericalError);
  EXPECT_THROW(brute_force_solve(p), NumericalError);
  MarginProblem bad = p;
  bad.y(0) = 0.5;
  EXPECT_THROW(solve_qp(bad), ConfigError);
}

TEST(BruteForce, SingleInstance) {
  MarginProblem p;
  p.z.resize(1, 2);
  p.z << 3.0, 4.0;
  p.y = Vector::Constant(1, -1.0);
  auto s = brute_force_solve(p);
  EXPECT_TRUE(s.w.isApprox(-p.z.row(0).transpose() / 25.0, 1e-15));
  EXPECT_NEAR(s.margin, 5.0, 1e-12);
}

TEST(BruteForce, AgreesWithDualAscent) {
  Rng rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const int m = 2 + static_cast<int>(rng.below(7));
    MarginProblem p = random_problem(rng, m, 6);
    auto a = solve_qp(p), b = brute_force_solve(p);
    EXPECT_LE((a.w - b.w).cwiseAbs().maxCoeff(), 1e-6) << "trial " << trial;
    EXPECT_NEAR(a.margin, b.margin, 1e-6);
    expect_kkt(p, a, 1e-8);
    expect_kkt(p, b, 1e-8);
  }
}

TEST(Alignment, OracleSolutionsAreAlignedOnRegularData) {
  for (int r = 1; r <= 8; ++r)
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      MarginProblem p = build_problem(sum_data(30, 10, 4, GraphDist::regular(r), 100 * r + seed));
      ASSERT_EQ(p.r, std::optional<int>(r));
      QpOptions opt;
      auto s = solve_qp(p, opt);
      EXPECT_LE(alignment_check(s, r), 10 * opt.tol) << "r=" << r << " seed=" << seed;
    }
}

TEST(Alignment, HandSetWeights) {
  MarginSolution s;
  s.w.resize(6);
  s.w << 1.0, -2.0, 0.5, 3.0, -6.0, 1.5;
  EXPECT_EQ(alignment_check(s, 3), 0.0);
  s.w.tail(3).setZero();
  // max_j |r w1_j| / max_j |w1_j| = r
  EXPECT_DOUBLE_EQ(alignment_check(s, 3), 3.0);
}

TEST(Alignment, ZeroTopologicalWeightGivesUnitResidual) {
  Vector w1(2), w2 = Vector::Zero(2);
  w1 << 0.5, -1.0;
  // max |0 - r w1_j| / max |w1_j| = r, so the residual scaled by r is 1.
  EXPECT_DOUBLE_EQ(alignment_residual(w1, w2, 5.0) / 5.0, 1.0);
  EXPECT_DOUBLE_EQ(alignment_residual(w1, w2, 1.0), 1.0);
}

TEST(Ratio, RegularAndEmptyAreZero) {
  Rng rng(2);
  Vector w1 = Vector::Random(3);
  Graph reg(gen_regular(12, 4, rng), sample_features(12, 3, rng));
  EXPECT_EQ(extrapolation_ratio(w1, 5, reg, 4), 0.0);
  Graph empty(gen_empty(7), sample_features(7, 3, rng));
  EXPECT_EQ(extrapolation_ratio(w1, 5, empty, 0), 0.0);
  auto c = sufficient_condition(w1, 5, reg);
  EXPECT_TRUE(c.satisfied);
  EXPECT_EQ(c.min_ratio, 0.0);
  EXPECT_EQ(c.r_prime_star, 4);
  EXPECT_THROW(extrapolation_ratio(w1, 5, reg, 12), ConfigError);
}

TEST(Ratio, StarMatchesDirectEvaluation) {
  Rng rng(6);
  Matrix x = sample_features(20, 2, rng);
  Graph star(gen_star(20), x);
  Vector w1(2);
  w1 << 0.7, -0.3;
  const int r = 5;
  auto c = sufficient_condition(w1, r, star);
  // Raw sums: center has degree 19, leaves degree 1.
  double s = 0.0, dev = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double v = w1.dot(x.row(i).transpose());
    s += v;
    dev += ((i == 0 ? 19 : 1) - c.r_prime_star) * v;
  }
  const double direct = std::abs(r * dev) / std::abs(s * (1 + c.r_prime_star * r));
  EXPECT_NEAR(c.min_ratio, direct, 1e-12 * (1 + direct));
  EXPECT_TRUE(std::isfinite(c.min_ratio));
  for (int rp = 0; rp < 20; ++rp) EXPECT_GE(extrapolation_ratio(w1, r, star, rp), c.min_ratio);
  EXPECT_EQ(c.denom_rule_r_prime, 0);
}

TEST(Ratio, ZeroDenominatorIsInfinite) {
  Matrix x(2, 1);
  x << 1.0, -1.0;
  Graph g(Topology(2, {{0, 1}}), x);
  // pooled sum is 0 but the deviation term is not at r' = 0.
  Matrix x2(3, 1);
  x2 << 2.0, -1.0, -1.0;
  Graph star(gen_star(3), x2);
  EXPECT_TRUE(std::isinf(extrapolation_ratio(Vector::Ones(1), 2, star, 0)));
  EXPECT_EQ(extrapolation_ratio(Vector::Ones(1), 2, g, 1), 0.0);
}

TEST(Ratio, SatisfiedImpliesTeacherSign) {
  Rng rng(8);
  const int d = 4;
  Vector w_star(d);
  for (int j = 0; j < d; ++j) w_star(j) = rng.normal();
  const int r = 3;
  int satisfied = 0;
  for (int t = 0; t < 300; ++t) {
    Topology top = t % 3 == 0 ? gen_gnp(20, 0.3, rng) : t % 3 == 1 ? gen_ba(20, 2, rng) : gen_star(20);
    Graph g(top, sample_features(20, d, rng));
    auto c = sufficient_condition(w_star, r, g);
    const double f = w_star.dot(pooled_sum(g)) + r * w_star.dot(degree_weighted_sum(g));
    const double teacher = w_star.dot(pooled_sum(g));
    if (c.satisfied) {
      ++satisfied;
      EXPECT_EQ(f > 0, teacher > 0);
    }
  }
  EXPECT_GT(satisfied, 0);
}

TEST(StarFailure, MonteCarloLimits) {
  auto s = star_failure_stats(2000, 10, 1.0, 1.0, 4000, Rng(3));
  EXPECT_GE(s.rho_xw, 0.99);
  EXPECT_LE(std::abs(s.rho_xteacher), 0.06);
  EXPECT_GE(s.error_rate, 0.25);
  EXPECT_THROW(star_failure_stats(1, 10, 1.0, 1.0, 4000, Rng(3)), ConfigError);
  EXPECT_THROW(star_failure_stats(10, 10, 1.0, 1.0, 50, Rng(3)), ConfigError);
  auto again = star_failure_stats(2000, 10, 1.0, 1.0, 4000, Rng(3), 3);
  EXPECT_EQ(again.error_rate, s.error_rate);
  EXPECT_EQ(again.rho_xw, s.rho_xw);
}

TEST(Correlation, Basic) {
  EXPECT_NEAR(correlation({1, 2, 3}, {2, 4, 6}), 1.0, 1e-15);
  EXPECT_NEAR(correlation({1, 2, 3}, {3, 2, 1}), -1.0, 1e-15);
  EXPECT_EQ(correlation({1, 1, 1}, {3, 2, 1}), 0.0);
}

TEST(Serialization, SolutionJson) {
  Vector u(2);
  u << 3.0, 4.0;
  MarginProblem p;
  p.z = u.transpose();
  p.y = Vector::Ones(1);
  auto j = to_json(solve_qp(p));
  EXPECT_EQ(j["w1"].size(), 1u);
  EXPECT_NEAR(j["margin"].get<double>(), 5.0, 1e-9);
  EXPECT_TRUE(j.contains("kkt_residual"));
}

TEST(GdOracle, NormalizedGdDirectionMatchesQp) {
  const char* dists[] = {"gnp0.3", "ba2", "star", "regular4", "gnp0.6"};
  for (int t = 0; t < 5; ++t) {
    DatasetSpec s;
    s.m = 20 + 6 * t;
    s.n = 10;
    s.d = 4 + 2 * t;
    s.dist = GraphDist::parse(dists[t]);
    s.seed = 300 + t;
    MarginProblem p = build_problem(make_sum_dataset(s));
    TrainConfig tc;
    tc.optimizer = Optimizer::gd;
    tc.loss = LossKind::exponential;
    tc.normalized_gd = true;
    tc.lr = linear_gd_step(p.z);
    tc.epochs = 20000;
    tc.eval_every = 20000;
    auto run = train_linear_z(tc, p.z, p.y, Vector::Zero(p.z.cols()));
    const double cos = run.w.normalized().dot(solve_qp(p).w.normalized());
    EXPECT_GE(cos, 0.99) << dists[t];
  }
}

TEST(GdOracle, PlainGdHeadsTowardsQp) {
  DatasetSpec s;
  s.m = 30;
  s.n = 10;
  s.d = 5;
  s.dist = GraphDist::gnp(0.3);
  s.seed = 5;
  MarginProblem p = build_problem(make_sum_dataset(s));
  Vector target = solve_qp(p).w.normalized();
  TrainConfig tc;
  tc.optimizer = Optimizer::gd;
  tc.loss = LossKind::exponential;
  tc.lr = linear_gd_step(p.z);
  tc.epochs = 1000;
  Vector w = Vector::Zero(p.z.cols());
  double prev = -1.0;
  for (int stage = 0; stage < 3; ++stage) {
    w = train_linear_z(tc, p.z, p.y, w).w;
    const double cos = w.normalized().dot(target);
    EXPECT_GT(cos, prev);
    prev = cos;
    tc.epochs *= 10;
  }
  EXPECT_GE(prev, 0.95);
}
