#include <gtest/gtest.h>

#include <algorithm>

#include "structfit/generators.hpp"

using namespace structfit;

TEST(Gnp, DegenerateProbabilities) {
  Rng rng(1);
  EXPECT_EQ(gen_gnp(30, 0.0, rng).num_edges(), 0u);
  Topology full = gen_gnp(30, 1.0, rng);
  for (int i = 0; i < 30; ++i) EXPECT_EQ(full.degree(i), 29);
  EXPECT_THROW(gen_gnp(5, 1.5, rng), ConfigError);
  EXPECT_THROW(gen_gnp(5, -0.1, rng), ConfigError);
}

TEST(Gnp, MeanEdgeCountWithinThreeSigma) {
  // Edge count ~ Binomial(4950, 0.5): mean 2475, var 1237.5 per trial.
  const int trials = 1000;
  const double pairs = 100.0 * 99.0 / 2.0;
  double total = 0.0;
  Rng root(42);
  for (int t = 0; t < trials; ++t) {
    Rng rng = root.split("trial", t);
    total += static_cast<double>(gen_gnp(100, 0.5, rng).num_edges());
  }
  const double mean = total / trials;
  const double sigma_of_mean = std::sqrt(pairs * 0.25 / trials);
  EXPECT_NEAR(mean, 2475.0, 3.0 * sigma_of_mean);
}

TEST(Regular, SpecialCasesAndErrors) {
  Rng rng(3);
  EXPECT_EQ(gen_regular(9, 0, rng).num_edges(), 0u);
  Topology complete = gen_regular(9, 8, rng);
  EXPECT_EQ(complete.num_edges(), 36u);
  EXPECT_THROW(gen_regular(9, 3, rng), ConfigError);   // odd n*r
  EXPECT_THROW(gen_regular(9, 9, rng), ConfigError);   // r >= n
  EXPECT_THROW(gen_regular(9, -2, rng), ConfigError);
}

TEST(Regular, EverySampleIsRegularWithZeroCov) {
  Rng root(9);
  for (int t = 0; t < 200; ++t) {
    Rng rng = root.split("t", t);
    Topology g = gen_regular(20, 10, rng);
    EXPECT_EQ(regular_degree(g), std::optional<int>(10));
    EXPECT_EQ(degree_stats(g).cov, 0.0);
  }
}

TEST(Regular, CirculantFallbackIsRegular) {
  for (auto [n, r] : std::vector<std::pair<int, int>>{{10, 3}, {11, 4}, {20, 7}, {6, 5}}) {
    Topology g = circulant_regular(n, r);
    EXPECT_EQ(regular_degree(g), std::optional<int>(r)) << n << " " << r;
  }
  Rng rng(0);
  // A zero retry budget forces the fallback.
  EXPECT_EQ(regular_degree(gen_regular(12, 5, rng, 0)), std::optional<int>(5));
}

TEST(Ba, SeedCliqueOnlyWhenNoGrowth) {
  Rng rng(2);
  Topology g = gen_ba(4, 3, rng);
  EXPECT_EQ(g, gen_complete(4));
  EXPECT_THROW(gen_ba(3, 3, rng), ConfigError);
  EXPECT_THROW(gen_ba(3, 0, rng), ConfigError);
}

TEST(Ba, EdgeCountFollowsConstructionRule) {
  Rng rng(4);
  for (auto [n, m] : std::vector<std::pair<int, int>>{{20, 3}, {50, 1}, {200, 3}, {30, 5}}) {
    Topology g = gen_ba(n, m, rng);
    // m(m+1)/2 seed edges plus m per arrival.
    EXPECT_EQ(static_cast<long>(g.num_edges()), m * (m + 1) / 2 + (n - m - 1) * m);
    EXPECT_EQ(static_cast<long>(g.num_edges()), ba_edge_count(n, m));
  }
}

TEST(Ba, HeavyTailSanity) {
  Rng root(77);
  int hits = 0;
  for (int t = 0; t < 100; ++t) {
    Rng rng = root.split("t", t);
    auto deg = gen_ba(200, 3, rng).degrees();
    std::sort(deg.begin(), deg.end());
    const double median = 0.5 * (deg[99] + deg[100]);
    if (deg.back() > median) ++hits;
  }
  EXPECT_GE(hits, 99);
}

TEST(Star, Shape) {
  Topology two = gen_star(2);
  EXPECT_EQ(two.num_edges(), 1u);
  Topology g = gen_star(20);
  EXPECT_EQ(g.degree(0), 19);
  for (int i = 1; i < 20; ++i) EXPECT_EQ(g.degree(i), 1);
  EXPECT_NEAR(degree_stats(g).cov, 2.0648, 1e-4);
  EXPECT_THROW(gen_star(1), ConfigError);
}

TEST(Features, DeterministicAndDistinctAcrossSeeds) {
  Rng a(5), b(5), c(6);
  Matrix xa = sample_features(7, 4, a), xb = sample_features(7, 4, b), xc = sample_features(7, 4, c);
  EXPECT_TRUE(xa == xb);
  EXPECT_FALSE(xa == xc);
}

TEST(Features, MomentsWithinClt) {
  Rng rng(123);
  Matrix x = sample_features(1000, 1000, rng);
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(var, 1.0, 0.02);
}

TEST(Teacher, ZeroPooledSumIsFlagged) {
  TeacherModel t{Vector::Ones(2)};
  Matrix x(2, 2);
  x << 1, -2, -1, 2;
  auto lab = teacher_label(t, Graph(gen_empty(2), x), 1e-3);
  EXPECT_TRUE(lab.flagged);
  EXPECT_EQ(lab.label, 0);
}

TEST(Teacher, SignOfFirstCoordinate) {
  TeacherModel t{(Vector(3) << 1, 0, 0).finished()};
  Matrix x(1, 3);
  x << 3, -7, 2;
  auto lab = teacher_label(t, Graph(gen_empty(1), x), 1e-3);
  EXPECT_FALSE(lab.flagged);
  EXPECT_EQ(lab.label, 1);
  EXPECT_THROW(teacher_label(TeacherModel{Vector::Ones(2)}, Graph(gen_empty(1), x), 0.0), ConfigError);
}

TEST(Teacher, LabelsIgnoreRewiring) {
  DatasetSpec spec;
  spec.m = 60;
  spec.n = 20;
  spec.d = 8;
  spec.seed = 31;
  std::vector<Dataset> sets;
  for (auto dist : {GraphDist::gnp(0.5), GraphDist::regular(10), GraphDist::star(), GraphDist::ba(3)}) {
    spec.dist = dist;
    sets.push_back(make_sum_dataset(spec));
  }
  for (std::size_t s = 1; s < sets.size(); ++s)
    for (int l = 0; l < spec.m; ++l) {
      EXPECT_EQ(sets[s][l].label, sets[0][l].label);
      EXPECT_TRUE(sets[s][l].graph.features() == sets[0][l].graph.features());
    }
  // Separable by construction: the teacher margin clears eps on every instance.
  TeacherModel teacher = sum_task_teacher(Rng(spec.seed), spec.d);
  for (const auto& lg : sets[0]) EXPECT_GE(lg.label * teacher.score(lg.graph.features()), spec.eps());
}

TEST(Generators, DeterministicPerSeed) {
  DatasetSpec spec;
  spec.m = 10;
  spec.d = 4;
  spec.dist = GraphDist::ba(2);
  spec.seed = 8;
  Dataset a = make_sum_dataset(spec), b = make_sum_dataset(spec);
  for (int l = 0; l < spec.m; ++l) EXPECT_TRUE(a[l].graph == b[l].graph);
}

TEST(DatasetSpec, JsonRoundTrip) {
  DatasetSpec s;
  s.m = 13;
  s.dist = GraphDist::gnp(0.6);
  s.seed = 99;
  DatasetSpec t = dataset_spec_from_json(to_json(s));
  EXPECT_EQ(t.m, 13);
  EXPECT_EQ(t.dist.name(), "gnp0.6");
  EXPECT_EQ(t.seed, 99u);
  EXPECT_DOUBLE_EQ(t.eps(), s.eps());
  EXPECT_THROW(GraphDist::parse("lattice"), ConfigError);
}
