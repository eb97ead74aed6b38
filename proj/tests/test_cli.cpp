#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = STRUCTFIT_CLI;
const fs::path kData = STRUCTFIT_TEST_DATA;

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("structfit_cli_" + std::to_string(::getpid()) + "_" +
                                       ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  [[nodiscard]] std::string operator/(const std::string& p) const { return (dir / p).string(); }
};

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + kCli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Rows of a CSV as vectors of cells (header included).
std::vector<std::vector<std::string>> csv(const std::string& path) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(slurp(path));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    out.push_back(cells);
  }
  return out;
}

std::string stat_value(const std::string& path, const std::string& metric) {
  for (const auto& r : csv(path))
    if (r.size() == 3 && r[1] == metric) return r[2];
  return "";
}

}  // namespace

TEST(Cli, GenRegularHasZeroCov) {
  Scratch s;
  ASSERT_EQ(run("--seed 1 --out " + (s / "g") + " gen --dist regular --r 10 --n 20 --m 100 --d 8"), 0);
  ASSERT_EQ(run("--out " + (s / "s") + " stats --in " + (s / "g/graphs.jsonl")), 0);
  EXPECT_EQ(stat_value(s / "s/stats.csv", "graphs"), "100");
  EXPECT_EQ(stat_value(s / "s/stats.csv", "mean_cov"), "0");
  EXPECT_EQ(stat_value(s / "s/stats.csv", "mean_edges"), "100");
  auto m = nlohmann::json::parse(slurp(s / "g/manifest.json"));
  EXPECT_EQ(m["command"], "gen");
  EXPECT_EQ(m["config"]["seed"], 1);
  EXPECT_TRUE(m["artifacts"].contains("graphs.jsonl"));
}

TEST(Cli, GenGnpHalfDensity) {
  Scratch s;
  ASSERT_EQ(run("--seed 3 --out " + (s / "g") + " gen --dist gnp --p 0.5 --n 20 --m 200 --d 4"), 0);
  ASSERT_EQ(run("--out " + (s / "s") + " stats --in " + (s / "g/graphs.jsonl")), 0);
  // E[edges] = 0.5 * 190 = 95, sd of the mean over 200 graphs ~ 0.49.
  EXPECT_NEAR(std::stod(stat_value(s / "s/stats.csv", "mean_edges")), 95.0, 2.5);
  // Default distribution is the same one.
  ASSERT_EQ(run("--seed 3 --out " + (s / "d") + " gen --n 20 --m 200 --d 4"), 0);
  EXPECT_EQ(slurp(s / "d/graphs.jsonl"), slurp(s / "g/graphs.jsonl"));
}

TEST(Cli, TeacherLabelsIgnoreTopology) {
  Scratch s;
  ASSERT_EQ(run("--seed 4 --out " + (s / "a") + " gen --dist regular4 --m 50 --d 8"), 0);
  ASSERT_EQ(run("--seed 4 --out " + (s / "b") + " gen --dist ba2 --m 50 --d 8"), 0);
  ASSERT_EQ(run("--out " + (s / "la") + " label --teacher-seed 9 --in " + (s / "a/graphs.jsonl")), 0);
  ASSERT_EQ(run("--out " + (s / "lb") + " label --teacher-seed 9 --in " + (s / "b/graphs.jsonl")), 0);
  auto la = csv(s / "la/labels.csv"), lb = csv(s / "lb/labels.csv");
  ASSERT_EQ(la.size(), 51u);
  ASSERT_EQ(la.size(), lb.size());
  for (std::size_t i = 0; i < la.size(); ++i) EXPECT_EQ(la[i][2], lb[i][2]);
}

TEST(Cli, ExitCodes) {
  Scratch s;
  EXPECT_EQ(run("--out " + (s / "x") + " gen --dist nonsense"), 2);
  EXPECT_EQ(run("--out " + (s / "x") + " gen --no-such-flag"), 2);
  EXPECT_EQ(run("--out " + (s / "x") + " gen --m 0"), 2);
  EXPECT_EQ(run("--out " + (s / "x") + " stats --in " + (s / "missing.jsonl")), 4);
  EXPECT_EQ(run("--config " + (s / "missing.json") + " --out " + (s / "x") + " gen --m 2"), 4);
  std::ofstream(s / "bad.json") << "{not json";
  EXPECT_EQ(run("--config " + (s / "bad.json") + " --out " + (s / "x") + " gen --m 2"), 2);
  EXPECT_EQ(run("--out " + (s / "x") + " rcov --tu-dir " + (s / "nowhere") + " --tu-name T"), 4);
  // Adam with an absurd step blows the logits up.
  EXPECT_EQ(run("--out " + (s / "x") +
                " overfit --size 20 --seeds 1 --d 8 --epochs 20 --lr 1e200 --val-size 0 --test-size 20"),
            3);
  EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, ConfigPrecedenceAndSeedFallback) {
  Scratch s;
  std::ofstream(s / "cfg.json") << R"({"seed": 11, "d": 4, "gen": {"m": 7}})";
  ASSERT_EQ(run("--config " + (s / "cfg.json") + " --out " + (s / "a") + " gen"), 0);
  EXPECT_EQ(csv(s / "a/gen.csv").size(), 8u);
  ASSERT_EQ(run("--config " + (s / "cfg.json") + " --out " + (s / "b") + " gen --m 3"), 0);
  EXPECT_EQ(csv(s / "b/gen.csv").size(), 4u);
  auto m = nlohmann::json::parse(slurp(s / "b/manifest.json"));
  EXPECT_EQ(m["config"]["m"], 3);
  EXPECT_EQ(m["config"]["d"], 4);
  EXPECT_EQ(m["config"]["seed"], 11);

  ASSERT_EQ(run("--out " + (s / "e") + " gen --m 5 --d 4", "STRUCTFIT_SEED=21"), 0);
  ASSERT_EQ(run("--seed 21 --out " + (s / "f") + " gen --m 5 --d 4"), 0);
  EXPECT_EQ(slurp(s / "e/graphs.jsonl"), slurp(s / "f/graphs.jsonl"));
  ASSERT_EQ(run("--seed 22 --out " + (s / "h") + " gen --m 5 --d 4", "STRUCTFIT_SEED=21"), 0);
  EXPECT_NE(slurp(s / "h/graphs.jsonl"), slurp(s / "f/graphs.jsonl"));
  EXPECT_EQ(run("--out " + (s / "i") + " gen --m 5", "STRUCTFIT_SEED=abc"), 2);
}

TEST(Cli, CurveSmoke) {
  Scratch s;
  ASSERT_EQ(run("--seed 2 --out " + (s / "c") +
                " curve --sizes 20 40 --seeds 2 --d 8 --epochs 20 --val-size 20 --test-size 40 --dists empty star"),
            0);
  auto rows = csv(s / "c/curve.csv");
  ASSERT_EQ(rows.size(), 1u + 2 * 2 * 2);
  EXPECT_EQ(rows[0].back(), "norm_ratio");
  EXPECT_EQ(csv(s / "c/curve_summary.csv").size(), 5u);
  EXPECT_NE(slurp(s / "c/curve.svg").find("<polyline"), std::string::npos);
  EXPECT_TRUE(fs::exists(s / "c/norm_ratio.svg"));
}

TEST(Cli, OverfitEmptyControlHasZeroGap) {
  Scratch s;
  ASSERT_EQ(run("--seed 5 --out " + (s / "o") +
                " overfit --dist empty --size 30 --seeds 2 --d 8 --epochs 30 --val-size 20 --test-size 50"),
            0);
  auto rows = csv(s / "o/overfit.csv");
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i][4], "0");
}

TEST(Cli, RcovFullFractionAddsNothing) {
  Scratch s;
  ASSERT_EQ(run("--seed 6 --out " + (s / "g") + " gen --dist ba2 --m 10 --d 2"), 0);
  ASSERT_EQ(run("--out " + (s / "r") + " rcov --fractions 1.0 0.5 --in " + (s / "g/graphs.jsonl")), 0);
  for (const auto& r : csv(s / "r/rcov.csv")) {
    if (r[1] == "fraction") continue;
    if (r[1] == "1") EXPECT_EQ(r[6], "0") << "fraction 1 added edges";
    EXPECT_EQ(r[7], "1");  // reached
  }
  EXPECT_TRUE(fs::exists(s / "r/rcov_1.jsonl"));
  EXPECT_TRUE(fs::exists(s / "r/rcov_0.5.jsonl"));
}

TEST(Cli, BenchRcovOnTuFixture) {
  Scratch s;
  ASSERT_EQ(run("--seed 1 --out " + (s / "b") + " bench-rcov --tu-dir " + (kData / "FIX").string() +
                " --tu-name FIX --folds 3 --seeds 1 --epochs 10 --hidden 8"),
            0);
  auto rows = csv(s / "b/bench_rcov.csv");
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"schema_version", "setting", "mean_acc", "std_acc"}));
  EXPECT_EQ(rows[1][1], "original");
  EXPECT_EQ(rows[2][1], "rcov_0.8");
  EXPECT_EQ(rows[3][1], "rcov_0.5");
  EXPECT_EQ(rows[4][1], "empty");
}

TEST(Cli, SmallExperimentsRun) {
  Scratch s;
  ASSERT_EQ(run("--seed 2 --out " + (s / "a") + " alignment --epochs 3000 --eval-every 1000 --m 60"), 0);
  EXPECT_EQ(csv(s / "a/alignment_summary.csv").size(), 4u);
  ASSERT_EQ(run("--seed 2 --out " + (s / "e") + " extrapolate --epochs 3000 --m 60 --test-size 30"), 0);
  auto ex = csv(s / "e/extrapolate.csv");
  ASSERT_GE(ex.size(), 15u);
  for (std::size_t i = 1; i <= 14; ++i) EXPECT_EQ(ex[i][2], "1") << ex[i][1];
  ASSERT_EQ(run("--seed 2 --out " + (s / "r") + " ratio-hist --epochs 1000 --m 60 --test-size 30"), 0);
  EXPECT_EQ(csv(s / "r/ratios.csv").size(), 1u + 6 * 30);
  ASSERT_EQ(run("--seed 2 --out " + (s / "f") + " star-failure --n 500 --trials 500"), 0);
  EXPECT_EQ(csv(s / "f/star_failure.csv").size(), 2u);
}

TEST(Cli, RerunsAreByteIdentical) {
  Scratch s;
  const std::vector<std::string> cmds = {
      "gen --dist ba3 --m 20 --d 4",
      "curve --sizes 20 --seeds 2 --d 8 --epochs 15 --val-size 20 --test-size 30 --dists empty gnp0.5",
      "alignment --epochs 2000 --eval-every 500 --m 40",
      "star-failure --n 300 --trials 300",
  };
  for (std::size_t k = 0; k < cmds.size(); ++k) {
    const std::string a = s / ("a" + std::to_string(k)), b = s / ("b" + std::to_string(k));
    ASSERT_EQ(run("--seed 13 --out " + a + " " + cmds[k]), 0) << cmds[k];
    ASSERT_EQ(run("--seed 13 --jobs 2 --out " + b + " " + cmds[k]), 0) << cmds[k];
    for (const auto& e : fs::directory_iterator(a)) {
      const auto name = e.path().filename().string();
      EXPECT_EQ(slurp(e.path().string()), slurp((fs::path(b) / name).string())) << cmds[k] << " " << name;
    }
  }
}
