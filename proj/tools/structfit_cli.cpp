// structfit: command-line front end for the experiments.
//
//   structfit [--seed S] [--config FILE] [--out DIR] [--jobs N] <command> [options]
//
// Options come from flags, then the JSON config (top-level keys or a section
// named after the command, with dashes written as underscores), then
// defaults. The seed falls back to $STRUCTFIT_SEED. Exit codes: 0 ok,
// 2 configuration error, 3 numerical failure, 4 I/O error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "structfit/cov_transform.hpp"
#include "structfit/experiments.hpp"
#include "structfit/generators.hpp"
#include "structfit/io.hpp"
#include "structfit/report.hpp"
#include "structfit/trainer.hpp"
#include "structfit/tu.hpp"

using namespace structfit;
using nlohmann::json;

namespace {

std::string json_key(std::string name) {
  for (auto& c : name)
    if (c == '-') c = '_';
  return name;
}

// Per-command option registry: flag value, else config value, else default.
class Params {
 public:
  Params(CLI::App* app, std::string command) : app_(app), command_(std::move(command)) {}

  template <class T>
  CLI::Option* add(const std::string& name, T& var, const std::string& help) {
    CLI::Option* opt;
    if constexpr (std::is_same_v<T, bool>) {
      opt = app_->add_flag("--" + name, var, help);
    } else {
      opt = app_->add_option("--" + name, var, help)->capture_default_str();
    }
    const std::string key = json_key(name);
    resolvers_.push_back([opt, &var, key, this](const json& cfg, json& out) {
      if (opt->count() == 0) {
        const json* src = nullptr;
        if (cfg.contains(command_) && cfg[command_].is_object() && cfg[command_].contains(key))
          src = &cfg[command_][key];
        else if (cfg.contains(key))
          src = &cfg[key];
        if (src) {
          try {
            var = src->get<T>();
          } catch (const json::exception& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
          }
        }
      }
      out[key] = var;
    });
    return opt;
  }

  json resolve(const json& cfg) const {
    json out = json::object();
    for (const auto& r : resolvers_) r(cfg, out);
    return out;
  }

 private:
  CLI::App* app_;
  std::string command_;
  std::vector<std::function<void(const json&, json&)>> resolvers_;
};

struct Global {
  std::uint64_t seed = 0;
  std::string config;
  std::string out = "out";
  int jobs = 1;
};

// Shared model/training flags.
struct ModelOpts {
  std::string arch = "graphconv";
  int layers = 3;
  int hidden = 64;
  double dropout = 0.0;
  int epochs = 1000;
  double lr = 1e-3;
  int batch = 32;
  int patience = 100;
  double weight_decay = 1e-4;

  void add(Params& p) {
    p.add("arch", arch, "graphconv | gin | gatv2 | transformer | graphconv_mean");
    p.add("layers", layers, "message-passing layers");
    p.add("hidden", hidden, "hidden width");
    p.add("dropout", dropout, "dropout rate");
    p.add("epochs", epochs, "training epochs");
    p.add("lr", lr, "Adam learning rate");
    p.add("batch", batch, "mini-batch size (0 = full batch)");
    p.add("patience", patience, "early-stopping patience in epochs");
    p.add("weight-decay", weight_decay, "L2 weight decay");
  }

  [[nodiscard]] GnnConfig model(int in_dim) const {
    GnnConfig c;
    c.arch = parse_arch(arch);
    c.in_dim = in_dim;
    c.layers = layers;
    c.hidden = hidden;
    c.dropout = dropout;
    c.validate();
    return c;
  }

  [[nodiscard]] TrainConfig train(std::uint64_t seed) const {
    TrainConfig t;
    t.optimizer = Optimizer::adam;
    t.lr = lr;
    t.epochs = epochs;
    t.batch = batch;
    t.patience = patience;
    t.weight_decay = weight_decay;
    t.seed = seed;
    t.validate();
    return t;
  }
};

struct SumOpts {
  int n = 20;
  int d = 128;
  int val_size = 500;
  int test_size = 500;
  double margin_eps = -1.0;

  void add(Params& p) {
    p.add("n", n, "nodes per graph");
    p.add("d", d, "node feature dimension");
    p.add("val-size", val_size, "validation instances per run");
    p.add("test-size", test_size, "test instances per run");
    p.add("margin-eps", margin_eps, "teacher margin filter (<0 = default)");
  }

  [[nodiscard]] SumTaskSetup setup(const ModelOpts& mo, std::uint64_t seed) const {
    SumTaskSetup s;
    s.base.n = n;
    s.base.d = d;
    s.base.seed = seed;
    s.base.margin_eps = margin_eps;
    s.val_size = val_size;
    s.test_size = test_size;
    s.model = mo.model(d);
    s.train = mo.train(seed);
    return s;
  }
};

std::vector<GraphDist> parse_dists(const std::vector<std::string>& names) {
  std::vector<GraphDist> out;
  for (const auto& s : names) out.push_back(GraphDist::parse(s));
  return out;
}

Dataset load_jsonl(const std::string& path) {
  if (path.empty()) throw ConfigError("--in is required");
  return to_dataset(read_jsonl_file(path));
}

// Dataset from --in or --tu-dir/--tu-name, labels remapped to 0..C-1.
struct InputOpts {
  std::string in;
  std::string tu_dir;
  std::string tu_name;

  void add(Params& p) {
    p.add("in", in, "JSON-lines dataset");
    p.add("tu-dir", tu_dir, "directory holding a TU dataset");
    p.add("tu-name", tu_name, "TU dataset name (file prefix)");
  }

  [[nodiscard]] std::pair<Dataset, int> load() const {
    Dataset ds;
    if (!tu_dir.empty()) {
      if (tu_name.empty()) throw ConfigError("--tu-name is required with --tu-dir");
      TuDataset tu = augment_degree_feature(parse_tu(tu_dir, tu_name));
      for (const auto& w : tu.warnings) std::cerr << "warning: " << w << "\n";
      return {std::move(tu.graphs), tu.num_classes};
    }
    ds = load_jsonl(in);
    std::set<int> labels;
    for (const auto& lg : ds) labels.insert(lg.label);
    std::map<int, int> remap;
    for (int l : labels) remap.emplace(l, static_cast<int>(remap.size()));
    for (auto& lg : ds) lg.label = remap[lg.label];
    return {std::move(ds), static_cast<int>(labels.size())};
  }
};

std::string jsonl(const Dataset& ds) {
  std::ostringstream os;
  write_jsonl(os, ds);
  return os.str();
}

std::string dist_from_flags(std::string dist, int r, double p, int ba_m) {
  if (dist == "regular") {
    if (r < 0) throw ConfigError("--dist regular needs --r");
    return "regular" + std::to_string(r);
  }
  if (dist == "gnp") {
    if (p < 0) throw ConfigError("--dist gnp needs --p");
    return GraphDist::gnp(p).name();
  }
  if (dist == "ba") {
    if (ba_m < 0) throw ConfigError("--dist ba needs --ba-m");
    return "ba" + std::to_string(ba_m);
  }
  return dist;
}

using Runner = std::function<void(const Global&, ArtifactWriter&, json&)>;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structfit: graph-structure overfitting experiments"};
  app.require_subcommand(1);
  Global g;
  auto* seed_opt = app.add_option("--seed", g.seed, "global seed (falls back to $STRUCTFIT_SEED)");
  app.add_option("--config", g.config, "JSON config file; flags take precedence");
  auto* out_opt = app.add_option("--out", g.out, "output directory")->capture_default_str();
  auto* jobs_opt = app.add_option("--jobs", g.jobs, "worker threads")->capture_default_str();

  std::map<CLI::App*, std::pair<std::unique_ptr<Params>, Runner>> commands;
  auto command = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    auto& slot = commands[sub];
    slot.first = std::make_unique<Params>(sub, name);
    return std::pair<CLI::App*, Params*>{sub, slot.first.get()};
  };

  // ---- gen ----------------------------------------------------------------
  struct {
    std::string dist = "gnp0.5";
    int r = -1;
    double p = -1.0;
    int ba_m = -1;
    int n = 20, m = 100, d = 128;
    double margin_eps = -1.0;
    std::uint64_t first_index = 0;
  } gen;
  {
    auto [sub, P] = command("gen", "sample a teacher-labelled Sum-task dataset");
    P->add("dist", gen.dist, "gnp0.5 | regular10 | ba3 | star | empty, or gnp/regular/ba with --p/--r/--ba-m");
    P->add("r", gen.r, "regular degree");
    P->add("p", gen.p, "edge probability");
    P->add("ba-m", gen.ba_m, "edges per new node (BA)");
    P->add("n", gen.n, "nodes per graph");
    P->add("m", gen.m, "graphs");
    P->add("d", gen.d, "feature dimension");
    P->add("margin-eps", gen.margin_eps, "teacher margin filter (<0 = default)");
    P->add("first-index", gen.first_index, "index of the first instance in the stream");
    commands[sub].second = [&](const Global& gl, ArtifactWriter& w, json&) {
      DatasetSpec s;
      s.m = gen.m;
      s.n = gen.n;
      s.d = gen.d;
      s.dist = GraphDist::parse(dist_from_flags(gen.dist, gen.r, gen.p, gen.ba_m));
      s.seed = gl.seed;
      s.margin_eps = gen.margin_eps;
      require(s.m >= 1 && s.n >= 1 && s.d >= 1, "m, n and d must be >= 1");
      Dataset ds = make_sum_dataset(s, gen.first_index);
      CsvTable t({"index", "label", "n", "edges", "cov"});
      for (std::size_t i = 0; i < ds.size(); ++i)
        t.row({std::to_string(i), std::to_string(ds[i].label), std::to_string(ds[i].graph.n()),
               std::to_string(ds[i].graph.edges().size()), num(degree_stats(ds[i].graph).cov)});
      w.write("graphs.jsonl", jsonl(ds));
      w.write("gen.csv", t.str());
      std::cout << "wrote " << ds.size() << " graphs (" << s.dist.name() << ") to " << (w.dir() / "graphs.jsonl").string()
                << "\n";
    };
  }

  // ---- label --------------------------------------------------------------
  struct {
    std::string in;
    std::int64_t teacher_seed = -1;
    double margin_eps = -1.0;
  } lab;
  {
    auto [sub, P] = command("label", "relabel graphs with the graph-less sum teacher");
    P->add("in", lab.in, "JSON-lines dataset");
    P->add("teacher-seed", lab.teacher_seed, "teacher seed (<0 = global seed)");
    P->add("margin-eps", lab.margin_eps, "flag instances with |score| below this (<0 = default)");
    commands[sub].second = [&](const Global& gl, ArtifactWriter& w, json&) {
      Dataset ds = load_jsonl(lab.in);
      require(!ds.empty(), "label: empty dataset");
      const int d = ds.front().graph.d();
      const std::uint64_t ts = lab.teacher_seed < 0 ? gl.seed : static_cast<std::uint64_t>(lab.teacher_seed);
      TeacherModel teacher = sum_task_teacher(Rng(ts), d);
      const double eps = lab.margin_eps < 0 ? default_margin_eps(d) : lab.margin_eps;
      CsvTable t({"index", "label", "score", "flagged"});
      for (std::size_t i = 0; i < ds.size(); ++i) {
        auto tl = teacher_label(teacher, ds[i].graph, eps);
        ds[i].label = tl.label;
        t.row({std::to_string(i), std::to_string(tl.label), num(tl.score), tl.flagged ? "1" : "0"});
      }
      w.write("labels.csv", t.str());
      w.write("labeled.jsonl", jsonl(ds));
      std::cout << "labelled " << ds.size() << " graphs\n";
    };
  }

  // ---- stats --------------------------------------------------------------
  std::string stats_in;
  {
    auto [sub, P] = command("stats", "degree COV, degree histogram and class balance");
    P->add("in", stats_in, "JSON-lines dataset");
    commands[sub].second = [&](const Global&, ArtifactWriter& w, json&) {
      Dataset ds = load_jsonl(stats_in);
      require(!ds.empty(), "stats: empty dataset");
      std::vector<double> covs;
      std::map<int, long> hist, classes;
      double nodes = 0, edges = 0;
      for (const auto& lg : ds) {
        covs.push_back(degree_stats(lg.graph).cov);
        for (int dg : lg.graph.degrees()) ++hist[dg];
        ++classes[lg.label];
        nodes += lg.graph.n();
        edges += static_cast<double>(lg.graph.edges().size());
      }
      auto [cm, cs] = mean_std(covs);
      CsvTable t({"metric", "value"});
      t.row({"graphs", std::to_string(ds.size())});
      t.row({"mean_nodes", num(nodes / ds.size())});
      t.row({"mean_edges", num(edges / ds.size())});
      t.row({"mean_cov", num(cm)});
      t.row({"std_cov", num(cs)});
      t.row({"min_cov", num(*std::min_element(covs.begin(), covs.end()))});
      t.row({"max_cov", num(*std::max_element(covs.begin(), covs.end()))});
      for (auto [c, k] : classes) t.row({"class_" + std::to_string(c), std::to_string(k)});
      CsvTable h({"degree", "count"});
      for (auto [dg, k] : hist) h.row({std::to_string(dg), std::to_string(k)});
      w.write("stats.csv", t.str());
      w.write("degree_hist.csv", h.str());
      std::cout << "graphs " << ds.size() << "  mean cov " << num(cm) << "  std cov " << num(cs) << "\n";
      for (auto [c, k] : classes) std::cout << "class " << c << ": " << k << "\n";
    };
  }

  // ---- curve --------------------------------------------------------------
  struct {
    std::vector<std::string> dists{"empty", "regular10", "gnp0.6", "ba3", "star"};
    std::vector<int> sizes;
    int seeds = 3;
    bool paper_scale = false;
    ModelOpts mo;
    SumOpts so;
  } cur;
  {
    auto [sub, P] = command("curve", "learning curves of one architecture across graph distributions");
    P->add("dists", cur.dists, "graph distributions");
    P->add("sizes", cur.sizes, "training set sizes (default: grid up to 1000)");
    P->add("seeds", cur.seeds, "seeds per point");
    P->add("paper-scale", cur.paper_scale, "full size grid up to 4000 and 10 seeds");
    cur.mo.add(*P);
    cur.so.add(*P);
    commands[sub].second = [&](const Global& gl, ArtifactWriter& w, json& resolved) {
      std::vector<int> sizes = cur.sizes;
      int seeds = cur.seeds;
      if (cur.paper_scale) {
        if (sizes.empty()) sizes = {20, 40, 60, 100, 200, 300, 400, 500, 1000, 2000, 4000};
        seeds = std::max(seeds, 10);
      } else if (sizes.empty()) {
        sizes = {20, 40, 60, 100, 200, 300, 400, 500, 1000};
      }
      resolved["sizes"] = sizes;
      resolved["seeds"] = seeds;
      auto setup = cur.so.setup(cur.mo, gl.seed);
      auto dists = parse_dists(cur.dists);
      auto points = learning_curve(setup, dists, sizes, seeds, gl.jobs);
      CsvTable runs({"dist", "size", "seed", "test_acc", "train_acc", "norm_ratio"});
      CsvTable summary({"dist", "size", "mean_acc", "std_acc", "mean_norm_ratio"});
      std::map<std::string, Series> acc, ratio;
      for (const auto& p : points) {
        for (int s = 0; s < seeds; ++s)
          runs.row({p.dist, std::to_string(p.size), std::to_string(s), num(p.accs[s]), num(p.train_accs[s]),
                    num(p.final_ratio[s])});
        const double mr = mean_std(p.final_ratio).first;
        summary.row({p.dist, std::to_string(p.size), num(p.mean_acc), num(p.std_acc), num(mr)});
        auto& a = acc[p.dist];
        a.name = p.dist;
        a.x.push_back(p.size);
        a.y.push_back(p.mean_acc);
        a.err.push_back(p.std_acc);
        auto& r = ratio[p.dist];
        r.name = p.dist;
        r.x.push_back(p.size);
        r.y.push_back(mr);
      }
      std::vector<Series> as, rs;
      for (const auto& d : dists) {
        as.push_back(acc[d.name()]);
        rs.push_back(ratio[d.name()]);
      }
      w.write("curve.csv", runs.str());
      w.write("curve_summary.csv", summary.str());
      w.write("curve.svg", line_chart_svg(as, {"Test accuracy vs training size", "training examples", "accuracy", true}));
      w.write("norm_ratio.svg",
              line_chart_svg(rs, {"Topological / root weight norm ratio", "training examples", "norm ratio", true}));
      std::cout << summary.str();
    };
  }

  // ---- overfit ------------------------------------------------------------
  struct {
    std::string dist = "gnp0.5";
    int size = 100;
    int seeds = 3;
    ModelOpts mo;
    SumOpts so;
  } ov;
  {
    auto [sub, P] = command("overfit", "same model on given graphs vs the same graphs without edges");
    P->add("dist", ov.dist, "graph distribution of the given graphs");
    P->add("size", ov.size, "training set size");
    P->add("seeds", ov.seeds, "seeds");
    ov.mo.add(*P);
    ov.so.add(*P);
    commands[sub].second = [&](const Global& gl, ArtifactWriter& w, json&) {
      require(ov.seeds >= 1 && ov.size >= 1, "seeds and size must be >= 1");
      auto setup = ov.so.setup(ov.mo, gl.seed);
      auto rows = overfit_experiment(setup, GraphDist::parse(ov.dist), ov.size, ov.seeds, gl.jobs);
      CsvTable t({"seed", "acc_graph", "acc_empty", "gap", "norm_ratio"});
      std::vector<double> ag, ae, gap;
      for (const auto& r : rows) {
        t.row({std::to_string(r.seed), num(r.acc_graph), num(r.acc_empty), num(r.acc_empty - r.acc_graph),
               num(r.ratio_graph)});
        ag.push_back(r.acc_graph);
        ae.push_back(r.acc_empty);
        gap.push_back(r.acc_empty - r.acc_graph);
      }
      auto [mg, sg] = mean_std(ag);
      auto [me, se] = mean_std(ae);
      auto [mgap, sgap] = mean_std(gap);
      CsvTable s({"dist", "mean_acc_graph", "std_acc_graph", "mean_acc_empty", "std_acc_empty", "mean_gap", "std_gap"});
      s.row({ov.dist, num(mg), num(sg), num(me), num(se), num(mgap), num(sgap)});
      w.write("overfit.csv", t.str());
      w.write("overfit_summary.csv", s.str());
      std::cout << "graph " << num(mg) << " +- " << num(sg) << "   empty " << num(me) << " +- " << num(se)
                << "   gap (empty - graph) " << num(mgap) << " +- " << num(sgap) << "\n";
    };
  }

  // ---- alignment ----------------------------------------------------------
  struct {
    std::vector<int> rs{3, 5, 10};
    AlignmentSetup a;
  } al;
  {
    auto [sub, P] = command("alignment", "linear GNN on r-regular data: w2/w1 ratio trajectory");
    P->add("r", al.rs, "regularity degrees");
    P->add("m", al.a.m, "training graphs");
    P->add("n", al.a.n, "nodes per graph");
    P->add("d", al.a.d, "feature dimension");
    P->add("epochs", al.a.epochs, "GD epochs");
    P->add("eval-every", al.a.eval_every, "log interval");
    P->add("init-scale", al.a.init_scale, "initialisation scale");
    commands[sub].second = [&](const Global& gl, ArtifactWriter& w, json&) {
      std::vector<AlignmentOutcome> outs(al.rs.size());
      parallel_for(al.rs.size(), gl.jobs, [&](std::size_t i) {
        AlignmentSetup a = al.a;
        a.r = al.rs[i];
        a.seed = gl.seed;
        outs[i] = alignment_experiment(a);
      });
      CsvTable traj({"r", "epoch", "loss", "norm_ratio", "align_resid"});
      CsvTable summary({"r", "final_norm_ratio", "final_align_resid", "qp_align_resid", "qp_kkt_residual"});
      std::vector<Series> series;
      for (std::size_t i = 0; i < outs.size(); ++i) {
        Series s;
        s.name = "r=" + std::to_string(al.rs[i]);
        for (const auto& rec : outs[i].log.records) {
          traj.row({std::to_string(al.rs[i]), std::to_string(rec.epoch), num(rec.loss), num(rec.norm_ratio.front()),
                    num(rec.align_resid)});
          if (rec.epoch > 0) {
            s.x.push_back(rec.epoch);
            s.y.push_back(rec.norm_ratio.front());
          }
        }
        series.push_back(std::move(s));
        summary.row({std::to_string(al.rs[i]), num(outs[i].final_ratio), num(outs[i].final_residual),
                     num(outs[i].qp_residual), num(outs[i].qp_kkt)});
      }
      w.write("alignment.csv", traj.str());
      w.write("alignment_summary.csv", summary.str());
      w.write("alignment.svg", line_chart_svg(series, {"||w2|| / ||w1|| during GD", "epoch", "norm ratio", true}));
      std::cout << summary.str();
    };
  }

  // ---- extrapolate / ratio-hist ------------------------------------------
  ExtrapolationSetup ex;
  std::vector<std::string> ex_dists;
  std::vector<std::string> ratio_dists{"gnp0.1", "gnp0.3", "gnp0.5", "ba1", "ba3", "star"};
  auto add_extrap = [&](Params& P) {
    P.add("r", ex.r, "training regularity degree");
    P.add("m", ex.m, "training graphs");
    P.add("n", ex.n, "nodes per graph");
    P.add("d", ex.d, "feature dimension");
    P.add("test-size", ex.test_size, "graphs per test set");
    P.add("epochs", ex.epochs, "GD epochs");
    P.add("init-scale", ex.init_scale, "initialisation scale");
  };
  {
    for (int r = 2; r <= 15; ++r) ex_dists.push_back("regular" + std::to_string(r));
    for (const auto& s : ratio_dists) ex_dists.push_back(s);
    auto [sub, P] = command("extrapolate", "train on r-regular graphs, test on other distributions");
    add_extrap(*P);
    P->add("dists", ex_dists, "test distributions");
    commands[sub].second = [&](const Global& gl, ArtifactWriter& w, json&) {
      ExtrapolationSetup s = ex;
      s.seed = gl.seed;
      auto rows = extrapolation_experiment(s, parse_dists(ex_dists));
      CsvTable t({"dist", "oracle_acc", "gd_acc"});
      for (const auto& r : rows) t.row({r.dist, num(r.oracle_acc), num(r.gd_acc)});
      w.write("extrapolate.csv", t.str());
      std::cout << t.str();
    };
  }
  {
    auto [sub, P] = command("ratio-hist", "sufficient-condition ratio per correctly classified test graph");
    add_extrap(*P);
    P->add("dists", ratio_dists, "test distributions");
    commands[sub].second = [&](const Global& gl, ArtifactWriter& w, json&) {
      ExtrapolationSetup s = ex;
      s.seed = gl.seed;
      auto rows = ratio_experiment(s, parse_dists(ratio_dists), s.test_size, nullptr, gl.jobs);
      CsvTable t({"dist", "index", "min_ratio", "r_prime_star", "correct"});
      std::vector<double> correct;
      long unsound = 0;
      for (const auto& r : rows) {
        t.row({r.dist, std::to_string(r.index), num(r.min_ratio), std::to_string(r.r_prime_star), r.correct ? "1" : "0"});
        if (r.correct && std::isfinite(r.min_ratio)) correct.push_back(r.min_ratio);
        unsound += r.min_ratio <= 1.0 && !r.correct;
      }
      w.write("ratios.csv", t.str());
      w.write("ratio_hist.svg", histogram_svg(correct, 30, {"Ratio on correctly classified graphs", "min ratio", "count"}));
      const double mx = correct.empty() ? 0.0 : *std::max_element(correct.begin(), correct.end());
      std::cout << "correct " << correct.size() << " / " << rows.size() << "   max ratio on correct " << num(mx)
                << "   ratio<=1 but wrong " << unsound << "\n";
    };
  }

  // ---- star-failure -------------------------------------------------------
  StarFailureSetup sf;
  {
    auto [sub, P] = command("star-failure", "regular-trained predictor on large star graphs");
    P->add("n", sf.n, "star size");
    P->add("r", sf.r, "training regularity degree");
    P->add("trials", sf.trials, "Monte-Carlo trials");
    P->add("train-m", sf.train_m, "training graphs");
    P->add("train-n", sf.train_n, "training nodes per graph");
    commands[sub].second = [&](const Global& gl, ArtifactWriter& w, json&) {
      StarFailureSetup s = sf;
      s.seed = gl.seed;
      auto o = star_failure_experiment(s, gl.jobs);
      CsvTable t({"n", "r", "trials", "w1", "w_star", "error_rate", "rho_x_w", "rho_x_teacher"});
      t.row({std::to_string(s.n), std::to_string(s.r), std::to_string(s.trials), num(o.w1), num(o.w_star),
             num(o.stats.error_rate), num(o.stats.rho_xw), num(o.stats.rho_xteacher)});
      w.write("star_failure.csv", t.str());
      std::cout << t.str();
    };
  }

  // ---- rcov / bench-rcov --------------------------------------------------
  struct {
    InputOpts io;
    std::vector<double> fractions{0.8, 0.5};
    long max_added = -1;
    bool dataset_average = false;
  } rc;
  {
    auto [sub, P] = command("rcov", "add edges between low-degree nodes to shrink degree COV");
    rc.io.add(*P);
    P->add("fractions", rc.fractions, "target COV fractions");
    P->add("max-added", rc.max_added, "edge budget per graph (<0 = none)");
    P->add("dataset-average", rc.dataset_average, "target a fraction of the dataset-average COV");
    commands[sub].second = [&](const Global&, ArtifactWriter& w, json&) {
      auto [ds, classes] = rc.io.load();
      (void)classes;
      CsvTable t({"fraction", "index", "cov_before", "cov_after", "target", "added", "reached", "stop"});
      for (double f : rc.fractions) {
        RcovConfig c;
        c.target_fraction = f;
        if (rc.max_added >= 0) c.max_added = rc.max_added;
        c.dataset_average = rc.dataset_average;
        auto res = reduce_cov(ds, c);
        for (std::size_t i = 0; i < res.size(); ++i)
          t.row({num(f), std::to_string(i), num(res[i].cov_before), num(res[i].cov_after), num(res[i].target),
                 std::to_string(res[i].added), res[i].reached ? "1" : "0", to_string(res[i].stop)});
        w.write("rcov_" + num(f) + ".jsonl", jsonl(transformed(ds, res)));
      }
      w.write("rcov.csv", t.str());
      std::cout << "transformed " << ds.size() << " graphs at " << rc.fractions.size() << " fraction(s)\n";
    };
  }
  struct {
    InputOpts io;
    std::vector<double> fractions{0.8, 0.5};
    int folds = 10;
    int seeds = 3;
    ModelOpts mo;
  } br;
  br.mo.layers = 3;
  br.mo.epochs = 200;
  br.mo.patience = 50;
  {
    auto [sub, P] = command("bench-rcov", "k-fold accuracy: original vs R-COV vs edge-stripped graphs");
    br.io.add(*P);
    P->add("fractions", br.fractions, "target COV fractions");
    P->add("folds", br.folds, "cross-validation folds");
    P->add("seeds", br.seeds, "seeds");
    br.mo.add(*P);
    commands[sub].second = [&](const Global& gl, ArtifactWriter& w, json&) {
      auto [ds, classes] = br.io.load();
      require(!ds.empty(), "bench-rcov: empty dataset");
      require(classes >= 2, "bench-rcov: need at least two classes");
      GnnConfig mc = br.mo.model(ds.front().graph.d());
      TrainConfig tc = br.mo.train(gl.seed);
      if (classes > 2) {
        mc.out_classes = classes;
        tc.loss = LossKind::softmax_xent;
      }
      auto rows = bench_rcov(ds, br.fractions, std::min<int>(br.folds, static_cast<int>(ds.size())), br.seeds, mc, tc,
                             gl.jobs);
      CsvTable t({"setting", "mean_acc", "std_acc"});
      for (const auto& r : rows) t.row({r.setting, num(r.mean), num(r.std)});
      w.write("bench_rcov.csv", t.str());
      for (const auto& r : rows) std::cout << r.setting << "  " << num(r.mean) << " +- " << num(r.std) << "\n";
    };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    json cfg = json::object();
    if (!g.config.empty()) {
      std::ifstream in(g.config);
      if (!in) throw IoError("cannot open config " + g.config);
      try {
        cfg = json::parse(in);
      } catch (const json::exception& e) {
        throw ConfigError("config " + g.config + ": " + e.what());
      }
      if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
    }
    if (seed_opt->count() == 0) {
      if (cfg.contains("seed")) {
        g.seed = cfg["seed"].get<std::uint64_t>();
      } else if (const char* env = std::getenv("STRUCTFIT_SEED")) {
        try {
          std::size_t used = 0;
          g.seed = std::stoull(env, &used);
          if (used != std::string(env).size()) throw std::invalid_argument(env);
        } catch (const std::exception&) {
          throw ConfigError(std::string("STRUCTFIT_SEED is not an integer: ") + env);
        }
      }
    }
    if (out_opt->count() == 0 && cfg.contains("out")) g.out = cfg["out"].get<std::string>();
    if (jobs_opt->count() == 0 && cfg.contains("jobs")) g.jobs = cfg["jobs"].get<int>();
    if (g.jobs < 1) throw ConfigError("--jobs must be >= 1");

    CLI::App* sub = app.get_subcommands().front();
    auto& [params, run] = commands.at(sub);
    json resolved = params->resolve(cfg);
    resolved["seed"] = g.seed;
    ArtifactWriter writer(g.out);
    run(g, writer, resolved);
    writer.manifest(sub->get_name(), resolved);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
