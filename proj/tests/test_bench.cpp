#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "trajocc/bench.hpp"

using namespace trajocc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("trajocc_test_bench_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Json tiny_json(const std::string& name, const std::string& layout = "occ1d") {
  return {{"name", name},
          {"seed", 3},
          {"layout", layout},
          {"cache_dir", ""},
          {"checkpoint_every", 2},
          {"network", {{"hidden", {32, 16}}}},
          {"ppo", {{"n_rollout", 128}, {"minibatch", 64}, {"epochs", 2}}},
          {"training", {{"stages", {{{"map", "T0S"}, {"steps", 300}}, {{"map", "T0D"}, {"steps", 200}}}}}},
          {"eval", {{"maps", {"M4", "M1"}}, {"episodes", 2}}}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& cwd, std::string* out = nullptr) {
  const fs::path log = cwd / "cli_out.txt";
  const std::string cmd = "cd '" + cwd.string() + "' && '" TRAJOCC_CLI "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  if (out) *out = slurp(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Precompute, CacheMissThenHit) {
  const auto dir = scratch("cache");
  EnvConfig cfg;
  const auto a = precompute(cfg, dir);
  EXPECT_FALSE(a.cache_hit);
  ASSERT_TRUE(fs::exists(a.cache_path));
  const auto b = precompute(cfg, dir);
  EXPECT_TRUE(b.cache_hit);
  EXPECT_EQ(a.key, b.key);
  for (std::size_t j = 0; j < a.offline.grid->sets.size(); ++j) {
    EXPECT_EQ(a.offline.grid->sets[j].priority.size(), b.offline.grid->sets[j].priority.size());
    EXPECT_EQ(a.offline.grid->sets[j].support.size(), b.offline.grid->sets[j].support.size());
  }
  EnvConfig other;
  other.tau.tau_priority = 0.2;
  EXPECT_FALSE(precompute(other, dir).cache_hit);
  EXPECT_TRUE(precompute(cfg, "").cache_path.empty());
}

TEST(Precompute, PriorityCountsMatchBruteForce) {
  EnvConfig cfg;
  const auto r = precompute(cfg, "");
  const auto stats = offline_stats(*r.offline.grid);
  const auto& spec = cfg.grid;
  const auto& e = spec.extent();
  const double h = spec.resolution();
  for (std::size_t j = 0; j < r.offline.bank->size(); j += 13) {
    const auto& pts = r.offline.bank->trajectories[j].points;
    std::size_t p = 0, s = 0;
    for (std::size_t iz = 0; iz < spec.n_z(); ++iz)
      for (std::size_t iy = 0; iy < spec.n_y(); ++iy)
        for (std::size_t ix = 0; ix < spec.n_x(); ++ix) {
          const Point3 c{e.x_min + (ix + 0.5) * h, e.y_min + (iy + 0.5) * h, e.z_min + (iz + 0.5) * h};
          double d = 1e9;
          for (const auto& q : pts) d = std::min(d, distance(c, q));
          if (d < cfg.tau.tau_priority) ++p;
          else if (d < cfg.tau.tau_support) ++s;
        }
    EXPECT_EQ(stats.priority[j], p) << j;
    EXPECT_EQ(stats.support[j], s) << j;
  }
  std::ostringstream os;
  print_offline_stats(os, r);
  EXPECT_NE(os.str().find("cache: disabled"), std::string::npos);
  EXPECT_NE(os.str().find("index,v,w,priority,support"), std::string::npos);
}

TEST(Evaluate, RatesSumToOneAndRandomPolicyFails) {
  EnvConfig cfg;
  const auto pre = precompute(cfg, "");
  NavEnv env(cfg, builtin_map("M4"), pre.offline);
  const auto rep = evaluate(env, 100, 5, UniformRandomPolicy(6));
  EXPECT_DOUBLE_EQ(rep.success_rate + rep.collision_rate + rep.timeout_rate, 1.0);
  EXPECT_LT(rep.success_rate, 0.1);
  EXPECT_GT(rep.mean_episode_steps, 0.0);
  const auto again = evaluate(env, 100, 5, UniformRandomPolicy(6));
  EXPECT_EQ(again.success_rate, rep.success_rate);
  EXPECT_EQ(again.mean_episode_steps, rep.mean_episode_steps);
  EXPECT_THROW(evaluate(env, 0, 5, UniformRandomPolicy(6)), UsageError);
}

TEST(Evaluate, GreedyChecksInputSize) {
  EnvConfig cfg;
  const auto pre = precompute(cfg, "");
  NavEnv env(cfg, builtin_map("T0S"), pre.offline);
  NetworkSpec spec;
  spec.frame_len = 90;
  PolicyValueNet<float> net(spec);
  EXPECT_THROW(evaluate_greedy(net, env, 1, 1), ShapeError);
}

TEST(TrainRun, CurveAndCheckpointsAreDeterministic) {
  const auto cfg = parse_run_config(tiny_json("det"));
  const auto a = scratch("det_a"), b = scratch("det_b");
  std::ostringstream log;
  TrainOptions oa;
  oa.out_dir = a;
  oa.log = &log;
  const auto ra = train_run(cfg, oa);
  TrainOptions ob;
  ob.out_dir = b;
  train_run(cfg, ob);
  EXPECT_EQ(ra.timestep, 500);
  EXPECT_EQ(slurp(a / "curve.csv"), slurp(b / "curve.csv"));
  EXPECT_EQ(load_checkpoint((a / "final.ckpt").string()).params, load_checkpoint((b / "final.ckpt").string()).params);
  // 300 steps in chunks of 128 -> 3 updates, 200 -> 2.
  const auto curve = slurp(a / "curve.csv");
  EXPECT_EQ(count_lines(curve), 6u);
  EXPECT_EQ(curve.substr(0, curve.find('\n')), curve_csv_header());
  EXPECT_NE(curve.find("\n300,0,T0S,"), std::string::npos);
  EXPECT_NE(curve.find("\n500,1,T0D,"), std::string::npos);
  EXPECT_NE(log.str().find("stage 0 map T0S"), std::string::npos);
  EXPECT_NE(log.str().find("stage 1 map T0D steps 200 begins at 300"), std::string::npos);
  EXPECT_EQ(load_run_config((a / "config.json").string()).name, "det");
}

TEST(TrainRun, StageCarriesParametersOver) {
  auto j = tiny_json("carry");
  j["training"]["stages"] = {{{"map", "T0S"}, {"steps", 300}}};
  const auto one = parse_run_config(j);
  const auto two = parse_run_config(tiny_json("carry"));
  const auto a = scratch("carry_a"), b = scratch("carry_b");
  TrainOptions oa;
  oa.out_dir = a;
  train_run(one, oa);
  TrainOptions ob;
  ob.out_dir = b;
  train_run(two, ob);
  // The two-stage run's first stage is identical to the single-stage run.
  const auto ca = slurp(a / "curve.csv");
  const auto cb = slurp(b / "curve.csv");
  EXPECT_EQ(cb.substr(0, ca.size()), ca);
  EXPECT_EQ(load_checkpoint((a / "final.ckpt").string()).timestep, 300);
}

TEST(TrainRun, ResumeFinishesAtSameStep) {
  const auto cfg = parse_run_config(tiny_json("resume"));
  const auto dir = scratch("resume");
  TrainOptions o;
  o.out_dir = dir;
  train_run(cfg, o);
  // Roll the latest checkpoint back to mid-stage and continue from it.
  auto ck = load_checkpoint((dir / "checkpoint.ckpt").string());
  EXPECT_EQ(ck.stage, 2);
  ck.stage = 0;
  ck.stage_step = 256;
  ck.timestep = 256;
  PolicyValueNet<float> probe(cfg.network);
  save_checkpoint((dir / "checkpoint.ckpt").string(), ck, probe.shapes());
  o.resume = true;
  const auto r = train_run(cfg, o);
  EXPECT_EQ(r.timestep, 500);
  const auto curve = slurp(dir / "curve.csv");
  EXPECT_EQ(count_lines(curve), 6u);
  EXPECT_EQ(r.curve.front().timestep, 300);

  auto other = cfg;
  other.seed = 99;
  EXPECT_THROW(train_run(other, o), ConfigError);
}

TEST(Benchmark, RowsAndRanking) {
  const auto dir = scratch("bench");
  std::vector<RunConfig> cfgs = {parse_run_config(tiny_json("occ_fc")), parse_run_config(tiny_json("laser_fc", "laser1d"))};
  BenchmarkOptions o;
  o.out_dir = dir;
  o.episodes = 2;
  const auto rows = benchmark(cfgs, o);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(count_lines(slurp(dir / "benchmark.csv")), 5u);
  EXPECT_EQ(count_lines(slurp(dir / "summary.txt")), 2u);
  std::ostringstream log;
  o.log = &log;
  const auto again = benchmark(cfgs, o);
  EXPECT_NE(log.str().find("reusing"), std::string::npos);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(again[i].report.success_rate, rows[i].report.success_rate);
  EXPECT_THROW(benchmark({cfgs[0]}, o), UsageError);
  EXPECT_THROW(benchmark({cfgs[0], cfgs[0]}, o), ConfigError);

  const std::vector<BenchmarkRow> fake = {{"a", {"M1", 1, 0.2}}, {"b", {"M1", 1, 0.6}}, {"a", {"M2", 1, 0.4}},
                                          {"c", {"M1", 1, 0.3}}};
  const auto ranked = rank_methods(fake);
  ASSERT_EQ(ranked.size(), 3u);
  EXPECT_EQ(ranked[0].method, "b");
  EXPECT_EQ(ranked[1].method, "a");
  EXPECT_NEAR(ranked[1].mean_success, 0.3, 1e-15);
  EXPECT_EQ(ranked[2].method, "c");
}

TEST(Cli, ExitCodesAndOutputs) {
  const auto dir = scratch("cli");
  std::string out;
  EXPECT_EQ(run_cli("map-list", dir, &out), 0);
  EXPECT_NE(out.find("T0S,6,4,2,0"), std::string::npos);
  EXPECT_NE(out.find("T1D,12,10,0,13"), std::string::npos);

  EXPECT_EQ(run_cli("--bogus", dir), 8);
  EXPECT_EQ(run_cli("train", dir), 8);

  std::ofstream(dir / "unknown.json") << R"({"ppo": {"gama": 0.9}})";
  EXPECT_EQ(run_cli("train --config unknown.json --out x", dir, &out), 2);
  EXPECT_NE(out.find("ppo.gama"), std::string::npos);
  std::ofstream(dir / "mismatch.json") << R"({"layout": "occch"})";
  EXPECT_EQ(run_cli("train --config mismatch.json --out x", dir), 6);
  EXPECT_EQ(run_cli("eval --checkpoint nowhere.ckpt", dir), 9);

  std::ofstream(dir / "tiny.json") << tiny_json("cli").dump();
  EXPECT_EQ(run_cli("precompute --config tiny.json --cache c", dir, &out), 0);
  EXPECT_NE(out.find("cache: miss"), std::string::npos);
  EXPECT_EQ(run_cli("precompute --config tiny.json --cache c", dir, &out), 0);
  EXPECT_NE(out.find("cache: hit"), std::string::npos);
  EXPECT_NE(out.find("trajectories: 105"), std::string::npos);

  EXPECT_EQ(run_cli("train --config tiny.json --out run --quiet", dir, &out), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "final.ckpt"));
  EXPECT_EQ(run_cli("eval --checkpoint run/final.ckpt --map M4 --episodes 2 --trace t.csv", dir, &out), 0);
  EXPECT_NE(out.find(eval_csv_header()), std::string::npos);
  EXPECT_NE(slurp(dir / "t.csv").find("t,x,y,theta,action,v,w,reward,outcome"), std::string::npos);
  EXPECT_EQ(run_cli("eval --checkpoint run/final.ckpt --layout laser1d", dir), 6);

  std::ofstream(dir / "bad.map") << "trajocc-map 1\nbounds 0 0 4 4\n";
  EXPECT_EQ(run_cli("eval --checkpoint run/final.ckpt --map bad.map", dir), 3);

  EXPECT_EQ(run_cli("inspect occupancy --config tiny.json --map T0S --seed 2", dir, &out), 0);
  EXPECT_EQ(count_lines(out), 107u);
  EXPECT_EQ(run_cli("inspect bank --config tiny.json", dir, &out), 0);
  EXPECT_EQ(count_lines(out), 3u + 105u * 20u);
  EXPECT_EQ(run_cli("inspect trace --config tiny.json --map T0S --occupancy", dir, &out), 0);
  EXPECT_NE(out.find(",H_104"), std::string::npos);
}
