// trajocc command-line front end.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "trajocc/bench.hpp"

using namespace trajocc;

namespace {

int exit_code(ErrorCategory c) { return 2 + static_cast<int>(c); }

RunConfig load_or_default(const std::string& path) {
  if (!path.empty()) return load_run_config(path);
  RunConfig c;
  c.sync_network();
  c.validate();
  return c;
}

// Rebuilds the config after command-line overrides so derived fields and
// validation stay consistent.
RunConfig with_overrides(RunConfig c, const std::string& layout, const std::string& seed) {
  Json j = to_json(c);
  if (!layout.empty()) {
    j["layout"] = layout;
    const Layout l = parse_layout(layout);
    j["network"]["variant"] = to_string(l == Layout::kOcc2D                           ? NetVariant::kConv2D
                                        : (l == Layout::kOccCh || l == Layout::kLaserCh) ? NetVariant::kConv1D
                                                                                         : NetVariant::kFC);
  }
  if (!seed.empty()) j["seed"] = std::stoull(seed);
  return parse_run_config(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trajectory-occupancy navigation: offline precompute, PPO training, evaluation"};
  app.require_subcommand(1);

  std::string config, out, seed, layout, checkpoint, map_name = "M4", cache;
  std::vector<std::string> configs;
  int episodes = 10;
  bool resume = false, quiet = false, with_h = false;
  std::uint64_t eval_seed = 1;

  auto* pre = app.add_subcommand("precompute", "build the primitive bank and classified grid, print stats");
  pre->add_option("--config", config, "run config (JSON)");
  pre->add_option("--cache", cache, "cache directory (default: config cache_dir)");

  auto* train = app.add_subcommand("train", "train a policy");
  train->add_option("--config", config, "run config (JSON)");
  train->add_option("--seed", seed, "override the config seed");
  train->add_option("--layout", layout, "override the observation layout");
  train->add_option("--out", out, "output directory")->required();
  train->add_flag("--resume", resume, "continue from <out>/checkpoint.ckpt");
  train->add_flag("--quiet", quiet, "no progress output");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint with greedy actions");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--map", map_name, "map name or path");
  eval->add_option("--episodes", episodes, "episodes")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed, "evaluation seed");
  eval->add_option("--config", config, "expected run config; must match the checkpoint layout");
  eval->add_option("--layout", layout, "expected observation layout");
  eval->add_option("--trace", out, "write a per-step CSV trace of the first episode");

  auto* bench = app.add_subcommand("benchmark", "train/load several methods and evaluate on the test maps");
  bench->add_option("--config", configs, "run configs (two or more)")->required();
  bench->add_option("--out", out, "output directory")->required();
  bench->add_option("--episodes", episodes, "episodes per map")->check(CLI::PositiveNumber);
  bench->add_option("--seed", eval_seed, "evaluation seed");
  bench->add_flag("--quiet", quiet, "no progress output");

  auto* inspect = app.add_subcommand("inspect", "dump offline or online intermediate data");
  inspect->require_subcommand(1);
  auto* ins_bank = inspect->add_subcommand("bank", "primitive bank as text");
  ins_bank->add_option("--config", config, "run config (JSON)");
  auto* ins_occ = inspect->add_subcommand("occupancy", "occupancy values after reset on a map");
  ins_occ->add_option("--config", config, "run config (JSON)");
  ins_occ->add_option("--map", map_name, "map name or path");
  ins_occ->add_option("--seed", eval_seed, "reset seed");
  auto* ins_trace = inspect->add_subcommand("trace", "per-step CSV of a uniform-random episode");
  ins_trace->add_option("--config", config, "run config (JSON)");
  ins_trace->add_option("--map", map_name, "map name or path");
  ins_trace->add_option("--seed", eval_seed, "reset seed");
  ins_trace->add_flag("--occupancy", with_h, "append H columns");

  auto* maps = app.add_subcommand("map-list", "list built-in maps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorCategory::kUsage);
  }

  try {
    if (*pre) {
      const auto c = load_or_default(config);
      const auto r = precompute(c.env, cache.empty() ? fs::path(c.cache_dir) : fs::path(cache));
      print_offline_stats(std::cout, r);
    } else if (*train) {
      const auto c = with_overrides(load_or_default(config), layout, seed);
      TrainOptions o;
      o.out_dir = out;
      o.resume = resume;
      o.log = quiet ? nullptr : &std::cerr;
      const auto r = train_run(c, o);
      std::cout << "trained " << r.timestep << " steps; checkpoint " << r.checkpoint.string() << '\n';
    } else if (*eval) {
      const auto ck = load_checkpoint(checkpoint);
      if (!config.empty()) {
        const auto expect = load_run_config(config);
        if (expect.env.layout != ck.config.env.layout || expect.network.variant != ck.config.network.variant) {
          throw ShapeError("checkpoint layout " + to_string(ck.config.env.layout) + " does not match config layout " +
                           to_string(expect.env.layout));
        }
      }
      if (!layout.empty() && parse_layout(layout) != ck.config.env.layout) {
        throw ShapeError("checkpoint layout " + to_string(ck.config.env.layout) + " does not match requested " +
                         layout);
      }
      const auto net = network_from_checkpoint(ck);
      const auto pre_r = precompute(ck.config.env, ck.config.cache_dir);
      NavEnv env(ck.config.env, resolve_map(map_name), pre_r.offline);
      std::ofstream trace;
      if (!out.empty()) {
        trace.open(out);
        if (!trace) throw IoError("cannot write " + out);
        env.set_trace(&trace);
        evaluate_greedy(net, env, 1, eval_seed);
        env.set_trace(nullptr);
      }
      const auto rep = evaluate_greedy(net, env, episodes, eval_seed);
      std::cout << eval_csv_header() << '\n' << eval_csv_row(ck.config.name, rep) << '\n';
    } else if (*bench) {
      std::vector<RunConfig> cs;
      for (const auto& p : configs) cs.push_back(load_run_config(p));
      BenchmarkOptions o;
      o.out_dir = out;
      o.episodes = episodes;
      o.seed = eval_seed;
      o.log = quiet ? nullptr : &std::cerr;
      const auto rows = benchmark(cs, o);
      std::cout << eval_csv_header() << '\n';
      for (const auto& r : rows) std::cout << eval_csv_row(r.method, r.report) << '\n';
      std::cout << "\nrank method mean_success\n";
      int rank = 1;
      for (const auto& s : rank_methods(rows)) std::printf("%d %s %.3f\n", rank++, s.method.c_str(), s.mean_success);
    } else if (*ins_bank) {
      const auto c = load_or_default(config);
      write_bank_text(std::cout, build_primitive_bank(c.env.action_space, c.env.horizon, c.env.n_t));
    } else if (*ins_occ) {
      auto c = load_or_default(config);
      if (is_laser(c.env.layout)) throw UsageError("inspect occupancy needs an occupancy layout");
      const auto r = precompute(c.env, c.cache_dir);
      NavEnv env(c.env, resolve_map(map_name), r.offline);
      env.reset(eval_seed);
      const auto& s = env.sim_state().robot;
      std::cout << "# map " << env.map().name << " pose " << s.x << ' ' << s.y << ' ' << s.theta << " goal "
                << env.goal().x << ' ' << env.goal().y << '\n';
      std::cout << "index,v,w,H\n";
      const auto& h = env.occupancy_values();
      for (std::size_t i = 0; i < h.size(); ++i) {
        const auto a = r.offline.bank->actions[i];
        std::cout << i << ',' << a.v << ',' << a.w << ',' << h[i] << '\n';
      }
    } else if (*ins_trace) {
      const auto c = load_or_default(config);
      const auto r = precompute(c.env, c.cache_dir);
      NavEnv env(c.env, resolve_map(map_name), r.offline);
      env.set_trace(&std::cout, with_h);
      evaluate(env, 1, eval_seed, UniformRandomPolicy(eval_seed));
    } else if (*maps) {
      std::cout << "name,width,height,static_shapes,agents\n";
      for (const auto& m : builtin_maps()) {
        std::cout << m.name << ',' << m.bounds.x_max - m.bounds.x_min << ',' << m.bounds.y_max - m.bounds.y_min
                  << ',' << m.static_shapes.size() << ',' << m.agents.size() << '\n';
      }
    }
  } catch (const Error& e) {
    std::cerr << "error[" << to_string(e.category()) << "]: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error[io]: " << e.what() << '\n';
    return exit_code(ErrorCategory::kIo);
  }
  return 0;
}
