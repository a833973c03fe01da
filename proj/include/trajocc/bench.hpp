#pragma once

// Command-level drivers: offline precompute with caching, training runs,
// greedy evaluation and multi-method benchmarks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "trajocc/checkpoint.hpp"
#include "trajocc/config.hpp"
#include "trajocc/env.hpp"
#include "trajocc/nn.hpp"
#include "trajocc/ppo.hpp"
#include "trajocc/world.hpp"

namespace trajocc {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Offline stage

struct PrecomputeResult {
  OfflineStage offline;
  bool cache_hit = false;
  std::uint64_t key = 0;
  fs::path cache_path;  // empty when caching is disabled
};

inline std::uint64_t offline_key(const EnvConfig& cfg, const PrimitiveBank& bank) {
  return classification_key(bank, cfg.grid, cfg.tau, cfg.weights);
}

// Builds the primitive bank (cheap) and loads the classified grid from
// cache_dir when a file with a matching key exists; otherwise classifies
// and writes the cache. An empty cache_dir disables caching.
inline PrecomputeResult precompute(const EnvConfig& cfg, const fs::path& cache_dir) {
  cfg.validate();
  auto bank = std::make_shared<PrimitiveBank>(build_primitive_bank(cfg.action_space, cfg.horizon, cfg.n_t));
  PrecomputeResult res;
  res.key = offline_key(cfg, *bank);
  if (!cache_dir.empty()) {
    char name[40];
    std::snprintf(name, sizeof name, "grid-%016llx.bin", static_cast<unsigned long long>(res.key));
    res.cache_path = cache_dir / name;
    if (fs::exists(res.cache_path)) {
      auto [grid, key] = read_grid_cache(res.cache_path.string());
      if (key == res.key && grid.n_trajectories() == bank->size()) {
        res.offline = {bank, std::make_shared<ClassifiedGrid>(std::move(grid))};
        res.cache_hit = true;
        return res;
      }
    }
  }
  auto grid = std::make_shared<ClassifiedGrid>(classify_bank(*bank, cfg.grid, cfg.tau, cfg.weights));
  if (!res.cache_path.empty()) {
    fs::create_directories(cache_dir);
    write_grid_cache(res.cache_path.string(), *grid, res.key);
  }
  res.offline = {bank, std::move(grid)};
  return res;
}

struct OfflineStats {
  std::size_t n_voxels = 0;
  std::vector<std::size_t> priority;  // per trajectory
  std::vector<std::size_t> support;
  std::size_t priority_total = 0;
  std::size_t support_total = 0;
};

inline OfflineStats offline_stats(const ClassifiedGrid& grid) {
  OfflineStats s;
  s.n_voxels = grid.spec.size();
  for (const auto& set : grid.sets) {
    s.priority.push_back(set.priority.size());
    s.support.push_back(set.support.size());
    s.priority_total += set.priority.size();
    s.support_total += set.support.size();
  }
  return s;
}

inline void print_offline_stats(std::ostream& os, const PrecomputeResult& r) {
  const auto& bank = *r.offline.bank;
  const auto s = offline_stats(*r.offline.grid);
  const auto& spec = r.offline.grid->spec;
  os << "cache: " << (r.cache_path.empty() ? "disabled" : (r.cache_hit ? "hit " : "miss ") + r.cache_path.string())
     << '\n';
  os << "trajectories: " << bank.size() << "  sampling points: " << bank.n_t << "  horizon: " << bank.horizon
     << " s\n";
  os << "grid: " << spec.n_x() << " x " << spec.n_y() << " x " << spec.n_z() << " = " << s.n_voxels
     << " voxels at " << spec.resolution() << " m\n";
  os << "priority total: " << s.priority_total << "  support total: " << s.support_total << '\n';
  os << "index,v,w,priority,support\n";
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const auto& a = bank.actions[i];
    os << i << ',' << a.v << ',' << a.w << ',' << s.priority[i] << ',' << s.support[i] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalReport {
  std::string map;
  int episodes = 0;
  double success_rate = 0.0;
  double collision_rate = 0.0;
  double timeout_rate = 0.0;
  double mean_time_to_goal = std::numeric_limits<double>::quiet_NaN();  // over successful episodes, sim seconds
  double mean_episode_steps = 0.0;
  double mean_decision_ms = 0.0;  // wall time per policy decision
};

// Runs n_episodes with policy(observation, env) -> action index. Episode k
// resets with the k-th draw of mt19937_64(seed).
template <typename Policy>
EvalReport evaluate(NavEnv& env, int n_episodes, std::uint64_t seed, Policy&& policy) {
  if (n_episodes < 1) throw UsageError("n_episodes must be >= 1");
  std::mt19937_64 seeds(seed);
  EvalReport rep;
  rep.map = env.map().name;
  rep.episodes = n_episodes;
  int goals = 0, collisions = 0, timeouts = 0;
  double goal_time = 0.0, decision_s = 0.0;
  std::int64_t steps = 0;
  for (int k = 0; k < n_episodes; ++k) {
    auto obs = env.reset(seeds());
    Outcome outcome = Outcome::kRunning;
    while (outcome == Outcome::kRunning) {
      const auto t0 = std::chrono::steady_clock::now();
      const int a = policy(obs, env);
      decision_s += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      auto r = env.step(a);
      ++steps;
      outcome = r.outcome;
      obs = std::move(r.observation);
    }
    switch (outcome) {
      case Outcome::kGoal:
        ++goals;
        goal_time += env.sim_state().time;
        break;
      case Outcome::kCollision: ++collisions; break;
      default: ++timeouts; break;
    }
  }
  const double n = n_episodes;
  rep.success_rate = goals / n;
  rep.collision_rate = collisions / n;
  rep.timeout_rate = timeouts / n;
  if (goals > 0) rep.mean_time_to_goal = goal_time / goals;
  rep.mean_episode_steps = static_cast<double>(steps) / n;
  rep.mean_decision_ms = steps > 0 ? 1e3 * decision_s / static_cast<double>(steps) : 0.0;
  return rep;
}

class GreedyPolicy {
 public:
  explicit GreedyPolicy(const PolicyValueNet<float>& net)
      : net_(net), x_(net.input_size(), 1) {}

  int operator()(const Observation& obs, const NavEnv& env) {
    obs.write_input<float>(std::span<float>(x_.data(), static_cast<std::size_t>(x_.size())), env.target_scale());
    return greedy_action(net_.forward(x_).logits.col(0));
  }

 private:
  const PolicyValueNet<float>& net_;
  Eigen::MatrixXf x_;
};

class UniformRandomPolicy {
 public:
  explicit UniformRandomPolicy(std::uint64_t seed) : rng_(seed) {}

  int operator()(const Observation&, const NavEnv& env) {
    std::uniform_int_distribution<int> d(0, static_cast<int>(env.n_actions()) - 1);
    return d(rng_);
  }

 private:
  std::mt19937_64 rng_;
};

inline EvalReport evaluate_greedy(const PolicyValueNet<float>& net, NavEnv& env, int n_episodes,
                                  std::uint64_t seed) {
  if (static_cast<std::size_t>(net.input_size()) != env.input_size()) {
    throw ShapeError("network input " + std::to_string(net.input_size()) + " does not match observation size " +
                     std::to_string(env.input_size()));
  }
  return evaluate(env, n_episodes, seed, GreedyPolicy(net));
}

inline std::string eval_csv_header() {
  return "method,map,episodes,success_rate,collision_rate,timeout_rate,mean_time_to_goal,mean_episode_steps,"
         "mean_decision_ms";
}

inline std::string eval_csv_row(const std::string& method, const EvalReport& r) {
  std::ostringstream os;
  os << method << ',' << r.map << ',' << r.episodes << ',' << r.success_rate << ',' << r.collision_rate << ','
     << r.timeout_rate << ',' << r.mean_time_to_goal << ',' << r.mean_episode_steps << ',' << r.mean_decision_ms;
  return os.str();
}

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  fs::path out_dir;
  bool resume = false;
  std::ostream* log = nullptr;
  // Offline products to reuse instead of precomputing; must match the config.
  const OfflineStage* offline = nullptr;
};

struct TrainResult {
  std::vector<CurveRow> curve;  // rows written by this invocation
  std::int64_t timestep = 0;
  fs::path checkpoint;
};

inline std::string curve_csv_header() {
  return "timestep,stage,map,episodes,mean_reward,success_rate,policy_loss,value_loss,entropy,approx_kl,"
         "clip_fraction";
}

inline std::string curve_csv_row(const CurveRow& r, const std::string& map) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%lld,%d,%s,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<long long>(r.timestep), r.stage, map.c_str(), r.episodes, r.mean_reward,
                r.success_rate, r.loss.policy_loss, r.loss.value_loss, r.loss.entropy, r.loss.approx_kl,
                r.loss.clip_fraction);
  return buf;
}

namespace detail {

// Keeps the header and rows with timestep <= last.
inline void truncate_curve(const fs::path& path, std::int64_t last) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> keep;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      keep.push_back(line);
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) <= last) keep.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

}  // namespace detail

// Runs the configured curriculum (one stage = single-map training) and writes
// into out_dir: config.json, curve.csv, checkpoint.ckpt (latest) and
// final.ckpt. With resume set and a checkpoint present, continues from it.
inline TrainResult train_run(const RunConfig& cfg, const TrainOptions& opt) {
  cfg.validate();
  if (opt.out_dir.empty()) throw UsageError("training needs an output directory");
  fs::create_directories(opt.out_dir);
  const fs::path cfg_path = opt.out_dir / "config.json";
  const fs::path curve_path = opt.out_dir / "curve.csv";
  const fs::path ckpt_path = opt.out_dir / "checkpoint.ckpt";
  const fs::path final_path = opt.out_dir / "final.ckpt";

  std::vector<WorldMap> maps;
  for (const auto& s : cfg.stages) maps.push_back(resolve_map(s.map));

  OfflineStage offline;
  if (opt.offline) {
    offline = *opt.offline;
  } else {
    offline = precompute(cfg.env, cfg.cache_dir.empty() ? fs::path() : fs::path(cfg.cache_dir)).offline;
  }

  PolicyValueNet<float> net(cfg.network);
  std::mt19937_64 init_rng(cfg.seed);
  net.init(init_rng);
  PpoTrainer trainer(net, cfg.ppo, cfg.seed + 1);

  int first_stage = 0;
  std::int64_t first_stage_done = 0;
  if (opt.resume && fs::exists(ckpt_path)) {
    auto ck = load_checkpoint(ckpt_path.string());
    if (to_json(ck.config) != to_json(cfg)) {
      throw ConfigError("resume: " + ckpt_path.string() + " was produced by a different config");
    }
    net.params() = ck.params;
    trainer.optimizer().m = ck.adam.m;
    trainer.optimizer().v = ck.adam.v;
    trainer.optimizer().t = ck.adam.t;
    restore_rng(trainer.rng(), ck.rng_state);
    trainer.set_timestep(ck.timestep);
    first_stage = ck.stage;
    first_stage_done = ck.stage_step;
    detail::truncate_curve(curve_path, ck.timestep);
    if (opt.log) *opt.log << "resuming at step " << ck.timestep << " (stage " << ck.stage << ")\n";
  } else {
    save_run_config(cfg_path.string(), cfg);
    std::ofstream(curve_path, std::ios::trunc) << curve_csv_header() << '\n';
  }

  std::ofstream curve(curve_path, std::ios::app);
  if (!curve) throw IoError("cannot write " + curve_path.string());

  auto save = [&](int stage, std::int64_t stage_step, const fs::path& path) {
    Checkpoint ck;
    ck.config = cfg;
    ck.params = net.params();
    ck.adam = trainer.optimizer();
    ck.rng_state = rng_state_string(trainer.rng());
    ck.timestep = trainer.timestep();
    ck.stage = stage;
    ck.stage_step = stage_step;
    save_checkpoint(path.string(), ck, net.shapes());
  };

  TrainResult result;
  for (int s = first_stage; s < static_cast<int>(cfg.stages.size()); ++s) {
    const auto& stage = cfg.stages[static_cast<std::size_t>(s)];
    const std::int64_t already = s == first_stage ? first_stage_done : 0;
    const std::int64_t remaining = stage.steps - already;
    const std::int64_t stage_start = trainer.timestep() - already;
    if (opt.log) {
      *opt.log << "stage " << s << " map " << stage.map << " steps " << stage.steps << " begins at "
               << trainer.timestep() << '\n';
    }
    if (remaining > 0) {
      NavEnv env(cfg.env, maps[static_cast<std::size_t>(s)], offline);
      int updates = 0;
      trainer.run(env, remaining, s, [&](const CurveRow& row) {
        curve << curve_csv_row(row, stage.map) << '\n';
        curve.flush();
        result.curve.push_back(row);
        if (opt.log) {
          *opt.log << "step " << row.timestep << " stage " << s << " reward " << row.mean_reward << " success "
                   << row.success_rate << '\n';
        }
        if (++updates % cfg.checkpoint_every == 0) save(s, row.timestep - stage_start, ckpt_path);
      });
    }
    save(s + 1, 0, ckpt_path);
  }
  save(static_cast<int>(cfg.stages.size()), 0, final_path);
  result.timestep = trainer.timestep();
  result.checkpoint = final_path;
  return result;
}

// Network restored from a checkpoint, ready for evaluation.
inline PolicyValueNet<float> network_from_checkpoint(const Checkpoint& ck) {
  PolicyValueNet<float> net(ck.config.network);
  net.params() = ck.params;
  return net;
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchmarkRow {
  std::string method;
  EvalReport report;
};

struct BenchmarkSummary {
  std::string method;
  double mean_success = 0.0;
};

inline std::vector<BenchmarkSummary> rank_methods(const std::vector<BenchmarkRow>& rows) {
  std::map<std::string, std::pair<double, int>> acc;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (!acc.count(r.method)) order.push_back(r.method);
    auto& a = acc[r.method];
    a.first += r.report.success_rate;
    a.second += 1;
  }
  std::vector<BenchmarkSummary> out;
  for (const auto& m : order) out.push_back({m, acc[m].first / acc[m].second});
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.mean_success > b.mean_success; });
  return out;
}

struct BenchmarkOptions {
  fs::path out_dir;
  int episodes = 10;
  std::uint64_t seed = 1;
  std::ostream* log = nullptr;
};

// Trains (or reuses a finished run with the same config under
// out_dir/<name>) each method, evaluates it on its eval maps, and writes
// out_dir/benchmark.csv and out_dir/summary.txt.
inline std::vector<BenchmarkRow> benchmark(const std::vector<RunConfig>& configs, const BenchmarkOptions& opt) {
  if (configs.size() < 2) throw UsageError("benchmark needs at least two run configs");
  for (std::size_t i = 0; i < configs.size(); ++i)
    for (std::size_t k = i + 1; k < configs.size(); ++k)
      if (configs[i].name == configs[k].name) throw ConfigError("duplicate method name " + configs[i].name);
  fs::create_directories(opt.out_dir);
  std::vector<BenchmarkRow> rows;
  for (const auto& cfg : configs) {
    const fs::path dir = opt.out_dir / cfg.name;
    const fs::path final_path = dir / "final.ckpt";
    bool reuse = false;
    if (fs::exists(final_path)) reuse = to_json(load_checkpoint(final_path.string()).config) == to_json(cfg);
    const auto pre = precompute(cfg.env, cfg.cache_dir.empty() ? fs::path() : fs::path(cfg.cache_dir));
    if (!reuse) {
      if (opt.log) *opt.log << "training " << cfg.name << '\n';
      TrainOptions t;
      t.out_dir = dir;
      t.log = opt.log;
      t.offline = &pre.offline;
      train_run(cfg, t);
    } else if (opt.log) {
      *opt.log << "reusing " << final_path.string() << '\n';
    }
    const auto net = network_from_checkpoint(load_checkpoint(final_path.string()));
    for (const auto& m : cfg.eval_maps) {
      NavEnv env(cfg.env, resolve_map(m), pre.offline);
      rows.push_back({cfg.name, evaluate_greedy(net, env, opt.episodes, opt.seed)});
      if (opt.log) *opt.log << eval_csv_row(cfg.name, rows.back().report) << '\n';
    }
  }
  std::ofstream csv(opt.out_dir / "benchmark.csv");
  csv << eval_csv_header() << '\n';
  for (const auto& r : rows) csv << eval_csv_row(r.method, r.report) << '\n';
  std::ofstream summary(opt.out_dir / "summary.txt");
  int rank = 1;
  for (const auto& s : rank_methods(rows)) {
    summary << rank++ << ' ' << s.method << ' ' << std::fixed << std::setprecision(3) << s.mean_success << '\n';
  }
  return rows;
}

}  // namespace trajocc
