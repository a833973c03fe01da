#pragma once

// Run configuration: everything needed to reproduce a training or
// evaluation run, read from and written to JSON.
//
// Every section and key is optional; omitted values take the defaults
// below. Unknown keys are rejected so that typos surface as errors with
// the offending path (e.g. "grid.tau_prority: unknown key").

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "trajocc/common.hpp"
#include "trajocc/env.hpp"
#include "trajocc/nn.hpp"
#include "trajocc/ppo.hpp"

namespace trajocc {

using Json = nlohmann::json;

struct StageSpec {
  std::string map = "T0S";
  std::int64_t steps = 300000;
};

struct RunConfig {
  std::string name = "occ_fc";
  std::uint64_t seed = 1;
  EnvConfig env;
  NetworkSpec network;
  PpoConfig ppo;
  std::vector<StageSpec> stages = {StageSpec{}};
  std::vector<std::string> eval_maps = {"M1", "M2", "M3", "M4", "M5"};
  int eval_episodes = 10;
  int checkpoint_every = 10;  // optimization phases between checkpoints
  std::string cache_dir = "cache";

  std::int64_t total_steps() const {
    std::int64_t s = 0;
    for (const auto& st : stages) s += st.steps;
    return s;
  }

  // Network input geometry follows from the environment.
  void sync_network() {
    network.n_actions = env.action_space.size();
    network.frame_len = static_cast<int>(env.frame_len());
    network.n_stack = env.n_stack;
    network.n_side = static_cast<int>(Observation::kSideInputs);
  }

  void validate() const {
    env.validate();
    network.validate();
    ppo.validate();
    if (stages.empty()) throw ConfigError("training.stages: at least one stage required");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (stages[i].steps < 1) {
        throw ConfigError("training.stages[" + std::to_string(i) + "].steps must be >= 1");
      }
    }
    if (eval_episodes < 1) throw ConfigError("eval.episodes must be >= 1");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    check_layout(env.layout, network.variant);
  }

  static void check_layout(Layout layout, NetVariant variant) {
    const bool ok = (variant == NetVariant::kFC && (layout == Layout::kOcc1D || layout == Layout::kLaser1D)) ||
                    (variant == NetVariant::kConv1D && (layout == Layout::kOccCh || layout == Layout::kLaserCh)) ||
                    (variant == NetVariant::kConv2D && layout == Layout::kOcc2D);
    if (!ok) {
      throw ShapeError("layout " + to_string(layout) + " cannot feed a " + to_string(variant) + " network");
    }
  }
};

namespace detail {

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }

  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(child(it.key()) + ": unknown key");
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(child(key) + ": wrong type");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const Json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "" : path_ + ": "; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_run_config(const Json& j) {
  RunConfig c;
  try {
    detail::Reader root(j, "");
    root.get("name", c.name);
    root.get("seed", c.seed);
    if (root.has("layout")) {
      std::string l;
      root.get("layout", l);
      c.env.layout = parse_layout(l);
    }
    root.get("checkpoint_every", c.checkpoint_every);
    root.get("cache_dir", c.cache_dir);

    if (root.has("action_space")) {
      detail::Reader r(root.at("action_space"), "action_space");
      int n_v = c.env.action_space.n_v(), n_w = c.env.action_space.n_w();
      double v_max = c.env.action_space.v_max(), w_min = c.env.action_space.w_min(),
             w_max = c.env.action_space.w_max();
      r.get("n_v", n_v);
      r.get("n_w", n_w);
      r.get("v_max", v_max);
      r.get("w_min", w_min);
      r.get("w_max", w_max);
      c.env.action_space = ActionSpace(n_v, n_w, v_max, w_min, w_max);
    }
    if (root.has("kinematics")) {
      detail::Reader r(root.at("kinematics"), "kinematics");
      r.get("horizon", c.env.horizon);
      r.get("n_T", c.env.n_t);
    }
    if (root.has("grid")) {
      detail::Reader r(root.at("grid"), "grid");
      double res = c.env.grid.resolution();
      GridExtent e = c.env.grid.extent();
      r.get("resolution", res);
      if (r.has("extent")) {
        std::vector<double> ex;
        r.get("extent", ex);
        if (ex.size() != 6) throw ConfigError("grid.extent: expected [x_min, x_max, y_min, y_max, z_min, z_max]");
        e = {ex[0], ex[1], ex[2], ex[3], ex[4], ex[5]};
      }
      c.env.grid = GridSpec(res, e);
      r.get("tau_priority", c.env.tau.tau_priority);
      r.get("tau_support", c.env.tau.tau_support);
      r.get("beta_priority", c.env.weights.priority);
      r.get("beta_support", c.env.weights.support);
      r.get("sigma_max", c.env.sigma_max);
    }
    if (root.has("lidar")) {
      detail::Reader r(root.at("lidar"), "lidar");
      r.get("n_beams", c.env.lidar.n_beams);
      r.get("fov", c.env.lidar.fov);
      r.get("angle_min", c.env.lidar.angle_min);
      r.get("max_range", c.env.lidar.max_range);
      r.get("mount_x", c.env.lidar.mount_x);
      r.get("mount_y", c.env.lidar.mount_y);
      r.get("mount_z", c.env.lidar.mount_z);
    }
    if (root.has("reward")) {
      detail::Reader r(root.at("reward"), "reward");
      r.get("mu_goal", c.env.reward.mu_goal);
      r.get("mu_fail", c.env.reward.mu_fail);
      r.get("alpha_target", c.env.reward.alpha_target);
      r.get("alpha_step_pen", c.env.reward.alpha_step_pen);
      r.get("tau_target", c.env.reward.tau_target);
      r.get("tau_fail", c.env.reward.tau_fail);
      r.get("n_max_ep_ts", c.env.reward.n_max_ep_ts);
    }
    if (root.has("robot")) {
      detail::Reader r(root.at("robot"), "robot");
      r.get("radius", c.env.robot_radius);
      r.get("dt", c.env.dt);
    }
    if (root.has("obs")) {
      detail::Reader r(root.at("obs"), "obs");
      r.get("n_stack", c.env.n_stack);
      r.get("n_skip", c.env.n_skip);
      r.get("laser_downsample", c.env.laser_downsample);
      r.get("normalize_target", c.env.normalize_target);
    }
    if (root.has("network")) {
      detail::Reader r(root.at("network"), "network");
      if (r.has("variant")) {
        std::string v;
        r.get("variant", v);
        c.network.variant = parse_net_variant(v);
      }
      r.get("hidden", c.network.hidden);
      r.get("shared", c.network.shared);
      if (r.has("conv")) {
        std::vector<std::vector<int>> layers;
        r.get("conv", layers);
        c.network.conv.clear();
        for (const auto& l : layers) {
          if (l.size() != 3) throw ConfigError("network.conv: each layer is [channels, kernel, stride]");
          c.network.conv.push_back({l[0], l[1], l[2]});
        }
      }
    }
    if (root.has("ppo")) {
      detail::Reader r(root.at("ppo"), "ppo");
      r.get("gamma", c.ppo.gamma);
      r.get("lambda", c.ppo.lambda);
      r.get("clip", c.ppo.clip);
      r.get("learning_rate", c.ppo.learning_rate);
      r.get("epochs", c.ppo.epochs);
      r.get("minibatch", c.ppo.minibatch);
      r.get("n_rollout", c.ppo.n_rollout);
      r.get("ent_coef", c.ppo.ent_coef);
      r.get("vf_coef", c.ppo.vf_coef);
      r.get("max_grad_norm", c.ppo.max_grad_norm);
      r.get("total_timesteps", c.ppo.total_timesteps);
    }
    if (root.has("training")) {
      detail::Reader r(root.at("training"), "training");
      if (r.has("stages")) {
        const Json& st = r.at("stages");
        if (!st.is_array()) throw ConfigError("training.stages: expected an array");
        c.stages.clear();
        for (std::size_t i = 0; i < st.size(); ++i) {
          detail::Reader s(st[i], "training.stages[" + std::to_string(i) + "]");
          StageSpec spec;
          s.get("map", spec.map);
          s.get("steps", spec.steps);
          c.stages.push_back(spec);
        }
      }
    } else if (j.contains("ppo") && j.at("ppo").contains("total_timesteps")) {
      c.stages = {StageSpec{"T0S", c.ppo.total_timesteps}};
    }
    if (root.has("eval")) {
      detail::Reader r(root.at("eval"), "eval");
      r.get("maps", c.eval_maps);
      r.get("episodes", c.eval_episodes);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  c.ppo.total_timesteps = c.total_steps();
  c.sync_network();
  c.validate();
  return c;
}

inline Json to_json(const RunConfig& c) {
  const auto& e = c.env;
  const auto& ex = e.grid.extent();
  Json conv = Json::array();
  for (const auto& l : c.network.conv) conv.push_back({l.channels, l.kernel, l.stride});
  Json stages = Json::array();
  for (const auto& s : c.stages) stages.push_back({{"map", s.map}, {"steps", s.steps}});
  return Json{
      {"name", c.name},
      {"seed", c.seed},
      {"layout", to_string(e.layout)},
      {"checkpoint_every", c.checkpoint_every},
      {"cache_dir", c.cache_dir},
      {"action_space",
       {{"n_v", e.action_space.n_v()},
        {"n_w", e.action_space.n_w()},
        {"v_max", e.action_space.v_max()},
        {"w_min", e.action_space.w_min()},
        {"w_max", e.action_space.w_max()}}},
      {"kinematics", {{"horizon", e.horizon}, {"n_T", e.n_t}}},
      {"grid",
       {{"resolution", e.grid.resolution()},
        {"extent", {ex.x_min, ex.x_max, ex.y_min, ex.y_max, ex.z_min, ex.z_max}},
        {"tau_priority", e.tau.tau_priority},
        {"tau_support", e.tau.tau_support},
        {"beta_priority", e.weights.priority},
        {"beta_support", e.weights.support},
        {"sigma_max", e.sigma_max}}},
      {"lidar",
       {{"n_beams", e.lidar.n_beams},
        {"fov", e.lidar.fov},
        {"angle_min", e.lidar.angle_min},
        {"max_range", e.lidar.max_range},
        {"mount_x", e.lidar.mount_x},
        {"mount_y", e.lidar.mount_y},
        {"mount_z", e.lidar.mount_z}}},
      {"reward",
       {{"mu_goal", e.reward.mu_goal},
        {"mu_fail", e.reward.mu_fail},
        {"alpha_target", e.reward.alpha_target},
        {"alpha_step_pen", e.reward.alpha_step_pen},
        {"tau_target", e.reward.tau_target},
        {"tau_fail", e.reward.tau_fail},
        {"n_max_ep_ts", e.reward.n_max_ep_ts}}},
      {"robot", {{"radius", e.robot_radius}, {"dt", e.dt}}},
      {"obs",
       {{"n_stack", e.n_stack},
        {"n_skip", e.n_skip},
        {"laser_downsample", e.laser_downsample},
        {"normalize_target", e.normalize_target}}},
      {"network", {{"variant", to_string(c.network.variant)}, {"hidden", c.network.hidden}, {"shared", c.network.shared}, {"conv", conv}}},
      {"ppo",
       {{"gamma", c.ppo.gamma},
        {"lambda", c.ppo.lambda},
        {"clip", c.ppo.clip},
        {"learning_rate", c.ppo.learning_rate},
        {"epochs", c.ppo.epochs},
        {"minibatch", c.ppo.minibatch},
        {"n_rollout", c.ppo.n_rollout},
        {"ent_coef", c.ppo.ent_coef},
        {"vf_coef", c.ppo.vf_coef},
        {"max_grad_norm", c.ppo.max_grad_norm},
        {"total_timesteps", c.ppo.total_timesteps}}},
      {"training", {{"stages", stages}}},
      {"eval", {{"maps", c.eval_maps}, {"episodes", c.eval_episodes}}},
  };
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_run_config(j);
}

inline void save_run_config(const std::string& path, const RunConfig& c) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << to_json(c).dump(2) << '\n';
}

}  // namespace trajocc
