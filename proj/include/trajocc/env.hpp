#pragma once

// Episodic navigation environment: lidar -> occupancy array -> trajectory
// occupancy values -> stacked observation, with goal/fail/step rewards.

#include <cmath>
#include <cstdint>
#include <memory>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "trajocc/common.hpp"
#include "trajocc/kinematics.hpp"
#include "trajocc/occupancy_eval.hpp"
#include "trajocc/voxel_grid.hpp"
#include "trajocc/world.hpp"

namespace trajocc {

enum class Layout { kOcc1D, kOccCh, kOcc2D, kLaser1D, kLaserCh };

inline std::string to_string(Layout l) {
  switch (l) {
    case Layout::kOcc1D: return "occ1d";
    case Layout::kOccCh: return "occch";
    case Layout::kOcc2D: return "occ2d";
    case Layout::kLaser1D: return "laser1d";
    case Layout::kLaserCh: return "laserch";
  }
  return "?";
}

inline Layout parse_layout(const std::string& s) {
  for (auto l : {Layout::kOcc1D, Layout::kOccCh, Layout::kOcc2D, Layout::kLaser1D, Layout::kLaserCh}) {
    if (to_string(l) == s) return l;
  }
  throw ConfigError("unknown layout '" + s + "' (expected occ1d|occch|occ2d|laser1d|laserch)");
}

inline bool is_laser(Layout l) { return l == Layout::kLaser1D || l == Layout::kLaserCh; }

// ---------------------------------------------------------------------------
// Reward

struct RewardConfig {
  double mu_goal = 20.0;
  double mu_fail = -20.0;
  double alpha_target = 10.0;
  double alpha_step_pen = -5.0;
  double tau_target = 0.3;
  double tau_fail = 0.05;
  int n_max_ep_ts = 500;

  void validate() const {
    if (!(mu_goal > 0.0)) throw ConfigError("reward.mu_goal must be > 0");
    if (!(mu_fail < 0.0)) throw ConfigError("reward.mu_fail must be < 0");
    if (!(alpha_step_pen < 0.0)) throw ConfigError("reward.alpha_step_pen must be < 0");
    if (!(tau_target > 0.0)) throw ConfigError("reward.tau_target must be > 0");
    if (!(tau_fail >= 0.0)) throw ConfigError("reward.tau_fail must be >= 0");
    if (n_max_ep_ts <= 0) throw ConfigError("reward.n_max_ep_ts must be > 0");
  }
};

enum class Outcome { kRunning, kGoal, kCollision, kTimeout };

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::kRunning: return "running";
    case Outcome::kGoal: return "goal";
    case Outcome::kCollision: return "collision";
    case Outcome::kTimeout: return "timeout";
  }
  return "?";
}

struct RewardResult {
  double reward = 0.0;
  Outcome outcome = Outcome::kRunning;
};

// Goal takes precedence over failure; timeout fires once step_count
// exceeds n_max_ep_ts.
inline RewardResult compute_reward(double d_prev, double d_now, double d_obs, int step_count,
                                   const RewardConfig& cfg) {
  if (d_now < cfg.tau_target) return {cfg.mu_goal, Outcome::kGoal};
  if (step_count > cfg.n_max_ep_ts) return {cfg.mu_fail, Outcome::kTimeout};
  if (d_obs < cfg.tau_fail) return {cfg.mu_fail, Outcome::kCollision};
  const double progress = cfg.alpha_target * (d_prev - d_now);
  const double step_pen = cfg.alpha_step_pen / cfg.n_max_ep_ts;
  return {progress + step_pen, Outcome::kRunning};
}

// ---------------------------------------------------------------------------
// Observation pieces

struct TargetObs {
  double d_target = 0.0;
  double theta_target = 0.0;
};

inline TargetObs build_target_obs(const RobotState& s, const Vec2& goal) {
  const double dx = goal.x - s.x;
  const double dy = goal.y - s.y;
  const double d = std::hypot(dx, dy);
  if (d == 0.0) return {0.0, 0.0};
  return {d, wrap_angle(std::atan2(dy, dx) - s.theta)};
}

struct ActionObs {
  double v_pre = 0.0;
  double w_pre = 0.0;
};

// History ring of per-step frames. stacked(k) is the frame k*(n_skip+1)
// steps back, so index 0 is always the newest.
class StackBuffer {
 public:
  StackBuffer(int n_stack, int n_skip) : n_stack_(n_stack), n_skip_(n_skip) {
    if (n_stack < 1) throw ConfigError("obs.n_stack must be >= 1");
    if (n_skip < 0) throw ConfigError("obs.n_skip must be >= 0");
    ring_.resize(capacity());
  }

  std::size_t capacity() const {
    return static_cast<std::size_t>((n_stack_ - 1) * (n_skip_ + 1) + 1);
  }
  int n_stack() const { return n_stack_; }
  int n_skip() const { return n_skip_; }
  bool warm() const { return warm_; }

  // Replicates the first frame into every slot.
  void reset(std::span<const double> frame) {
    for (auto& f : ring_) f.assign(frame.begin(), frame.end());
    head_ = 0;
    warm_ = true;
  }

  void push(std::span<const double> frame) {
    if (!warm_) {
      reset(frame);
      return;
    }
    head_ = (head_ + 1) % ring_.size();
    ring_[head_].assign(frame.begin(), frame.end());
  }

  const std::vector<double>& stacked(int k) const {
    const std::size_t back = static_cast<std::size_t>(k) * static_cast<std::size_t>(n_skip_ + 1);
    return ring_[(head_ + ring_.size() - back) % ring_.size()];
  }

  std::size_t frame_len() const { return ring_.front().size(); }

 private:
  int n_stack_;
  int n_skip_;
  std::vector<std::vector<double>> ring_;
  std::size_t head_ = 0;
  bool warm_ = false;
};

// Occupancy (or laser) block plus the four scalar side inputs.
// 1D and channel layouts store frame t at [t*frame_len, (t+1)*frame_len);
// the 2D layout is frame_len rows by n_stack columns, row-major.
struct Observation {
  Layout layout = Layout::kOcc1D;
  std::size_t n_stack = 1;
  std::size_t frame_len = 0;
  std::vector<double> block;
  TargetObs target;
  ActionObs action;

  static constexpr std::size_t kSideInputs = 4;

  double at(std::size_t t, std::size_t j) const {
    return layout == Layout::kOcc2D ? block[j * n_stack + t] : block[t * frame_len + j];
  }
  std::size_t input_size() const { return block.size() + kSideInputs; }

  template <typename Scalar>
  void write_input(std::span<Scalar> out, double target_scale = 1.0) const {
    if (out.size() != input_size()) throw ShapeError("observation input size mismatch");
    for (std::size_t i = 0; i < block.size(); ++i) out[i] = static_cast<Scalar>(block[i]);
    out[block.size()] = static_cast<Scalar>(target.d_target * target_scale);
    out[block.size() + 1] = static_cast<Scalar>(target.theta_target);
    out[block.size() + 2] = static_cast<Scalar>(action.v_pre);
    out[block.size() + 3] = static_cast<Scalar>(action.w_pre);
  }
};

inline Observation build_observation(Layout layout, const StackBuffer& stack, const TargetObs& target,
                                     const ActionObs& action) {
  if (!stack.warm()) throw UsageError("observation requested before the stack was filled");
  Observation obs;
  obs.layout = layout;
  obs.n_stack = static_cast<std::size_t>(stack.n_stack());
  obs.frame_len = stack.frame_len();
  obs.block.resize(obs.n_stack * obs.frame_len);
  for (std::size_t t = 0; t < obs.n_stack; ++t) {
    const auto& f = stack.stacked(static_cast<int>(t));
    for (std::size_t j = 0; j < obs.frame_len; ++j) {
      if (layout == Layout::kOcc2D) {
        obs.block[j * obs.n_stack + t] = f[j];
      } else {
        obs.block[t * obs.frame_len + j] = f[j];
      }
    }
  }
  obs.target = target;
  obs.action = action;
  return obs;
}

// Every (n_beams / n_out)-th beam starting at beam 0, divided by max range.
inline std::vector<double> build_laser_obs(const ScanFrame& scan, const LidarSpec& spec,
                                           std::size_t n_out = 90) {
  const std::size_t n = scan.ranges.size();
  if (n_out == 0 || n_out > n || n % n_out != 0) {
    throw ConfigError("laser downsample count must divide the beam count");
  }
  const std::size_t stride = n / n_out;
  std::vector<double> out(n_out);
  for (std::size_t i = 0; i < n_out; ++i) out[i] = scan.ranges[i * stride] / spec.max_range;
  return out;
}

// ---------------------------------------------------------------------------
// Environment

struct EnvConfig {
  ActionSpace action_space{5, 21, 0.8, -1.0, 1.0};
  double horizon = 2.5;
  int n_t = 20;
  GridSpec grid;
  Thresholds tau;
  TwoLevelWeight weights;
  double sigma_max = 1.0;
  LidarSpec lidar;
  int laser_downsample = 90;
  RewardConfig reward;
  double robot_radius = 0.2;
  double dt = 0.1;
  int n_stack = 5;
  int n_skip = 2;
  Layout layout = Layout::kOcc1D;
  bool normalize_target = false;

  void validate() const {
    if (!(horizon > 0.0)) throw ConfigError("kinematics.horizon must be > 0");
    if (n_t < 2) throw ConfigError("kinematics.n_T must be >= 2");
    tau.validate();
    if (!(weights.priority > 0.0 && weights.support > 0.0)) {
      throw ConfigError("grid.beta_* weights must be > 0");
    }
    if (!(sigma_max > 0.0)) throw ConfigError("grid.sigma_max must be > 0");
    lidar.validate();
    reward.validate();
    if (!(robot_radius > 0.0)) throw ConfigError("robot.radius must be > 0");
    if (!(dt > 0.0)) throw ConfigError("robot.dt must be > 0");
    if (n_stack < 1) throw ConfigError("obs.n_stack must be >= 1");
    if (n_skip < 0) throw ConfigError("obs.n_skip must be >= 0");
    if (is_laser(layout) &&
        (laser_downsample < 1 || lidar.n_beams % laser_downsample != 0)) {
      throw ConfigError("obs.laser_downsample must divide lidar.n_beams");
    }
  }

  std::size_t frame_len() const {
    return is_laser(layout) ? static_cast<std::size_t>(laser_downsample)
                            : static_cast<std::size_t>(action_space.size());
  }
  std::size_t input_size() const {
    return frame_len() * static_cast<std::size_t>(n_stack) + Observation::kSideInputs;
  }
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  Outcome outcome = Outcome::kRunning;
};

// Offline products shared read-only between environment instances.
struct OfflineStage {
  std::shared_ptr<const PrimitiveBank> bank;
  std::shared_ptr<const ClassifiedGrid> grid;
};

inline OfflineStage build_offline_stage(const EnvConfig& cfg) {
  auto bank = std::make_shared<PrimitiveBank>(build_primitive_bank(cfg.action_space, cfg.horizon, cfg.n_t));
  auto grid = std::make_shared<ClassifiedGrid>(classify_bank(*bank, cfg.grid, cfg.tau, cfg.weights));
  return {std::move(bank), std::move(grid)};
}

class NavEnv {
 public:
  NavEnv(EnvConfig cfg, WorldMap map, OfflineStage offline)
      : cfg_(std::move(cfg)),
        map_(std::move(map)),
        offline_(std::move(offline)),
        stack_(cfg_.n_stack, cfg_.n_skip),
        occupancy_(cfg_.grid.size(), cfg_.sigma_max) {
    cfg_.validate();
    validate_map(map_);
    if (!offline_.bank || !offline_.grid) throw ConfigError("environment needs a primitive bank and grid");
    if (offline_.grid->n_trajectories() != offline_.bank->size()) {
      throw ConfigError("classified grid and primitive bank are not index-aligned");
    }
    if (offline_.bank->size() != static_cast<std::size_t>(cfg_.action_space.size())) {
      throw ConfigError("primitive bank size does not match the action space");
    }
    target_scale_ = cfg_.normalize_target
                        ? 1.0 / std::hypot(map_.bounds.x_max - map_.bounds.x_min,
                                           map_.bounds.y_max - map_.bounds.y_min)
                        : 1.0;
  }

  Observation reset(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double clearance = cfg_.reward.tau_fail + 0.1;
    const auto sg = sample_start_goal(map_, rng, cfg_.reward.tau_target, cfg_.robot_radius, clearance);
    sim_ = initial_sim_state(map_, sg.start);
    goal_ = sg.goal;
    steps_ = 0;
    done_ = false;
    outcome_ = Outcome::kRunning;
    prev_action_ = {};
    stack_.reset(sense());
    return observe();
  }

  StepResult step(int action_index) {
    if (done_) throw UsageError("step() called on a finished episode; call reset()");
    const auto action = index_to_action(cfg_.action_space, action_index);
    const double d_prev = distance_to_goal();
    sim_ = step_world(sim_, map_, action, cfg_.dt);
    ++steps_;
    const double d_obs = obstacle_distance(sim_, map_, cfg_.robot_radius);
    const auto r = compute_reward(d_prev, distance_to_goal(), d_obs, steps_, cfg_.reward);
    prev_action_ = {action.v, action.w};
    stack_.push(sense());
    outcome_ = r.outcome;
    done_ = r.outcome != Outcome::kRunning;
    if (trace_) write_trace_row(action, r);
    return {observe(), r.reward, done_, r.outcome};
  }

  // Optional per-step CSV trace: t,x,y,theta,action,v,w,reward,outcome[,H_0..]
  void set_trace(std::ostream* os, bool with_occupancy = false) {
    trace_ = os;
    trace_h_ = with_occupancy;
    if (trace_) {
      *trace_ << "t,x,y,theta,action,v,w,reward,outcome";
      if (trace_h_)
        for (std::size_t j = 0; j < offline_.bank->size(); ++j) *trace_ << ",H_" << j;
      *trace_ << '\n';
    }
  }

  const EnvConfig& config() const { return cfg_; }
  const WorldMap& map() const { return map_; }
  const SimState& sim_state() const { return sim_; }
  const Vec2& goal() const { return goal_; }
  int steps() const { return steps_; }
  bool done() const { return done_; }
  Outcome outcome() const { return outcome_; }
  const OccupancyVector& occupancy_values() const { return h_; }
  const ScanFrame& last_scan() const { return scan_; }
  std::size_t n_actions() const { return offline_.bank->size(); }
  std::size_t input_size() const { return cfg_.input_size(); }
  double target_scale() const { return target_scale_; }

 private:
  double distance_to_goal() const {
    return std::hypot(goal_.x - sim_.robot.x, goal_.y - sim_.robot.y);
  }

  std::vector<double> sense() {
    scan_ = raycast_scan(sim_, map_, cfg_.lidar);
    if (is_laser(cfg_.layout)) {
      return build_laser_obs(scan_, cfg_.lidar, static_cast<std::size_t>(cfg_.laser_downsample));
    }
    const auto hits = scan_to_points(scan_, cfg_.lidar);
    update_occupancy(occupancy_, hits, cfg_.grid);
    evaluate_all(*offline_.grid, occupancy_, h_);
    return h_;
  }

  Observation observe() const {
    return build_observation(cfg_.layout, stack_, build_target_obs(sim_.robot, goal_), prev_action_);
  }

  void write_trace_row(const ActionTuple& a, const RewardResult& r) {
    *trace_ << sim_.time << ',' << sim_.robot.x << ',' << sim_.robot.y << ',' << sim_.robot.theta << ','
            << a.index << ',' << a.v << ',' << a.w << ',' << r.reward << ',' << to_string(r.outcome);
    if (trace_h_)
      for (double h : h_) *trace_ << ',' << h;
    *trace_ << '\n';
  }

  EnvConfig cfg_;
  WorldMap map_;
  OfflineStage offline_;
  StackBuffer stack_;
  OccupancyArray occupancy_;
  OccupancyVector h_;
  ScanFrame scan_;
  SimState sim_;
  Vec2 goal_;
  ActionObs prev_action_;
  int steps_ = 0;
  bool done_ = true;
  Outcome outcome_ = Outcome::kRunning;
  double target_scale_ = 1.0;
  std::ostream* trace_ = nullptr;
  bool trace_h_ = false;
};

// ---------------------------------------------------------------------------
// Curriculum

struct CurriculumStage {
  WorldMap map;
  std::int64_t steps = 0;
};

// Runs the stages in order; the trainer owns the policy, so parameters carry
// over between stages by construction.
template <typename StageTrainer>
void curriculum(std::span<const CurriculumStage> stages, StageTrainer&& train_stage) {
  if (stages.empty()) throw ConfigError("curriculum needs at least one stage");
  for (std::size_t i = 0; i < stages.size(); ++i) train_stage(i, stages[i]);
}

}  // namespace trajocc
