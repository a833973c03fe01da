#pragma once

// Velocity-space discretization and the motion-primitive bank for a
// differential-drive (unicycle) robot.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "trajocc/common.hpp"

namespace trajocc {

class ActionSpace {
 public:
  ActionSpace(int n_v, int n_w, double v_max, double w_min, double w_max)
      : n_v_(n_v), n_w_(n_w), v_max_(v_max), w_min_(w_min), w_max_(w_max) {
    if (n_v < 1) throw ConfigError("action_space.n_v must be >= 1");
    if (n_w < 1) throw ConfigError("action_space.n_w must be >= 1");
    if (!(v_max > 0.0)) throw ConfigError("action_space.v_max must be > 0");
    if (!(w_min < w_max)) throw ConfigError("action_space.w_min must be < w_max");
  }

  int n_v() const { return n_v_; }
  int n_w() const { return n_w_; }
  double v_max() const { return v_max_; }
  double w_min() const { return w_min_; }
  double w_max() const { return w_max_; }
  int size() const { return n_v_ * n_w_; }

  // Endpoint-inclusive uniform grids; a 1-point grid is the lower bound.
  double v_at(int iv) const { return n_v_ == 1 ? 0.0 : (iv * v_max_) / (n_v_ - 1); }
  double w_at(int iw) const {
    if (n_w_ == 1 || iw == 0) return w_min_;
    if (iw == n_w_ - 1) return w_max_;
    return ((n_w_ - 1 - iw) * w_min_ + iw * w_max_) / (n_w_ - 1);
  }

 private:
  int n_v_;
  int n_w_;
  double v_max_;
  double w_min_;
  double w_max_;
};

struct ActionTuple {
  double v = 0.0;
  double w = 0.0;
  int index = 0;

  friend bool operator==(const ActionTuple&, const ActionTuple&) = default;
};

// Row-major: v outer, w inner.
inline ActionTuple index_to_action(const ActionSpace& space, int index) {
  if (index < 0 || index >= space.size()) {
    throw RangeError("action index " + std::to_string(index) + " out of range");
  }
  const int iv = index / space.n_w();
  const int iw = index % space.n_w();
  return {space.v_at(iv), space.w_at(iw), index};
}

// Recovers the index of the grid action nearest to (v, w).
inline int action_to_index(const ActionSpace& space, const ActionTuple& a) {
  auto snap = [](double value, double lo, double step, int n) {
    if (n == 1) return 0;
    const long i = std::lround((value - lo) / step);
    if (i < 0 || i >= n) throw RangeError("action component outside the action space");
    return static_cast<int>(i);
  };
  const int iv = snap(a.v, 0.0, space.v_max() / std::max(1, space.n_v() - 1), space.n_v());
  const int iw = snap(a.w, space.w_min(),
                      (space.w_max() - space.w_min()) / std::max(1, space.n_w() - 1), space.n_w());
  return iv * space.n_w() + iw;
}

inline std::vector<ActionTuple> discretize_actions(const ActionSpace& space) {
  std::vector<ActionTuple> out;
  out.reserve(static_cast<std::size_t>(space.size()));
  for (int i = 0; i < space.size(); ++i) out.push_back(index_to_action(space, i));
  return out;
}

struct Trajectory {
  int action_index = 0;
  std::vector<Point3> points;
};

// Exact unicycle displacement after time t from the origin, heading +x.
// The chord has length v*t*sinc(w*t/2) and points along w*t/2.
inline Point3 unicycle_displacement(double v, double w, double t) {
  const double half = 0.5 * w * t;
  const double chord = v * t * sinc(half);
  return {chord * std::cos(half), chord * std::sin(half), 0.0};
}

// Samples at t_i = i*horizon/n_T for i = 1..n_T.
inline Trajectory rollout_trajectory(const ActionTuple& a, double horizon, int n_t) {
  if (!(horizon > 0.0)) throw ConfigError("horizon must be > 0");
  if (n_t < 2) throw ConfigError("n_T must be >= 2");
  Trajectory traj;
  traj.action_index = a.index;
  traj.points.reserve(static_cast<std::size_t>(n_t));
  for (int i = 1; i <= n_t; ++i) {
    traj.points.push_back(unicycle_displacement(a.v, a.w, i * horizon / n_t));
  }
  return traj;
}

struct PrimitiveBank {
  ActionSpace space;
  double horizon = 2.5;
  int n_t = 20;
  std::vector<ActionTuple> actions;
  std::vector<Trajectory> trajectories;

  std::size_t size() const { return trajectories.size(); }
};

inline PrimitiveBank build_primitive_bank(const ActionSpace& space, double horizon = 2.5,
                                          int n_t = 20) {
  PrimitiveBank bank{space, horizon, n_t, discretize_actions(space), {}};
  bank.trajectories.reserve(bank.actions.size());
  for (const auto& a : bank.actions) bank.trajectories.push_back(rollout_trajectory(a, horizon, n_t));
  return bank;
}

// Plain-text bank format:
//   trajocc-bank 1
//   n_v <int> n_w <int> v_max <f> w_min <f> w_max <f>
//   horizon <f> n_T <int>
//   then one line per point: <traj> <i> <v> <w> <x> <y> <z>
inline void write_bank_text(std::ostream& os, const PrimitiveBank& bank) {
  char buf[256];
  os << "trajocc-bank 1\n";
  std::snprintf(buf, sizeof buf, "n_v %d n_w %d v_max %.17g w_min %.17g w_max %.17g\n",
                bank.space.n_v(), bank.space.n_w(), bank.space.v_max(), bank.space.w_min(),
                bank.space.w_max());
  os << buf;
  std::snprintf(buf, sizeof buf, "horizon %.17g n_T %d\n", bank.horizon, bank.n_t);
  os << buf;
  for (std::size_t j = 0; j < bank.size(); ++j) {
    const auto& a = bank.actions[j];
    const auto& pts = bank.trajectories[j].points;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu %zu %.17g %.17g %.17g %.17g %.17g\n", j, i, a.v, a.w,
                    pts[i].x, pts[i].y, pts[i].z);
      os << buf;
    }
  }
}

inline PrimitiveBank read_bank_text(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "trajocc-bank" || version != 1) {
    throw IoError("not a trajocc-bank v1 stream");
  }
  std::string k1, k2, k3, k4, k5, k6, k7;
  int n_v = 0, n_w = 0, n_t = 0;
  double v_max = 0, w_min = 0, w_max = 0, horizon = 0;
  if (!(is >> k1 >> n_v >> k2 >> n_w >> k3 >> v_max >> k4 >> w_min >> k5 >> w_max >> k6 >>
        horizon >> k7 >> n_t)) {
    throw IoError("truncated bank header");
  }
  PrimitiveBank bank{ActionSpace(n_v, n_w, v_max, w_min, w_max), horizon, n_t, {}, {}};
  bank.actions = discretize_actions(bank.space);
  bank.trajectories.resize(bank.actions.size());
  for (std::size_t j = 0; j < bank.actions.size(); ++j) {
    bank.trajectories[j].action_index = static_cast<int>(j);
    bank.trajectories[j].points.resize(static_cast<std::size_t>(n_t));
  }
  std::size_t j = 0, i = 0;
  double v = 0, w = 0;
  Point3 p;
  std::size_t read = 0;
  while (is >> j >> i >> v >> w >> p.x >> p.y >> p.z) {
    if (j >= bank.size() || i >= static_cast<std::size_t>(n_t)) throw IoError("bank point out of range");
    bank.trajectories[j].points[i] = p;
    ++read;
  }
  if (read != bank.size() * static_cast<std::size_t>(n_t)) throw IoError("bank point count mismatch");
  return bank;
}

}  // namespace trajocc
