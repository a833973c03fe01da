#pragma once

// Planar desk-scale world: unicycle robot, static boxes and circles,
// scripted waypoint agents, analytic lidar and clearance queries.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "trajocc/common.hpp"
#include "trajocc/kinematics.hpp"

#ifndef TRAJOCC_MAP_DIR
#define TRAJOCC_MAP_DIR "maps"
#endif

namespace trajocc {

struct RobotState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double v = 0.0;
  double w = 0.0;

  friend bool operator==(const RobotState&, const RobotState&) = default;
};

struct Rect {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;

  double area() const { return (x_max - x_min) * (y_max - y_min); }
  bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
};

// Axis-aligned box given by centre and full side lengths.
struct Box {
  double cx = 0.0, cy = 0.0, sx = 0.0, sy = 0.0;
};

struct Circle {
  double cx = 0.0, cy = 0.0, r = 0.0;
};

using Shape = std::variant<Box, Circle>;

inline Shape translated(const Shape& s, double x, double y) {
  return std::visit(
      [&](auto shape) -> Shape {
        shape.cx = x;
        shape.cy = y;
        return shape;
      },
      s);
}

// Half extents of the shape's axis-aligned bounding box.
inline Vec2 half_extent(const Shape& s) {
  if (const auto* b = std::get_if<Box>(&s)) return {0.5 * b->sx, 0.5 * b->sy};
  const auto& c = std::get<Circle>(s);
  return {c.r, c.r};
}

// Kinematic agent looping through its waypoints (last connects to first)
// at constant speed.
struct AgentScript {
  Shape footprint;
  double speed = 0.5;
  std::vector<Vec2> waypoints;

  double loop_length() const {
    double len = 0.0;
    for (std::size_t i = 0; i < waypoints.size(); ++i) {
      const auto& a = waypoints[i];
      const auto& b = waypoints[(i + 1) % waypoints.size()];
      len += std::hypot(b.x - a.x, b.y - a.y);
    }
    return len;
  }

  // Position after travelling arc length s from the first waypoint.
  Vec2 position_at(double s) const {
    if (waypoints.size() < 2) return waypoints.empty() ? Vec2{} : waypoints.front();
    const double total = loop_length();
    if (!(total > 0.0)) return waypoints.front();
    s = std::fmod(s, total);
    if (s < 0.0) s += total;
    for (std::size_t i = 0; i < waypoints.size(); ++i) {
      const auto& a = waypoints[i];
      const auto& b = waypoints[(i + 1) % waypoints.size()];
      const double seg = std::hypot(b.x - a.x, b.y - a.y);
      if (s <= seg || i + 1 == waypoints.size()) {
        const double f = seg > 0.0 ? std::min(1.0, s / seg) : 0.0;
        return {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)};
      }
      s -= seg;
    }
    return waypoints.front();
  }
};

struct WorldMap {
  std::string name;
  Rect bounds;
  std::vector<Shape> static_shapes;
  std::vector<AgentScript> agents;
  Rect start_region;
  Rect goal_region;
};

struct SimState {
  RobotState robot;
  std::vector<double> agent_progress;  // arc length travelled per agent
  double time = 0.0;
};

struct LidarSpec {
  int n_beams = 360;
  double fov = 2.0 * kPi;
  double angle_min = 0.0;  // beam b points at angle_min + b * fov / n_beams
  double max_range = 5.0;
  double mount_x = 0.0;
  double mount_y = 0.0;
  double mount_z = 0.05;

  void validate() const {
    if (n_beams < 1) throw ConfigError("lidar.n_beams must be >= 1");
    if (!(fov > 0.0 && fov <= 2.0 * kPi + 1e-12)) throw ConfigError("lidar.fov must be in (0, 2pi]");
    if (!(max_range > 0.0)) throw ConfigError("lidar.max_range must be > 0");
  }
  double beam_angle(int b) const { return angle_min + b * (fov / n_beams); }
};

struct ScanFrame {
  std::vector<double> ranges;
};

// ---------------------------------------------------------------------------
// Geometry primitives

// Distance along the unit ray (ox, oy) + t (dx, dy) to the first hit, or +inf.
// Origins inside a solid shape report 0.
inline double ray_hit(const Box& b, double ox, double oy, double dx, double dy) {
  const double lo[2] = {b.cx - 0.5 * b.sx, b.cy - 0.5 * b.sy};
  const double hi[2] = {b.cx + 0.5 * b.sx, b.cy + 0.5 * b.sy};
  const double o[2] = {ox, oy};
  const double d[2] = {dx, dy};
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 2; ++k) {
    if (d[k] == 0.0) {
      if (o[k] < lo[k] || o[k] > hi[k]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t1 = (lo[k] - o[k]) / d[k];
    double t2 = (hi[k] - o[k]) / d[k];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
  }
  if (t_near > t_far || t_far < 0.0) return std::numeric_limits<double>::infinity();
  return std::max(t_near, 0.0);
}

inline double ray_hit(const Circle& c, double ox, double oy, double dx, double dy) {
  const double fx = ox - c.cx;
  const double fy = oy - c.cy;
  const double b = fx * dx + fy * dy;
  const double cc = fx * fx + fy * fy - c.r * c.r;
  if (cc <= 0.0) return 0.0;
  const double disc = b * b - cc;
  if (disc < 0.0 || b > 0.0) return std::numeric_limits<double>::infinity();
  // Stable smaller root of t^2 + 2bt + cc = 0 with b <= 0.
  const double q = -b + std::sqrt(disc);
  return cc / q;
}

inline double ray_hit(const Shape& s, double ox, double oy, double dx, double dy) {
  return std::visit([&](const auto& shape) { return ray_hit(shape, ox, oy, dx, dy); }, s);
}

// Exit distance from inside the bounds rectangle; 0 if the origin is outside.
inline double ray_exit(const Rect& r, double ox, double oy, double dx, double dy) {
  if (!r.contains(ox, oy)) return 0.0;
  double t = std::numeric_limits<double>::infinity();
  if (dx > 0.0) t = std::min(t, (r.x_max - ox) / dx);
  if (dx < 0.0) t = std::min(t, (r.x_min - ox) / dx);
  if (dy > 0.0) t = std::min(t, (r.y_max - oy) / dy);
  if (dy < 0.0) t = std::min(t, (r.y_min - oy) / dy);
  return t;
}

// Distance from a point to the shape's surface, 0 when inside.
inline double point_distance(const Box& b, double x, double y) {
  const double ex = std::max(std::abs(x - b.cx) - 0.5 * b.sx, 0.0);
  const double ey = std::max(std::abs(y - b.cy) - 0.5 * b.sy, 0.0);
  return std::hypot(ex, ey);
}

inline double point_distance(const Circle& c, double x, double y) {
  return std::max(std::hypot(x - c.cx, y - c.cy) - c.r, 0.0);
}

inline double point_distance(const Shape& s, double x, double y) {
  return std::visit([&](const auto& shape) { return point_distance(shape, x, y); }, s);
}

// Distance from an interior point to the nearest bounding wall; 0 outside.
inline double wall_distance(const Rect& r, double x, double y) {
  if (!r.contains(x, y)) return 0.0;
  return std::min({x - r.x_min, r.x_max - x, y - r.y_min, r.y_max - y});
}

// Disc-versus-shape contact, touching included.
inline bool disc_overlaps(const Box& b, double x, double y, double radius) {
  const double qx = std::clamp(x, b.cx - 0.5 * b.sx, b.cx + 0.5 * b.sx);
  const double qy = std::clamp(y, b.cy - 0.5 * b.sy, b.cy + 0.5 * b.sy);
  return (x - qx) * (x - qx) + (y - qy) * (y - qy) <= radius * radius;
}

inline bool disc_overlaps(const Circle& c, double x, double y, double radius) {
  const double rr = c.r + radius;
  return (x - c.cx) * (x - c.cx) + (y - c.cy) * (y - c.cy) <= rr * rr;
}

// ---------------------------------------------------------------------------
// World queries

inline std::vector<Shape> agent_shapes(const WorldMap& map, const SimState& state) {
  std::vector<Shape> out;
  out.reserve(map.agents.size());
  for (std::size_t i = 0; i < map.agents.size(); ++i) {
    const auto p = map.agents[i].position_at(
        i < state.agent_progress.size() ? state.agent_progress[i] : 0.0);
    out.push_back(translated(map.agents[i].footprint, p.x, p.y));
  }
  return out;
}

inline SimState initial_sim_state(const WorldMap& map, const RobotState& robot) {
  return {robot, std::vector<double>(map.agents.size(), 0.0), 0.0};
}

// Exact unicycle arc for the robot; agents advance speed*dt along their loops.
inline SimState step_world(const SimState& state, const WorldMap& map, const ActionTuple& action,
                           double dt) {
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  SimState next = state;
  const auto d = unicycle_displacement(action.v, action.w, dt);
  const double c = std::cos(state.robot.theta);
  const double s = std::sin(state.robot.theta);
  next.robot.x = state.robot.x + c * d.x - s * d.y;
  next.robot.y = state.robot.y + s * d.x + c * d.y;
  next.robot.theta = wrap_angle(state.robot.theta + action.w * dt);
  next.robot.v = action.v;
  next.robot.w = action.w;
  next.agent_progress.resize(map.agents.size(), 0.0);
  for (std::size_t i = 0; i < map.agents.size(); ++i) {
    next.agent_progress[i] += map.agents[i].speed * dt;
  }
  next.time += dt;
  return next;
}

inline ScanFrame raycast_scan(const SimState& state, const WorldMap& map, const LidarSpec& spec) {
  const auto& r = state.robot;
  const double c = std::cos(r.theta);
  const double s = std::sin(r.theta);
  const double ox = r.x + c * spec.mount_x - s * spec.mount_y;
  const double oy = r.y + s * spec.mount_x + c * spec.mount_y;
  const auto agents = agent_shapes(map, state);
  ScanFrame frame;
  frame.ranges.resize(static_cast<std::size_t>(spec.n_beams));
  for (int b = 0; b < spec.n_beams; ++b) {
    const double phi = r.theta + spec.beam_angle(b);
    const double dx = std::cos(phi);
    const double dy = std::sin(phi);
    double t = ray_exit(map.bounds, ox, oy, dx, dy);
    for (const auto& shape : map.static_shapes) t = std::min(t, ray_hit(shape, ox, oy, dx, dy));
    for (const auto& shape : agents) t = std::min(t, ray_hit(shape, ox, oy, dx, dy));
    frame.ranges[static_cast<std::size_t>(b)] = std::clamp(t, 0.0, spec.max_range);
  }
  return frame;
}

// Unsaturated beams as points in the robot frame.
inline std::vector<Point3> scan_to_points(const ScanFrame& scan, const LidarSpec& spec) {
  std::vector<Point3> pts;
  pts.reserve(scan.ranges.size());
  for (std::size_t b = 0; b < scan.ranges.size(); ++b) {
    const double r = scan.ranges[b];
    if (!(r < spec.max_range)) continue;
    const double phi = spec.beam_angle(static_cast<int>(b));
    pts.push_back({spec.mount_x + r * std::cos(phi), spec.mount_y + r * std::sin(phi), spec.mount_z});
  }
  return pts;
}

// Clearance between the robot disc and the nearest surface, floored at 0.
inline double obstacle_distance(const SimState& state, const WorldMap& map, double robot_radius) {
  const double x = state.robot.x;
  const double y = state.robot.y;
  double d = wall_distance(map.bounds, x, y);
  for (const auto& shape : map.static_shapes) d = std::min(d, point_distance(shape, x, y));
  for (const auto& shape : agent_shapes(map, state)) d = std::min(d, point_distance(shape, x, y));
  return std::max(d - robot_radius, 0.0);
}

inline bool in_contact(const SimState& state, const WorldMap& map, double robot_radius) {
  const double x = state.robot.x;
  const double y = state.robot.y;
  const auto& b = map.bounds;
  if (x - robot_radius <= b.x_min || x + robot_radius >= b.x_max || y - robot_radius <= b.y_min ||
      y + robot_radius >= b.y_max) {
    return true;
  }
  auto hits = [&](const Shape& s) {
    return std::visit([&](const auto& shape) { return disc_overlaps(shape, x, y, robot_radius); }, s);
  };
  return std::any_of(map.static_shapes.begin(), map.static_shapes.end(), hits) ||
         std::ranges::any_of(agent_shapes(map, state), hits);
}

// ---------------------------------------------------------------------------
// Episode initialisation

struct StartGoal {
  RobotState start;
  Vec2 goal;
};

// Start uniform over the free part of the start region (clearance at least
// min_clearance from every shape at t = 0), random heading; goal uniform in
// the goal region at least tau_target from the start.
template <typename Rng>
StartGoal sample_start_goal(const WorldMap& map, Rng& rng, double tau_target,
                            double robot_radius = 0.0, double min_clearance = 0.0) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto in_rect = [&](const Rect& r) {
    const double x = r.x_min + unit(rng) * (r.x_max - r.x_min);
    const double y = r.y_min + unit(rng) * (r.y_max - r.y_min);
    return Vec2{x, y};
  };
  constexpr int kMaxTries = 1000;
  StartGoal out;
  int tries = 0;
  for (;; ++tries) {
    if (tries >= kMaxTries) throw MapConfigError("map '" + map.name + "': no collision-free start");
    const auto p = in_rect(map.start_region);
    out.start = {p.x, p.y, wrap_angle(-kPi + 2.0 * kPi * unit(rng)), 0.0, 0.0};
    if (min_clearance <= 0.0) break;
    const auto sim = initial_sim_state(map, out.start);
    if (obstacle_distance(sim, map, robot_radius) >= min_clearance) break;
  }
  for (tries = 0;; ++tries) {
    if (tries >= kMaxTries) throw MapConfigError("map '" + map.name + "': goal rejection exhausted");
    out.goal = in_rect(map.goal_region);
    if (std::hypot(out.goal.x - out.start.x, out.goal.y - out.start.y) >= tau_target) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Map files
//
// Line-oriented text, '#' starts a comment:
//   trajocc-map 1
//   name <label>
//   bounds <x_min> <y_min> <x_max> <y_max>
//   start  <x_min> <y_min> <x_max> <y_max>
//   goal   <x_min> <y_min> <x_max> <y_max>
//   box <cx> <cy> <sx> <sy>
//   circle <cx> <cy> <r>
//   agent box <sx> <sy> <speed> <x1> <y1> <x2> <y2> ...
//   agent circle <r> <speed> <x1> <y1> ...

inline void validate_map(const WorldMap& map) {
  const auto& b = map.bounds;
  if (!(b.x_max > b.x_min && b.y_max > b.y_min)) {
    throw MapConfigError("map '" + map.name + "': empty bounds");
  }
  auto inside = [&](const Rect& r) {
    return r.x_min >= b.x_min && r.x_max <= b.x_max && r.y_min >= b.y_min && r.y_max <= b.y_max &&
           r.x_min <= r.x_max && r.y_min <= r.y_max;
  };
  if (!inside(map.start_region)) throw MapConfigError("map '" + map.name + "': start region outside bounds");
  if (!inside(map.goal_region)) throw MapConfigError("map '" + map.name + "': goal region outside bounds");
  for (const auto& a : map.agents) {
    if (a.waypoints.empty()) throw MapConfigError("map '" + map.name + "': agent without waypoints");
    if (!(a.speed >= 0.0)) throw MapConfigError("map '" + map.name + "': negative agent speed");
    const auto h = half_extent(a.footprint);
    for (const auto& w : a.waypoints) {
      if (w.x - h.x < b.x_min || w.x + h.x > b.x_max || w.y - h.y < b.y_min || w.y + h.y > b.y_max) {
        throw MapConfigError("map '" + map.name + "': agent waypoint outside bounds");
      }
    }
  }
}

inline WorldMap parse_map(std::istream& in, const std::string& origin = "<stream>") {
  WorldMap map;
  std::string line;
  int line_no = 0;
  bool header = false;
  bool have_bounds = false, have_start = false, have_goal = false;
  auto fail = [&](const std::string& msg) -> MapConfigError {
    return MapConfigError(origin + ":" + std::to_string(line_no) + ": " + msg);
  };
  auto read_rect = [&](std::istringstream& ss) {
    Rect r;
    if (!(ss >> r.x_min >> r.y_min >> r.x_max >> r.y_max)) throw fail("expected 4 numbers");
    return r;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key)) continue;
    if (!header) {
      int version = 0;
      if (key != "trajocc-map" || !(ss >> version) || version != 1) throw fail("missing 'trajocc-map 1' header");
      header = true;
      continue;
    }
    if (key == "name") {
      ss >> map.name;
    } else if (key == "bounds") {
      map.bounds = read_rect(ss);
      have_bounds = true;
    } else if (key == "start") {
      map.start_region = read_rect(ss);
      have_start = true;
    } else if (key == "goal") {
      map.goal_region = read_rect(ss);
      have_goal = true;
    } else if (key == "box") {
      Box b;
      if (!(ss >> b.cx >> b.cy >> b.sx >> b.sy) || b.sx <= 0 || b.sy <= 0) throw fail("bad box");
      map.static_shapes.emplace_back(b);
    } else if (key == "circle") {
      Circle c;
      if (!(ss >> c.cx >> c.cy >> c.r) || c.r <= 0) throw fail("bad circle");
      map.static_shapes.emplace_back(c);
    } else if (key == "agent") {
      std::string kind;
      ss >> kind;
      AgentScript a;
      if (kind == "box") {
        Box b;
        if (!(ss >> b.sx >> b.sy) || b.sx <= 0 || b.sy <= 0) throw fail("bad agent box");
        a.footprint = b;
      } else if (kind == "circle") {
        Circle c;
        if (!(ss >> c.r) || c.r <= 0) throw fail("bad agent circle");
        a.footprint = c;
      } else {
        throw fail("unknown agent shape '" + kind + "'");
      }
      if (!(ss >> a.speed)) throw fail("missing agent speed");
      Vec2 w;
      while (ss >> w.x >> w.y) a.waypoints.push_back(w);
      map.agents.push_back(std::move(a));
    } else {
      throw fail("unknown key '" + key + "'");
    }
  }
  if (!header) throw MapConfigError(origin + ": empty map file");
  if (!have_bounds || !have_start || !have_goal) {
    throw MapConfigError(origin + ": bounds, start and goal are required");
  }
  validate_map(map);
  return map;
}

inline WorldMap load_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open map " + path.string());
  return parse_map(in, path.string());
}

// Bundled suite, training maps first in curriculum order, then test maps.
inline const std::vector<std::string>& builtin_map_names() {
  static const std::vector<std::string> names = {"T0S", "T1S", "T0D", "T1D", "T2D",
                                                 "M1",  "M2",  "M3",  "M4",  "M5"};
  return names;
}

inline std::filesystem::path default_map_dir() {
  if (const char* env = std::getenv("TRAJOCC_MAP_DIR")) return env;
  return TRAJOCC_MAP_DIR;
}

inline WorldMap builtin_map(const std::string& name, const std::filesystem::path& dir = default_map_dir()) {
  return load_map(dir / (name + ".map"));
}

inline std::vector<WorldMap> builtin_maps(const std::filesystem::path& dir = default_map_dir()) {
  std::vector<WorldMap> maps;
  for (const auto& n : builtin_map_names()) maps.push_back(builtin_map(n, dir));
  return maps;
}

// Resolves a map argument: a bundled name or a path to a map file.
inline WorldMap resolve_map(const std::string& name_or_path) {
  const auto& names = builtin_map_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return builtin_map(name_or_path);
  return load_map(name_or_path);
}

}  // namespace trajocc
