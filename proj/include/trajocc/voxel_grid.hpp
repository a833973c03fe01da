#pragma once

// Robot-centred voxel grid: offline Priority/Support classification of
// voxels around each motion primitive, and the per-frame occupancy array.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trajocc/common.hpp"
#include "trajocc/kinematics.hpp"

namespace trajocc {

struct GridExtent {
  double x_min = -0.5, x_max = 3.0;
  double y_min = -3.0, y_max = 3.0;
  double z_min = 0.0, z_max = 0.1;
};

class GridSpec {
 public:
  GridSpec() : GridSpec(0.1, GridExtent{}) {}
  GridSpec(double resolution, GridExtent extent) : resolution_(resolution), extent_(extent) {
    if (!(resolution > 0.0)) throw ConfigError("grid.resolution must be > 0");
    if (!(extent.x_max > extent.x_min) || !(extent.y_max > extent.y_min) ||
        !(extent.z_max > extent.z_min)) {
      throw ConfigError("grid.extent must have strictly positive volume");
    }
    n_x_ = cells(extent.x_min, extent.x_max);
    n_y_ = cells(extent.y_min, extent.y_max);
    n_z_ = cells(extent.z_min, extent.z_max);
  }

  double resolution() const { return resolution_; }
  const GridExtent& extent() const { return extent_; }
  std::size_t n_x() const { return n_x_; }
  std::size_t n_y() const { return n_y_; }
  std::size_t n_z() const { return n_z_; }
  std::size_t size() const { return n_x_ * n_y_ * n_z_; }

  Point3 center(std::size_t ix, std::size_t iy, std::size_t iz) const {
    return {extent_.x_min + (static_cast<double>(ix) + 0.5) * resolution_,
            extent_.y_min + (static_cast<double>(iy) + 0.5) * resolution_,
            extent_.z_min + (static_cast<double>(iz) + 0.5) * resolution_};
  }

 private:
  std::size_t cells(double lo, double hi) const {
    return static_cast<std::size_t>(std::ceil((hi - lo) / resolution_ - 1e-9));
  }

  double resolution_;
  GridExtent extent_;
  std::size_t n_x_ = 0, n_y_ = 0, n_z_ = 0;
};

// x fastest, then y, then z.
inline std::size_t linearize(std::size_t ix, std::size_t iy, std::size_t iz, const GridSpec& spec) {
  if (ix >= spec.n_x() || iy >= spec.n_y() || iz >= spec.n_z()) {
    throw RangeError("voxel index out of range");
  }
  return ix + spec.n_x() * (iy + spec.n_y() * iz);
}

inline std::array<std::size_t, 3> delinearize(std::size_t u, const GridSpec& spec) {
  if (u >= spec.size()) throw RangeError("linear voxel index out of range");
  const std::size_t ix = u % spec.n_x();
  const std::size_t rest = u / spec.n_x();
  return {ix, rest % spec.n_y(), rest / spec.n_y()};
}

// The A_p array: voxel centres in linear-index order.
inline std::vector<Point3> voxel_centers(const GridSpec& spec) {
  std::vector<Point3> centers(spec.size());
  for (std::size_t u = 0; u < spec.size(); ++u) {
    const auto [ix, iy, iz] = delinearize(u, spec);
    centers[u] = spec.center(ix, iy, iz);
  }
  return centers;
}

enum class VoxelClass : std::uint8_t { kSupport = 0, kPriority = 1 };

struct Voxel {
  std::uint32_t u = 0;
  double beta = 1.0;
  std::uint32_t m = 0;
  VoxelClass c = VoxelClass::kSupport;

  friend bool operator==(const Voxel&, const Voxel&) = default;
};

struct NearestSample {
  std::size_t m = 0;
  double distance = 0.0;
};

// Ties resolve toward the smaller index.
inline NearestSample nearest_sample_index(const Point3& center, std::span<const Point3> points) {
  NearestSample best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = distance(center, points[i]);
    if (d < best.distance) best = {i, d};
  }
  return best;
}

struct Thresholds {
  double tau_priority = 0.25;
  double tau_support = 0.5;

  void validate() const {
    if (!(tau_priority > 0.0)) throw ConfigError("thresholds.tau_priority must be > 0");
    if (!(tau_priority < tau_support)) {
      throw ConfigError("thresholds.tau_priority must be < thresholds.tau_support");
    }
  }
};

// Two-level weighting: one weight for Priority voxels, one for Support.
struct TwoLevelWeight {
  double priority = 1.0;
  double support = 0.5;

  double operator()(double /*distance*/, VoxelClass c) const {
    return c == VoxelClass::kPriority ? priority : support;
  }
};

struct VoxelSets {
  std::vector<Voxel> priority;
  std::vector<Voxel> support;
};

// distance < tau_P -> Priority; tau_P <= distance < tau_S -> Support.
template <typename WeightFn>
VoxelSets classify_voxels(std::span<const Point3> centers, const Trajectory& traj,
                          const Thresholds& tau, WeightFn&& weight_fn) {
  tau.validate();
  if (traj.points.empty()) throw ConfigError("trajectory has no sampling points");
  VoxelSets sets;
  for (std::size_t u = 0; u < centers.size(); ++u) {
    const auto near = nearest_sample_index(centers[u], traj.points);
    if (near.distance >= tau.tau_support) continue;
    const VoxelClass c =
        near.distance < tau.tau_priority ? VoxelClass::kPriority : VoxelClass::kSupport;
    const double beta = weight_fn(near.distance, c);
    if (!(beta > 0.0)) throw ConfigError("voxel weight must be > 0");
    Voxel v{static_cast<std::uint32_t>(u), beta, static_cast<std::uint32_t>(near.m), c};
    (c == VoxelClass::kPriority ? sets.priority : sets.support).push_back(v);
  }
  return sets;
}

struct ClassifiedGrid {
  GridSpec spec;
  Thresholds tau;
  std::size_t n_t = 0;  // sampling points per trajectory; also the no-crash sentinel
  std::vector<Point3> centers;
  std::vector<VoxelSets> sets;  // one per trajectory, index-aligned with the bank

  std::size_t n_trajectories() const { return sets.size(); }
};

template <typename WeightFn = TwoLevelWeight>
ClassifiedGrid classify_bank(const PrimitiveBank& bank, const GridSpec& spec, const Thresholds& tau,
                             WeightFn&& weight_fn = {}) {
  ClassifiedGrid grid{spec, tau, static_cast<std::size_t>(bank.n_t), voxel_centers(spec), {}};
  grid.sets.reserve(bank.size());
  for (const auto& traj : bank.trajectories) {
    grid.sets.push_back(classify_voxels(grid.centers, traj, tau, weight_fn));
  }
  return grid;
}

struct OccupancyArray {
  std::vector<double> sigma;
  double sigma_max = 1.0;

  OccupancyArray() = default;
  OccupancyArray(std::size_t n, double s_max) : sigma(n, 0.0), sigma_max(s_max) {
    if (!(s_max > 0.0)) throw ConfigError("sigma_max must be > 0");
  }
};

// Cell containing p, or spec.size() when p lies outside [min, max) on any axis.
inline std::size_t cell_of(const Point3& p, const GridSpec& spec) {
  const auto& e = spec.extent();
  if (!(p.x >= e.x_min && p.x < e.x_max && p.y >= e.y_min && p.y < e.y_max && p.z >= e.z_min &&
        p.z < e.z_max)) {
    return spec.size();
  }
  const double r = spec.resolution();
  const auto ix = std::min(spec.n_x() - 1, static_cast<std::size_t>((p.x - e.x_min) / r));
  const auto iy = std::min(spec.n_y() - 1, static_cast<std::size_t>((p.y - e.y_min) / r));
  const auto iz = std::min(spec.n_z() - 1, static_cast<std::size_t>((p.z - e.z_min) / r));
  return linearize(ix, iy, iz, spec);
}

// Clear-then-mark binary update from one frame of sensor hits.
inline void update_occupancy(OccupancyArray& a, std::span<const Point3> hits, const GridSpec& spec) {
  if (a.sigma.size() != spec.size()) a.sigma.assign(spec.size(), 0.0);
  std::fill(a.sigma.begin(), a.sigma.end(), 0.0);
  for (const auto& p : hits) {
    const std::size_t u = cell_of(p, spec);
    if (u < spec.size()) a.sigma[u] = a.sigma_max;
  }
}

// Cache key over everything the classification depends on.
inline std::uint64_t classification_key(const PrimitiveBank& bank, const GridSpec& spec,
                                 const Thresholds& tau, const TwoLevelWeight& weights = {}) {
  Fnv1a h;
  char buf[128];
  auto put = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.17g;", x);
    h.update(buf);
  };
  h.update("trajocc-grid-v1;");
  for (const auto& t : bank.trajectories)
    for (const auto& p : t.points) {
      put(p.x);
      put(p.y);
      put(p.z);
    }
  const auto& e = spec.extent();
  for (double x : {spec.resolution(), e.x_min, e.x_max, e.y_min, e.y_max, e.z_min, e.z_max,
                   tau.tau_priority, tau.tau_support, weights.priority, weights.support}) {
    put(x);
  }
  return h.digest();
}

namespace detail {
template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated grid cache");
  return v;
}
}  // namespace detail

// Binary cache layout (host byte order):
//   8 bytes magic "TOCGRID1", u64 key,
//   f64 resolution, 6 x f64 extent, f64 tau_P, f64 tau_S, u64 n_T, u64 n_traj,
//   per trajectory: u64 n_priority, u64 n_support, then records
//   (u32 u, f64 beta, u32 m, u8 c) priority first.
inline void write_grid_cache(const std::string& path, const ClassifiedGrid& grid, std::uint64_t key) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write grid cache " + path);
  os.write("TOCGRID1", 8);
  detail::write_pod(os, key);
  const auto& e = grid.spec.extent();
  for (double x : {grid.spec.resolution(), e.x_min, e.x_max, e.y_min, e.y_max, e.z_min, e.z_max,
                   grid.tau.tau_priority, grid.tau.tau_support}) {
    detail::write_pod(os, x);
  }
  detail::write_pod(os, static_cast<std::uint64_t>(grid.n_t));
  detail::write_pod(os, static_cast<std::uint64_t>(grid.sets.size()));
  for (const auto& s : grid.sets) {
    detail::write_pod(os, static_cast<std::uint64_t>(s.priority.size()));
    detail::write_pod(os, static_cast<std::uint64_t>(s.support.size()));
    for (const auto* list : {&s.priority, &s.support}) {
      for (const auto& v : *list) {
        detail::write_pod(os, v.u);
        detail::write_pod(os, v.beta);
        detail::write_pod(os, v.m);
        detail::write_pod(os, static_cast<std::uint8_t>(v.c));
      }
    }
  }
}

// Returns the cached grid and its stored key.
inline std::pair<ClassifiedGrid, std::uint64_t> read_grid_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read grid cache " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, "TOCGRID1", 8) != 0) {
    throw IoError("not a trajocc grid cache: " + path);
  }
  const auto key = detail::read_pod<std::uint64_t>(is);
  double f[9];
  for (double& x : f) x = detail::read_pod<double>(is);
  GridSpec spec(f[0], GridExtent{f[1], f[2], f[3], f[4], f[5], f[6]});
  ClassifiedGrid grid{spec, Thresholds{f[7], f[8]}, 0, voxel_centers(spec), {}};
  grid.n_t = detail::read_pod<std::uint64_t>(is);
  const auto n_traj = detail::read_pod<std::uint64_t>(is);
  grid.sets.resize(n_traj);
  for (auto& s : grid.sets) {
    const auto np = detail::read_pod<std::uint64_t>(is);
    const auto ns = detail::read_pod<std::uint64_t>(is);
    s.priority.resize(np);
    s.support.resize(ns);
    for (auto* list : {&s.priority, &s.support}) {
      for (auto& v : *list) {
        v.u = detail::read_pod<std::uint32_t>(is);
        v.beta = detail::read_pod<double>(is);
        v.m = detail::read_pod<std::uint32_t>(is);
        v.c = static_cast<VoxelClass>(detail::read_pod<std::uint8_t>(is));
        if (v.u >= spec.size() || v.m >= grid.n_t) throw IoError("corrupt grid cache record");
      }
    }
  }
  return {std::move(grid), key};
}

}  // namespace trajocc
