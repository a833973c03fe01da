#pragma once

// Per-trajectory occupancy value H_j in [0, 1] from the classified grid and
// the current occupancy array.

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "trajocc/common.hpp"
#include "trajocc/voxel_grid.hpp"

namespace trajocc {

using OccupancyVector = std::vector<double>;

// Smallest sampling-point index m among occupied Priority voxels, or
// no_crash (one past the last sample) when none is occupied.
inline std::size_t crash_index(std::span<const Voxel> priority, const OccupancyArray& a,
                               std::size_t no_crash) {
  std::size_t crash = no_crash;
  for (const auto& v : priority) {
    if (a.sigma[v.u] > 0.0 && v.m < crash) crash = v.m;
  }
  return crash;
}

inline double weight_sum(std::span<const Voxel> priority, std::span<const Voxel> support,
                         std::size_t trajectory_id = 0) {
  if (priority.empty() && support.empty()) {
    throw DegenerateTrajectoryError(
        trajectory_id, "trajectory " + std::to_string(trajectory_id) + " has no grid support");
  }
  double w = 0.0;
  for (const auto& v : priority) w += v.beta;
  for (const auto& v : support) w += v.beta;
  return w;
}

// Voxels at or beyond the crash point count as fully occupied.
// Accumulates (alpha / sigma_max) * beta and rescales once, so that the sum
// never rounds above sigma_max * weight_sum() for the same voxel order.
inline double scaled_weight_sum(std::span<const Voxel> priority, std::span<const Voxel> support,
                                const OccupancyArray& a, std::size_t u_crash) {
  double w = 0.0;
  auto accumulate = [&](std::span<const Voxel> voxels) {
    for (const auto& v : voxels) {
      const double alpha = v.m < u_crash ? a.sigma[v.u] / a.sigma_max : 1.0;
      w += alpha * v.beta;
    }
  };
  accumulate(priority);
  accumulate(support);
  return a.sigma_max * w;
}

inline double occupancy_value(double w, double w_scaled, double sigma_max,
                              std::size_t trajectory_id = 0) {
  if (!(w > 0.0)) {
    throw DegenerateTrajectoryError(
        trajectory_id, "trajectory " + std::to_string(trajectory_id) + " has zero weight sum");
  }
  if (!(sigma_max > 0.0)) throw ConfigError("sigma_max must be > 0");
  return w_scaled / (sigma_max * w);
}

inline void evaluate_all(const ClassifiedGrid& grid, const OccupancyArray& a, OccupancyVector& out) {
  out.resize(grid.n_trajectories());
  for (std::size_t j = 0; j < grid.n_trajectories(); ++j) {
    const auto& s = grid.sets[j];
    const double w = weight_sum(s.priority, s.support, j);
    const std::size_t u_crash = crash_index(s.priority, a, grid.n_t);
    const double w_scaled = scaled_weight_sum(s.priority, s.support, a, u_crash);
    out[j] = occupancy_value(w, w_scaled, a.sigma_max, j);
  }
}

inline OccupancyVector evaluate_all(const ClassifiedGrid& grid, const OccupancyArray& a) {
  OccupancyVector out;
  evaluate_all(grid, a, out);
  return out;
}

}  // namespace trajocc
