#pragma once

// Independent reference implementations used by the tests. Each one is
// written from the defining formulas without calling the library code it
// checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace oracle {

struct P3 {
  double x, y, z;
};

// Fixed-step classical Runge-Kutta on x' = v cos th, y' = v sin th, th' = w.
inline P3 rk4_unicycle(double v, double w, double t_end, int steps) {
  double x = 0, y = 0, th = 0;
  const double h = t_end / steps;
  auto f = [&](double th_) { return std::array<double, 3>{v * std::cos(th_), v * std::sin(th_), w}; };
  for (int i = 0; i < steps; ++i) {
    const auto k1 = f(th);
    const auto k2 = f(th + 0.5 * h * k1[2]);
    const auto k3 = f(th + 0.5 * h * k2[2]);
    const auto k4 = f(th + h * k3[2]);
    x += h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
    y += h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
    th += h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]);
  }
  return {x, y, 0};
}

// Index of the closest point, first one on ties.
inline std::pair<std::size_t, double> nearest(const P3& c, const std::vector<P3>& pts) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = std::sqrt((c.x - pts[i].x) * (c.x - pts[i].x) + (c.y - pts[i].y) * (c.y - pts[i].y) +
                               (c.z - pts[i].z) * (c.z - pts[i].z));
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  return {best, bd};
}

// One voxel of the naive model: linear index, weight, nearest sample, class.
struct NaiveVoxel {
  std::size_t u;
  double beta;
  std::size_t m;
  bool priority;
};

// H for one trajectory straight from the ratio definition, in long double.
// Voxel values and weights are expected to be dyadic so the sums are exact.
inline long double naive_h(const std::vector<NaiveVoxel>& voxels, const std::vector<double>& sigma,
                           double sigma_max, std::size_t n_t) {
  std::size_t crash = n_t;
  for (const auto& v : voxels)
    if (v.priority && sigma[v.u] > 0 && v.m < crash) crash = v.m;
  long double num = 0, den = 0;
  for (const auto& v : voxels) {
    const long double alpha = v.m < crash ? sigma[v.u] : sigma_max;
    num += alpha * v.beta;
    den += v.beta;
  }
  return num / (static_cast<long double>(sigma_max) * den);
}

// Same quantity with the last division done in double on the exact sums.
inline double naive_h_double(const std::vector<NaiveVoxel>& voxels, const std::vector<double>& sigma,
                             double sigma_max, std::size_t n_t) {
  std::size_t crash = n_t;
  for (const auto& v : voxels)
    if (v.priority && sigma[v.u] > 0 && v.m < crash) crash = v.m;
  long double num = 0, den = 0;
  for (const auto& v : voxels) {
    const long double alpha = v.m < crash ? sigma[v.u] : sigma_max;
    num += alpha * v.beta;
    den += v.beta;
  }
  return static_cast<double>(num) / (sigma_max * static_cast<double>(den));
}

// Ray (o + t d, |d| = 1) against a circle via the textbook quadratic.
inline double ray_circle(double ox, double oy, double dx, double dy, double cx, double cy, double r) {
  const long double fx = ox - cx, fy = oy - cy;
  const long double b = 2 * (fx * dx + fy * dy);
  const long double c = fx * fx + fy * fy - (long double)r * r;
  if (c <= 0) return 0.0;
  const long double disc = b * b - 4 * c;
  if (disc < 0) return std::numeric_limits<double>::infinity();
  const long double t = (-b - std::sqrt(disc)) / 2;
  return t >= 0 ? static_cast<double>(t) : std::numeric_limits<double>::infinity();
}

// Ray against an axis-aligned box by intersecting each of the four edge
// segments and keeping the nearest.
inline double ray_box(double ox, double oy, double dx, double dy, double x0, double y0, double x1, double y1) {
  if (ox >= x0 && ox <= x1 && oy >= y0 && oy <= y1) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  auto vertical = [&](double x) {
    if (dx == 0) return;
    const long double t = ((long double)x - ox) / dx;
    if (t < 0) return;
    const long double y = oy + t * dy;
    if (y >= y0 && y <= y1) best = std::min(best, static_cast<double>(t));
  };
  auto horizontal = [&](double y) {
    if (dy == 0) return;
    const long double t = ((long double)y - oy) / dy;
    if (t < 0) return;
    const long double x = ox + t * dx;
    if (x >= x0 && x <= x1) best = std::min(best, static_cast<double>(t));
  };
  vertical(x0);
  vertical(x1);
  horizontal(y0);
  horizontal(y1);
  return best;
}

// Advantages as explicit discounted sums of TD residuals, truncated at
// episode ends.
inline std::vector<double> gae_direct(const std::vector<double>& r, const std::vector<double>& v,
                                      const std::vector<bool>& done, double gamma, double lambda,
                                      double bootstrap) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? v[t + 1] : bootstrap;
    delta[t] = r[t] + gamma * next * (done[t] ? 0.0 : 1.0) - v[t];
  }
  std::vector<double> adv(n);
  for (std::size_t t = 0; t < n; ++t) {
    double sum = 0.0, coef = 1.0;
    for (std::size_t l = t; l < n; ++l) {
      sum += coef * delta[l];
      if (done[l]) break;
      coef *= gamma * lambda;
    }
    adv[t] = sum;
  }
  return adv;
}

// Reward table: rows are checked in order, first match wins.
struct RewardRow {
  const char* name;
  bool (*applies)(double d_now, double d_obs, int step, double tau_target, double tau_fail, int n_max);
  int outcome;  // 0 running, 1 goal, 2 collision, 3 timeout
};

inline const std::vector<RewardRow>& reward_table() {
  static const std::vector<RewardRow> rows = {
      {"goal", [](double d, double, int, double tt, double, int) { return d < tt; }, 1},
      {"timeout", [](double, double, int s, double, double, int n) { return s > n; }, 3},
      {"collision", [](double, double o, int, double, double tf, int) { return o < tf; }, 2},
      {"running", [](double, double, int, double, double, int) { return true; }, 0},
  };
  return rows;
}

}  // namespace oracle
