#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace trajocc {

// Error categories surface as the CLI's machine-readable error tag.
enum class ErrorCategory {
  kConfig,
  kMapConfig,
  kRange,
  kDegenerateTrajectory,
  kShape,
  kNumeric,
  kUsage,
  kIo,
};

inline std::string_view to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kMapConfig: return "map-config";
    case ErrorCategory::kRange: return "range";
    case ErrorCategory::kDegenerateTrajectory: return "degenerate-trajectory";
    case ErrorCategory::kShape: return "shape";
    case ErrorCategory::kNumeric: return "numeric";
    case ErrorCategory::kUsage: return "usage";
    case ErrorCategory::kIo: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorCategory::kConfig, w) {}
};
struct MapConfigError : Error {
  explicit MapConfigError(const std::string& w) : Error(ErrorCategory::kMapConfig, w) {}
};
struct RangeError : Error {
  explicit RangeError(const std::string& w) : Error(ErrorCategory::kRange, w) {}
};
struct DegenerateTrajectoryError : Error {
  DegenerateTrajectoryError(std::size_t trajectory, const std::string& w)
      : Error(ErrorCategory::kDegenerateTrajectory, w), trajectory_id(trajectory) {}
  std::size_t trajectory_id;
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorCategory::kShape, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorCategory::kNumeric, w) {}
};
struct UsageError : Error {
  explicit UsageError(const std::string& w) : Error(ErrorCategory::kUsage, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorCategory::kIo, w) {}
};

inline constexpr double kPi = std::numbers::pi;

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

inline double distance(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

// Wraps into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

// sin(x)/x with the removable singularity filled in.
inline double sinc(double x) {
  if (std::abs(x) < 1e-4) {
    const double x2 = x * x;
    return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
  }
  return std::sin(x) / x;
}

// 64-bit FNV-1a, used to key on-disk caches by content.
class Fnv1a {
 public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      hash_ ^= c;
      hash_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t digest() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace trajocc
