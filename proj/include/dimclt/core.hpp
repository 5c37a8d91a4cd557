#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dimclt {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Parameters or hypotheses that make a model invalid (CLI exit code 2).
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-convergence or resolution failure inside a numerical routine (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reduce into [0,1).
inline double wrap01(double v) {
  double r = v - std::floor(v);
  if (r >= 1.0) r = 0.0;  // floor rounding for tiny negative v
  return r;
}

struct TorusPoint {
  double x = 0.0;
  double y = 0.0;

  TorusPoint() = default;
  TorusPoint(double x_, double y_) : x(wrap01(x_)), y(wrap01(y_)) {}

  friend bool operator==(const TorusPoint&, const TorusPoint&) = default;
};

/// Distance on the circle R/Z.
inline double circle_distance(double a, double b) {
  double d = std::fabs(wrap01(a - b));
  return std::min(d, 1.0 - d);
}

inline double torus_distance(const TorusPoint& p, const TorusPoint& q) {
  return std::hypot(circle_distance(p.x, q.x), circle_distance(p.y, q.y));
}

/// splitmix64 finalizer; used to derive independent per-sample seeds.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of the stream owned by sample `index` under master seed `seed`.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// 64-bit FNV-1a, stable across platforms (cache keys, artifact hashes).
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace dimclt
