#pragma once

// Shared helpers for the unit tests: seeded random draws of geometry and state.

#include <cmath>
#include <random>

#include "comfree/comfree.hpp"

namespace comfree::testing {

inline std::mt19937_64& rng() {
  static std::mt19937_64 gen(20240611);
  return gen;
}

inline double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng()); }

inline Vec3 random_vec(double lo = -1.0, double hi = 1.0) { return {uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)}; }

inline Vec3 random_unit() {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v{n(rng()), n(rng()), n(rng())};
  return v / v.norm();
}

inline Quat random_quat() {
  std::normal_distribution<double> n(0.0, 1.0);
  return Quat{n(rng()), n(rng()), n(rng()), n(rng())}.normalized();
}

//! Random symmetric positive-definite inertia with principal moments in [lo, hi], randomly rotated.
inline Mat3 random_inertia(double lo = 0.01, double hi = 1.0) {
  const Mat3 d = Mat3::diagonal(uniform(lo, hi), uniform(lo, hi), uniform(lo, hi));
  return rotate_inertia(d, random_quat());
}

}  // namespace comfree::testing
