#pragma once

#include <array>
#include <cmath>

#include "comfree/errors.hpp"

namespace comfree {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  static constexpr Vec3 zero() { return {}; }
  static constexpr Vec3 unit(int axis) {
    return {axis == 0 ? 1.0 : 0.0, axis == 1 ? 1.0 : 0.0, axis == 2 ? 1.0 : 0.0};
  }

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }

  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  constexpr double squared_norm() const { return dot(*this); }
  double norm() const { return std::sqrt(squared_norm()); }
  Vec3 normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n};
  }
  bool is_finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }

  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
constexpr Vec3 operator/(const Vec3& a, double s) { return {a.x / s, a.y / s, a.z / s}; }

//! Row-major 3x3 matrix.
struct Mat3 {
  std::array<double, 9> m{};

  static constexpr Mat3 identity() { return diagonal(1.0, 1.0, 1.0); }
  static constexpr Mat3 diagonal(double a, double b, double c) {
    Mat3 r;
    r.m = {a, 0.0, 0.0, 0.0, b, 0.0, 0.0, 0.0, c};
    return r;
  }
  static constexpr Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
    Mat3 r;
    r.m = {r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z};
    return r;
  }
  //! skew(v) * w == v.cross(w)
  static constexpr Mat3 skew(const Vec3& v) {
    Mat3 r;
    r.m = {0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0};
    return r;
  }

  constexpr double operator()(int r, int c) const { return m[static_cast<std::size_t>(3 * r + c)]; }
  constexpr double& operator()(int r, int c) { return m[static_cast<std::size_t>(3 * r + c)]; }

  constexpr Vec3 row(int r) const { return {(*this)(r, 0), (*this)(r, 1), (*this)(r, 2)}; }
  constexpr Vec3 col(int c) const { return {(*this)(0, c), (*this)(1, c), (*this)(2, c)}; }

  constexpr Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  constexpr Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        r(i, j) = (*this)(i, 0) * o(0, j) + (*this)(i, 1) * o(1, j) + (*this)(i, 2) * o(2, j);
      }
    }
    return r;
  }
  constexpr Mat3 operator*(double s) const {
    Mat3 r = *this;
    for (double& v : r.m) v *= s;
    return r;
  }
  constexpr Mat3 operator+(const Mat3& o) const {
    Mat3 r = *this;
    for (std::size_t i = 0; i < 9; ++i) r.m[i] += o.m[i];
    return r;
  }
  constexpr Mat3 operator-(const Mat3& o) const {
    Mat3 r = *this;
    for (std::size_t i = 0; i < 9; ++i) r.m[i] -= o.m[i];
    return r;
  }

  constexpr Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    }
    return r;
  }
  constexpr double trace() const { return m[0] + m[4] + m[8]; }
  constexpr double determinant() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }

  //! Adjugate-based inverse; throws SingularInertia when det is zero or non-finite.
  Mat3 inverse() const {
    const double det = determinant();
    if (!(std::abs(det) > 0.0) || !std::isfinite(det)) {
      throw SingularInertia("matrix is singular");
    }
    Mat3 r;
    r(0, 0) = (m[4] * m[8] - m[5] * m[7]) / det;
    r(0, 1) = (m[2] * m[7] - m[1] * m[8]) / det;
    r(0, 2) = (m[1] * m[5] - m[2] * m[4]) / det;
    r(1, 0) = (m[5] * m[6] - m[3] * m[8]) / det;
    r(1, 1) = (m[0] * m[8] - m[2] * m[6]) / det;
    r(1, 2) = (m[2] * m[3] - m[0] * m[5]) / det;
    r(2, 0) = (m[3] * m[7] - m[4] * m[6]) / det;
    r(2, 1) = (m[1] * m[6] - m[0] * m[7]) / det;
    r(2, 2) = (m[0] * m[4] - m[1] * m[3]) / det;
    return r;
  }

  bool is_finite() const {
    for (double v : m) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend constexpr bool operator==(const Mat3&, const Mat3&) = default;
};

//! Unit quaternion, scalar first (w, x, y, z), Hamilton product.
struct Quat {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Quat() = default;
  constexpr Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

  static constexpr Quat identity() { return {}; }

  static Quat from_axis_angle(const Vec3& axis, double angle) {
    const Vec3 a = axis.normalized();
    const double s = std::sin(0.5 * angle);
    return {std::cos(0.5 * angle), a.x * s, a.y * s, a.z * s};
  }

  //! exp of the pure quaternion (0, rotation_vector / 2).
  static Quat exp_map(const Vec3& rotation_vector) {
    const double theta = rotation_vector.norm();
    if (theta < 1e-8) {
      const double t2 = theta * theta;
      const double s = 0.5 * (1.0 - t2 / 24.0);
      return {1.0 - t2 / 8.0, rotation_vector.x * s, rotation_vector.y * s, rotation_vector.z * s};
    }
    const double s = std::sin(0.5 * theta) / theta;
    return {std::cos(0.5 * theta), rotation_vector.x * s, rotation_vector.y * s,
            rotation_vector.z * s};
  }

  constexpr Vec3 vec() const { return {x, y, z}; }
  constexpr Quat conjugate() const { return {w, -x, -y, -z}; }
  constexpr double dot(const Quat& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  Quat normalized() const {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
  }
  bool is_finite() const {
    return std::isfinite(w) && std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }

  constexpr Quat operator*(const Quat& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z, w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x, w * o.z + x * o.y - y * o.x + z * o.w};
  }

  constexpr Mat3 to_matrix() const {
    Mat3 r;
    r.m = {1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z),       2.0 * (x * z + w * y),
           2.0 * (x * y + w * z),       1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
           2.0 * (x * z - w * y),       2.0 * (y * z + w * x),       1.0 - 2.0 * (x * x + y * y)};
    return r;
  }

  constexpr Vec3 rotate(const Vec3& v) const {
    const Vec3 u = vec();
    const Vec3 t = 2.0 * u.cross(v);
    return v + w * t + u.cross(t);
  }

  friend constexpr bool operator==(const Quat&, const Quat&) = default;
};

//! Mass and body-frame rotational inertia of one rigid body.
struct SpatialInertia {
  double mass = 1.0;
  Mat3 inertia_body = Mat3::identity();

  friend bool operator==(const SpatialInertia&, const SpatialInertia&) = default;
};

//! True when `m` is symmetric within `tol` and positive-definite (leading minors test).
inline bool is_symmetric_positive_definite(const Mat3& m, double tol = 1e-12) {
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if (std::abs(m(i, j) - m(j, i)) > tol) return false;
    }
  }
  const double m1 = m(0, 0);
  const double m2 = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  const double m3 = m.determinant();
  return m1 > 0.0 && m2 > 0.0 && m3 > 0.0;
}

struct Pose {
  Vec3 position;
  Quat orientation;
};

//! Explicit position update and exponential-map orientation update with world-frame omega.
inline Pose integrate_pose(const Vec3& position, const Quat& orientation, const Vec3& velocity,
                           const Vec3& angular_velocity, double dt) {
  if (!position.is_finite() || !orientation.is_finite() || !velocity.is_finite() ||
      !angular_velocity.is_finite() || !std::isfinite(dt)) {
    throw NonFiniteState("integrate_pose received a non-finite input");
  }
  Pose out;
  out.position = position + velocity * dt;
  out.orientation = (Quat::exp_map(angular_velocity * dt) * orientation).normalized();
  return out;
}

//! R * inv_body * R^T for an already-inverted body-frame inertia.
inline Mat3 rotate_inertia(const Mat3& body_frame, const Quat& orientation) {
  const Mat3 r = orientation.to_matrix();
  return r * body_frame * r.transposed();
}

inline Mat3 world_inertia_inverse(const SpatialInertia& inertia, const Quat& orientation) {
  if (!is_symmetric_positive_definite(inertia.inertia_body)) {
    throw SingularInertia("body inertia is not symmetric positive-definite");
  }
  return rotate_inertia(inertia.inertia_body.inverse(), orientation);
}

}  // namespace comfree
