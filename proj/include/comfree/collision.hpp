#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "comfree/errors.hpp"
#include "comfree/rigidmath.hpp"
#include "comfree/scene.hpp"
#include "comfree/state.hpp"

namespace comfree {

struct Contact {
  int body_a = -1;
  int body_b = -1;
  Vec3 point;     //!< world, midway between the two surfaces
  Vec3 normal;    //!< unit, from A to B
  Vec3 tangent1;
  Vec3 tangent2;
  double phi = 0.0;  //!< signed gap: > 0 separated, < 0 penetrating
  FrictionParams friction;
};

struct TangentFrame {
  Vec3 tangent1;
  Vec3 tangent2;
};

//! Right-handed (t1, t2, n) frame; pivots on the smallest-magnitude component of n
//! (lowest axis index on ties) so the result is deterministic.
inline TangentFrame build_tangent_frame(const Vec3& normal) {
  int pivot = 0;
  double smallest = std::abs(normal.x);
  for (int k = 1; k < 3; ++k) {
    if (std::abs(normal[k]) < smallest) {
      smallest = std::abs(normal[k]);
      pivot = k;
    }
  }
  const Vec3 axis = Vec3::unit(pivot);
  const Vec3 t1 = (axis - normal * normal.dot(axis)).normalized();
  return {t1, normal.cross(t1)};
}

struct Aabb {
  Vec3 lo;
  Vec3 hi;

  bool overlaps(const Aabb& o) const {
    return lo.x <= o.hi.x && o.lo.x <= hi.x && lo.y <= o.hi.y && o.lo.y <= hi.y && lo.z <= o.hi.z &&
           o.lo.z <= hi.z;
  }
};

inline Aabb compute_aabb(const GeomShape& geom, const BodyState& s) {
  const Mat3 r = s.orientation.to_matrix();
  Vec3 ext;
  if (const auto* sp = std::get_if<Sphere>(&geom)) {
    ext = {sp->radius, sp->radius, sp->radius};
  } else if (const auto* b = std::get_if<Box>(&geom)) {
    for (int i = 0; i < 3; ++i) {
      ext[i] = std::abs(r(i, 0)) * b->half_extents.x + std::abs(r(i, 1)) * b->half_extents.y +
               std::abs(r(i, 2)) * b->half_extents.z;
    }
  } else if (const auto* c = std::get_if<Capsule>(&geom)) {
    for (int i = 0; i < 3; ++i) ext[i] = std::abs(r(i, 2)) * c->half_length + c->radius;
  } else if (const auto* cy = std::get_if<Cylinder>(&geom)) {
    for (int i = 0; i < 3; ++i) {
      const double a = r(i, 2);
      ext[i] = std::abs(a) * cy->half_length + cy->radius * std::sqrt(std::max(0.0, 1.0 - a * a));
    }
  } else {
    const double inf = std::numeric_limits<double>::infinity();
    return {{-inf, -inf, -inf}, {inf, inf, inf}};
  }
  return {s.position - ext, s.position + ext};
}

//! Sweep-and-prune over margin-inflated AABBs along x. Half-spaces are tested against the
//! AABB support of every dynamic body instead. Returns (i < j) pairs sorted lexicographically;
//! static-static pairs are never produced.
inline std::vector<std::pair<int, int>> broadphase_aabb(std::span<const Body> bodies,
                                                        std::span<const BodyState> states,
                                                        double margin) {
  const int n = static_cast<int>(bodies.size());
  std::vector<std::pair<int, int>> pairs;
  std::vector<int> boxed;
  std::vector<Aabb> boxes(static_cast<std::size_t>(n));
  const Vec3 pad{margin, margin, margin};
  for (int i = 0; i < n; ++i) {
    if (std::holds_alternative<HalfSpace>(bodies[static_cast<std::size_t>(i)].geom)) continue;
    Aabb box = compute_aabb(bodies[static_cast<std::size_t>(i)].geom, states[static_cast<std::size_t>(i)]);
    box.lo -= pad;
    box.hi += pad;
    boxes[static_cast<std::size_t>(i)] = box;
    boxed.push_back(i);
  }

  for (int h = 0; h < n; ++h) {
    const auto* plane = std::get_if<HalfSpace>(&bodies[static_cast<std::size_t>(h)].geom);
    if (plane == nullptr) continue;
    for (int i : boxed) {
      if (!bodies[static_cast<std::size_t>(i)].is_dynamic()) continue;
      const Aabb& b = boxes[static_cast<std::size_t>(i)];
      double support = 0.0;
      for (int k = 0; k < 3; ++k) support += plane->normal[k] * (plane->normal[k] >= 0.0 ? b.lo[k] : b.hi[k]);
      if (support - plane->offset < margin) pairs.emplace_back(std::min(h, i), std::max(h, i));
    }
  }

  std::sort(boxed.begin(), boxed.end(), [&](int a, int b) {
    const double la = boxes[static_cast<std::size_t>(a)].lo.x;
    const double lb = boxes[static_cast<std::size_t>(b)].lo.x;
    return la < lb || (la == lb && a < b);
  });
  std::vector<int> active;
  for (int i : boxed) {
    const Aabb& bi = boxes[static_cast<std::size_t>(i)];
    std::erase_if(active, [&](int a) { return boxes[static_cast<std::size_t>(a)].hi.x < bi.lo.x; });
    for (int a : active) {
      if (!bodies[static_cast<std::size_t>(a)].is_dynamic() && !bodies[static_cast<std::size_t>(i)].is_dynamic()) continue;
      if (boxes[static_cast<std::size_t>(a)].overlaps(bi)) pairs.emplace_back(std::min(a, i), std::max(a, i));
    }
    active.push_back(i);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

namespace detail {

//! Contact between shape X and shape Y, normal pointing from X to Y.
struct RawContact {
  Vec3 point;
  Vec3 normal;
  double phi;
};

inline void push_if_close(std::vector<RawContact>& out, const Vec3& deepest_on_y, const Vec3& n,
                          double phi, double margin) {
  if (phi < margin) out.push_back({deepest_on_y - n * (0.5 * phi), n, phi});
}

inline void plane_sphere(const HalfSpace& h, const Sphere& s, const BodyState& st, double margin,
                         std::vector<RawContact>& out) {
  const double phi = h.normal.dot(st.position) - h.offset - s.radius;
  push_if_close(out, st.position - h.normal * s.radius, h.normal, phi, margin);
}

inline void plane_box(const HalfSpace& h, const Box& b, const BodyState& st, double margin,
                      std::vector<RawContact>& out) {
  std::array<std::pair<double, int>, 8> order{};
  std::array<Vec3, 8> corners{};
  const Mat3 r = st.orientation.to_matrix();
  for (int k = 0; k < 8; ++k) {
    const Vec3 local{(k & 1) ? b.half_extents.x : -b.half_extents.x,
                     (k & 2) ? b.half_extents.y : -b.half_extents.y,
                     (k & 4) ? b.half_extents.z : -b.half_extents.z};
    corners[static_cast<std::size_t>(k)] = st.position + r * local;
    order[static_cast<std::size_t>(k)] = {h.normal.dot(corners[static_cast<std::size_t>(k)]) - h.offset, k};
  }
  std::sort(order.begin(), order.end());
  for (int i = 0; i < 4; ++i) {
    const auto [phi, k] = order[static_cast<std::size_t>(i)];
    push_if_close(out, corners[static_cast<std::size_t>(k)], h.normal, phi, margin);
  }
}

inline void plane_capsule(const HalfSpace& h, const Capsule& c, const BodyState& st, double margin,
                          std::vector<RawContact>& out) {
  const Vec3 axis = st.orientation.rotate(Vec3{0.0, 0.0, 1.0});
  for (double sign : {1.0, -1.0}) {
    const Vec3 centre = st.position + axis * (sign * c.half_length);
    const double phi = h.normal.dot(centre) - h.offset - c.radius;
    push_if_close(out, centre - h.normal * c.radius, h.normal, phi, margin);
  }
}

inline void plane_cylinder(const HalfSpace& h, const Cylinder& c, const BodyState& st, double margin,
                           std::vector<RawContact>& out) {
  const Vec3 axis = st.orientation.rotate(Vec3{0.0, 0.0, 1.0});
  const double na = h.normal.dot(axis);
  const Vec3 down = -(h.normal - axis * na);
  const double down_len = down.norm();
  const Vec3 e = down_len > 1e-9 ? down / down_len : build_tangent_frame(axis).tangent1;
  auto emit = [&](const Vec3& p) { push_if_close(out, p, h.normal, h.normal.dot(p) - h.offset, margin); };

  if (std::abs(na) < std::sqrt(0.5)) {
    // Lying on the side: the lowest rim point of each cap stands in for the line contact.
    for (double sign : {1.0, -1.0}) emit(st.position + axis * (sign * c.half_length) + e * c.radius);
    return;
  }
  // Standing on a cap: its centre plus three rim points, the first being the lowest.
  const double sign = na > 0.0 ? -1.0 : 1.0;
  const Vec3 cap = st.position + axis * (sign * c.half_length);
  const Vec3 f = axis.cross(e);
  emit(cap);
  for (int k = 0; k < 3; ++k) {
    const double theta = 2.0 * M_PI * k / 3.0;
    emit(cap + (e * std::cos(theta) + f * std::sin(theta)) * c.radius);
  }
}

//! Sphere centre vs a core point (radius `core_radius`) already known to be closest.
inline void sphere_vs_point(const Vec3& core, double core_radius, const Vec3& centre, double radius,
                            double margin, std::vector<RawContact>& out) {
  const Vec3 d = centre - core;
  const double dist = d.norm();
  const Vec3 n = dist > 1e-12 ? d / dist : Vec3{0.0, 0.0, 1.0};
  const double phi = dist - core_radius - radius;
  push_if_close(out, centre - n * radius, n, phi, margin);
}

inline void sphere_sphere(const Sphere& a, const BodyState& sa, const Sphere& b, const BodyState& sb,
                          double margin, std::vector<RawContact>& out) {
  sphere_vs_point(sa.position, a.radius, sb.position, b.radius, margin, out);
}

//! Box is X, sphere is Y.
inline void box_sphere(const Box& b, const BodyState& sb, const Sphere& s, const BodyState& ss,
                       double margin, std::vector<RawContact>& out) {
  const Mat3 r = sb.orientation.to_matrix();
  const Vec3 p = r.transposed() * (ss.position - sb.position);
  const Vec3 e = b.half_extents;
  const Vec3 q{std::clamp(p.x, -e.x, e.x), std::clamp(p.y, -e.y, e.y), std::clamp(p.z, -e.z, e.z)};
  if (!(q == p)) {
    const Vec3 diff = p - q;
    const double dist = diff.norm();
    const Vec3 n = r * (diff / dist);
    push_if_close(out, ss.position - n * s.radius, n, dist - s.radius, margin);
    return;
  }
  int axis = 0;
  double depth = e.x - std::abs(p.x);
  for (int k = 1; k < 3; ++k) {
    const double d = e[k] - std::abs(p[k]);
    if (d < depth) {
      depth = d;
      axis = k;
    }
  }
  Vec3 local_n;
  local_n[axis] = p[axis] >= 0.0 ? 1.0 : -1.0;
  const Vec3 n = r * local_n;
  push_if_close(out, ss.position - n * s.radius, n, -(depth + s.radius), margin);
}

//! Capsule is X, sphere is Y.
inline void capsule_sphere(const Capsule& c, const BodyState& sc, const Sphere& s, const BodyState& ss,
                           double margin, std::vector<RawContact>& out) {
  const Vec3 axis = sc.orientation.rotate(Vec3{0.0, 0.0, 1.0});
  const double t = std::clamp(axis.dot(ss.position - sc.position), -c.half_length, c.half_length);
  sphere_vs_point(sc.position + axis * t, c.radius, ss.position, s.radius, margin, out);
}

//! Cylinder is X, sphere is Y.
inline void cylinder_sphere(const Cylinder& c, const BodyState& sc, const Sphere& s,
                            const BodyState& ss, double margin, std::vector<RawContact>& out) {
  const Mat3 r = sc.orientation.to_matrix();
  const Vec3 p = r.transposed() * (ss.position - sc.position);
  const double rho = std::hypot(p.x, p.y);
  const Vec3 radial = rho > 1e-12 ? Vec3{p.x / rho, p.y / rho, 0.0} : Vec3{1.0, 0.0, 0.0};
  if (std::abs(p.z) <= c.half_length && rho <= c.radius) {
    const double side_depth = c.radius - rho;
    const double cap_depth = c.half_length - std::abs(p.z);
    const Vec3 local_n = side_depth < cap_depth ? radial : Vec3{0.0, 0.0, p.z >= 0.0 ? 1.0 : -1.0};
    const Vec3 n = r * local_n;
    push_if_close(out, ss.position - n * s.radius, n, -(std::min(side_depth, cap_depth) + s.radius),
                  margin);
    return;
  }
  const double rq = std::min(rho, c.radius);
  const Vec3 q{radial.x * rq, radial.y * rq, std::clamp(p.z, -c.half_length, c.half_length)};
  const Vec3 diff = p - q;
  const double dist = diff.norm();
  const Vec3 n = r * (diff / dist);
  push_if_close(out, ss.position - n * s.radius, n, dist - s.radius, margin);
}

//! Dispatches with X/Y in the given order; returns false if the combination is unsupported.
inline bool dispatch(const GeomShape& gx, const BodyState& sx, const GeomShape& gy, const BodyState& sy,
                     double margin, std::vector<RawContact>& out) {
  if (const auto* h = std::get_if<HalfSpace>(&gx)) {
    if (const auto* s = std::get_if<Sphere>(&gy)) return plane_sphere(*h, *s, sy, margin, out), true;
    if (const auto* b = std::get_if<Box>(&gy)) return plane_box(*h, *b, sy, margin, out), true;
    if (const auto* c = std::get_if<Capsule>(&gy)) return plane_capsule(*h, *c, sy, margin, out), true;
    if (const auto* c = std::get_if<Cylinder>(&gy)) return plane_cylinder(*h, *c, sy, margin, out), true;
    return false;
  }
  const auto* sphere_y = std::get_if<Sphere>(&gy);
  if (sphere_y == nullptr) return false;
  if (const auto* s = std::get_if<Sphere>(&gx)) return sphere_sphere(*s, sx, *sphere_y, sy, margin, out), true;
  if (const auto* b = std::get_if<Box>(&gx)) return box_sphere(*b, sx, *sphere_y, sy, margin, out), true;
  if (const auto* c = std::get_if<Capsule>(&gx)) return capsule_sphere(*c, sx, *sphere_y, sy, margin, out), true;
  if (const auto* c = std::get_if<Cylinder>(&gx)) return cylinder_sphere(*c, sx, *sphere_y, sy, margin, out), true;
  return false;
}

}  // namespace detail

//! Analytic contacts for one broadphase pair (i < j). A is body i; normals point from A to B.
//! Appends 0..k contacts to `out` in a fixed per-pair order.
inline void narrowphase(std::span<const Body> bodies, std::span<const BodyState> states,
                        std::pair<int, int> pair, double margin, std::vector<Contact>& out) {
  const auto [ia, ib] = pair;
  const Body& a = bodies[static_cast<std::size_t>(ia)];
  const Body& b = bodies[static_cast<std::size_t>(ib)];
  const BodyState& sa = states[static_cast<std::size_t>(ia)];
  const BodyState& sb = states[static_cast<std::size_t>(ib)];
  thread_local std::vector<detail::RawContact> raw;
  raw.clear();
  bool flipped = false;
  if (!detail::dispatch(a.geom, sa, b.geom, sb, margin, raw)) {
    if (!detail::dispatch(b.geom, sb, a.geom, sa, margin, raw)) {
      throw UnsupportedPair(std::string("no narrowphase for ") + shape_name(a.geom) + "-" +
                            shape_name(b.geom) + " (" + a.name + ", " + b.name + ")");
    }
    flipped = true;
  }
  const FrictionParams friction = combine_friction(a.friction, b.friction);
  for (const detail::RawContact& rc : raw) {
    Contact c;
    c.body_a = ia;
    c.body_b = ib;
    c.point = rc.point;
    c.normal = flipped ? -rc.normal : rc.normal;
    c.phi = rc.phi;
    const TangentFrame frame = build_tangent_frame(c.normal);
    c.tangent1 = frame.tangent1;
    c.tangent2 = frame.tangent2;
    c.friction = friction;
    out.push_back(c);
  }
}

inline std::vector<Contact> narrowphase(std::span<const Body> bodies, std::span<const BodyState> states,
                                        std::pair<int, int> pair, double margin) {
  std::vector<Contact> out;
  narrowphase(bodies, states, pair, margin, out);
  return out;
}

//! Broadphase plus narrowphase; contacts ordered by pair, then by per-pair index.
inline std::vector<Contact> detect_contacts(std::span<const Body> bodies, std::span<const BodyState> states,
                                            double margin) {
  std::vector<Contact> out;
  for (const auto& pair : broadphase_aabb(bodies, states, margin)) narrowphase(bodies, states, pair, margin, out);
  return out;
}

}  // namespace comfree
