#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "comfree/errors.hpp"
#include "comfree/rigidmath.hpp"

namespace comfree {

// Geometry is expressed in the body frame; capsule and cylinder axes run along local z.
struct Sphere {
  double radius = 0.05;
  friend bool operator==(const Sphere&, const Sphere&) = default;
};

struct Box {
  Vec3 half_extents{0.05, 0.05, 0.05};
  friend bool operator==(const Box&, const Box&) = default;
};

struct Capsule {
  double radius = 0.02;
  double half_length = 0.03;
  friend bool operator==(const Capsule&, const Capsule&) = default;
};

struct Cylinder {
  double radius = 0.05;
  double half_length = 0.05;
  friend bool operator==(const Cylinder&, const Cylinder&) = default;
};

//! World-frame half-space {x : normal . x <= offset}; the body pose is ignored.
struct HalfSpace {
  Vec3 normal{0.0, 0.0, 1.0};
  double offset = 0.0;
  friend bool operator==(const HalfSpace&, const HalfSpace&) = default;
};

using GeomShape = std::variant<Sphere, Box, Capsule, Cylinder, HalfSpace>;

inline const char* shape_name(const GeomShape& g) {
  static constexpr const char* names[] = {"sphere", "box", "capsule", "cylinder", "halfspace"};
  return names[g.index()];
}

enum class BodyKind { Dynamic, Static };

//! Coulomb coefficients. mu_tor and mu_rol are lengths: effective contact-patch radii.
struct FrictionParams {
  double mu_t = 1.0;
  double mu_tor = 0.005;
  double mu_rol = 0.0001;
  friend bool operator==(const FrictionParams&, const FrictionParams&) = default;
};

//! Pair friction is the element-wise minimum of the two bodies' coefficients.
inline FrictionParams combine_friction(const FrictionParams& a, const FrictionParams& b) {
  return {std::min(a.mu_t, b.mu_t), std::min(a.mu_tor, b.mu_tor), std::min(a.mu_rol, b.mu_rol)};
}

struct ImpedanceConfig {
  double k_user = 0.1;
  double d_user = 0.001;
  double r_min = 0.9;
  double r_max = 0.95;
  double width = 0.001;
  double mid = 0.5;
  double power = 2.0;
  friend bool operator==(const ImpedanceConfig&, const ImpedanceConfig&) = default;
};

struct SimConfig {
  double dt = 0.002;
  Vec3 gravity{0.0, 0.0, -9.81};
  int n_facets_t = 4;
  int n_facets_rol = 4;
  double contact_margin = 0.001;
  ImpedanceConfig impedance;
  std::uint64_t seed = 0;
  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

struct Body {
  std::string name;
  BodyKind kind = BodyKind::Dynamic;
  GeomShape geom = Sphere{};
  SpatialInertia inertia;  //!< meaningful for Dynamic bodies only
  Vec3 position;
  Quat orientation;
  Vec3 velocity;
  Vec3 angular_velocity;
  FrictionParams friction;

  bool is_dynamic() const { return kind == BodyKind::Dynamic; }
  friend bool operator==(const Body&, const Body&) = default;
};

struct Scene {
  std::vector<Body> bodies;
  SimConfig config;
  friend bool operator==(const Scene&, const Scene&) = default;
};

//! Solid-body inertia about the centre of mass for a uniform-density shape.
inline Mat3 default_inertia(const GeomShape& geom, double mass) {
  struct Visitor {
    double m;
    Mat3 operator()(const Sphere& s) const {
      const double i = 0.4 * m * s.radius * s.radius;
      return Mat3::diagonal(i, i, i);
    }
    Mat3 operator()(const Box& b) const {
      const Vec3 e = b.half_extents;
      return Mat3::diagonal(m * (e.y * e.y + e.z * e.z) / 3.0, m * (e.x * e.x + e.z * e.z) / 3.0,
                            m * (e.x * e.x + e.y * e.y) / 3.0);
    }
    Mat3 operator()(const Cylinder& c) const {
      const double r2 = c.radius * c.radius;
      const double l = 2.0 * c.half_length;
      const double ixx = m * (3.0 * r2 + l * l) / 12.0;
      return Mat3::diagonal(ixx, ixx, 0.5 * m * r2);
    }
    Mat3 operator()(const Capsule& c) const {
      // Mass split by volume between the cylinder and the two hemispheres.
      const double r = c.radius;
      const double h = c.half_length;
      const double v_cyl = M_PI * r * r * 2.0 * h;
      const double v_sph = 4.0 / 3.0 * M_PI * r * r * r;
      const double m_cyl = m * v_cyl / (v_cyl + v_sph);
      const double m_sph = m - m_cyl;
      const double izz = 0.5 * m_cyl * r * r + 0.4 * m_sph * r * r;
      const double ixx = m_cyl * (3.0 * r * r + 4.0 * h * h) / 12.0 +
                         m_sph * (0.4 * r * r + h * h + 0.75 * h * r);
      return Mat3::diagonal(ixx, ixx, izz);
    }
    Mat3 operator()(const HalfSpace&) const { return Mat3::identity(); }
  };
  return std::visit(Visitor{mass}, geom);
}

inline Body make_dynamic(std::string name, GeomShape geom, double mass, const Vec3& position,
                         const FrictionParams& friction = {}) {
  Body b;
  b.name = std::move(name);
  b.kind = BodyKind::Dynamic;
  b.inertia = SpatialInertia{mass, default_inertia(geom, mass)};
  b.geom = std::move(geom);
  b.position = position;
  b.friction = friction;
  return b;
}

inline Body make_static(std::string name, GeomShape geom, const Vec3& position = {},
                        const FrictionParams& friction = {}) {
  Body b;
  b.name = std::move(name);
  b.kind = BodyKind::Static;
  b.geom = std::move(geom);
  b.position = position;
  b.friction = friction;
  b.inertia = SpatialInertia{0.0, Mat3{}};
  return b;
}

inline Body make_ground(const FrictionParams& friction = {}) {
  return make_static("ground", HalfSpace{}, {}, friction);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline void require(bool ok, const std::string& field, const std::string& reason) {
  if (!ok) throw ValidationError(field, reason);
}

inline void require_positive(double v, const std::string& field) {
  require(std::isfinite(v) && v > 0.0, field, "must be finite and > 0");
}

inline void require_non_negative(double v, const std::string& field) {
  require(std::isfinite(v) && v >= 0.0, field, "must be finite and >= 0");
}

inline void require_finite(const Vec3& v, const std::string& field) {
  require(v.is_finite(), field, "must be finite");
}

}  // namespace detail

inline void validate(const FrictionParams& f, const std::string& prefix = "friction") {
  detail::require_non_negative(f.mu_t, prefix + ".mu_t");
  detail::require_non_negative(f.mu_tor, prefix + ".mu_tor");
  detail::require_non_negative(f.mu_rol, prefix + ".mu_rol");
}

inline void validate(const ImpedanceConfig& c, const std::string& prefix = "impedance") {
  detail::require_positive(c.k_user, prefix + ".k_user");
  detail::require_non_negative(c.d_user, prefix + ".d_user");
  detail::require(c.r_min > 0.0 && c.r_min < 1.0, prefix + ".r_min", "must lie in (0, 1)");
  detail::require(c.r_max > 0.0 && c.r_max < 1.0, prefix + ".r_max", "must lie in (0, 1)");
  detail::require(c.r_min < c.r_max, prefix + ".r_min", "must be < r_max");
  detail::require_positive(c.width, prefix + ".width");
  detail::require(c.mid > 0.0 && c.mid < 1.0, prefix + ".mid", "must lie in (0, 1)");
  detail::require(std::isfinite(c.power) && c.power >= 1.0, prefix + ".power", "must be >= 1");
}

inline void validate(const SimConfig& c) {
  detail::require_positive(c.dt, "config.dt");
  detail::require_finite(c.gravity, "config.gravity");
  detail::require(c.n_facets_t >= 4 && c.n_facets_t % 2 == 0, "config.n_facets_t",
                  "must be an even integer >= 4");
  detail::require(c.n_facets_rol >= 2 && c.n_facets_rol % 2 == 0, "config.n_facets_rol",
                  "must be an even integer >= 2");
  detail::require_non_negative(c.contact_margin, "config.contact_margin");
  validate(c.impedance, "config.impedance");
}

inline void validate(const GeomShape& g, const std::string& prefix) {
  struct Visitor {
    const std::string& p;
    void operator()(const Sphere& s) const { detail::require_positive(s.radius, p + ".radius"); }
    void operator()(const Box& b) const {
      detail::require_positive(b.half_extents.x, p + ".half_extents");
      detail::require_positive(b.half_extents.y, p + ".half_extents");
      detail::require_positive(b.half_extents.z, p + ".half_extents");
    }
    void operator()(const Capsule& c) const {
      detail::require_positive(c.radius, p + ".radius");
      detail::require_positive(c.half_length, p + ".half_length");
    }
    void operator()(const Cylinder& c) const {
      detail::require_positive(c.radius, p + ".radius");
      detail::require_positive(c.half_length, p + ".half_length");
    }
    void operator()(const HalfSpace& h) const {
      detail::require_finite(h.normal, p + ".normal");
      detail::require(std::abs(h.normal.norm() - 1.0) < 1e-9, p + ".normal", "must be unit length");
      detail::require(std::isfinite(h.offset), p + ".offset", "must be finite");
    }
  };
  std::visit(Visitor{prefix}, g);
}

inline void validate(const Body& b, const std::string& prefix) {
  detail::require(!b.name.empty(), prefix + ".name", "must not be empty");
  validate(b.geom, prefix + ".geom");
  validate(b.friction, prefix + ".friction");
  detail::require_finite(b.position, prefix + ".position");
  detail::require_finite(b.velocity, prefix + ".velocity");
  detail::require_finite(b.angular_velocity, prefix + ".angular_velocity");
  detail::require(b.orientation.is_finite() && std::abs(b.orientation.norm() - 1.0) < 1e-9,
                  prefix + ".orientation", "must be a unit quaternion");
  if (b.is_dynamic()) {
    detail::require(!std::holds_alternative<HalfSpace>(b.geom), prefix + ".kind",
                    "a halfspace must be static");
    detail::require_positive(b.inertia.mass, prefix + ".mass");
    detail::require(b.inertia.inertia_body.is_finite() &&
                        is_symmetric_positive_definite(b.inertia.inertia_body, 1e-12),
                    prefix + ".inertia", "must be symmetric positive-definite");
  }
}

inline void validate(const Scene& s) {
  validate(s.config);
  std::set<std::string> names;
  for (std::size_t i = 0; i < s.bodies.size(); ++i) {
    const std::string prefix = "bodies[" + std::to_string(i) + "]";
    validate(s.bodies[i], prefix);
    detail::require(names.insert(s.bodies[i].name).second, prefix + ".name", "duplicate body name");
  }
}

// ---------------------------------------------------------------------------
// JSON scene format
// ---------------------------------------------------------------------------

namespace detail {

using json = nlohmann::json;

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                           const std::string& prefix) {
  require(j.is_object(), prefix, "must be an object");
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return item.key() == k; });
    if (!known) throw ValidationError(prefix + "." + item.key(), "unknown key");
  }
}

inline double get_number(const json& j, const std::string& field) {
  require(j.is_number(), field, "expected a number");
  return j.get<double>();
}

inline Vec3 get_vec3(const json& j, const std::string& field) {
  require(j.is_array() && j.size() == 3, field, "expected an array of 3 numbers");
  return {get_number(j[0], field), get_number(j[1], field), get_number(j[2], field)};
}

inline Quat get_quat(const json& j, const std::string& field) {
  require(j.is_array() && j.size() == 4, field, "expected [w, x, y, z]");
  return {get_number(j[0], field), get_number(j[1], field), get_number(j[2], field),
          get_number(j[3], field)};
}

inline int get_int(const json& j, const std::string& field) {
  require(j.is_number_integer(), field, "expected an integer");
  return j.get<int>();
}

inline json to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
inline json to_json(const Quat& q) { return json::array({q.w, q.x, q.y, q.z}); }

inline Mat3 get_inertia(const json& j, const std::string& field) {
  require(j.is_array() && j.size() == 3, field, "expected a diagonal [a,b,c] or a 3x3 array");
  if (j[0].is_array()) {
    return Mat3::from_rows(get_vec3(j[0], field), get_vec3(j[1], field), get_vec3(j[2], field));
  }
  const Vec3 d = get_vec3(j, field);
  return Mat3::diagonal(d.x, d.y, d.z);
}

inline GeomShape parse_geom(const json& j, const std::string& p) {
  require(j.is_object() && j.contains("type") && j["type"].is_string(), p + ".type",
          "expected a shape type string");
  const std::string type = j["type"].get<std::string>();
  auto num = [&](const char* key) {
    require(j.contains(key), p + "." + key, "missing");
    return get_number(j[key], p + "." + key);
  };
  if (type == "sphere") {
    reject_unknown(j, {"type", "radius"}, p);
    return Sphere{num("radius")};
  }
  if (type == "box") {
    reject_unknown(j, {"type", "half_extents"}, p);
    require(j.contains("half_extents"), p + ".half_extents", "missing");
    return Box{get_vec3(j["half_extents"], p + ".half_extents")};
  }
  if (type == "capsule") {
    reject_unknown(j, {"type", "radius", "half_length"}, p);
    return Capsule{num("radius"), num("half_length")};
  }
  if (type == "cylinder") {
    reject_unknown(j, {"type", "radius", "half_length"}, p);
    return Cylinder{num("radius"), num("half_length")};
  }
  if (type == "halfspace") {
    reject_unknown(j, {"type", "normal", "offset"}, p);
    HalfSpace h;
    if (j.contains("normal")) h.normal = get_vec3(j["normal"], p + ".normal");
    if (j.contains("offset")) h.offset = num("offset");
    return h;
  }
  throw ValidationError(p + ".type", "unknown shape '" + type + "'");
}

inline json geom_to_json(const GeomShape& g) {
  struct Visitor {
    json operator()(const Sphere& s) const { return {{"type", "sphere"}, {"radius", s.radius}}; }
    json operator()(const Box& b) const {
      return {{"type", "box"}, {"half_extents", to_json(b.half_extents)}};
    }
    json operator()(const Capsule& c) const {
      return {{"type", "capsule"}, {"radius", c.radius}, {"half_length", c.half_length}};
    }
    json operator()(const Cylinder& c) const {
      return {{"type", "cylinder"}, {"radius", c.radius}, {"half_length", c.half_length}};
    }
    json operator()(const HalfSpace& h) const {
      return {{"type", "halfspace"}, {"normal", to_json(h.normal)}, {"offset", h.offset}};
    }
  };
  return std::visit(Visitor{}, g);
}

inline FrictionParams parse_friction(const json& j, const std::string& p) {
  reject_unknown(j, {"mu_t", "mu_tor", "mu_rol"}, p);
  FrictionParams f;
  if (j.contains("mu_t")) f.mu_t = get_number(j["mu_t"], p + ".mu_t");
  if (j.contains("mu_tor")) f.mu_tor = get_number(j["mu_tor"], p + ".mu_tor");
  if (j.contains("mu_rol")) f.mu_rol = get_number(j["mu_rol"], p + ".mu_rol");
  return f;
}

inline ImpedanceConfig parse_impedance(const json& j, const std::string& p) {
  reject_unknown(j, {"k_user", "d_user", "r_min", "r_max", "width", "mid", "power"}, p);
  ImpedanceConfig c;
  auto opt = [&](const char* key, double& out) {
    if (j.contains(key)) out = get_number(j[key], p + "." + key);
  };
  opt("k_user", c.k_user);
  opt("d_user", c.d_user);
  opt("r_min", c.r_min);
  opt("r_max", c.r_max);
  opt("width", c.width);
  opt("mid", c.mid);
  opt("power", c.power);
  return c;
}

inline SimConfig parse_config(const json& j) {
  const std::string p = "config";
  reject_unknown(j, {"dt", "gravity", "n_facets_t", "n_facets_rol", "contact_margin", "impedance", "seed"},
                 p);
  SimConfig c;
  if (j.contains("dt")) c.dt = get_number(j["dt"], p + ".dt");
  if (j.contains("gravity")) c.gravity = get_vec3(j["gravity"], p + ".gravity");
  if (j.contains("n_facets_t")) c.n_facets_t = get_int(j["n_facets_t"], p + ".n_facets_t");
  if (j.contains("n_facets_rol")) c.n_facets_rol = get_int(j["n_facets_rol"], p + ".n_facets_rol");
  if (j.contains("contact_margin")) {
    c.contact_margin = get_number(j["contact_margin"], p + ".contact_margin");
  }
  if (j.contains("impedance")) c.impedance = parse_impedance(j["impedance"], p + ".impedance");
  if (j.contains("seed")) {
    require(j["seed"].is_number_unsigned(), p + ".seed", "expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  return c;
}

inline Body parse_body(const json& j, const std::string& p) {
  reject_unknown(j,
                 {"name", "kind", "geom", "mass", "inertia", "position", "orientation", "velocity",
                  "angular_velocity", "friction"},
                 p);
  Body b;
  require(j.contains("name") && j["name"].is_string(), p + ".name", "expected a string");
  b.name = j["name"].get<std::string>();
  require(j.contains("kind") && j["kind"].is_string(), p + ".kind", "expected \"dynamic\" or \"static\"");
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "dynamic") {
    b.kind = BodyKind::Dynamic;
  } else if (kind == "static") {
    b.kind = BodyKind::Static;
  } else {
    throw ValidationError(p + ".kind", "expected \"dynamic\" or \"static\"");
  }
  require(j.contains("geom"), p + ".geom", "missing");
  b.geom = parse_geom(j["geom"], p + ".geom");
  if (j.contains("position")) b.position = get_vec3(j["position"], p + ".position");
  if (j.contains("orientation")) b.orientation = get_quat(j["orientation"], p + ".orientation");
  if (j.contains("velocity")) b.velocity = get_vec3(j["velocity"], p + ".velocity");
  if (j.contains("angular_velocity")) {
    b.angular_velocity = get_vec3(j["angular_velocity"], p + ".angular_velocity");
  }
  if (j.contains("friction")) b.friction = parse_friction(j["friction"], p + ".friction");
  if (b.is_dynamic()) {
    require(j.contains("mass"), p + ".mass", "required for dynamic bodies");
    const double mass = get_number(j["mass"], p + ".mass");
    require_positive(mass, p + ".mass");
    validate(b.geom, p + ".geom");
    b.inertia.mass = mass;
    b.inertia.inertia_body = j.contains("inertia") ? get_inertia(j["inertia"], p + ".inertia")
                                                   : default_inertia(b.geom, mass);
  } else {
    require(!j.contains("mass") && !j.contains("inertia"), p + ".mass",
            "static bodies carry no mass or inertia");
    b.inertia = SpatialInertia{0.0, Mat3{}};
  }
  return b;
}

inline std::size_t line_of_byte(const std::string& text, std::size_t byte) {
  const std::size_t end = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(end), '\n'));
}

}  // namespace detail

//! Parses and fully validates a scene document.
inline Scene parse_scene(const std::string& text) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports the byte just past the offending token.
    const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
    throw ParseError(detail::line_of_byte(text, byte), e.what());
  }
  detail::reject_unknown(doc, {"config", "bodies"}, "scene");
  Scene scene;
  if (doc.contains("config")) scene.config = detail::parse_config(doc["config"]);
  detail::require(doc.contains("bodies") && doc["bodies"].is_array(), "bodies", "expected an array");
  for (std::size_t i = 0; i < doc["bodies"].size(); ++i) {
    scene.bodies.push_back(detail::parse_body(doc["bodies"][i], "bodies[" + std::to_string(i) + "]"));
  }
  validate(scene);
  return scene;
}

inline Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open scene file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scene(buffer.str());
}

//! Writes every field explicitly, so parse_scene(serialize_scene(s)) == s.
inline std::string serialize_scene(const Scene& scene) {
  using detail::json;
  using detail::to_json;
  const SimConfig& c = scene.config;
  const ImpedanceConfig& imp = c.impedance;
  json doc;
  doc["config"] = {{"dt", c.dt},
                   {"gravity", to_json(c.gravity)},
                   {"n_facets_t", c.n_facets_t},
                   {"n_facets_rol", c.n_facets_rol},
                   {"contact_margin", c.contact_margin},
                   {"seed", c.seed},
                   {"impedance",
                    {{"k_user", imp.k_user},
                     {"d_user", imp.d_user},
                     {"r_min", imp.r_min},
                     {"r_max", imp.r_max},
                     {"width", imp.width},
                     {"mid", imp.mid},
                     {"power", imp.power}}}};
  json bodies = json::array();
  for (const Body& b : scene.bodies) {
    json jb;
    jb["name"] = b.name;
    jb["kind"] = b.is_dynamic() ? "dynamic" : "static";
    jb["geom"] = detail::geom_to_json(b.geom);
    if (b.is_dynamic()) {
      jb["mass"] = b.inertia.mass;
      const Mat3& i = b.inertia.inertia_body;
      jb["inertia"] = json::array({to_json(i.row(0)), to_json(i.row(1)), to_json(i.row(2))});
    }
    jb["position"] = to_json(b.position);
    jb["orientation"] = to_json(b.orientation);
    jb["velocity"] = to_json(b.velocity);
    jb["angular_velocity"] = to_json(b.angular_velocity);
    jb["friction"] = {{"mu_t", b.friction.mu_t}, {"mu_tor", b.friction.mu_tor}, {"mu_rol", b.friction.mu_rol}};
    bodies.push_back(std::move(jb));
  }
  doc["bodies"] = std::move(bodies);
  return doc.dump(2) + "\n";
}

inline void save_scene(const Scene& scene, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path, "cannot open for writing");
  out << serialize_scene(scene);
  if (!out) throw IoError(path, "write failed");
}

}  // namespace comfree
