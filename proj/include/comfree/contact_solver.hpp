#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "comfree/collision.hpp"
#include "comfree/errors.hpp"
#include "comfree/rigidmath.hpp"
#include "comfree/scene.hpp"
#include "comfree/state.hpp"

namespace comfree {

// ---------------------------------------------------------------------------
// Per-body mass data
// ---------------------------------------------------------------------------

//! Orientation-independent mass data of one body; zero inverse mass for static bodies.
struct BodyModel {
  bool dynamic = false;
  double mass = 0.0;
  double inv_mass = 0.0;
  Mat3 inertia_body{};
  Mat3 inv_inertia_body{};
};

inline std::vector<BodyModel> build_body_models(std::span<const Body> bodies) {
  std::vector<BodyModel> out;
  out.reserve(bodies.size());
  for (const Body& b : bodies) {
    BodyModel m;
    if (b.is_dynamic()) {
      if (!is_symmetric_positive_definite(b.inertia.inertia_body) || !(b.inertia.mass > 0.0)) {
        throw SingularInertia("body '" + b.name + "' has invalid mass or inertia");
      }
      m.dynamic = true;
      m.mass = b.inertia.mass;
      m.inv_mass = 1.0 / b.inertia.mass;
      m.inertia_body = b.inertia.inertia_body;
      m.inv_inertia_body = b.inertia.inertia_body.inverse();
    }
    out.push_back(m);
  }
  return out;
}

//! World-frame mass data for the current orientation.
struct MassProperties {
  double inv_mass = 0.0;
  Mat3 inertia_world{};
  Mat3 inv_inertia_world{};
};

inline MassProperties mass_properties(const BodyModel& model, const Quat& orientation) {
  if (!model.dynamic) return {};
  return {model.inv_mass, rotate_inertia(model.inertia_body, orientation),
          rotate_inertia(model.inv_inertia_body, orientation)};
}

struct Twist {
  Vec3 linear;
  Vec3 angular;

  friend bool operator==(const Twist&, const Twist&) = default;
};

// ---------------------------------------------------------------------------
// Kernel I: smooth prediction
// ---------------------------------------------------------------------------

//! v + M^-1 (tau - c) dt with gravity as an applied force and the gyroscopic term as bias.
inline void smooth_predict(std::span<const BodyState> states, std::span<const MassProperties> mass,
                           std::span<const Wrench> external, const Vec3& gravity, double dt,
                           std::span<Twist> out) {
  for (std::size_t i = 0; i < states.size(); ++i) {
    const MassProperties& mp = mass[i];
    if (mp.inv_mass == 0.0) {
      out[i] = {};
      continue;
    }
    const BodyState& s = states[i];
    const Wrench w = external.empty() ? Wrench{} : external[i];
    const Vec3 gyro = s.angular_velocity.cross(mp.inertia_world * s.angular_velocity);
    out[i].linear = s.velocity + (w.force * mp.inv_mass + gravity) * dt;
    out[i].angular = s.angular_velocity + mp.inv_inertia_world * (w.torque - gyro) * dt;
    if (!out[i].linear.is_finite() || !out[i].angular.is_finite()) {
      throw NonFiniteState("smooth prediction produced a non-finite velocity for body " + std::to_string(i));
    }
  }
}

// ---------------------------------------------------------------------------
// Contact Jacobian
// ---------------------------------------------------------------------------

//! Relative contact velocities expressed in the contact frame.
struct ContactVelocity {
  double normal = 0.0;
  std::array<double, 2> tangential{};
  double torsional = 0.0;
  std::array<double, 2> rolling{};
};

//! Jacobian of one contact restricted to its dynamic bodies. Body B enters with sign +1 and
//! body A with -1: linear block sign*I, angular block -sign*skew(lever).
struct ContactJacobian {
  struct Block {
    int body = -1;
    double sign = 0.0;
    Vec3 lever;  //!< contact point minus body centre of mass
  };

  std::array<Block, 2> blocks{};
  int count = 0;
  Vec3 normal;
  Vec3 tangent1;
  Vec3 tangent2;

  Mat3 linear_block(int k) const { return Mat3::identity() * blocks[static_cast<std::size_t>(k)].sign; }
  Mat3 angular_block(int k) const {
    const Block& b = blocks[static_cast<std::size_t>(k)];
    return Mat3::skew(b.lever) * (-b.sign);
  }

  //! (v_c, omega_c): velocity of B's material point minus A's, and omega_B - omega_A.
  Twist relative_velocity(std::span<const Twist> twists) const {
    Twist out;
    for (int k = 0; k < count; ++k) {
      const Block& b = blocks[static_cast<std::size_t>(k)];
      const Twist& t = twists[static_cast<std::size_t>(b.body)];
      out.linear += (t.linear + t.angular.cross(b.lever)) * b.sign;
      out.angular += t.angular * b.sign;
    }
    return out;
  }

  ContactVelocity velocity(std::span<const Twist> twists) const {
    const Twist rel = relative_velocity(twists);
    return {normal.dot(rel.linear),
            {tangent1.dot(rel.linear), tangent2.dot(rel.linear)},
            normal.dot(rel.angular),
            {tangent1.dot(rel.angular), tangent2.dot(rel.angular)}};
  }
};

inline ContactJacobian contact_jacobian(const Contact& c, std::span<const BodyState> states,
                                        std::span<const BodyModel> models) {
  ContactJacobian j;
  j.normal = c.normal;
  j.tangent1 = c.tangent1;
  j.tangent2 = c.tangent2;
  for (const auto& [body, sign] : {std::pair{c.body_a, -1.0}, std::pair{c.body_b, 1.0}}) {
    if (!models[static_cast<std::size_t>(body)].dynamic) continue;
    j.blocks[static_cast<std::size_t>(j.count++)] = {body, sign,
                                                     c.point - states[static_cast<std::size_t>(body)].position};
  }
  return j;
}

// ---------------------------------------------------------------------------
// Polyhedral dual cone
// ---------------------------------------------------------------------------

enum class Channel : std::uint8_t { Tangential = 0, Torsional = 1, Rolling = 2 };

inline const char* channel_name(Channel c) {
  switch (c) {
    case Channel::Tangential: return "t";
    case Channel::Torsional: return "tor";
    case Channel::Rolling: return "rol";
  }
  return "?";
}

//! Direction in a channel subspace: (t1, t2) coordinates, or (+-1, 0) for torsion.
using Direction = std::array<double, 2>;

//! Symmetric unit direction set. Torsion is always {+1, -1}; 2D channels use n equally
//! spaced angles 2*pi*j/n.
inline std::vector<Direction> facet_directions(Channel channel, int n) {
  if (channel == Channel::Torsional) return {{1.0, 0.0}, {-1.0, 0.0}};
  if (n < 2 || n % 2 != 0) throw ConfigError("facet count must be a positive even integer, got " + std::to_string(n));
  std::vector<Direction> out(static_cast<std::size_t>(n));
  const int half = n / 2;
  for (int j = 0; j < half; ++j) {
    // The second half is the exact negation of the first, so the set is closed under -d.
    Direction d{};
    if (4 * j == n) {
      d = {0.0, 1.0};
    } else if (j == 0) {
      d = {1.0, 0.0};
    } else {
      const double a = 2.0 * M_PI * j / n;
      d = {std::cos(a), std::sin(a)};
    }
    out[static_cast<std::size_t>(j)] = d;
    out[static_cast<std::size_t>(j + half)] = {-d[0], -d[1]};
  }
  return out;
}

struct FacetRow {
  int body = -1;
  Vec3 linear;
  Vec3 angular;
};

//! One linearised face: row Jn - mu * d^T J_s over the (up to two) incident dynamic bodies.
struct DualConeFacet {
  int contact = -1;
  Channel channel = Channel::Tangential;
  int index = 0;
  Direction direction{};
  double mu = 0.0;
  double gap = 0.0;
  int row_count = 0;
  std::array<FacetRow, 2> rows{};

  double rate(std::span<const Twist> twists) const {
    double s = 0.0;
    for (int k = 0; k < row_count; ++k) {
      const FacetRow& r = rows[static_cast<std::size_t>(k)];
      const Twist& t = twists[static_cast<std::size_t>(r.body)];
      s += r.linear.dot(t.linear) + r.angular.dot(t.angular);
    }
    return s;
  }
};

namespace detail {

inline DualConeFacet make_facet(int contact_index, const Contact& c, const ContactJacobian& jac,
                                Channel channel, int index, const Direction& d, double mu) {
  DualConeFacet f;
  f.contact = contact_index;
  f.channel = channel;
  f.index = index;
  f.direction = d;
  f.mu = mu;
  f.gap = c.phi;
  Vec3 w_lin = c.normal;
  Vec3 w_ang;
  const Vec3 u = c.tangent1 * d[0] + c.tangent2 * d[1];
  switch (channel) {
    case Channel::Tangential: w_lin = c.normal - u * mu; break;
    case Channel::Torsional: w_ang = c.normal * (-mu * d[0]); break;
    case Channel::Rolling: w_ang = u * (-mu); break;
  }
  f.row_count = jac.count;
  for (int k = 0; k < jac.count; ++k) {
    const ContactJacobian::Block& b = jac.blocks[static_cast<std::size_t>(k)];
    f.rows[static_cast<std::size_t>(k)] = {b.body, w_lin * b.sign, (b.lever.cross(w_lin) + w_ang) * b.sign};
  }
  return f;
}

}  // namespace detail

//! Appends the facets of one contact in (channel, direction) order. A channel whose
//! coefficient is zero contributes a single normal-only facet.
inline void build_facets(int contact_index, const Contact& c, const ContactJacobian& jac, int n_facets_t,
                         int n_facets_rol, std::vector<DualConeFacet>& out) {
  const std::array<std::pair<Channel, double>, 3> channels{
      {{Channel::Tangential, c.friction.mu_t}, {Channel::Torsional, c.friction.mu_tor}, {Channel::Rolling, c.friction.mu_rol}}};
  for (const auto& [channel, mu] : channels) {
    if (mu == 0.0) {
      out.push_back(detail::make_facet(contact_index, c, jac, channel, 0, {0.0, 0.0}, 0.0));
      continue;
    }
    const int n = channel == Channel::Tangential ? n_facets_t : n_facets_rol;
    const std::vector<Direction> dirs = facet_directions(channel, n);
    for (std::size_t j = 0; j < dirs.size(); ++j) {
      out.push_back(detail::make_facet(contact_index, c, jac, channel, static_cast<int>(j), dirs[j], mu));
    }
  }
}

// ---------------------------------------------------------------------------
// Impedance
// ---------------------------------------------------------------------------

//! Piecewise power curve through (0,0), (mid,mid), (1,1). Expects x already in [0, 1].
inline double scaling_gamma(double x, double mid, double power) {
  if (x < mid) return mid * std::pow(x / mid, power);
  return 1.0 - (1.0 - mid) * std::pow((1.0 - x) / (1.0 - mid), power);
}

inline double scaling_r(double phi, const ImpedanceConfig& cfg) {
  const double x = std::clamp(std::abs(phi) / cfg.width, 0.0, 1.0);
  return cfg.r_min + (cfg.r_max - cfg.r_min) * scaling_gamma(x, cfg.mid, cfg.power);
}

//! trace(J M^-1 J^T) for the 3-row linear point Jacobian [I, -skew(lever)] of one body.
inline double point_inverse_inertia_trace(const MassProperties& mp, const Vec3& lever) {
  const Mat3 s = Mat3::skew(lever);
  return 3.0 * mp.inv_mass + (s * mp.inv_inertia_world * s.transposed()).trace();
}

//! Gap-adaptive scalar impedance (r / (1 - r)) / (tr_a + tr_b); static bodies contribute 0.
inline double constraint_impedance(double phi, const ContactJacobian& jac, std::span<const MassProperties> mass,
                                   const ImpedanceConfig& cfg) {
  if (jac.count == 0) throw InternalError("contact between two static bodies");
  double trace = 0.0;
  for (int k = 0; k < jac.count; ++k) {
    const ContactJacobian::Block& b = jac.blocks[static_cast<std::size_t>(k)];
    trace += point_inverse_inertia_trace(mass[static_cast<std::size_t>(b.body)], b.lever);
  }
  const double r = scaling_r(phi, cfg);
  return r / (1.0 - r) / trace;
}

struct ImpedanceGains {
  double stiffness = 0.0;  //!< K
  double damping = 0.0;    //!< D
  double m_phi = 0.0;
};

inline ImpedanceGains impedance_gains(double m_phi, const ImpedanceConfig& cfg, double dt) {
  return {cfg.k_user * m_phi / dt, cfg.d_user * m_phi / dt, m_phi};
}

// ---------------------------------------------------------------------------
// Kernel II: closed-form facet impulse
// ---------------------------------------------------------------------------

//! (-K (s dt + gap) - D s)_+ for facet rate s evaluated at the smooth prediction.
inline double facet_impulse(double rate, double gap, const ImpedanceGains& g, double dt) {
  return std::max(0.0, -g.stiffness * (rate * dt + gap) - g.damping * rate);
}

inline double facet_impulse(const DualConeFacet& f, std::span<const Twist> v_smooth, const ImpedanceGains& g,
                            double dt) {
  return facet_impulse(f.rate(v_smooth), f.gap, g, dt);
}

// ---------------------------------------------------------------------------
// Kernels III and IV
// ---------------------------------------------------------------------------

//! p = sum_facets row^T lambda, summed per body in facet order.
inline void accumulate_impulses(std::span<const DualConeFacet> facets, std::span<const double> impulses,
                                std::span<Twist> p) {
  std::fill(p.begin(), p.end(), Twist{});
  for (std::size_t i = 0; i < facets.size(); ++i) {
    const double lambda = impulses[i];
    if (lambda == 0.0) continue;
    const DualConeFacet& f = facets[i];
    for (int k = 0; k < f.row_count; ++k) {
      const FacetRow& r = f.rows[static_cast<std::size_t>(k)];
      Twist& acc = p[static_cast<std::size_t>(r.body)];
      acc.linear += r.linear * lambda;
      acc.angular += r.angular * lambda;
    }
  }
}

inline std::vector<Twist> accumulate_impulses(std::span<const DualConeFacet> facets,
                                              std::span<const double> impulses, std::size_t n_bodies) {
  std::vector<Twist> p(n_bodies);
  accumulate_impulses(facets, impulses, p);
  return p;
}

//! v+ = v_smooth + M^-1 p dt, in place.
inline void velocity_correction(std::span<Twist> v, std::span<const Twist> p, std::span<const MassProperties> mass,
                                double dt) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mass[i].inv_mass == 0.0) continue;
    v[i].linear += p[i].linear * (mass[i].inv_mass * dt);
    v[i].angular += mass[i].inv_inertia_world * p[i].angular * dt;
  }
}

// ---------------------------------------------------------------------------
// Primal reconstruction and contact modes
// ---------------------------------------------------------------------------

struct ContactWrench {
  double lambda_n = 0.0;                   //!< sum of all channels' normal parts
  std::array<double, 3> lambda_n_channel{};  //!< per channel: t, tor, rol
  std::array<double, 2> lambda_t{};
  double m_tor = 0.0;
  std::array<double, 2> m_rol{};
  FrictionParams friction;
};

//! Facet activations mapped back to the primal wrench: per channel, normal part sum(lambda_j)
//! and frictional part -mu * sum(lambda_j d_j).
inline ContactWrench reconstruct_wrench(const FrictionParams& friction, std::span<const DualConeFacet> facets,
                                        std::span<const double> impulses) {
  ContactWrench w;
  w.friction = friction;
  std::array<std::array<double, 2>, 3> directional{};
  for (std::size_t i = 0; i < facets.size(); ++i) {
    const DualConeFacet& f = facets[i];
    const auto ch = static_cast<std::size_t>(f.channel);
    w.lambda_n_channel[ch] += impulses[i];
    directional[ch][0] += impulses[i] * f.direction[0];
    directional[ch][1] += impulses[i] * f.direction[1];
  }
  w.lambda_n = w.lambda_n_channel[0] + w.lambda_n_channel[1] + w.lambda_n_channel[2];
  w.lambda_t = {-friction.mu_t * directional[0][0], -friction.mu_t * directional[0][1]};
  w.m_tor = -friction.mu_tor * directional[1][0];
  w.m_rol = {-friction.mu_rol * directional[2][0], -friction.mu_rol * directional[2][1]};
  return w;
}

enum class ContactMode { Separation, Sticking, Sliding, TorsionSlip, RollSlip };

inline const char* mode_name(ContactMode m) {
  switch (m) {
    case ContactMode::Separation: return "separation";
    case ContactMode::Sticking: return "sticking";
    case ContactMode::Sliding: return "sliding";
    case ContactMode::TorsionSlip: return "torsion_slip";
    case ContactMode::RollSlip: return "roll_slip";
  }
  return "?";
}

struct ModeTolerances {
  double separation = 1e-9;  //!< aggregate normal impulse below this is separation
  double boundary = 0.3;     //!< a channel slips when its ratio exceeds (1 - boundary)
};

//! Cone-boundary proximity per channel, each channel measured against its own normal part.
//! Checked in order: separation, sliding, torsional slip, rolling slip, else sticking.
inline ContactMode diagnose_contact_mode(const ContactWrench& w, const ModeTolerances& tol = {}) {
  if (w.lambda_n < tol.separation) return ContactMode::Separation;
  const double limit = 1.0 - tol.boundary;
  auto slipping = [&](double magnitude, double mu, double normal) {
    return mu > 0.0 && normal > 0.0 && magnitude > limit * mu * normal;
  };
  if (slipping(std::hypot(w.lambda_t[0], w.lambda_t[1]), w.friction.mu_t, w.lambda_n_channel[0])) {
    return ContactMode::Sliding;
  }
  if (slipping(std::abs(w.m_tor), w.friction.mu_tor, w.lambda_n_channel[1])) return ContactMode::TorsionSlip;
  if (slipping(std::hypot(w.m_rol[0], w.m_rol[1]), w.friction.mu_rol, w.lambda_n_channel[2])) {
    return ContactMode::RollSlip;
  }
  return ContactMode::Sticking;
}

// ---------------------------------------------------------------------------
// Kernels II-IV over a contact set
// ---------------------------------------------------------------------------

//! Reusable buffers for one environment's contact solve.
struct ContactSolveWorkspace {
  std::vector<ContactJacobian> jacobians;
  std::vector<ImpedanceGains> gains;
  std::vector<DualConeFacet> facets;
  std::vector<int> facet_begin;  //!< per contact, plus one sentinel
  std::vector<double> impulses;
  std::vector<Twist> generalized_impulse;
};

//! Builds facets and gains for `contacts`, evaluates every facet impulse against `v` (the smooth
//! prediction), accumulates per body and applies the correction to `v` in place.
inline void solve_contacts(std::span<const Contact> contacts, std::span<const BodyState> states,
                           std::span<const BodyModel> models, std::span<const MassProperties> mass,
                           const SimConfig& cfg, std::span<Twist> v, ContactSolveWorkspace& ws) {
  ws.jacobians.clear();
  ws.gains.clear();
  ws.facets.clear();
  ws.facet_begin.clear();
  for (std::size_t k = 0; k < contacts.size(); ++k) {
    const Contact& c = contacts[k];
    ws.jacobians.push_back(contact_jacobian(c, states, models));
    const double m_phi = constraint_impedance(c.phi, ws.jacobians.back(), mass, cfg.impedance);
    ws.gains.push_back(impedance_gains(m_phi, cfg.impedance, cfg.dt));
    ws.facet_begin.push_back(static_cast<int>(ws.facets.size()));
    build_facets(static_cast<int>(k), c, ws.jacobians.back(), cfg.n_facets_t, cfg.n_facets_rol, ws.facets);
  }
  ws.facet_begin.push_back(static_cast<int>(ws.facets.size()));

  ws.impulses.resize(ws.facets.size());
  for (std::size_t i = 0; i < ws.facets.size(); ++i) {
    const DualConeFacet& f = ws.facets[i];
    ws.impulses[i] = facet_impulse(f, v, ws.gains[static_cast<std::size_t>(f.contact)], cfg.dt);
  }

  ws.generalized_impulse.resize(v.size());
  accumulate_impulses(ws.facets, ws.impulses, ws.generalized_impulse);
  velocity_correction(v, ws.generalized_impulse, mass, cfg.dt);
}

//! Wrench of contact k from the most recent solve_contacts call on `ws`.
inline ContactWrench contact_wrench(const ContactSolveWorkspace& ws, std::span<const Contact> contacts, std::size_t k) {
  const auto begin = static_cast<std::size_t>(ws.facet_begin[k]);
  const auto end = static_cast<std::size_t>(ws.facet_begin[k + 1]);
  return reconstruct_wrench(contacts[k].friction, std::span(ws.facets).subspan(begin, end - begin),
                            std::span(ws.impulses).subspan(begin, end - begin));
}

}  // namespace comfree
