#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "comfree/comfree.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace comfree {
namespace {

using testing::random_quat;
using testing::random_unit;
using testing::random_vec;
using testing::uniform;

MassProperties point_mass(double m) {
  // A body with no rotational freedom: zero inverse inertia.
  return {1.0 / m, Mat3::identity(), Mat3{}};
}

ContactJacobian jacobian_for(const Contact& c, const std::vector<BodyState>& states,
                             const std::vector<BodyModel>& models) {
  return contact_jacobian(c, states, models);
}

Contact make_contact(int a, int b, const Vec3& point, const Vec3& normal, double phi, const FrictionParams& f = {}) {
  Contact c;
  c.body_a = a;
  c.body_b = b;
  c.point = point;
  c.normal = normal;
  const TangentFrame frame = build_tangent_frame(normal);
  c.tangent1 = frame.tangent1;
  c.tangent2 = frame.tangent2;
  c.phi = phi;
  c.friction = f;
  return c;
}

// ---------------------------------------------------------------------------
// Smooth prediction
// ---------------------------------------------------------------------------

TEST(SmoothPredict, GravityStep) {
  const std::vector<BodyState> states{{{}, Quat::identity(), {}, {}}};
  const std::vector<MassProperties> mass{{1.0, Mat3::identity(), Mat3::identity()}};
  std::vector<Twist> out(1);
  smooth_predict(states, mass, {}, {0.0, 0.0, -9.81}, 0.002, out);
  EXPECT_NEAR(out[0].linear.z, -0.01962, 1e-15);
  EXPECT_EQ(out[0].linear.x, 0.0);
  EXPECT_EQ(out[0].angular, Vec3{});
}

TEST(SmoothPredict, NoForcesLeavesVelocityUnchanged) {
  const std::vector<BodyState> states{{{}, random_quat(), {1.0, 2.0, 3.0}, {}}};
  const std::vector<MassProperties> mass{{0.5, Mat3::identity(), Mat3::identity()}};
  std::vector<Twist> out(1);
  smooth_predict(states, mass, {}, {}, 0.01, out);
  EXPECT_EQ(out[0].linear, Vec3(1.0, 2.0, 3.0));
  EXPECT_EQ(out[0].angular, Vec3{});
}

TEST(SmoothPredict, PrincipalAxisSpinIsSteady) {
  const Mat3 inertia = Mat3::diagonal(1.0, 2.0, 3.0);
  const std::vector<BodyState> states{{{}, Quat::identity(), {}, {0.0, 7.0, 0.0}}};
  const std::vector<MassProperties> mass{{1.0, inertia, inertia.inverse()}};
  std::vector<Twist> out(1);
  smooth_predict(states, mass, {}, {}, 0.01, out);
  EXPECT_EQ(out[0].angular, Vec3(0.0, 7.0, 0.0));
}

TEST(SmoothPredict, ExternalWrenchAndGyroscopicBias) {
  const Mat3 inertia = Mat3::diagonal(1.0, 2.0, 3.0);
  const Vec3 w{1.0, 2.0, 3.0};
  const std::vector<BodyState> states{{{}, Quat::identity(), {}, w}};
  const std::vector<MassProperties> mass{{0.5, inertia, inertia.inverse()}};
  const std::vector<Wrench> ext{{{1.0, 0.0, 0.0}, {0.0, 0.0, 3.0}}};
  std::vector<Twist> out(1);
  const double dt = 0.01;
  smooth_predict(states, mass, ext, {}, dt, out);
  EXPECT_NEAR(out[0].linear.x, 0.5 * dt, 1e-15);
  // Euler's equations: I dw/dt = tau - w x I w.
  const Vec3 gyro = w.cross(inertia * w);
  const Vec3 expected = w + inertia.inverse() * (Vec3{0.0, 0.0, 3.0} - gyro) * dt;
  EXPECT_NEAR(out[0].angular.x, expected.x, 1e-15);
  EXPECT_NEAR(out[0].angular.y, expected.y, 1e-15);
  EXPECT_NEAR(out[0].angular.z, expected.z, 1e-15);
}

TEST(SmoothPredict, StaticBodiesStayAtRest) {
  const std::vector<BodyState> states{{{}, Quat::identity(), {1.0, 0.0, 0.0}, {}}};
  const std::vector<MassProperties> mass{MassProperties{}};
  std::vector<Twist> out(1, Twist{{5.0, 5.0, 5.0}, {}});
  smooth_predict(states, mass, {}, {0.0, 0.0, -9.81}, 0.01, out);
  EXPECT_EQ(out[0], Twist{});
}

TEST(SmoothPredict, NonFiniteRaises) {
  const std::vector<BodyState> states{{{}, Quat::identity(), {std::nan(""), 0.0, 0.0}, {}}};
  const std::vector<MassProperties> mass{{1.0, Mat3::identity(), Mat3::identity()}};
  std::vector<Twist> out(1);
  EXPECT_THROW(smooth_predict(states, mass, {}, {}, 0.01, out), NonFiniteState);
}

// ---------------------------------------------------------------------------
// Facet directions
// ---------------------------------------------------------------------------

TEST(FacetDirections, TangentialFourAreQuadratureAxes) {
  const auto d = facet_directions(Channel::Tangential, 4);
  ASSERT_EQ(d.size(), 4u);
  EXPECT_EQ(d[0], (Direction{1.0, 0.0}));
  EXPECT_EQ(d[1], (Direction{0.0, 1.0}));
  EXPECT_EQ(d[2], (Direction{-1.0, 0.0}));
  EXPECT_EQ(d[3], (Direction{-0.0, -1.0}));
}

TEST(FacetDirections, TorsionIsPlusMinusOne) {
  for (int n : {2, 4, 8}) {
    const auto d = facet_directions(Channel::Torsional, n);
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d[0][0], 1.0);
    EXPECT_EQ(d[1][0], -1.0);
  }
}

TEST(FacetDirections, RollingEightSumsToZeroAtFortyFiveDegrees) {
  const auto d = facet_directions(Channel::Rolling, 8);
  ASSERT_EQ(d.size(), 8u);
  double sx = 0.0;
  double sy = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    sx += d[j][0];
    sy += d[j][1];
    EXPECT_NEAR(std::hypot(d[j][0], d[j][1]), 1.0, 1e-15);
    const double a = std::atan2(d[j][1], d[j][0]);
    const double expected = std::remainder(2.0 * M_PI * static_cast<double>(j) / 8.0, 2.0 * M_PI);
    EXPECT_NEAR(std::remainder(a - expected, 2.0 * M_PI), 0.0, 1e-15);
  }
  EXPECT_NEAR(sx, 0.0, 1e-15);
  EXPECT_NEAR(sy, 0.0, 1e-15);
}

TEST(FacetDirections, ClosedUnderNegation) {
  for (int n : {2, 4, 6, 8, 12, 16}) {
    const auto d = facet_directions(Channel::Tangential, n);
    for (std::size_t j = 0; j < d.size() / 2; ++j) {
      EXPECT_EQ(d[j + d.size() / 2][0], -d[j][0]);
      EXPECT_EQ(d[j + d.size() / 2][1], -d[j][1]);
    }
  }
}

TEST(FacetDirections, OddCountRejected) {
  EXPECT_THROW(facet_directions(Channel::Tangential, 5), ConfigError);
  EXPECT_THROW(facet_directions(Channel::Rolling, 3), ConfigError);
  EXPECT_THROW(facet_directions(Channel::Rolling, 0), ConfigError);
}

// ---------------------------------------------------------------------------
// Impedance
// ---------------------------------------------------------------------------

TEST(ScalingGamma, HandValues) {
  EXPECT_EQ(scaling_gamma(0.0, 0.5, 2.0), 0.0);
  EXPECT_EQ(scaling_gamma(1.0, 0.5, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(scaling_gamma(0.25, 0.5, 2.0), 0.125);
  EXPECT_DOUBLE_EQ(scaling_gamma(0.75, 0.5, 2.0), 0.875);
}

TEST(ScalingGamma, MonotoneAndContinuousAtMid) {
  for (double mid : {0.2, 0.5, 0.8}) {
    for (double p : {1.0, 2.0, 3.5}) {
      double prev = -1.0;
      for (int i = 0; i <= 1000; ++i) {
        const double g = scaling_gamma(i / 1000.0, mid, p);
        EXPECT_GE(g, prev);
        prev = g;
      }
      EXPECT_NEAR(scaling_gamma(std::nextafter(mid, 0.0), mid, p), scaling_gamma(mid, mid, p), 1e-12);
    }
  }
}

TEST(ScalingR, DefaultsHandValues) {
  const ImpedanceConfig c;
  EXPECT_DOUBLE_EQ(scaling_r(0.0, c), 0.9);
  EXPECT_DOUBLE_EQ(scaling_r(0.001, c), 0.95);
  EXPECT_DOUBLE_EQ(scaling_r(-0.05, c), 0.95);
  EXPECT_DOUBLE_EQ(scaling_r(0.0005, c), 0.925);
  EXPECT_DOUBLE_EQ(scaling_r(-0.0005, c), 0.925);
}

TEST(ScalingR, MatchesExtendedPrecision) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    ImpedanceConfig c;
    c.r_min = 0.5 + 0.4 * u(rng);
    c.r_max = c.r_min + (0.999 - c.r_min) * (0.05 + 0.95 * u(rng));
    c.width = 1e-4 + 1e-2 * u(rng);
    c.mid = 0.05 + 0.9 * u(rng);
    c.power = 1.0 + 4.0 * u(rng);
    const double phi = (u(rng) - 0.5) * 3.0 * c.width;
    const double expected = static_cast<double>(oracle::r_mp(phi, c));
    EXPECT_NEAR(scaling_r(phi, c), expected, 1e-12);
    const double x = u(rng);
    EXPECT_NEAR(scaling_gamma(x, c.mid, c.power),
                static_cast<double>(oracle::gamma_mp(oracle::Real(x), oracle::Real(c.mid), oracle::Real(c.power))), 1e-12);
  }
}

TEST(ScalingR, ScaleEquivariant) {
  for (int i = 0; i < 1000; ++i) {
    ImpedanceConfig c;
    c.width = uniform(1e-4, 1e-2);
    ImpedanceConfig c2 = c;
    c2.width = 2.0 * c.width;
    const double phi = uniform(-2.0, 2.0) * c.width;
    EXPECT_EQ(scaling_r(phi, c), scaling_r(2.0 * phi, c2));
  }
}

TEST(ConstraintImpedance, PointBodyAgainstStaticPlane) {
  const std::vector<Body> bodies{make_ground(), make_dynamic("p", Sphere{0.05}, 1.0, {})};
  const std::vector<BodyState> states{{}, {}};
  const auto models = build_body_models(bodies);
  const std::vector<MassProperties> mass{MassProperties{}, point_mass(1.0)};
  const Contact c = make_contact(0, 1, {}, {0.0, 0.0, 1.0}, 0.0);
  const ContactJacobian j = jacobian_for(c, states, models);
  const ImpedanceConfig cfg;  // phi = 0 -> r = r_min = 0.9
  EXPECT_DOUBLE_EQ(constraint_impedance(0.0, j, mass, cfg), 3.0);
}

TEST(ConstraintImpedance, TwoPointBodiesHalve) {
  const std::vector<Body> bodies{make_dynamic("a", Sphere{}, 1.0, {}), make_dynamic("b", Sphere{}, 1.0, {})};
  const std::vector<BodyState> states{{}, {}};
  const auto models = build_body_models(bodies);
  const std::vector<MassProperties> mass{point_mass(1.0), point_mass(1.0)};
  const ContactJacobian j = jacobian_for(make_contact(0, 1, {}, {0.0, 0.0, 1.0}, 0.0), states, models);
  EXPECT_DOUBLE_EQ(constraint_impedance(0.0, j, mass, ImpedanceConfig{}), 1.5);
}

TEST(ConstraintImpedance, DeepGapScalesByOddsRatio) {
  const std::vector<Body> bodies{make_ground(), make_dynamic("p", Sphere{}, 1.0, {})};
  const std::vector<BodyState> states{{}, {}};
  const auto models = build_body_models(bodies);
  const std::vector<MassProperties> mass{MassProperties{}, point_mass(1.0)};
  const ContactJacobian j = jacobian_for(make_contact(0, 1, {}, {0.0, 0.0, 1.0}, -0.01), states, models);
  const ImpedanceConfig cfg;
  EXPECT_NEAR(constraint_impedance(-0.01, j, mass, cfg) / constraint_impedance(0.0, j, mass, cfg), 19.0 / 9.0, 1e-14);
}

TEST(ConstraintImpedance, BothStaticIsInternalError) {
  const std::vector<Body> bodies{make_ground(), make_static("wall", Sphere{})};
  const std::vector<BodyState> states{{}, {}};
  const auto models = build_body_models(bodies);
  const std::vector<MassProperties> mass(2);
  const ContactJacobian j = jacobian_for(make_contact(0, 1, {}, {0.0, 0.0, 1.0}, 0.0), states, models);
  EXPECT_THROW(constraint_impedance(0.0, j, mass, ImpedanceConfig{}), InternalError);
}

TEST(ConstraintImpedance, GainsPositive) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const oracle::Instance in = oracle::random_instance(rng);
    for (const Contact& c : in.contacts) {
      const ContactJacobian j = contact_jacobian(c, in.states, in.models);
      const double m_phi = constraint_impedance(c.phi, j, in.mass, in.config.impedance);
      const ImpedanceGains g = impedance_gains(m_phi, in.config.impedance, in.config.dt);
      EXPECT_GT(m_phi, 0.0);
      EXPECT_GT(g.stiffness, 0.0);
      EXPECT_GE(g.damping, 0.0);
    }
  }
}

// ---------------------------------------------------------------------------
// Facet impulses
// ---------------------------------------------------------------------------

TEST(FacetImpulse, HandValues) {
  const ImpedanceGains g{100.0, 1.0, 0.0};
  EXPECT_NEAR(facet_impulse(-0.5, -0.002, g, 0.01), 1.2, 1e-14);
  EXPECT_NEAR(facet_impulse(0.0, -0.001, ImpedanceGains{100.0, 37.0, 0.0}, 0.01), 0.1, 1e-15);
  EXPECT_EQ(facet_impulse(0.3, 0.002, g, 0.01), 0.0);
}

TEST(FacetImpulse, NeverNegative) {
  for (int i = 0; i < 10000; ++i) {
    const ImpedanceGains g{uniform(0.0, 1e4), uniform(0.0, 100.0), 0.0};
    EXPECT_GE(facet_impulse(uniform(-5.0, 5.0), uniform(-0.01, 0.01), g, uniform(1e-4, 0.05)), 0.0);
  }
}

TEST(FacetImpulse, MatchesScalarRederivation) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const oracle::Instance in = oracle::random_instance(rng);
    ContactSolveWorkspace ws;
    std::vector<Twist> v = in.v_smooth;
    solve_contacts(in.contacts, in.states, in.models, in.mass, in.config, v, ws);
    for (std::size_t i = 0; i < ws.facets.size(); ++i) {
      const DualConeFacet& f = ws.facets[i];
      const double expected =
          oracle::facet_impulse_scalar(in, static_cast<std::size_t>(f.contact), f.channel, f.direction, f.mu);
      EXPECT_NEAR(ws.impulses[i], expected, 1e-12 * std::max(1.0, std::abs(expected)));
    }
  }
}

TEST(FacetImpulse, DualConeConsistency) {
  // Every facet separating and feasible at the prediction: all impulses vanish.
  std::mt19937_64 rng(12);
  int checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    oracle::Instance in = oracle::random_instance(rng);
    for (Contact& c : in.contacts) c.phi = std::abs(c.phi) + 1e-4;
    ContactSolveWorkspace ws;
    std::vector<Twist> v = in.v_smooth;
    solve_contacts(in.contacts, in.states, in.models, in.mass, in.config, v, ws);
    bool all_ok = true;
    for (const DualConeFacet& f : ws.facets) {
      const double s = f.rate(in.v_smooth);
      all_ok = all_ok && s >= 0.0 && s * in.config.dt + f.gap >= 0.0;
    }
    if (!all_ok) continue;
    ++checked;
    for (double l : ws.impulses) EXPECT_EQ(l, 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], in.v_smooth[i]);
  }
  EXPECT_GT(checked, 10);
}

TEST(FacetImpulse, ProcessingOrderDoesNotMatter) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const oracle::Instance in = oracle::random_instance(rng);
    ContactSolveWorkspace ws;
    std::vector<Twist> v = in.v_smooth;
    solve_contacts(in.contacts, in.states, in.models, in.mass, in.config, v, ws);
    std::vector<std::size_t> order(ws.facets.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> permuted(ws.facets.size());
    for (std::size_t i : order) {
      const DualConeFacet& f = ws.facets[i];
      permuted[i] = facet_impulse(f, in.v_smooth, ws.gains[static_cast<std::size_t>(f.contact)], in.config.dt);
    }
    EXPECT_EQ(permuted, ws.impulses);
  }
}

// ---------------------------------------------------------------------------
// Jacobian
// ---------------------------------------------------------------------------

TEST(ContactJacobian, MatchesFiniteDifferenceOfContactPoints) {
  // The relative velocity of the two material points at the contact location equals the time
  // derivative of their separation, sampled by integrating both poses forward and backward.
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<Body> bodies{make_dynamic("a", Sphere{}, 1.0, {}), make_dynamic("b", Sphere{}, 2.0, {})};
    std::vector<BodyState> states{{random_vec(), random_quat(), random_vec(), random_vec(-3.0, 3.0)},
                                  {random_vec(), random_quat(), random_vec(), random_vec(-3.0, 3.0)}};
    const auto models = build_body_models(bodies);
    const Contact c = make_contact(0, 1, random_vec(), random_unit(), 0.0);
    const ContactJacobian j = contact_jacobian(c, states, models);
    const std::vector<Twist> twists{{states[0].velocity, states[0].angular_velocity},
                                    {states[1].velocity, states[1].angular_velocity}};
    const Twist rel = j.relative_velocity(twists);

    auto material_point = [&](const BodyState& s, double h) {
      const Vec3 local = s.orientation.conjugate().rotate(c.point - s.position);
      const Pose p = integrate_pose(s.position, s.orientation, s.velocity, s.angular_velocity, h);
      return p.position + p.orientation.rotate(local);
    };
    const double h = 1e-6;
    const Vec3 fd = ((material_point(states[1], h) - material_point(states[0], h)) -
                     (material_point(states[1], -h) - material_point(states[0], -h))) /
                    (2.0 * h);
    EXPECT_NEAR(rel.linear.x, fd.x, 1e-8);
    EXPECT_NEAR(rel.linear.y, fd.y, 1e-8);
    EXPECT_NEAR(rel.linear.z, fd.z, 1e-8);
    const Vec3 dw = states[1].angular_velocity - states[0].angular_velocity;
    EXPECT_EQ(rel.angular, dw);

    const ContactVelocity cv = j.velocity(twists);
    EXPECT_NEAR(cv.normal, c.normal.dot(fd), 1e-8);
    EXPECT_NEAR(cv.tangential[0], c.tangent1.dot(fd), 1e-8);
    EXPECT_NEAR(cv.tangential[1], c.tangent2.dot(fd), 1e-8);
    EXPECT_NEAR(cv.torsional, c.normal.dot(dw), 1e-14);
  }
}

TEST(ContactJacobian, BlocksHaveOppositeSigns) {
  const std::vector<Body> bodies{make_dynamic("a", Sphere{}, 1.0, {}), make_dynamic("b", Sphere{}, 1.0, {})};
  const std::vector<BodyState> states{{{0.0, 0.0, -0.1}, {}, {}, {}}, {{0.0, 0.0, 0.1}, {}, {}, {}}};
  const ContactJacobian j = contact_jacobian(make_contact(0, 1, {}, {0.0, 0.0, 1.0}, 0.0), states, build_body_models(bodies));
  ASSERT_EQ(j.count, 2);
  EXPECT_EQ(j.linear_block(0), Mat3::identity() * -1.0);
  EXPECT_EQ(j.linear_block(1), Mat3::identity());
  EXPECT_EQ(j.angular_block(0), Mat3::skew({0.0, 0.0, 0.1}));
  EXPECT_EQ(j.angular_block(1), Mat3::skew({0.0, 0.0, -0.1}) * -1.0);
}

// ---------------------------------------------------------------------------
// Accumulation and correction
// ---------------------------------------------------------------------------

TEST(Accumulate, ZeroImpulsesGiveZero) {
  std::mt19937_64 rng(14);
  const oracle::Instance in = oracle::random_instance(rng);
  ContactSolveWorkspace ws;
  std::vector<Twist> v = in.v_smooth;
  solve_contacts(in.contacts, in.states, in.models, in.mass, in.config, v, ws);
  const std::vector<double> zeros(ws.facets.size(), 0.0);
  for (const Twist& p : accumulate_impulses(ws.facets, zeros, in.bodies.size())) EXPECT_EQ(p, Twist{});
}

TEST(Accumulate, FrictionlessFacetIsEqualAndOpposite) {
  const std::vector<Body> bodies{make_dynamic("a", Sphere{}, 1.0, {}), make_dynamic("b", Sphere{}, 1.0, {})};
  const std::vector<BodyState> states{{{0.0, 0.0, -0.05}, {}, {}, {}}, {{0.0, 0.0, 0.05}, {}, {}, {}}};
  const Contact c = make_contact(0, 1, {}, {0.0, 0.0, 1.0}, 0.0, {0.0, 0.0, 0.0});
  std::vector<DualConeFacet> facets;
  build_facets(0, c, contact_jacobian(c, states, build_body_models(bodies)), 4, 4, facets);
  ASSERT_EQ(facets.size(), 3u);  // one normal-only facet per channel
  const std::vector<double> lambda{1.0, 0.0, 0.0};
  const auto p = accumulate_impulses(facets, lambda, 2);
  EXPECT_EQ(p[1].linear, Vec3(0.0, 0.0, 1.0));
  EXPECT_EQ(p[0].linear, Vec3(0.0, 0.0, -1.0));
  EXPECT_EQ(p[0].angular, Vec3{});
  EXPECT_EQ(p[1].angular, Vec3{});
}

TEST(Accumulate, SymmetricTangentialFacetsCancel) {
  const std::vector<Body> bodies{make_ground(), make_dynamic("b", Sphere{0.05}, 1.0, {})};
  const std::vector<BodyState> states{{}, {{0.0, 0.0, 0.05}, {}, {}, {}}};
  const Contact c = make_contact(0, 1, {}, {0.0, 0.0, 1.0}, 0.0, {0.8, 0.0, 0.0});
  std::vector<DualConeFacet> facets;
  build_facets(0, c, contact_jacobian(c, states, build_body_models(bodies)), 4, 4, facets);
  ASSERT_EQ(facets.size(), 6u);
  std::vector<double> lambda(facets.size(), 0.0);
  for (int k = 0; k < 4; ++k) lambda[static_cast<std::size_t>(k)] = 0.25;
  const auto p = accumulate_impulses(facets, lambda, 2);
  EXPECT_NEAR(p[1].linear.x, 0.0, 1e-15);
  EXPECT_NEAR(p[1].linear.y, 0.0, 1e-15);
  EXPECT_NEAR(p[1].linear.z, 1.0, 1e-15);
  EXPECT_NEAR(p[1].angular.norm(), 0.0, 1e-15);
}

TEST(Accumulate, NewtonsThirdLawForDynamicPairs) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 500; ++trial) {
    oracle::Instance in = oracle::random_instance(rng);
    const Contact c = in.contacts[0];
    if (!in.models[static_cast<std::size_t>(c.body_a)].dynamic) continue;
    in.contacts = {c};
    ContactSolveWorkspace ws;
    std::vector<Twist> v = in.v_smooth;
    solve_contacts(in.contacts, in.states, in.models, in.mass, in.config, v, ws);
    const auto& p = ws.generalized_impulse;
    const Vec3 sum = p[static_cast<std::size_t>(c.body_a)].linear + p[static_cast<std::size_t>(c.body_b)].linear;
    const double scale = std::max(1.0, p[static_cast<std::size_t>(c.body_b)].linear.norm());
    EXPECT_LT(sum.norm(), 1e-12 * scale);
  }
}

TEST(VelocityCorrection, HandValues) {
  std::vector<Twist> v{{{1.0, 2.0, 3.0}, {0.1, 0.2, 0.3}}};
  const std::vector<MassProperties> mass{{1.0, Mat3::identity(), Mat3::identity()}};
  const std::vector<Twist> zero(1);
  velocity_correction(v, zero, mass, 0.002);
  EXPECT_EQ(v[0], (Twist{{1.0, 2.0, 3.0}, {0.1, 0.2, 0.3}}));
  std::vector<Twist> w(1);
  velocity_correction(w, std::vector<Twist>{{{0.0, 0.0, 5.0}, {}}}, mass, 0.002);
  EXPECT_NEAR(w[0].linear.z, 0.01, 1e-16);
}

TEST(VelocityCorrection, MatchesDenseAssembly) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 500; ++trial) {
    const oracle::Instance in = oracle::random_instance(rng);
    ContactSolveWorkspace ws;
    std::vector<Twist> v = in.v_smooth;
    solve_contacts(in.contacts, in.states, in.models, in.mass, in.config, v, ws);
    const Eigen::VectorXd lambda = Eigen::Map<const Eigen::VectorXd>(ws.impulses.data(),
                                                                      static_cast<Eigen::Index>(ws.impulses.size()));
    const Eigen::MatrixXd jt = oracle::facet_matrix_dense(in);
    ASSERT_EQ(jt.rows(), lambda.size());
    // Facet rates agree with the dense rows.
    const Eigen::VectorXd rates = jt * oracle::stacked(in.v_smooth);
    for (std::size_t i = 0; i < ws.facets.size(); ++i) {
      EXPECT_NEAR(ws.facets[i].rate(in.v_smooth), rates(static_cast<Eigen::Index>(i)), 1e-12);
    }
    const Eigen::VectorXd expected = oracle::corrected_velocity_dense(in, lambda);
    const Eigen::VectorXd got = oracle::stacked(v);
    const double scale = std::max(1.0, expected.cwiseAbs().maxCoeff());
    EXPECT_LT((got - expected).cwiseAbs().maxCoeff(), 1e-10 * scale) << "trial " << trial;
  }
}

TEST(VelocityCorrection, FallingSphereDoesNotBounce) {
  // One step of a sphere falling at 1 m/s, touching the plane: the correction removes the
  // approach velocity without reversing it beyond a small residual.
  Scene s;
  s.config.dt = 0.002;
  s.config.impedance.k_user = 0.5;
  s.config.impedance.d_user = 0.005;
  s.bodies.push_back(make_ground());
  s.bodies.push_back(make_dynamic("ball", Sphere{0.05}, 1.0, {0.0, 0.0, 0.0495}));
  s.bodies[1].velocity = {0.0, 0.0, -1.0};
  BatchedWorld w = replicate_envs(s, 1);
  step(w);
  const double vz = w.envs[0].bodies[1].velocity.z;
  EXPECT_GT(vz, -1.0);
  EXPECT_LT(vz, 0.5);
}

// ---------------------------------------------------------------------------
// Wrench reconstruction and modes
// ---------------------------------------------------------------------------

std::vector<DualConeFacet> ground_facets(const FrictionParams& f, int n_t = 4, int n_rol = 4) {
  const std::vector<Body> bodies{make_ground(), make_dynamic("b", Sphere{0.05}, 1.0, {})};
  const std::vector<BodyState> states{{}, {{0.0, 0.0, 0.05}, {}, {}, {}}};
  const Contact c = make_contact(0, 1, {}, {0.0, 0.0, 1.0}, 0.0, f);
  std::vector<DualConeFacet> out;
  build_facets(0, c, contact_jacobian(c, states, build_body_models(bodies)), n_t, n_rol, out);
  return out;
}

TEST(ReconstructWrench, EqualFacetsArePureNormal) {
  const FrictionParams f{0.7, 0.01, 0.002};
  const auto facets = ground_facets(f);
  const std::vector<double> lambda(facets.size(), 0.3);
  const ContactWrench w = reconstruct_wrench(f, facets, lambda);
  EXPECT_NEAR(w.lambda_t[0], 0.0, 1e-15);
  EXPECT_NEAR(w.lambda_t[1], 0.0, 1e-15);
  EXPECT_NEAR(w.m_tor, 0.0, 1e-15);
  EXPECT_NEAR(w.m_rol[0], 0.0, 1e-15);
  EXPECT_NEAR(w.m_rol[1], 0.0, 1e-15);
  EXPECT_NEAR(w.lambda_n, 0.3 * static_cast<double>(facets.size()), 1e-14);
  EXPECT_EQ(diagnose_contact_mode(w), ContactMode::Sticking);
}

TEST(ReconstructWrench, SingleActiveFacetLiesOnConeBoundary) {
  const FrictionParams f{0.7, 0.01, 0.002};
  const auto facets = ground_facets(f);
  for (int j = 0; j < 4; ++j) {
    std::vector<double> lambda(facets.size(), 0.0);
    lambda[static_cast<std::size_t>(j)] = 2.0;
    const ContactWrench w = reconstruct_wrench(f, facets, lambda);
    const Direction d = facets[static_cast<std::size_t>(j)].direction;
    EXPECT_DOUBLE_EQ(w.lambda_t[0], -0.7 * 2.0 * d[0]);
    EXPECT_DOUBLE_EQ(w.lambda_t[1], -0.7 * 2.0 * d[1]);
    EXPECT_NEAR(std::hypot(w.lambda_t[0], w.lambda_t[1]), f.mu_t * w.lambda_n_channel[0], 1e-15);
    EXPECT_EQ(diagnose_contact_mode(w), ContactMode::Sliding);
  }
}

TEST(ReconstructWrench, ZeroImpulsesAreSeparation) {
  const FrictionParams f{0.7, 0.01, 0.002};
  const auto facets = ground_facets(f);
  const ContactWrench w = reconstruct_wrench(f, facets, std::vector<double>(facets.size(), 0.0));
  EXPECT_EQ(w.lambda_n, 0.0);
  EXPECT_EQ(diagnose_contact_mode(w), ContactMode::Separation);
}

TEST(ReconstructWrench, TorsionalAndRollingBoundaryModes) {
  const FrictionParams f{0.7, 0.01, 0.002};
  const auto facets = ground_facets(f);
  std::vector<double> lambda(facets.size(), 0.1);
  // Tangential channel balanced, torsional channel one-sided.
  lambda[4] = 1.0;
  lambda[5] = 0.0;
  EXPECT_EQ(diagnose_contact_mode(reconstruct_wrench(f, facets, lambda)), ContactMode::TorsionSlip);
  std::fill(lambda.begin(), lambda.end(), 0.1);
  lambda[6] = 1.0;
  lambda[8] = 0.0;
  EXPECT_EQ(diagnose_contact_mode(reconstruct_wrench(f, facets, lambda)), ContactMode::RollSlip);
}

TEST(ReconstructWrench, ConeMembershipOverRandomSolves) {
  std::mt19937_64 rng(17);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const oracle::Instance in = oracle::random_instance(rng);
    ContactSolveWorkspace ws;
    std::vector<Twist> v = in.v_smooth;
    solve_contacts(in.contacts, in.states, in.models, in.mass, in.config, v, ws);
    for (std::size_t k = 0; k < in.contacts.size(); ++k) {
      const ContactWrench w = contact_wrench(ws, in.contacts, k);
      const FrictionParams& f = w.friction;
      const double t = std::hypot(w.lambda_t[0], w.lambda_t[1]);
      const double r = std::hypot(w.m_rol[0], w.m_rol[1]);
      // Per channel against its own normal part, then against the aggregate normal.
      worst = std::min({worst, f.mu_t * w.lambda_n_channel[0] - t, f.mu_tor * w.lambda_n_channel[1] - std::abs(w.m_tor),
                        f.mu_rol * w.lambda_n_channel[2] - r, f.mu_t * w.lambda_n - t,
                        f.mu_tor * w.lambda_n - std::abs(w.m_tor), f.mu_rol * w.lambda_n - r});
    }
  }
  EXPECT_GE(worst, -1e-9);
}

class ModeScene : public ::testing::Test {
 protected:
  static std::vector<ContactMode> modes_after(BatchedWorld& w, int steps) {
    for (int i = 0; i < steps; ++i) step(w);
    const EnvState& env = w.envs[0];
    std::vector<ContactMode> out;
    for (std::size_t k = 0; k < env.contacts.size(); ++k) {
      out.push_back(diagnose_contact_mode(contact_wrench(env.solver, env.contacts, k)));
    }
    return out;
  }
};

TEST_F(ModeScene, RestingCubeSticks) {
  Scene s = bench::stability_scene(0.1, 0.001, 0.002);
  s.bodies[1].velocity = {};
  s.bodies[1].angular_velocity = {};
  s.bodies[1].position.z = 0.05;
  BatchedWorld w = replicate_envs(s, 1);
  const auto modes = modes_after(w, 500);
  ASSERT_EQ(modes.size(), 4u);
  for (ContactMode m : modes) EXPECT_EQ(m, ContactMode::Sticking);
}

TEST_F(ModeScene, SlidingCubeSlides) {
  Scene s = bench::stability_scene(0.1, 0.001, 0.002);
  s.bodies[1].angular_velocity = {};
  s.bodies[1].position.z = 0.05;
  BatchedWorld w = replicate_envs(s, 1);
  const auto modes = modes_after(w, 20);
  ASSERT_FALSE(modes.empty());
  EXPECT_GT(std::count(modes.begin(), modes.end(), ContactMode::Sliding), 0);
  EXPECT_GT(w.envs[0].bodies[1].velocity.x, 0.5);
}

}  // namespace
}  // namespace comfree
