#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "comfree/errors.hpp"
#include "comfree/parallel.hpp"
#include "comfree/stepper.hpp"
#include "comfree/world.hpp"

namespace comfree {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct MppiConfig {
  int horizon = 48;                //!< H, control steps per plan
  int n_samples = 256;             //!< N
  double temperature = 2e-3;       //!< lambda
  double noise_sigma = 0.02;       //!< per-component sampling standard deviation
  double action_lo = -0.1;
  double action_hi = 0.1;
  double control_dt = 0.02;        //!< must be a whole number of simulation steps
  std::uint64_t seed = 0;
};

inline void validate(const MppiConfig& c) {
  detail::require(c.horizon >= 1, "mppi.horizon", "must be >= 1");
  detail::require(c.n_samples >= 1, "mppi.n_samples", "must be >= 1");
  detail::require(std::isfinite(c.temperature) && c.temperature > 0.0, "mppi.temperature", "must be > 0");
  detail::require(std::isfinite(c.noise_sigma) && c.noise_sigma > 0.0, "mppi.noise_sigma", "must be > 0");
  detail::require(std::isfinite(c.action_lo) && std::isfinite(c.action_hi) && c.action_lo < c.action_hi,
                  "mppi.action_bounds", "need finite lo < hi");
  detail::require(std::isfinite(c.control_dt) && c.control_dt > 0.0, "mppi.control_dt", "must be > 0");
}

//! Simulation steps per control step; throws ConfigError unless control_dt is a multiple of dt.
inline int substeps_per_control(const MppiConfig& c, double sim_dt) {
  const double ratio = c.control_dt / sim_dt;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * rounded) {
    throw ConfigError("control_dt must be a positive integer multiple of the simulation dt");
  }
  return static_cast<int>(rounded);
}

// ---------------------------------------------------------------------------
// Cost
// ---------------------------------------------------------------------------

enum class CostKind {
  PositionError,     //!< |P (x_body - target)|, P selects `axes`
  OrientationError,  //!< 1 - (q_target . q)^2
  VelocityPenalty,   //!< |v_body|^2
  Fallen,            //!< 1 if z_body < threshold else 0
  BodyDistance,      //!< |P (x_body - x_other)|, P selects `axes`
};

struct CostTerm {
  CostKind kind = CostKind::PositionError;
  double weight = 1.0;
  int body = 0;
  int other = 0;
  Vec3 target;
  Quat target_orientation;
  Vec3 axes{1.0, 1.0, 1.0};  //!< per-axis mask for the distance kinds
  double threshold = 0.0;
};

struct CostSpec {
  std::vector<CostTerm> running;
  int terminal_body = 0;
  Vec3 terminal_target;
  Quat terminal_orientation;
  Vec3 terminal_axes{1.0, 1.0, 1.0};
  double terminal_position_weight = 0.0;     //!< phi_1
  double terminal_orientation_weight = 0.0;  //!< phi_2
};

inline void validate(const CostSpec& c, std::size_t n_bodies) {
  auto body_ok = [&](int b) { return b >= 0 && static_cast<std::size_t>(b) < n_bodies; };
  for (const CostTerm& t : c.running) {
    detail::require(std::isfinite(t.weight), "cost.weight", "must be finite");
    detail::require(body_ok(t.body), "cost.body", "out of range");
    if (t.kind == CostKind::BodyDistance) detail::require(body_ok(t.other), "cost.other", "out of range");
  }
  detail::require(std::isfinite(c.terminal_position_weight) && c.terminal_position_weight >= 0.0,
                  "cost.terminal_position_weight", "must be finite and >= 0");
  detail::require(std::isfinite(c.terminal_orientation_weight) && c.terminal_orientation_weight >= 0.0,
                  "cost.terminal_orientation_weight", "must be finite and >= 0");
  if (c.terminal_position_weight > 0.0 || c.terminal_orientation_weight > 0.0) {
    detail::require(body_ok(c.terminal_body), "cost.terminal_body", "out of range");
  }
}

inline double masked_distance(const Vec3& a, const Vec3& b, const Vec3& axes) {
  const Vec3 d = a - b;
  return std::sqrt(axes.x * d.x * d.x + axes.y * d.y * d.y + axes.z * d.z * d.z);
}

inline double orientation_error(const Quat& q, const Quat& target) {
  const double d = q.w * target.w + q.x * target.x + q.y * target.y + q.z * target.z;
  return 1.0 - d * d;
}

inline double running_cost(const CostSpec& spec, const GeneralizedState& s) {
  double c = 0.0;
  for (const CostTerm& t : spec.running) {
    if (t.weight == 0.0) continue;
    const BodyState& b = s[static_cast<std::size_t>(t.body)];
    double v = 0.0;
    switch (t.kind) {
      case CostKind::PositionError: v = masked_distance(b.position, t.target, t.axes); break;
      case CostKind::OrientationError: v = orientation_error(b.orientation, t.target_orientation); break;
      case CostKind::VelocityPenalty: v = b.velocity.squared_norm(); break;
      case CostKind::Fallen: v = b.position.z < t.threshold ? 1.0 : 0.0; break;
      case CostKind::BodyDistance:
        v = masked_distance(b.position, s[static_cast<std::size_t>(t.other)].position, t.axes);
        break;
    }
    c += t.weight * v;
  }
  return c;
}

inline double terminal_cost(const CostSpec& spec, const GeneralizedState& s) {
  double c = 0.0;
  if (spec.terminal_position_weight > 0.0) {
    const BodyState& b = s[static_cast<std::size_t>(spec.terminal_body)];
    c += spec.terminal_position_weight * masked_distance(b.position, spec.terminal_target, spec.terminal_axes);
  }
  if (spec.terminal_orientation_weight > 0.0) {
    const BodyState& b = s[static_cast<std::size_t>(spec.terminal_body)];
    c += spec.terminal_orientation_weight * orientation_error(b.orientation, spec.terminal_orientation);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Plans and actuation
// ---------------------------------------------------------------------------

//! H actions of `dim` components each, stored row-major.
struct ControlPlan {
  int horizon = 0;
  int dim = 0;
  std::vector<double> u;

  ControlPlan() = default;
  ControlPlan(int h, int d, double value = 0.0)
      : horizon(h), dim(d), u(static_cast<std::size_t>(h) * static_cast<std::size_t>(d), value) {}

  double& at(int t, int k) { return u[static_cast<std::size_t>(t * dim + k)]; }
  double at(int t, int k) const { return u[static_cast<std::size_t>(t * dim + k)]; }
  friend bool operator==(const ControlPlan&, const ControlPlan&) = default;
};

inline bool within_bounds(const ControlPlan& p, double lo, double hi) {
  return std::all_of(p.u.begin(), p.u.end(), [&](double x) { return x >= lo && x <= hi; });
}

inline void clip(ControlPlan& p, double lo, double hi) {
  for (double& x : p.u) x = std::clamp(x, lo, hi);
}

//! Drop the applied first action and repeat the last one.
inline void shift_plan(ControlPlan& p) {
  if (p.horizon <= 1) return;
  std::copy(p.u.begin() + p.dim, p.u.end(), p.u.begin());
}

//! Maps an action to applied forces: action component k scales `axes[k]` by `gain` on `body`,
//! on top of a constant `bias` force. The toy task uses two components driving the pusher in the
//! plane and a bias that cancels the pusher's weight.
struct ForceActuator {
  int body = 0;
  double gain = 1.0;  //!< newtons per action unit
  std::vector<Vec3> axes{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}};
  Vec3 bias;

  int dim() const { return static_cast<int>(axes.size()); }

  void apply(const double* action, EnvState& env) const {
    Vec3 f = bias;
    for (std::size_t k = 0; k < axes.size(); ++k) f += axes[k] * (gain * action[k]);
    env.external[static_cast<std::size_t>(body)] = Wrench{f, Vec3{}};
  }
};

// ---------------------------------------------------------------------------
// Rollouts and the weighted update
// ---------------------------------------------------------------------------

namespace detail {

//! Runs one plan on `env` and returns its total cost, or +inf if the rollout goes non-finite.
inline double rollout_one(const BatchedWorld& model, std::size_t index, EnvState& env, const ControlPlan& plan,
                          const ForceActuator& actuator, const CostSpec& cost, int substeps) {
  double total = 0.0;
  try {
    for (int t = 0; t < plan.horizon; ++t) {
      actuator.apply(&plan.u[static_cast<std::size_t>(t * plan.dim)], env);
      for (int s = 0; s < substeps; ++s) step_env(model, index, env);
      total += running_cost(cost, env.bodies);
    }
    total += terminal_cost(cost, env.bodies);
  } catch (const NonFiniteState&) {
    return std::numeric_limits<double>::infinity();
  }
  return std::isfinite(total) ? total : std::numeric_limits<double>::infinity();
}

}  // namespace detail

//! J(U) = sum_t c(x_t) + V(x_H) for every plan, each simulated from env `source` of `world`.
//! Costs are evaluated on the state after each control step. Samples that go non-finite cost +inf.
inline std::vector<double> rollout_costs(const BatchedWorld& world, std::size_t source,
                                         const std::vector<ControlPlan>& plans, const ForceActuator& actuator,
                                         const CostSpec& cost, int substeps = 1) {
  if (plans.empty()) return {};
  BatchedWorld rollouts = broadcast_env(world, source, plans.size());
  std::vector<double> costs(plans.size());
  parallel::parallel_for(plans.size(), [&](std::size_t i) {
    costs[i] = detail::rollout_one(rollouts, i, rollouts.envs[i], plans[i], actuator, cost, substeps);
  });
  return costs;
}

//! w_i = exp(-(J_i - min J) / lambda), normalised. Infinite costs get weight 0.
inline std::vector<double> mppi_weights(const std::vector<double>& costs, double temperature) {
  double best = std::numeric_limits<double>::infinity();
  for (double c : costs) {
    if (std::isfinite(c)) best = std::min(best, c);
  }
  if (!std::isfinite(best)) throw PlanFailure("every rollout cost is non-finite");
  std::vector<double> w(costs.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (!std::isfinite(costs[i])) continue;
    w[i] = std::exp(-(costs[i] - best) / temperature);
    sum += w[i];
  }
  for (double& x : w) x /= sum;
  return w;
}

//! New plan = sum_i w_i (nominal + noise_i), clipped to [lo, hi].
inline ControlPlan mppi_update(const ControlPlan& nominal, const std::vector<double>& costs,
                               const std::vector<ControlPlan>& noise, double temperature, double lo, double hi) {
  if (costs.size() != noise.size()) throw ConfigError("costs and noise sample counts differ");
  const std::vector<double> w = mppi_weights(costs, temperature);
  ControlPlan out(nominal.horizon, nominal.dim, 0.0);
  for (std::size_t i = 0; i < noise.size(); ++i) {
    if (w[i] == 0.0) continue;
    for (std::size_t k = 0; k < out.u.size(); ++k) out.u[k] += w[i] * (nominal.u[k] + noise[i].u[k]);
  }
  clip(out, lo, hi);
  return out;
}

//! N noise plans of i.i.d. N(0, sigma^2) entries from a stream keyed by (seed, control step).
inline std::vector<ControlPlan> sample_noise(const MppiConfig& cfg, int dim, std::uint64_t control_step) {
  std::mt19937_64 rng = env_stream(cfg.seed, control_step, 4);
  std::normal_distribution<double> normal(0.0, cfg.noise_sigma);
  std::vector<ControlPlan> noise(static_cast<std::size_t>(cfg.n_samples), ControlPlan(cfg.horizon, dim));
  for (ControlPlan& p : noise) {
    for (double& x : p.u) x = normal(rng);
  }
  return noise;
}

// ---------------------------------------------------------------------------
// Receding-horizon loop
// ---------------------------------------------------------------------------

struct ControlStepRecord {
  int step = 0;
  double plan_cost = 0.0;  //!< cost of the updated plan, rolled out from the pre-action state
  double solve_ms = 0.0;   //!< sampling + rollouts + update
  double goal_distance = 0.0;  //!< after applying the action
};

struct RecedingHorizonResult {
  std::vector<ControlStepRecord> steps;
  std::vector<GeneralizedState> trajectory;  //!< live state after every control step
  ControlPlan final_plan;
  bool reached = false;
  int reached_step = -1;
};

//! Optional early stop: distance between a body and a target in masked axes.
struct GoalCheck {
  int body = 0;
  Vec3 target;
  Vec3 axes{1.0, 1.0, 0.0};
  double tolerance = 0.05;
  bool stop_when_reached = true;

  double distance(const GeneralizedState& s) const {
    return masked_distance(s[static_cast<std::size_t>(body)].position, target, axes);
  }
};

//! Runs MPPI on env 0 of `world` for up to n_control_steps: sample, roll out, update, apply u_0,
//! shift. The live world is advanced in place.
inline RecedingHorizonResult receding_horizon(BatchedWorld& world, const ForceActuator& actuator,
                                              const CostSpec& cost, const MppiConfig& cfg, int n_control_steps,
                                              const GoalCheck& goal) {
  validate(cfg);
  validate(cost, world.n_bodies());
  if (n_control_steps < 1) throw ConfigError("n_control_steps must be >= 1");
  const int substeps = substeps_per_control(cfg, world.config.dt);
  const int dim = actuator.dim();

  RecedingHorizonResult result;
  ControlPlan plan(cfg.horizon, dim, 0.0);
  std::vector<ControlPlan> samples(static_cast<std::size_t>(cfg.n_samples));

  for (int k = 0; k < n_control_steps; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<ControlPlan> noise = sample_noise(cfg, dim, static_cast<std::uint64_t>(k));
    for (std::size_t i = 0; i < noise.size(); ++i) {
      samples[i] = plan;
      for (std::size_t j = 0; j < plan.u.size(); ++j) {
        samples[i].u[j] = std::clamp(plan.u[j] + noise[i].u[j], cfg.action_lo, cfg.action_hi);
        noise[i].u[j] = samples[i].u[j] - plan.u[j];  // effective (post-clip) perturbation
      }
    }
    const std::vector<double> costs = rollout_costs(world, 0, samples, actuator, cost, substeps);
    plan = mppi_update(plan, costs, noise, cfg.temperature, cfg.action_lo, cfg.action_hi);
    const double solve_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const double plan_cost = rollout_costs(world, 0, {plan}, actuator, cost, substeps)[0];

    EnvState& live = world.envs[0];
    actuator.apply(plan.u.data(), live);
    for (int s = 0; s < substeps; ++s) step_env(world, 0, live);
    world.step_count += static_cast<std::uint64_t>(substeps);
    shift_plan(plan);

    const double d = goal.distance(live.bodies);
    result.steps.push_back({k, plan_cost, solve_ms, d});
    result.trajectory.push_back(live.bodies);
    if (d < goal.tolerance && !result.reached) {
      result.reached = true;
      result.reached_step = k;
      if (goal.stop_when_reached) break;
    }
  }
  result.final_plan = plan;
  return result;
}

// ---------------------------------------------------------------------------
// Toy planar push task
// ---------------------------------------------------------------------------

struct PushTask {
  Scene scene;
  ForceActuator actuator;
  CostSpec cost;
  GoalCheck goal;
};

//! A box on the ground and a frictionless, weight-compensated pusher sphere hovering just above
//! the ground behind it; the goal is a planar box position ~0.2 m away.
inline PushTask make_push_task(const Vec3& goal_xy = {0.2, 0.05, 0.0}) {
  PushTask task;
  Scene& s = task.scene;
  s.config.dt = 0.01;
  s.config.impedance.k_user = 0.5;
  s.config.impedance.d_user = 0.005;
  s.bodies.push_back(make_ground(FrictionParams{0.3, 0.005, 0.0001}));
  const double half = 0.025;
  s.bodies.push_back(make_dynamic("box", Box{{half, half, half}}, 0.1, {0.0, 0.0, half},
                                  FrictionParams{0.3, 0.005, 0.0001}));
  const double pusher_mass = 0.05;
  s.bodies.push_back(make_dynamic("pusher", Sphere{0.015}, pusher_mass, {-0.06, 0.0, 0.017},
                                  FrictionParams{0.0, 0.0, 0.0}));

  task.actuator.body = 2;
  task.actuator.gain = 5.0;
  task.actuator.bias = s.config.gravity * -pusher_mass;

  const Vec3 goal{goal_xy.x, goal_xy.y, half};
  CostSpec& c = task.cost;
  CostTerm pos;
  pos.kind = CostKind::PositionError;
  pos.weight = 1.0;
  pos.body = 1;
  pos.target = goal;
  pos.axes = {1.0, 1.0, 0.0};
  CostTerm reach;
  reach.kind = CostKind::BodyDistance;
  reach.weight = 0.2;
  reach.body = 2;
  reach.other = 1;
  reach.axes = {1.0, 1.0, 0.0};
  CostTerm vel;
  vel.kind = CostKind::VelocityPenalty;
  vel.weight = 0.01;
  vel.body = 1;
  CostTerm fallen;
  fallen.kind = CostKind::Fallen;
  fallen.weight = 10.0;
  fallen.body = 1;
  fallen.threshold = -0.01;
  c.running = {pos, reach, vel, fallen};
  c.terminal_body = 1;
  c.terminal_target = goal;
  c.terminal_axes = {1.0, 1.0, 0.0};
  c.terminal_position_weight = 5.0;

  task.goal.body = 1;
  task.goal.target = goal;
  task.goal.axes = {1.0, 1.0, 0.0};
  task.goal.tolerance = 0.05;
  return task;
}

}  // namespace comfree
