#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "comfree/collision.hpp"
#include "comfree/contact_solver.hpp"
#include "comfree/errors.hpp"
#include "comfree/parallel.hpp"
#include "comfree/world.hpp"

namespace comfree {

struct PhaseTimes {
  double broadphase = 0.0;  //!< seconds
  double narrowphase = 0.0;
  double solve = 0.0;
  double integrate = 0.0;

  double total() const { return broadphase + narrowphase + solve + integrate; }
};

struct StepStats {
  std::uint64_t step = 0;  //!< index of the completed step, starting at 1
  std::size_t contact_count = 0;
  std::size_t facet_count = 0;
  PhaseTimes seconds;
  double max_penetration = 0.0;
  std::vector<double> kinetic_energy;  //!< per env, after the step
};

namespace detail {

using Clock = std::chrono::steady_clock;

template <class Fn>
double timed(Fn&& fn) {
  const auto t0 = Clock::now();
  fn();
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

//! Runs fn(env) over all envs and tags non-finite failures with the env index.
template <class Fn>
void for_each_env(BatchedWorld& w, Fn&& fn) {
  parallel::parallel_for(w.n_envs(), [&](std::size_t e) {
    try {
      fn(w.envs[e]);
    } catch (const NonFiniteState& err) {
      if (err.env() >= 0) throw;
      throw NonFiniteState(err.what(), static_cast<long>(e));
    }
  });
}

// Per-env kernels. step() runs each one across all envs before starting the next; step_env()
// runs all four on a single env. Both paths execute identical arithmetic.

inline void broadphase_kernel(const BatchedWorld& w, EnvState& env) {
  env.pairs = broadphase_aabb(w.bodies(), env.bodies, w.config.contact_margin);
}

inline void narrowphase_kernel(const BatchedWorld& w, EnvState& env) {
  env.contacts.clear();
  for (const auto& pair : env.pairs) narrowphase(w.bodies(), env.bodies, pair, w.config.contact_margin, env.contacts);
}

inline void solve_kernel(const BatchedWorld& w, EnvState& env) {
  const auto& models = *w.models;
  const std::size_t n = env.bodies.size();
  env.mass.resize(n);
  env.velocity.resize(n);
  for (std::size_t i = 0; i < n; ++i) env.mass[i] = mass_properties(models[i], env.bodies[i].orientation);
  smooth_predict(env.bodies, env.mass, env.external, w.config.gravity, w.config.dt, env.velocity);
  solve_contacts(env.contacts, env.bodies, models, env.mass, w.config, env.velocity, env.solver);
}

inline void integrate_kernel(const BatchedWorld& w, EnvState& env) {
  const auto& models = *w.models;
  for (std::size_t i = 0; i < env.bodies.size(); ++i) {
    if (!models[i].dynamic) continue;
    BodyState& s = env.bodies[i];
    const Twist& v = env.velocity[i];
    const Pose pose = integrate_pose(s.position, s.orientation, v.linear, v.angular, w.config.dt);
    s.position = pose.position;
    s.orientation = pose.orientation;
    s.velocity = v.linear;
    s.angular_velocity = v.angular;
    if (!s.position.is_finite() || !s.orientation.is_finite()) {
      throw NonFiniteState("non-finite pose for body '" + w.bodies()[i].name + "'");
    }
  }
}

}  // namespace detail

//! One step for every env: collision, smooth prediction, facet impulses, accumulation,
//! velocity correction, pose integration. Phases run across all envs in turn.
inline StepStats step(BatchedWorld& w) {
  StepStats stats;
  stats.seconds.broadphase =
      detail::timed([&] { detail::for_each_env(w, [&](EnvState& env) { detail::broadphase_kernel(w, env); }); });
  stats.seconds.narrowphase =
      detail::timed([&] { detail::for_each_env(w, [&](EnvState& env) { detail::narrowphase_kernel(w, env); }); });
  stats.seconds.solve =
      detail::timed([&] { detail::for_each_env(w, [&](EnvState& env) { detail::solve_kernel(w, env); }); });
  stats.seconds.integrate =
      detail::timed([&] { detail::for_each_env(w, [&](EnvState& env) { detail::integrate_kernel(w, env); }); });

  ++w.step_count;
  stats.step = w.step_count;
  stats.kinetic_energy.resize(w.n_envs());
  for (std::size_t e = 0; e < w.n_envs(); ++e) {
    const EnvState& env = w.envs[e];
    stats.contact_count += env.contacts.size();
    stats.facet_count += env.solver.facets.size();
    for (const Contact& c : env.contacts) stats.max_penetration = std::max(stats.max_penetration, -c.phi);
    stats.kinetic_energy[e] = kinetic_energy(w, e);
  }
  return stats;
}

//! Advances one env by a step without touching the world's step counter, for envs that evolve
//! independently (rollouts). `e` only labels a NonFiniteState failure.
inline void step_env(const BatchedWorld& w, std::size_t e, EnvState& env) {
  try {
    detail::broadphase_kernel(w, env);
    detail::narrowphase_kernel(w, env);
    detail::solve_kernel(w, env);
    detail::integrate_kernel(w, env);
  } catch (const NonFiniteState& err) {
    if (err.env() >= 0) throw;
    throw NonFiniteState(err.what(), static_cast<long>(e));
  }
}

//! Read-only copy of every env's state after a step.
struct Snapshot {
  std::uint64_t step = 0;
  double time = 0.0;
  std::vector<GeneralizedState> envs;
};

inline Snapshot snapshot(const BatchedWorld& w) {
  Snapshot s;
  s.step = w.step_count;
  s.time = w.time();
  s.envs.reserve(w.n_envs());
  for (const EnvState& env : w.envs) s.envs.push_back(env.bodies);
  return s;
}

struct RunOptions {
  std::size_t stride = 1;
  std::function<void(const Snapshot&)> callback;  //!< invoked every `stride` steps
  bool record_trajectory = false;                 //!< keep every callback snapshot in the result
};

struct RunResult {
  std::vector<StepStats> stats;
  std::vector<Snapshot> trajectory;
};

inline RunResult run(BatchedWorld& w, std::size_t n_steps, const RunOptions& options = {}) {
  if (n_steps < 1) throw ConfigError("run requires n_steps >= 1");
  if (options.stride < 1) throw ConfigError("run requires stride >= 1");
  RunResult result;
  result.stats.reserve(n_steps);
  for (std::size_t i = 0; i < n_steps; ++i) {
    result.stats.push_back(step(w));
    if ((i + 1) % options.stride != 0) continue;
    if (!options.callback && !options.record_trajectory) continue;
    Snapshot snap = snapshot(w);
    if (options.callback) options.callback(snap);
    if (options.record_trajectory) result.trajectory.push_back(std::move(snap));
  }
  return result;
}

// ---------------------------------------------------------------------------
// State dump: one row per (env, body), round-trip precision.
// ---------------------------------------------------------------------------

inline constexpr const char* kStateDumpHeader = "env,body,px,py,pz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz";

inline void append_state_rows(std::string& out, const std::vector<GeneralizedState>& envs,
                              const std::string& prefix = {}) {
  char buf[512];
  for (std::size_t e = 0; e < envs.size(); ++e) {
    for (std::size_t b = 0; b < envs[e].size(); ++b) {
      const BodyState& s = envs[e][b];
      std::snprintf(buf, sizeof(buf),
                    "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e, b,
                    s.position.x, s.position.y, s.position.z, s.orientation.w, s.orientation.x, s.orientation.y,
                    s.orientation.z, s.velocity.x, s.velocity.y, s.velocity.z, s.angular_velocity.x,
                    s.angular_velocity.y, s.angular_velocity.z);
      out += prefix;
      out += buf;
    }
  }
}

inline std::string state_dump(const BatchedWorld& w) {
  std::string out = std::string(kStateDumpHeader) + "\n";
  append_state_rows(out, snapshot(w).envs);
  return out;
}

//! Trajectory form: the same columns prefixed by the step index.
inline std::string trajectory_dump(const std::vector<Snapshot>& trajectory) {
  std::string out = std::string("step,") + kStateDumpHeader + "\n";
  for (const Snapshot& s : trajectory) append_state_rows(out, s.envs, std::to_string(s.step) + ",");
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  out << text;
  if (!out) throw IoError(path, "write failed");
}

}  // namespace comfree
