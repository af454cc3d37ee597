#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "comfree/collision.hpp"
#include "comfree/contact_solver.hpp"
#include "comfree/errors.hpp"
#include "comfree/scene.hpp"
#include "comfree/state.hpp"

namespace comfree {

//! Per-environment state plus reusable step buffers. The buffers also hold the contacts and
//! facet impulses of the most recent step.
struct EnvState {
  GeneralizedState bodies;
  std::vector<Wrench> external;  //!< applied every step until changed
  std::mt19937_64 rng;

  std::vector<std::pair<int, int>> pairs;
  std::vector<Contact> contacts;
  std::vector<MassProperties> mass;
  std::vector<Twist> velocity;
  ContactSolveWorkspace solver;
};

//! A batch of independent copies of one scene.
struct BatchedWorld {
  std::shared_ptr<const Scene> scene;
  std::shared_ptr<const std::vector<BodyModel>> models;
  SimConfig config;
  std::vector<EnvState> envs;
  std::uint64_t step_count = 0;

  std::size_t n_envs() const { return envs.size(); }
  std::size_t n_bodies() const { return scene->bodies.size(); }
  std::span<const Body> bodies() const { return scene->bodies; }
  double time() const { return static_cast<double>(step_count) * config.dt; }
};

inline std::mt19937_64 env_stream(std::uint64_t seed, std::uint64_t env, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(env), static_cast<std::uint32_t>(env >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

//! Initial-velocity perturbation variance per axis.
inline constexpr double kJitterVariance = 1e-3;

//! n_envs copies of `scene`. With a jitter seed, every dynamic body's initial linear velocity
//! receives i.i.d. N(0, kJitterVariance) per axis, drawn from a stream keyed by (seed, env).
inline BatchedWorld replicate_envs(const Scene& scene, std::size_t n_envs,
                                   std::optional<std::uint64_t> jitter_seed = std::nullopt) {
  if (n_envs < 1) throw ConfigError("n_envs must be >= 1");
  validate(scene);
  BatchedWorld w;
  w.scene = std::make_shared<const Scene>(scene);
  w.models = std::make_shared<const std::vector<BodyModel>>(build_body_models(scene.bodies));
  w.config = scene.config;
  w.envs.resize(n_envs);
  for (std::size_t e = 0; e < n_envs; ++e) {
    EnvState& env = w.envs[e];
    env.bodies.reserve(scene.bodies.size());
    for (const Body& b : scene.bodies) {
      env.bodies.push_back({b.position, b.orientation, b.velocity, b.angular_velocity});
    }
    env.external.assign(scene.bodies.size(), Wrench{});
    env.rng = env_stream(scene.config.seed, e, 1);
    if (jitter_seed) {
      std::mt19937_64 rng = env_stream(*jitter_seed, e, 2);
      std::normal_distribution<double> noise(0.0, std::sqrt(kJitterVariance));
      for (std::size_t i = 0; i < scene.bodies.size(); ++i) {
        if (!scene.bodies[i].is_dynamic()) continue;
        Vec3& v = env.bodies[i].velocity;
        v.x += noise(rng);
        v.y += noise(rng);
        v.z += noise(rng);
      }
    }
  }
  return w;
}

//! A batch of n copies of env `source` of `world`, sharing its scene. Used for rollouts.
inline BatchedWorld broadcast_env(const BatchedWorld& world, std::size_t source, std::size_t n) {
  if (n < 1) throw ConfigError("n must be >= 1");
  BatchedWorld out;
  out.scene = world.scene;
  out.models = world.models;
  out.config = world.config;
  out.step_count = world.step_count;
  out.envs.resize(n);
  const EnvState& src = world.envs.at(source);
  for (std::size_t e = 0; e < n; ++e) {
    out.envs[e].bodies = src.bodies;
    out.envs[e].external = src.external;
    out.envs[e].rng = env_stream(world.config.seed, e, 3);
  }
  return out;
}

inline double kinetic_energy(const BatchedWorld& w, std::size_t env) {
  double ke = 0.0;
  const auto& models = *w.models;
  const GeneralizedState& s = w.envs[env].bodies;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!models[i].dynamic) continue;
    const Mat3 inertia = rotate_inertia(models[i].inertia_body, s[i].orientation);
    ke += 0.5 * models[i].mass * s[i].velocity.squared_norm() +
          0.5 * s[i].angular_velocity.dot(inertia * s[i].angular_velocity);
  }
  return ke;
}

inline Vec3 linear_momentum(const BatchedWorld& w, std::size_t env) {
  Vec3 p;
  const auto& models = *w.models;
  const GeneralizedState& s = w.envs[env].bodies;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (models[i].dynamic) p += s[i].velocity * models[i].mass;
  }
  return p;
}

inline int find_body(const Scene& scene, const std::string& name) {
  for (std::size_t i = 0; i < scene.bodies.size(); ++i) {
    if (scene.bodies[i].name == name) return static_cast<int>(i);
  }
  throw ConfigError("no body named '" + name + "'");
}

}  // namespace comfree
