#pragma once

#include <vector>

#include "comfree/rigidmath.hpp"

namespace comfree {

//! Pose and twist of one body. Velocities are world-frame; omega is about the centre of mass.
struct BodyState {
  Vec3 position;
  Quat orientation;
  Vec3 velocity;
  Vec3 angular_velocity;

  friend bool operator==(const BodyState&, const BodyState&) = default;
};

//! One entry per scene body. Static entries never change.
using GeneralizedState = std::vector<BodyState>;

//! Applied force and torque about the centre of mass, world frame.
struct Wrench {
  Vec3 force;
  Vec3 torque;

  friend bool operator==(const Wrench&, const Wrench&) = default;
};

}  // namespace comfree
