#pragma once

// Umbrella header: the whole library.

#include "comfree/errors.hpp"
#include "comfree/rigidmath.hpp"
#include "comfree/scene.hpp"
#include "comfree/state.hpp"
#include "comfree/collision.hpp"
#include "comfree/contact_solver.hpp"
#include "comfree/parallel.hpp"
#include "comfree/world.hpp"
#include "comfree/stepper.hpp"
#include "comfree/mppi.hpp"
#include "comfree/bench.hpp"
