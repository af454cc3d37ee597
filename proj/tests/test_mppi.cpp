#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "comfree/comfree.hpp"

namespace comfree {
namespace {

std::vector<ControlPlan> constant_plans(int n, int horizon, double ax, double ay) {
  std::vector<ControlPlan> plans(static_cast<std::size_t>(n), ControlPlan(horizon, 2));
  for (ControlPlan& p : plans) {
    for (int t = 0; t < horizon; ++t) {
      p.at(t, 0) = ax;
      p.at(t, 1) = ay;
    }
  }
  return plans;
}

TEST(Config, Validation) {
  MppiConfig c;
  EXPECT_NO_THROW(validate(c));
  c.horizon = 0;
  EXPECT_THROW(validate(c), ValidationError);
  c = {};
  c.n_samples = 0;
  EXPECT_THROW(validate(c), ValidationError);
  c = {};
  c.noise_sigma = 0.0;
  EXPECT_THROW(validate(c), ValidationError);
  c = {};
  c.temperature = -1.0;
  EXPECT_THROW(validate(c), ValidationError);
  c = {};
  c.action_lo = 1.0;
  EXPECT_THROW(validate(c), ValidationError);
}

TEST(Config, SubstepsMustDivideControlPeriod) {
  MppiConfig c;
  c.control_dt = 0.02;
  EXPECT_EQ(substeps_per_control(c, 0.01), 2);
  EXPECT_EQ(substeps_per_control(c, 0.002), 10);
  EXPECT_THROW(substeps_per_control(c, 0.003), ConfigError);
  EXPECT_THROW(substeps_per_control(c, 0.05), ConfigError);
}

TEST(Cost, TermsEvaluateAsDocumented) {
  GeneralizedState s(2);
  s[0].position = {1.0, 2.0, 3.0};
  s[0].velocity = {0.0, 3.0, 4.0};
  s[1].position = {1.0, 0.0, -0.5};
  EXPECT_DOUBLE_EQ(masked_distance({3.0, 4.0, 12.0}, {}, {1.0, 1.0, 0.0}), 5.0);
  EXPECT_DOUBLE_EQ(orientation_error(Quat::identity(), Quat::identity()), 0.0);
  EXPECT_NEAR(orientation_error(Quat{0.0, 0.0, 0.0, 1.0}, Quat::identity()), 1.0, 1e-15);
  EXPECT_NEAR(orientation_error(Quat{-1.0, 0.0, 0.0, 0.0}, Quat::identity()), 0.0, 1e-15);

  CostSpec spec;
  CostTerm vel;
  vel.kind = CostKind::VelocityPenalty;
  vel.weight = 2.0;
  vel.body = 0;
  CostTerm fallen;
  fallen.kind = CostKind::Fallen;
  fallen.weight = 10.0;
  fallen.body = 1;
  fallen.threshold = 0.0;
  CostTerm dist;
  dist.kind = CostKind::BodyDistance;
  dist.body = 0;
  dist.other = 1;
  dist.axes = {1.0, 1.0, 0.0};
  spec.running = {vel, fallen, dist};
  EXPECT_DOUBLE_EQ(running_cost(spec, s), 2.0 * 25.0 + 10.0 + 2.0);

  spec.terminal_body = 0;
  spec.terminal_target = {1.0, 2.0, 0.0};
  spec.terminal_position_weight = 3.0;
  spec.terminal_orientation_weight = 4.0;
  spec.terminal_orientation = Quat{0.0, 1.0, 0.0, 0.0};
  EXPECT_DOUBLE_EQ(terminal_cost(spec, s), 3.0 * 3.0 + 4.0 * 1.0);
}

TEST(Cost, ValidationRejectsBadSpecs) {
  CostSpec spec;
  spec.terminal_position_weight = -1.0;
  EXPECT_THROW(validate(spec, 3), ValidationError);
  spec = {};
  CostTerm t;
  t.body = 5;
  spec.running = {t};
  EXPECT_THROW(validate(spec, 3), ValidationError);
  spec.running[0].body = 1;
  spec.running[0].weight = std::numeric_limits<double>::infinity();
  EXPECT_THROW(validate(spec, 3), ValidationError);
}

TEST(Plan, ShiftRepeatsLastAction) {
  ControlPlan p(4, 2);
  for (int t = 0; t < 4; ++t) {
    p.at(t, 0) = t;
    p.at(t, 1) = 10 + t;
  }
  shift_plan(p);
  EXPECT_EQ(p.u, (std::vector<double>{1, 11, 2, 12, 3, 13, 3, 13}));
}

TEST(RolloutCosts, ZeroCostSpecGivesZeros) {
  const PushTask task = make_push_task();
  const BatchedWorld w = replicate_envs(task.scene, 1);
  const auto costs = rollout_costs(w, 0, constant_plans(5, 10, 0.05, -0.02), task.actuator, CostSpec{}, 2);
  ASSERT_EQ(costs.size(), 5u);
  for (double c : costs) EXPECT_EQ(c, 0.0);
}

TEST(RolloutCosts, IdenticalPlansGiveIdenticalCosts) {
  const PushTask task = make_push_task();
  const BatchedWorld w = replicate_envs(task.scene, 1);
  const auto costs = rollout_costs(w, 0, constant_plans(8, 20, 0.07, 0.01), task.actuator, task.cost, 2);
  for (double c : costs) EXPECT_EQ(c, costs[0]);
  EXPECT_GT(costs[0], 0.0);
}

TEST(RolloutCosts, PushingTowardGoalIsCheaper) {
  const PushTask task = make_push_task();
  const BatchedWorld w = replicate_envs(task.scene, 1);
  std::vector<ControlPlan> plans = constant_plans(1, 48, 0.1, 0.0);
  plans.push_back(constant_plans(1, 48, -0.1, 0.0)[0]);
  const auto costs = rollout_costs(w, 0, plans, task.actuator, task.cost, 2);
  EXPECT_LT(costs[0], costs[1]);
}

TEST(RolloutCosts, NonFiniteRolloutCostsInfinity) {
  const PushTask task = make_push_task();
  const BatchedWorld w = replicate_envs(task.scene, 1);
  std::vector<ControlPlan> plans = constant_plans(2, 5, 0.0, 0.0);
  plans[1].at(2, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto costs = rollout_costs(w, 0, plans, task.actuator, task.cost, 2);
  EXPECT_TRUE(std::isfinite(costs[0]));
  EXPECT_TRUE(std::isinf(costs[1]));
}

TEST(RolloutCosts, LiveWorldUntouched) {
  const PushTask task = make_push_task();
  const BatchedWorld w = replicate_envs(task.scene, 1);
  const GeneralizedState before = w.envs[0].bodies;
  rollout_costs(w, 0, constant_plans(4, 10, 0.1, 0.1), task.actuator, task.cost, 2);
  EXPECT_EQ(w.envs[0].bodies, before);
  EXPECT_EQ(w.step_count, 0u);
}

TEST(Weights, EqualCostsAreUniform) {
  const std::vector<double> costs(8, 3.7);
  for (double w : mppi_weights(costs, 0.01)) EXPECT_EQ(w, 1.0 / 8.0);
  ControlPlan nominal(2, 1, 0.0);
  std::vector<ControlPlan> noise(4, ControlPlan(2, 1));
  for (int i = 0; i < 4; ++i) noise[static_cast<std::size_t>(i)].u = {0.01 * i, -0.02 * i};
  const ControlPlan out = mppi_update(nominal, std::vector<double>(4, 1.0), noise, 0.5, -1.0, 1.0);
  EXPECT_NEAR(out.u[0], 0.015, 1e-15);
  EXPECT_NEAR(out.u[1], -0.03, 1e-15);
}

TEST(Weights, DominantSampleTakesAllWeight) {
  const auto w = mppi_weights({5.0, 0.0, 5.0, 7.0}, 0.01);
  EXPECT_NEAR(w[1], 1.0, 1e-12);
  EXPECT_LT(w[0] + w[2] + w[3], 1e-12);
}

TEST(Weights, HighTemperatureIsUniform) {
  const auto w = mppi_weights({5.0, 0.0, 1e3, 7.0}, 1e300);
  for (double x : w) EXPECT_NEAR(x, 0.25, 1e-12);
}

TEST(Weights, ShiftInvariantBitwise) {
  // Dyadic costs and shifts keep every subtraction exact, so the weights must match bit for bit.
  const std::vector<double> costs{0.5, 0.125, 3.75, 1.0, 2.25, 0.125, 7.5};
  const auto base = mppi_weights(costs, 0.3);
  for (double shift : {1.0, -64.0, 1024.0, 0.25, 3.0}) {
    std::vector<double> shifted = costs;
    for (double& c : shifted) c += shift;
    EXPECT_EQ(mppi_weights(shifted, 0.3), base) << "shift " << shift;
  }
}

TEST(Weights, InfiniteCostsExcluded) {
  const double inf = std::numeric_limits<double>::infinity();
  const auto w = mppi_weights({inf, 1.0, 1.0}, 0.1);
  EXPECT_EQ(w[0], 0.0);
  EXPECT_EQ(w[1], 0.5);
  EXPECT_THROW(mppi_weights({inf, inf}, 0.1), PlanFailure);
  EXPECT_THROW(mppi_update(ControlPlan(1, 1), {inf}, {ControlPlan(1, 1)}, 0.1, -1.0, 1.0), PlanFailure);
}

TEST(Update, ResultRespectsBounds) {
  MppiConfig cfg;
  cfg.noise_sigma = 5.0;
  cfg.n_samples = 64;
  const auto noise = sample_noise(cfg, 2, 0);
  std::vector<double> costs(noise.size());
  for (std::size_t i = 0; i < costs.size(); ++i) costs[i] = static_cast<double>(i % 7);
  const ControlPlan out = mppi_update(ControlPlan(cfg.horizon, 2, 0.09), costs, noise, 1.0, -0.1, 0.1);
  EXPECT_TRUE(within_bounds(out, -0.1, 0.1));
}

TEST(Sampling, ReproducibleFromSeed) {
  MppiConfig cfg;
  cfg.seed = 42;
  EXPECT_EQ(sample_noise(cfg, 2, 3), sample_noise(cfg, 2, 3));
  EXPECT_NE(sample_noise(cfg, 2, 3), sample_noise(cfg, 2, 4));
  MppiConfig other = cfg;
  other.seed = 43;
  EXPECT_NE(sample_noise(cfg, 2, 3), sample_noise(other, 2, 3));
}

TEST(RecedingHorizon, ZeroControlStepsRejected) {
  const PushTask task = make_push_task();
  BatchedWorld w = replicate_envs(task.scene, 1);
  EXPECT_THROW(receding_horizon(w, task.actuator, task.cost, MppiConfig{}, 0, task.goal), ConfigError);
}

TEST(RecedingHorizon, SameSeedSamePlan) {
  MppiConfig cfg;
  cfg.n_samples = 32;
  cfg.horizon = 12;
  cfg.seed = 5;
  auto run_once = [&](int workers) {
    parallel::set_worker_count(workers);
    const PushTask task = make_push_task();
    BatchedWorld w = replicate_envs(task.scene, 1);
    const auto r = receding_horizon(w, task.actuator, task.cost, cfg, 4, task.goal);
    parallel::set_worker_count(0);
    return std::make_pair(r.final_plan, r.trajectory);
  };
  const auto a = run_once(1);
  const auto b = run_once(1);
  const auto c = run_once(3);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(RecedingHorizon, AdvancesLiveWorldAndRecordsSteps) {
  MppiConfig cfg;
  cfg.n_samples = 16;
  cfg.horizon = 8;
  const PushTask task = make_push_task();
  BatchedWorld w = replicate_envs(task.scene, 1);
  const auto r = receding_horizon(w, task.actuator, task.cost, cfg, 3, task.goal);
  ASSERT_EQ(r.steps.size(), 3u);
  EXPECT_EQ(w.step_count, 3u * 2u);
  for (const auto& s : r.steps) {
    EXPECT_GE(s.solve_ms, 0.0);
    EXPECT_TRUE(std::isfinite(s.plan_cost));
  }
  EXPECT_EQ(r.trajectory.back(), w.envs[0].bodies);
  EXPECT_TRUE(within_bounds(r.final_plan, cfg.action_lo, cfg.action_hi));
}

TEST(RecedingHorizon, StaticGoalKeepsBoxInPlace) {
  PushTask task = make_push_task({0.0, 0.0, 0.0});
  task.goal.stop_when_reached = false;
  MppiConfig cfg;
  cfg.n_samples = 64;
  cfg.horizon = 16;
  cfg.seed = 3;
  BatchedWorld w = replicate_envs(task.scene, 1);
  const auto r = receding_horizon(w, task.actuator, task.cost, cfg, 25, task.goal);
  for (const auto& s : r.steps) EXPECT_LT(s.goal_distance, task.goal.tolerance);
}

}  // namespace
}  // namespace comfree
