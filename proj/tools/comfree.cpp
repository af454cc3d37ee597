// comfree: command-line driver for simulation runs, benchmarks and the MPPI push demo.
//
// Exit codes: 0 success (all acceptance checks passed), 1 a check failed, 2 bad input or
// configuration, 3 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "comfree/comfree.hpp"

namespace {

using namespace comfree;

struct SimulateArgs {
  std::string scene_path;
  std::optional<long> steps;
  std::optional<double> dt;
  std::optional<double> k;
  std::optional<double> d;
  std::optional<std::vector<double>> gravity;
  std::optional<int> n_facets_t;
  std::optional<int> n_facets_rol;
  std::optional<double> margin;
  std::optional<double> r_min;
  std::optional<double> r_max;
  std::optional<double> width;
  std::optional<double> mid;
  std::optional<double> power;
  std::optional<std::uint64_t> seed;
  std::size_t envs = 1;
  std::optional<std::uint64_t> jitter_seed;
  std::string dump;
  std::string trajectory;
  std::size_t stride = 10;
};

int run_simulate(const SimulateArgs& a) {
  Scene scene = load_scene(a.scene_path);
  SimConfig& c = scene.config;
  if (a.dt) c.dt = *a.dt;
  if (a.k) c.impedance.k_user = *a.k;
  if (a.d) c.impedance.d_user = *a.d;
  if (a.gravity) {
    if (a.gravity->size() != 3) throw ValidationError("gravity", "needs three components");
    c.gravity = {(*a.gravity)[0], (*a.gravity)[1], (*a.gravity)[2]};
  }
  if (a.n_facets_t) c.n_facets_t = *a.n_facets_t;
  if (a.n_facets_rol) c.n_facets_rol = *a.n_facets_rol;
  if (a.margin) c.contact_margin = *a.margin;
  if (a.r_min) c.impedance.r_min = *a.r_min;
  if (a.r_max) c.impedance.r_max = *a.r_max;
  if (a.width) c.impedance.width = *a.width;
  if (a.mid) c.impedance.mid = *a.mid;
  if (a.power) c.impedance.power = *a.power;
  if (a.seed) c.seed = *a.seed;
  const long steps = a.steps.value_or(1000);
  if (steps < 1) throw ConfigError("--steps must be >= 1");

  BatchedWorld w = replicate_envs(scene, a.envs, a.jitter_seed);
  RunOptions opts;
  opts.stride = a.stride;
  opts.record_trajectory = !a.trajectory.empty();
  const RunResult res = run(w, static_cast<std::size_t>(steps), opts);

  std::size_t max_contacts = 0;
  double max_pen = 0.0;
  PhaseTimes total;
  for (const StepStats& s : res.stats) {
    max_contacts = std::max(max_contacts, s.contact_count);
    max_pen = std::max(max_pen, s.max_penetration);
    total.broadphase += s.seconds.broadphase;
    total.narrowphase += s.seconds.narrowphase;
    total.solve += s.seconds.solve;
    total.integrate += s.seconds.integrate;
  }
  std::printf("simulated %ld steps x %zu envs (t = %.6g s)\n", steps, w.n_envs(), w.time());
  std::printf("  contacts (last step): %zu, max per step: %zu\n", res.stats.back().contact_count, max_contacts);
  std::printf("  max penetration: %.6g mm\n", 1000.0 * max_pen);
  std::printf("  kinetic energy (env 0): %.9g J\n", res.stats.back().kinetic_energy[0]);
  std::printf("  time: broadphase %.3f ms, narrowphase %.3f ms, solve %.3f ms, integrate %.3f ms\n",
              1000 * total.broadphase, 1000 * total.narrowphase, 1000 * total.solve, 1000 * total.integrate);
  if (!a.dump.empty()) {
    write_text(a.dump, state_dump(w));
    std::printf("  state dump: %s\n", a.dump.c_str());
  }
  if (!a.trajectory.empty()) {
    write_text(a.trajectory, trajectory_dump(res.trajectory));
    std::printf("  trajectory: %s\n", a.trajectory.c_str());
  }
  return 0;
}

int finish(const bench::BenchReport& r, const std::string& out) {
  std::cout << bench::format_report(r);
  if (!out.empty()) {
    bench::write_report(r, out);
    std::cout << "  wrote " << r.files.size() + 1 << " files to " << out << "\n";
  }
  std::cout << (r.passed() ? "PASS" : "FAIL") << "\n";
  return r.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"comfree: complementarity-free rigid-body contact simulation"};
  app.require_subcommand(1);

  // simulate ----------------------------------------------------------------
  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run a scene file and report contact statistics");
  simulate->add_option("--scene", sim.scene_path, "Scene JSON file")->required()->check(CLI::ExistingFile);
  simulate->add_option("--steps", sim.steps, "Number of steps (default 1000)");
  simulate->add_option("--dt", sim.dt, "Time step [s]");
  simulate->add_option("--k", sim.k, "Impedance stiffness parameter k_user");
  simulate->add_option("--d", sim.d, "Impedance damping parameter d_user");
  simulate->add_option("--gravity", sim.gravity, "Gravity vector (3 values)")->expected(3);
  simulate->add_option("--n-facets-t", sim.n_facets_t, "Tangential facet count (even, >= 2)");
  simulate->add_option("--n-facets-rol", sim.n_facets_rol, "Rolling facet count (even, >= 2)");
  simulate->add_option("--margin", sim.margin, "Contact detection margin [m]");
  simulate->add_option("--r-min", sim.r_min, "Impedance ratio at zero depth");
  simulate->add_option("--r-max", sim.r_max, "Impedance ratio at full width");
  simulate->add_option("--width", sim.width, "Impedance transition width [m]");
  simulate->add_option("--mid", sim.mid, "Impedance curve midpoint");
  simulate->add_option("--power", sim.power, "Impedance curve power");
  simulate->add_option("--seed", sim.seed, "Scene RNG seed");
  simulate->add_option("--envs", sim.envs, "Number of parallel environments")->check(CLI::PositiveNumber);
  simulate->add_option("--jitter-seed", sim.jitter_seed, "Perturb initial velocities per env with this seed");
  simulate->add_option("--dump", sim.dump, "Write the final state of every env as CSV");
  simulate->add_option("--trajectory", sim.trajectory, "Write states every --stride steps as CSV");
  simulate->add_option("--stride", sim.stride, "Trajectory stride")->check(CLI::PositiveNumber);

  // bench -------------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("bench", "Run a benchmark and check its acceptance thresholds");
  bench_cmd->require_subcommand(1);
  std::string out;
  bench_cmd->add_option("--out", out, "Directory for CSV artifacts");

  bench::PenetrationOptions pen;
  std::vector<double> pen_k, pen_d;
  auto* b_pen = bench_cmd->add_subcommand("penetration", "Drop test: mean penetration per impedance setting");
  b_pen->add_option("--k", pen_k, "k_user values (default 0.1 0.3 0.5)");
  b_pen->add_option("--d", pen_d, "d_user values, one per k or a single shared value (default 0.001)");
  b_pen->add_option("--steps", pen.n_steps, "Steps per run")->check(CLI::PositiveNumber);
  b_pen->add_option("--out", out, "Directory for CSV artifacts");

  bench::DecayOptions tor = bench::default_torsion_options();
  auto* b_tor = bench_cmd->add_subcommand("torsion", "Spinning sphere: time to rest per torsional coefficient");
  b_tor->add_option("--mu", tor.mus, "mu_tor values");
  b_tor->add_option("--horizon", tor.horizon_seconds, "Give-up time [s]");
  b_tor->add_option("--stride", tor.record_stride, "Series stride")->check(CLI::PositiveNumber);
  b_tor->add_option("--out", out, "Directory for CSV artifacts");

  bench::DecayOptions rol = bench::default_rolling_options();
  auto* b_rol = bench_cmd->add_subcommand("rolling", "Rolling cylinder: time to rest per rolling coefficient");
  b_rol->add_option("--mu", rol.mus, "mu_rol values");
  b_rol->add_option("--horizon", rol.horizon_seconds, "Give-up time [s]");
  b_rol->add_option("--stride", rol.record_stride, "Series stride")->check(CLI::PositiveNumber);
  b_rol->add_option("--out", out, "Directory for CSV artifacts");

  bench::StabilityOptions stab;
  std::vector<double> stab_dt;
  double stab_k = 0.1, stab_d = 0.001;
  auto* b_stab = bench_cmd->add_subcommand("stability", "Sliding cube: stability and decay per time step");
  b_stab->add_option("--dt", stab_dt, "Time steps to test (default 0.002 0.02, plus 0.2 informational)");
  b_stab->add_option("--k", stab_k, "k_user");
  b_stab->add_option("--d", stab_d, "d_user");
  b_stab->add_option("--duration", stab.duration, "Seconds to reach rest");
  b_stab->add_option("--out", out, "Directory for CSV artifacts");

  bench::ScalingOptions scal;
  auto* b_scal = bench_cmd->add_subcommand("scaling", "Solve time versus contact count");
  b_scal->add_option("--cells", scal.cells, "Scene sizes (20 contacts per cell)");
  b_scal->add_option("--envs", scal.env_ladder, "Env counts at a fixed 4-cell scene");
  b_scal->add_option("--warmup", scal.warmup_steps, "Untimed steps");
  b_scal->add_option("--timed", scal.timed_steps, "Timed steps")->check(CLI::PositiveNumber);
  b_scal->add_option("--workers", scal.workers, "Worker threads during timing (0 = default)");
  b_scal->add_option("--out", out, "Directory for CSV artifacts");

  bench::ThroughputOptions thr;
  auto* b_thr = bench_cmd->add_subcommand("throughput", "Batched box pile: env-steps per second");
  b_thr->add_option("--envs", thr.n_envs, "Env counts");
  b_thr->add_option("--steps", thr.n_steps, "Steps per run")->check(CLI::PositiveNumber);
  b_thr->add_option("--push-every", thr.push_every, "Steps between random pushes");
  b_thr->add_option("--out", out, "Directory for CSV artifacts");

  // mppi-push ---------------------------------------------------------------
  bench::PushBenchOptions push;
  std::string push_out;
  auto* mppi = app.add_subcommand("mppi-push", "MPPI pushes a box to a goal with a force-driven sphere");
  mppi->add_option("--n-samples", push.mppi.n_samples, "Samples per control step")->check(CLI::PositiveNumber);
  mppi->add_option("--horizon", push.mppi.horizon, "Plan length in control steps")->check(CLI::PositiveNumber);
  mppi->add_option("--temperature", push.mppi.temperature, "Softmax temperature");
  mppi->add_option("--sigma", push.mppi.noise_sigma, "Sampling standard deviation");
  mppi->add_option("--seeds", push.seeds, "Number of seeds")->check(CLI::PositiveNumber);
  mppi->add_option("--max-steps", push.max_control_steps, "Control steps per seed")->check(CLI::PositiveNumber);
  mppi->add_option("--seed", push.mppi.seed, "First seed");
  mppi->add_option("--out", push_out, "Directory for CSV artifacts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*b_pen) {
      if (!pen_k.empty()) {
        if (pen_d.empty()) pen_d = {0.001};
        if (pen_d.size() != 1 && pen_d.size() != pen_k.size()) {
          throw ConfigError("--d needs one value or one per --k value");
        }
        pen.settings.clear();
        for (std::size_t i = 0; i < pen_k.size(); ++i) pen.settings.emplace_back(pen_k[i], pen_d[pen_d.size() == 1 ? 0 : i]);
      } else if (!pen_d.empty()) {
        if (pen_d.size() != 1) throw ConfigError("--d without --k takes a single value");
        for (auto& s : pen.settings) s.second = pen_d[0];
      }
      return finish(bench::bench_penetration(pen), out);
    }
    if (*b_tor) return finish(bench::bench_torsion(tor), out);
    if (*b_rol) return finish(bench::bench_rolling(rol), out);
    if (*b_stab) {
      if (!stab_dt.empty()) {
        stab.settings.clear();
        for (double dt : stab_dt) stab.settings.push_back({stab_k, stab_d, dt, true});
      } else {
        for (auto& s : stab.settings) {
          s.k_user = stab_k;
          s.d_user = stab_d;
        }
      }
      return finish(bench::bench_stability(stab), out);
    }
    if (*b_scal) return finish(bench::bench_scaling(scal), out);
    if (*b_thr) return finish(bench::bench_throughput(thr), out);
    if (*mppi) return finish(bench::bench_mppi_push(push), push_out);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
