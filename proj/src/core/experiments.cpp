#include "vfcbf/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "vfcbf/worker_pool.hpp"

namespace vfcbf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9e3779b97f4a7c15ULL ^ (b + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double percentile_of(std::vector<double> v, double p) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::optional<std::pair<Vec3, Vec3>> room_bounds_of(const ScenarioConfig& cfg) {
  for (const auto& prim : cfg.scene) {
    if (const auto* r = std::get_if<RoomShell>(&prim)) {
      return std::make_pair(Vec3(r->center - r->half_extents), Vec3(r->center + r->half_extents));
    }
  }
  return std::nullopt;
}

}  // namespace

ControlInput NominalPolicy::command_at(double t) const {
  switch (kind) {
    case Kind::zero:
      return {};
    case Kind::constant_toward_wall:
      return {Vec2(magnitude, 0.0), 0.0};
    case Kind::scripted: {
      ControlInput u;
      for (const auto& s : sequence) {
        if (s.t_start <= t + 1e-9) u = s.u;
      }
      return u;
    }
  }
  return {};
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (!(tick_rate > 0.0)) fail("tick_rate must be positive");
  if (!(duration > 0.0)) fail("duration must be positive");
  if (repetitions < 1) fail("repetitions must be >= 1");
  if (!(pre_explore >= 0.0)) fail("pre_explore must be non-negative");
  if (!(robot_radius >= 0.0)) fail("robot_radius must be non-negative");
  if (!(depth_noise >= 0.0) || !(pose_noise >= 0.0)) fail("noise levels must be non-negative");
  if (scene.empty()) fail("scene needs at least one primitive");
  if (!(limits.max_planar >= 0.0) || !(limits.max_yaw_rate >= 0.0)) fail("limits must be non-negative");
  if (!(grid.padding >= 0.0)) fail("grid.padding must be non-negative");
  if (!(grid.fusion_rate > 0.0 && grid.fusion_rate <= 1.0)) fail("grid.fusion_rate must lie in (0, 1]");
  if (!(grid.carve_diagonals >= 0.0) || !(grid.deposit_diagonals > 0.0) ||
      !(grid.deposit_behind_diagonals >= 0.0)) fail("grid fusion margins must be positive");
  if (nominal.kind == NominalPolicy::Kind::scripted && nominal.sequence.empty()) {
    fail("nominal.sequence must not be empty for a scripted policy");
  }
  if (distance_to_wall && !room_bounds_of(*this)) fail("start.distance_to_wall requires a room primitive");
  try {
    camera.validate();
    render.validate();
    cbf.validate();
    sampler.validate();
    (void)filter_config();
    SdfScene s(scene, background);
    (void)make_grid();
    if (cbf.kind == CbfKind::depth_second_order && dynamics != DynamicsMode::double_integrator) {
      fail("cbf.kind depth_second_order requires double_integrator dynamics");
    }
    if (cbf.kind == CbfKind::depth_first_order && dynamics != DynamicsMode::single_integrator) {
      fail("cbf.kind depth_first_order requires single_integrator dynamics");
    }
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
}

int ScenarioConfig::ticks() const { return static_cast<int>(std::lround(duration * tick_rate)); }

SdfScene ScenarioConfig::build_scene() const { return SdfScene(scene, background); }

RobotState ScenarioConfig::initial_state() const {
  RobotState s;
  s.mode = dynamics;
  Vec3 p(start_xy.x(), start_xy.y(), camera_height);
  if (distance_to_wall) {
    const auto bounds = room_bounds_of(*this);
    p.x() = bounds->second.x() - *distance_to_wall;
  }
  s.pose = Pose(p, start_yaw);
  return s;
}

DensityGrid ScenarioConfig::make_grid() const {
  Aabb box;
  if (const auto bounds = room_bounds_of(*this)) {
    box = {bounds->first, bounds->second};
  } else {
    // No room: a cube of side 2 * max_range around the start.
    const Vec3 c(start_xy.x(), start_xy.y(), camera_height);
    box = {c.array() - camera.max_range, c.array() + camera.max_range};
  }
  box.min.array() -= grid.padding;
  box.max.array() += grid.padding;
  return DensityGrid(box, grid.resolution, grid.sigma_max);
}

FilterConfig ScenarioConfig::filter_config() const {
  FilterConfig f;
  f.cbf = cbf;
  f.sampler = sampler;
  f.sampler.rng_seed = rng_seed;
  f.dynamics = {dynamics, dt(), limits};
  f.intrinsics = camera;
  f.render = render;
  return f;
}

FusionParams ScenarioConfig::fusion_params(const DensityGrid& g) const {
  return FusionParams::for_grid(g, grid.fusion_rate, grid.carve_diagonals, grid.deposit_diagonals,
                                 grid.deposit_behind_diagonals);
}

Simulation::Simulation(const ScenarioConfig& cfg, WorkerPool* pool)
    : cfg_((cfg.validate(), cfg)),
      pool_(pool),
      scene_(cfg.build_scene()),
      grid_(cfg.make_grid()),
      fusion_(cfg.fusion_params(grid_)),
      filter_(cfg.filter_config(), pool),
      state_(cfg.initial_state()) {}

RgbdImage Simulation::observe() const {
  RgbdImage y = render_ground_truth(scene_, cfg_.camera, state_.pose, {}, pool_);
  add_depth_noise(y, cfg_.depth_noise, cfg_.camera.max_range, mix(cfg_.rng_seed, 2 * fuse_count_ + 1));
  return y;
}

RobotState Simulation::estimate() const {
  RobotState est = state_;
  if (cfg_.pose_noise > 0.0) {
    std::mt19937_64 rng(mix(cfg_.rng_seed, 2 * fuse_count_));
    std::normal_distribution<double> n(0.0, cfg_.pose_noise);
    est.pose.position.x() += n(rng);
    est.pose.position.y() += n(rng);
  }
  return est;
}

void Simulation::pre_explore() {
  const auto n = static_cast<int>(std::lround(cfg_.pre_explore * cfg_.tick_rate));
  for (int k = 0; k < n; ++k) {
    const RgbdImage y = observe();
    fuse_observation(grid_, cfg_.camera, estimate().pose, y, fusion_);
    ++fuse_count_;
  }
}

StepRecord Simulation::step(const ControlInput& u_nominal_raw, TickDetail* detail) {
  if (collided_) throw std::logic_error("simulation: run already ended in a collision");
  const ControlInput u_nominal = cfg_.limits.clip(u_nominal_raw);

  RgbdImage y = observe();
  const RobotState est = estimate();
  fuse_observation(grid_, cfg_.camera, est.pose, y, fusion_);
  ++fuse_count_;
  // Ground truth clearance is judged on the noise-free image.
  const double d_true = cfg_.depth_noise > 0.0
                            ? min_depth(render_ground_truth(scene_, cfg_.camera, state_.pose, {}, pool_), 0.0)
                            : min_depth(y, 0.0);

  FilterDecision dec;
  const auto start = std::chrono::steady_clock::now();
  if (cfg_.filter_enabled) {
    dec = filter_.filter_action(est, y, u_nominal, grid_, tick_);
  } else {
    dec.u_nominal = dec.u_applied = u_nominal;
    dec.h_now = cfg_.cbf.kind == CbfKind::density ? cbf_density(grid_, est.pose.position, cfg_.cbf)
                : cfg_.cbf.kind == CbfKind::depth_second_order ? cbf_depth_velocity(y, est.velocity, cfg_.cbf)
                                                                : cbf_depth(y, cfg_.cbf);
    dec.h_next_predicted = kNaN;
    dec.predicted_min_depth = kNaN;
    dec.safe = false;
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  StepRecord rec;
  rec.t = time();
  rec.h_now = dec.h_now;
  rec.h_next = dec.h_next_predicted;
  rec.delta_u = dec.intervention;
  rec.d_min_true = d_true;
  rec.d_min_rendered = dec.predicted_min_depth;
  rec.speed = cfg_.dynamics == DynamicsMode::single_integrator ? dec.u_applied.planar.norm() : state_.velocity.norm();
  rec.filter_ms = ms;
  rec.candidates = dec.candidates_evaluated;

  if (detail) {
    detail->tick = tick_;
    detail->state_before = state_;
    detail->decision = dec;
    detail->observation = std::move(y);
  }

  state_ = step_dynamics(state_, dec.u_applied, cfg_.dt());
  collided_ = check_collision(scene_, state_, cfg_.robot_radius);
  rec.collided = collided_;
  ++tick_;
  return rec;
}

RunResult run_scenario(const ScenarioConfig& base, std::optional<std::uint64_t> seed, WorkerPool* pool,
                       const RunOptions& options) {
  ScenarioConfig cfg = base;
  if (seed) cfg.rng_seed = *seed;
  Simulation sim(cfg, pool);
  sim.pre_explore();
  RunResult out;
  const int n = cfg.ticks();
  out.records.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    TickDetail detail;
    const ControlInput u = cfg.nominal.command_at(sim.time());
    out.records.push_back(sim.step(u, options.keep_details ? &detail : nullptr));
    if (options.keep_details) {
      if (detail.decision.fallback_used) ++out.fallback_ticks;
      out.details.push_back(std::move(detail));
    }
    if (sim.collided()) {
      out.collided = true;
      break;
    }
  }
  if (!options.keep_details) {
    // Fallback ticks are visible as NaN predictions from the depth barriers.
    for (const auto& r : out.records) {
      if (cfg.filter_enabled && cfg.cbf.kind != CbfKind::density && std::isnan(r.h_next)) ++out.fallback_ticks;
    }
  }
  if (options.final_grid) *options.final_grid = sim.grid();
  return out;
}

SweepRow summarize_run(const std::string& param, double value, int rep, const RunResult& run) {
  SweepRow row;
  row.param = param;
  row.value = value;
  row.rep = rep;
  row.collided = run.collided;
  if (run.records.empty()) return row;
  double sum = 0.0;
  row.max_du = 0.0;
  row.min_dist = std::numeric_limits<double>::infinity();
  for (const auto& r : run.records) {
    sum += r.delta_u;
    row.max_du = std::max(row.max_du, r.delta_u);
    row.min_dist = std::min(row.min_dist, r.d_min_true);
  }
  row.mean_du = sum / static_cast<double>(run.records.size());
  row.final_dist = run.records.back().d_min_true;
  return row;
}

SweepResult run_sweep(const ScenarioConfig& base, const std::string& param, const std::vector<double>& values,
                      WorkerPool* pool) {
  std::string canonical;
  if (param == "dc" || param == "d_c") {
    canonical = "dc";
  } else if (param == "alpha") {
    canonical = "alpha";
  } else {
    throw ConfigError("sweep: parameter must be dc or alpha, got '" + param + "'");
  }
  if (values.empty()) throw ConfigError("sweep: no values given");
  SweepResult result;
  result.param = canonical;
  result.values = values;
  for (double v : values) {
    ScenarioConfig cfg = base;
    if (canonical == "dc") {
      cfg.cbf.d_c = v;
    } else {
      cfg.cbf.alpha = v;
    }
    cfg.validate();
    for (int rep = 0; rep < cfg.repetitions; ++rep) {
      const auto run = run_scenario(cfg, cfg.rng_seed + static_cast<std::uint64_t>(rep), pool);
      result.rows.push_back(summarize_run(canonical, v, rep, run));
    }
  }
  return result;
}

std::vector<SweepSummary> SweepResult::summarize() const {
  std::vector<SweepSummary> out;
  for (double v : values) {
    SweepSummary s;
    s.value = v;
    s.min_dist_lo = std::numeric_limits<double>::infinity();
    s.min_dist_hi = -std::numeric_limits<double>::infinity();
    int n = 0;
    for (const auto& r : rows) {
      if (r.value != v) continue;
      ++n;
      s.mean_du += r.mean_du;
      s.max_du = std::max(s.max_du, r.max_du);
      s.min_dist_mean += r.min_dist;
      s.min_dist_lo = std::min(s.min_dist_lo, r.min_dist);
      s.min_dist_hi = std::max(s.min_dist_hi, r.min_dist);
      s.final_dist_mean += r.final_dist;
      s.collisions += r.collided ? 1 : 0;
    }
    if (n > 0) {
      s.mean_du /= n;
      s.min_dist_mean /= n;
      s.final_dist_mean /= n;
    }
    out.push_back(s);
  }
  return out;
}

std::vector<std::vector<double>> density_slice(const DensityGrid& grid, double z) {
  const auto& res = grid.resolution();
  std::vector<std::vector<double>> out(static_cast<std::size_t>(res[1]), std::vector<double>(static_cast<std::size_t>(res[0])));
  for (int iy = 0; iy < res[1]; ++iy) {
    for (int ix = 0; ix < res[0]; ++ix) {
      const Vec3 c = grid.voxel_center(ix, iy, 0);
      out[static_cast<std::size_t>(iy)][static_cast<std::size_t>(ix)] = grid.query_density(Vec3(c.x(), c.y(), z));
    }
  }
  return out;
}

AblationReport run_density_ablation(const ScenarioConfig& base, const std::vector<double>& d_c_values,
                                    const std::optional<std::filesystem::path>& out_dir, WorkerPool* pool) {
  AblationReport report;
  if (out_dir) std::filesystem::create_directories(*out_dir);
  for (double dc : d_c_values) {
    ScenarioConfig cfg = base;
    cfg.cbf.kind = CbfKind::density;
    cfg.cbf.d_c = dc;
    cfg.cbf.percentile = 0.0;
    cfg.validate();
    DensityGrid final_grid = cfg.make_grid();
    AblationRun run;
    run.d_c = dc;
    run.run = run_scenario(cfg, std::nullopt, pool, RunOptions{true, &final_grid});
    for (const auto& r : run.run.records) {
      if (r.delta_u > 0.0) ++run.interventions;
      if (!(r.h_now < 0.0)) run.h_always_negative = false;
    }
    for (const auto& d : run.run.details) {
      if (d.decision.fallback_used) ++run.fallbacks;
    }
    run.collided_with_negative_h = run.run.collided && !run.run.records.empty() && run.run.records.back().h_now < 0.0;
    run.density_slice = density_slice(final_grid, report.slice_z);
    if (out_dir) {
      char tag[64];
      std::snprintf(tag, sizeof tag, "dc_%g", dc);
      export_csv(run.run.records, *out_dir / (std::string("ablation_") + tag + ".csv"));
      export_density_slice(final_grid, report.slice_z, *out_dir / (std::string("density_slice_") + tag + ".txt"));
    }
    report.runs.push_back(std::move(run));
  }
  return report;
}

TimingSummary measure_runtime(const ScenarioConfig& base, int samples, WorkerPool* pool) {
  if (samples < 1) throw std::invalid_argument("measure_runtime: samples must be >= 1");
  ScenarioConfig cfg = base;
  cfg.validate();
  Simulation sim(cfg, pool);
  sim.pre_explore();

  TimingSummary out;
  out.samples = samples;
  out.batch_size = cfg.sampler.batch_size;
  out.max_batches = 1;

  const ControlInput toward{Vec2(cfg.nominal.magnitude > 0 ? cfg.nominal.magnitude : 1.0, 0.0), 0.0};
  auto time_decisions = [&](const SafetyFilter& filter, const RobotState& state, std::vector<double>& ms, int& calls) {
    const RgbdImage y = sim.observe();
    for (int k = 0; k < samples; ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto dec = filter.filter_action(state, y, toward, sim.grid(), static_cast<std::uint64_t>(k));
      ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
      calls = std::max(calls, dec.predict_calls);
    }
  };

  // Safe path: far from the wall the nominal command is accepted immediately.
  std::vector<double> safe_ms;
  time_decisions(sim.filter(), sim.state(), safe_ms, out.safe_predict_calls_max);

  // Intervention path: close to the wall, one batch of candidates.
  FilterConfig fc = cfg.filter_config();
  fc.sampler.max_batches = 1;
  const SafetyFilter one_batch(fc, pool);
  RobotState near = sim.state();
  if (const auto bounds = room_bounds_of(cfg)) {
    near.pose.position.x() =
        bounds->second.x() - (cfg.cbf.kind == CbfKind::density ? 0.1 : std::max(cfg.cbf.d_c, 0.0) + 0.08);
  }
  near.velocity = Vec3::Zero();
  sim.teleport(near);
  for (int k = 0; k < 5; ++k) sim.step({});  // fuse close-range views
  near.pose = sim.state().pose;
  if (cfg.dynamics == DynamicsMode::double_integrator) near.velocity = Vec3(toward.planar.x(), 0, 0);
  std::vector<double> batch_ms;
  time_decisions(one_batch, near, batch_ms, out.batch_predict_calls_max);

  out.safe_median_ms = percentile_of(safe_ms, 0.5);
  out.safe_p95_ms = percentile_of(safe_ms, 0.95);
  out.batch_median_ms = percentile_of(batch_ms, 0.5);
  out.batch_p95_ms = percentile_of(batch_ms, 0.95);
  return out;
}

}  // namespace vfcbf
