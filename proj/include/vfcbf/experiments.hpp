#pragma once

// Scripted experiment harness: scenario definition, the per-tick simulation
// loop (observe, fuse, filter, step), parameter sweeps, the density-barrier
// ablation, runtime measurement and CSV output.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vfcbf/cbf_filter.hpp"
#include "vfcbf/implicit_scene.hpp"
#include "vfcbf/world_sim.hpp"

namespace vfcbf {

class WorkerPool;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NominalPolicy {
  enum class Kind { constant_toward_wall, scripted, zero };
  struct Segment {
    double t_start = 0.0;  // seconds; holds until the next segment
    ControlInput u;
  };
  Kind kind = Kind::constant_toward_wall;
  double magnitude = 1.0;  // m/s or m/s^2 along the body x axis
  std::vector<Segment> sequence;

  ControlInput command_at(double t) const;
};

struct GridSpec {
  std::array<int, 3> resolution{128, 128, 68};
  double padding = 0.25;  // meters added around the room bounds
  float sigma_max = 50.f;
  double fusion_rate = 0.5;
  double carve_diagonals = 1.5;
  double deposit_diagonals = 0.4;         // band in front of the observed surface
  double deposit_behind_diagonals = 2.0;  // band behind it
};

struct ScenarioConfig {
  std::string name = "wall_approach";
  std::vector<Primitive> scene = SdfScene::default_room().primitives();
  Rgb background{0.f, 0.f, 0.f};
  CameraIntrinsics camera;
  double camera_height = 0.5;
  DynamicsMode dynamics = DynamicsMode::single_integrator;

  /// Start pose. With distance_to_wall set, x is placed that far in front of
  /// the room's +x wall and the robot faces it.
  std::optional<double> distance_to_wall = 2.5;
  Vec2 start_xy = Vec2::Zero();
  double start_yaw = 0.0;

  NominalPolicy nominal;
  CbfConfig cbf;
  SamplerConfig sampler;
  ActuatorLimits limits;
  RenderParams render;
  GridSpec grid;

  double tick_rate = 10.0;
  double duration = 10.0;
  int repetitions = 5;
  std::uint64_t rng_seed = 1;
  double pre_explore = 1.0;  // seconds of stationary fusion before the run
  bool filter_enabled = true;
  double robot_radius = 0.05;
  double depth_noise = 0.0;  // stddev, meters
  double pose_noise = 0.0;   // stddev of the pose estimate, meters

  /// Throws ConfigError describing the first invalid field.
  void validate() const;
  double dt() const { return 1.0 / tick_rate; }
  int ticks() const;
  SdfScene build_scene() const;
  RobotState initial_state() const;
  DensityGrid make_grid() const;
  FilterConfig filter_config() const;
  FusionParams fusion_params(const DensityGrid& grid) const;
};

/// Reads a JSON scenario file. Missing keys keep their defaults; unknown keys
/// are rejected. Throws ConfigError with the path and the offending key.
ScenarioConfig load_scenario(const std::filesystem::path& path);
ScenarioConfig parse_scenario(const std::string& json_text);
std::string scenario_to_json(const ScenarioConfig& cfg);
/// Dotted-path scalar override, e.g. "cbf.d_c" or "rng_seed". The config is
/// left unchanged when the result would not validate.
void set_scenario_value(ScenarioConfig& cfg, const std::string& key, double value);
/// NaN for an unset optional (start.distance_to_wall).
double get_scenario_value(const ScenarioConfig& cfg, const std::string& key);

struct StepRecord {
  double t = 0.0;
  double h_now = 0.0;
  double h_next = 0.0;
  double delta_u = 0.0;
  double d_min_true = 0.0;
  double d_min_rendered = 0.0;
  double speed = 0.0;
  bool collided = false;
  double filter_ms = 0.0;
  int candidates = 0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

/// Extra per-tick detail that does not go into the CSV.
struct TickDetail {
  std::uint64_t tick = 0;
  RobotState state_before;
  FilterDecision decision;
  RgbdImage observation;
};

/// Owns one world, grid and filter and advances them tick by tick. Shared by
/// the scripted runner and the interactive session so both produce the same
/// trajectory for the same commands.
class Simulation {
 public:
  explicit Simulation(const ScenarioConfig& cfg, WorkerPool* pool = nullptr);

  /// Stationary observe-and-fuse ticks configured by pre_explore.
  void pre_explore();
  /// observe -> fuse -> filter -> step. Throws std::logic_error after a
  /// collision has ended the run.
  StepRecord step(const ControlInput& u_nominal, TickDetail* detail = nullptr);

  const ScenarioConfig& config() const { return cfg_; }
  const SdfScene& scene() const { return scene_; }
  const RobotState& state() const { return state_; }
  const DensityGrid& grid() const { return grid_; }
  const SafetyFilter& filter() const { return filter_; }
  std::uint64_t tick() const { return tick_; }
  double time() const { return static_cast<double>(tick_) * cfg_.dt(); }
  bool collided() const { return collided_; }
  RgbdImage observe() const;

  /// Replaces the robot state (used by the runtime harness); the grid is kept.
  void teleport(const RobotState& s) { state_ = s; }

 private:
  RobotState estimate() const;

  ScenarioConfig cfg_;
  WorkerPool* pool_;
  SdfScene scene_;
  DensityGrid grid_;
  FusionParams fusion_;
  SafetyFilter filter_;
  RobotState state_;
  std::uint64_t tick_ = 0;
  std::uint64_t fuse_count_ = 0;
  bool collided_ = false;
};

struct RunResult {
  std::vector<StepRecord> records;
  std::vector<TickDetail> details;  // filled only when requested
  bool collided = false;
  int fallback_ticks = 0;
};

struct RunOptions {
  bool keep_details = false;
  DensityGrid* final_grid = nullptr;  // receives the grid at the end of the run
};

/// The configured scenario with the given seed (rng_seed when absent).
RunResult run_scenario(const ScenarioConfig& cfg, std::optional<std::uint64_t> seed = std::nullopt,
                       WorkerPool* pool = nullptr, const RunOptions& options = {});

struct SweepRow {
  std::string param;
  double value = 0.0;
  int rep = 0;
  double mean_du = 0.0;
  double max_du = 0.0;
  double min_dist = 0.0;    // minimum ground-truth d_min over the run
  double final_dist = 0.0;  // ground-truth d_min at the last tick
  bool collided = false;
};

struct SweepSummary {
  double value = 0.0;
  double mean_du = 0.0, max_du = 0.0;
  double min_dist_mean = 0.0, min_dist_lo = 0.0, min_dist_hi = 0.0;
  double final_dist_mean = 0.0;
  int collisions = 0;
};

struct SweepResult {
  std::string param;
  std::vector<double> values;
  std::vector<SweepRow> rows;  // one per (value, repetition)

  std::vector<SweepSummary> summarize() const;
};

/// Accepted parameter names: "dc" / "d_c" and "alpha". Repetition r runs with
/// seed rng_seed + r.
SweepResult run_sweep(const ScenarioConfig& base, const std::string& param, const std::vector<double>& values,
                      WorkerPool* pool = nullptr);

SweepRow summarize_run(const std::string& param, double value, int rep, const RunResult& run);

struct AblationRun {
  double d_c = 0.0;
  RunResult run;
  int interventions = 0;  // ticks with delta_u > 0
  int fallbacks = 0;
  bool h_always_negative = true;
  bool collided_with_negative_h = false;
  std::vector<std::vector<double>> density_slice;  // [iy][ix] at slice_z
};

struct AblationReport {
  double slice_z = 0.5;
  std::vector<AblationRun> runs;
};

/// Runs the density barrier at each threshold. When out_dir is set, a CSV per
/// run and the density slice at z = 0.5 m are written there.
AblationReport run_density_ablation(const ScenarioConfig& cfg, const std::vector<double>& d_c_values,
                                    const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                    WorkerPool* pool = nullptr);

std::vector<std::vector<double>> density_slice(const DensityGrid& grid, double z);

struct TimingSummary {
  double safe_median_ms = 0.0;
  double safe_p95_ms = 0.0;
  double batch_median_ms = 0.0;
  double batch_p95_ms = 0.0;
  int safe_predict_calls_max = 0;
  int batch_predict_calls_max = 0;
  int batch_size = 0;
  int max_batches = 0;
  int samples = 0;
};

/// Wall-clock cost of filter_action alone (fusion and ground-truth rendering
/// excluded). The intervention path uses one batch of batch_size candidates.
TimingSummary measure_runtime(const ScenarioConfig& cfg, int samples = 40, WorkerPool* pool = nullptr);

/// Columns: t,h_now,h_next,delta_u,d_min_true,d_min_rendered,speed,collided,filter_ms,candidates
extern const char* const kRecordCsvHeader;
/// Columns: param,value,rep,mean_du,max_du,min_dist
extern const char* const kSweepCsvHeader;

void export_csv(const std::vector<StepRecord>& records, const std::filesystem::path& path);
void export_sweep_csv(const SweepResult& result, const std::filesystem::path& path);
std::string records_to_csv(const std::vector<StepRecord>& records, bool include_timing = true);
std::vector<StepRecord> parse_records_csv(const std::string& text);
std::vector<StepRecord> load_records_csv(const std::filesystem::path& path);

}  // namespace vfcbf
