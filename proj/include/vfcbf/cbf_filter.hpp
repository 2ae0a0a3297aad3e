#pragma once

// Visual-foresight CBF safety filter. The barrier is evaluated on images: the
// current camera frame, and the frame the implicit scene predicts the robot
// would see after applying a candidate action. An action is accepted when the
// predicted barrier value satisfies h_next <= alpha * h_now; otherwise nearby
// actions are sampled in batches and the closest accepted one is returned.

#include <cstdint>
#include <vector>

#include "vfcbf/geometry.hpp"
#include "vfcbf/implicit_scene.hpp"
#include "vfcbf/world_sim.hpp"

namespace vfcbf {

class WorkerPool;

enum class CbfKind { depth_first_order, depth_second_order, density };

/// h <= 0 is safe, h > 0 unsafe.
struct CbfConfig {
  CbfKind kind = CbfKind::depth_first_order;
  double d_c = 0.1;    // clearance in meters; a (negative) density offset for the density kind
  double alpha = 0.5;  // in (0, 1)
  double beta = 1.0;   // seconds; second-order kind only
  double percentile = 0.0;

  void validate() const;
};

enum class FallbackPolicy { zero_action, max_brake };

struct SamplerConfig {
  int batch_size = 10;
  int max_batches = 10;
  /// Per-axis standard deviation: planar x, planar y, yaw rate.
  std::array<double, 3> sigma_u{1.0, 1.0, 1.0};
  std::uint64_t rng_seed = 0;
  FallbackPolicy fallback = FallbackPolicy::zero_action;

  void validate() const;
  /// Standard-deviation multiplier for a batch: 1 + batch_index / 2.
  static double scale(int batch_index) { return 1.0 + 0.5 * batch_index; }
};

struct FilterDecision {
  ControlInput u_applied;
  ControlInput u_nominal;
  double intervention = 0.0;       // ||u_applied - u_nominal||
  double h_now = 0.0;
  double h_next_predicted = 0.0;   // NaN when the fallback was applied unevaluated
  double predicted_min_depth = 0.0;  // NaN when no image was rendered for u_applied
  bool safe = false;
  bool fallback_used = false;
  int candidates_evaluated = 0;
  int predict_calls = 0;  // NSPredict renders consumed

  friend bool operator==(const FilterDecision&, const FilterDecision&) = default;
};

double cbf_depth(const RgbdImage& image, const CbfConfig& cfg);
double cbf_depth_velocity(const RgbdImage& image, const Vec3& v_hat, const CbfConfig& cfg);
double cbf_density(const DensityGrid& grid, const Vec3& predicted_position, const CbfConfig& cfg);

/// h_next <= alpha * h_now.
bool constraint_satisfied(double h_now, double h_next, double alpha);

/// Gaussian perturbations of the nominal action, clipped to the limits.
/// Deterministic in (rng_seed, stream, batch_index); `stream` lets callers draw
/// fresh candidates each control tick while staying reproducible.
std::vector<ControlInput> sample_candidates(const ControlInput& u_nominal, const SamplerConfig& cfg, int batch_index,
                                            const ActuatorLimits& limits, std::uint64_t stream = 0);

/// The filter's simplified model of the robot: dynamics mode, control period
/// and actuator limits.
struct DynamicsModel {
  DynamicsMode mode = DynamicsMode::single_integrator;
  double dt = 0.1;
  ActuatorLimits limits;
};

/// step_dynamics followed by volume_render at the predicted pose.
RgbdImage predict_next_observation(const RobotState& estimate, const ControlInput& u, const DensityGrid& grid,
                                   const DynamicsModel& dynamics, const CameraIntrinsics& intr,
                                   const RenderParams& params, WorkerPool* pool = nullptr);

struct FilterConfig {
  CbfConfig cbf;
  SamplerConfig sampler;
  DynamicsModel dynamics;
  CameraIntrinsics intrinsics;
  RenderParams render;
};

class SafetyFilter {
 public:
  /// Throws std::invalid_argument for inconsistent settings, e.g. a
  /// second-order barrier on a single integrator or a percentile with the
  /// density barrier.
  explicit SafetyFilter(FilterConfig cfg, WorkerPool* pool = nullptr);

  const FilterConfig& config() const { return cfg_; }

  /// One control tick. `tick` selects the sampler stream.
  FilterDecision filter_action(const RobotState& estimate, const RgbdImage& y_now, const ControlInput& u_nominal,
                               const DensityGrid& grid, std::uint64_t tick = 0) const;

  /// The action applied when no sampled candidate is accepted.
  ControlInput fallback_action(const RobotState& estimate) const;

 private:
  double h_of_image(const RgbdImage& image, const Vec3& velocity) const;

  FilterConfig cfg_;
  RenderParams depth_render_;  // barriers read depth only
  WorkerPool* pool_;
};

}  // namespace vfcbf
