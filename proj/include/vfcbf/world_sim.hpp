#pragma once

// Ground-truth world: an analytic signed-distance scene rendered by sphere
// tracing, planar integrator dynamics and collision checks. The safety filter
// never reads any of this directly; it only sees rendered observations.

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "vfcbf/geometry.hpp"

namespace vfcbf {

class WorkerPool;

struct BoxPrimitive {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();
  Rgb color{0.7f, 0.7f, 0.7f};
};

struct SpherePrimitive {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  Rgb color{0.7f, 0.7f, 0.7f};
};

/// Hollow box: the interior is free space, everything outside is solid.
struct RoomShell {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();
  Rgb color{0.85f, 0.8f, 0.7f};
};

using Primitive = std::variant<BoxPrimitive, SpherePrimitive, RoomShell>;

double box_sdf(const Vec3& p, const Vec3& center, const Vec3& half_extents);

class SdfScene {
 public:
  /// Throws std::invalid_argument for an empty list or degenerate primitives.
  explicit SdfScene(std::vector<Primitive> primitives, Rgb background = {0.f, 0.f, 0.f});

  /// Default desk-scale scene: 6x6x3 m room with its floor at z = -1 so a
  /// camera at z = 0.5 sits 1.5 m from both floor and ceiling.
  static SdfScene default_room(bool with_obstacle = false);

  double eval(const Vec3& p) const;
  /// Distance plus index of the closest primitive.
  std::pair<double, std::size_t> eval_closest(const Vec3& p) const;

  const std::vector<Primitive>& primitives() const { return primitives_; }
  const Rgb& background() const { return background_; }
  /// Bounding box of the first room shell, when there is one.
  std::optional<std::pair<Vec3, Vec3>> room_bounds() const;

 private:
  std::vector<Primitive> primitives_;
  Rgb background_;
};

struct SphereTraceParams {
  int max_steps = 128;
  double hit_threshold = 1e-4;
  double step_scale = 1.0;
};

struct TraceHit {
  double distance;
  std::optional<std::size_t> primitive;  // empty on a miss
};

TraceHit sphere_trace(const SdfScene& scene, const Ray& ray, double max_range,
                      const SphereTraceParams& params = {});

/// Exact ground-truth observation. Passing a pool splits rows across workers.
RgbdImage render_ground_truth(const SdfScene& scene, const CameraIntrinsics& intr, const Pose& pose,
                              const SphereTraceParams& params = {}, WorkerPool* pool = nullptr);

/// Zero-mean Gaussian depth noise, clamped back into (0, max_range].
void add_depth_noise(RgbdImage& image, double stddev, double max_range, std::uint64_t seed);

enum class DynamicsMode { single_integrator, double_integrator };

struct RobotState {
  Pose pose;
  Vec3 velocity = Vec3::Zero();  // world frame; zero for single integrator
  DynamicsMode mode = DynamicsMode::single_integrator;
};

/// Body-frame planar command (m/s or m/s^2) plus yaw rate (rad/s).
struct ControlInput {
  Vec2 planar = Vec2::Zero();
  double yaw_rate = 0.0;

  friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

struct ActuatorLimits {
  double max_planar = 2.0;    // per axis
  double max_yaw_rate = 0.0;  // zero holds the heading fixed

  ControlInput clip(const ControlInput& u) const;
};

double squared_distance(const ControlInput& a, const ControlInput& b);

/// Single integrator: p += R(yaw) u dt. Double integrator (semi-implicit):
/// v += R(yaw) u dt, then p += v dt. Yaw integrates the yaw rate in both.
/// Throws std::invalid_argument for dt <= 0.
RobotState step_dynamics(const RobotState& state, const ControlInput& u, double dt);

bool check_collision(const SdfScene& scene, const RobotState& state, double robot_radius);

}  // namespace vfcbf
