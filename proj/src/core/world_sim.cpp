#include "vfcbf/world_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "vfcbf/worker_pool.hpp"

namespace vfcbf {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double primitive_sdf(const Primitive& prim, const Vec3& p) {
  return std::visit(overloaded{
                        [&](const BoxPrimitive& b) { return box_sdf(p, b.center, b.half_extents); },
                        [&](const SpherePrimitive& s) { return (p - s.center).norm() - s.radius; },
                        [&](const RoomShell& r) { return -box_sdf(p, r.center, r.half_extents); },
                    },
                    prim);
}

Rgb primitive_color(const Primitive& prim) {
  return std::visit([](const auto& x) { return x.color; }, prim);
}

}  // namespace

double box_sdf(const Vec3& p, const Vec3& center, const Vec3& half_extents) {
  const Vec3 q = (p - center).cwiseAbs() - half_extents;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return outside + inside;
}

SdfScene::SdfScene(std::vector<Primitive> primitives, Rgb background)
    : primitives_(std::move(primitives)), background_(background) {
  if (primitives_.empty()) throw std::invalid_argument("scene: at least one primitive is required");
  for (const auto& prim : primitives_) {
    const bool ok = std::visit(overloaded{
                                   [](const BoxPrimitive& b) { return (b.half_extents.array() > 0).all(); },
                                   [](const SpherePrimitive& s) { return s.radius > 0; },
                                   [](const RoomShell& r) { return (r.half_extents.array() > 0).all(); },
                               },
                               prim);
    if (!ok) throw std::invalid_argument("scene: primitive with non-positive size");
  }
}

SdfScene SdfScene::default_room(bool with_obstacle) {
  std::vector<Primitive> prims;
  prims.push_back(RoomShell{Vec3(0.0, 0.0, 0.5), Vec3(3.0, 3.0, 1.5), Rgb{0.85f, 0.8f, 0.7f}});
  if (with_obstacle) {
    prims.push_back(BoxPrimitive{Vec3(1.2, 1.6, 0.0), Vec3(0.3, 0.3, 1.0), Rgb{0.2f, 0.4f, 0.8f}});
  }
  return SdfScene(std::move(prims), Rgb{0.f, 0.f, 0.f});
}

double SdfScene::eval(const Vec3& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& prim : primitives_) d = std::min(d, primitive_sdf(prim, p));
  return d;
}

std::pair<double, std::size_t> SdfScene::eval_closest(const Vec3& p) const {
  double d = std::numeric_limits<double>::infinity();
  std::size_t idx = 0;
  for (std::size_t k = 0; k < primitives_.size(); ++k) {
    const double dk = primitive_sdf(primitives_[k], p);
    if (dk < d) {
      d = dk;
      idx = k;
    }
  }
  return {d, idx};
}

std::optional<std::pair<Vec3, Vec3>> SdfScene::room_bounds() const {
  for (const auto& prim : primitives_) {
    if (const auto* r = std::get_if<RoomShell>(&prim)) {
      return std::make_pair(Vec3(r->center - r->half_extents), Vec3(r->center + r->half_extents));
    }
  }
  return std::nullopt;
}

TraceHit sphere_trace(const SdfScene& scene, const Ray& ray, double max_range, const SphereTraceParams& params) {
  double t = 0.0;
  for (int step = 0; step < params.max_steps; ++step) {
    const auto [d, idx] = scene.eval_closest(ray.at(t));
    if (d < params.hit_threshold) return {std::max(t, params.hit_threshold), idx};
    t += params.step_scale * d;
    if (t >= max_range) return {max_range, std::nullopt};
  }
  // Step budget exhausted: treat the current point as the surface.
  const auto [d, idx] = scene.eval_closest(ray.at(t));
  (void)d;
  return {std::clamp(t, params.hit_threshold, max_range), idx};
}

RgbdImage render_ground_truth(const SdfScene& scene, const CameraIntrinsics& intr, const Pose& pose,
                              const SphereTraceParams& params, WorkerPool* pool) {
  intr.validate();
  RgbdImage img(intr.width, intr.height, intr.max_range, scene.background());
  auto row = [&](std::size_t i) {
    for (int j = 0; j < intr.width; ++j) {
      const auto ray = pixel_ray(intr, pose, static_cast<int>(i), j);
      const auto hit = sphere_trace(scene, ray, intr.max_range, params);
      img.depth(static_cast<int>(i), j) = hit.distance;
      if (hit.primitive) img.rgb(static_cast<int>(i), j) = primitive_color(scene.primitives()[*hit.primitive]);
    }
  };
  if (pool) {
    pool->parallel_for(static_cast<std::size_t>(intr.height), row);
  } else {
    for (int i = 0; i < intr.height; ++i) row(static_cast<std::size_t>(i));
  }
  return img;
}

void add_depth_noise(RgbdImage& image, double stddev, double max_range, std::uint64_t seed) {
  if (stddev <= 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, stddev);
  for (auto& d : image.depths()) d = std::clamp(d + noise(rng), 1e-4, max_range);
}

ControlInput ActuatorLimits::clip(const ControlInput& u) const {
  ControlInput out;
  out.planar = u.planar.cwiseMax(-max_planar).cwiseMin(max_planar);
  out.yaw_rate = std::clamp(u.yaw_rate, -max_yaw_rate, max_yaw_rate);
  return out;
}

double squared_distance(const ControlInput& a, const ControlInput& b) {
  const double dy = a.yaw_rate - b.yaw_rate;
  return (a.planar - b.planar).squaredNorm() + dy * dy;
}

RobotState step_dynamics(const RobotState& state, const ControlInput& u, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_dynamics: dt must be positive");
  const double c = std::cos(state.pose.yaw);
  const double s = std::sin(state.pose.yaw);
  const Vec3 world_u(c * u.planar.x() - s * u.planar.y(), s * u.planar.x() + c * u.planar.y(), 0.0);

  RobotState next = state;
  if (state.mode == DynamicsMode::single_integrator) {
    next.velocity = Vec3::Zero();
    next.pose.position += world_u * dt;
  } else {
    next.velocity += world_u * dt;
    next.pose.position += next.velocity * dt;
  }
  next.pose.yaw = wrap_angle(state.pose.yaw + u.yaw_rate * dt);
  return next;
}

bool check_collision(const SdfScene& scene, const RobotState& state, double robot_radius) {
  return scene.eval(state.pose.position) < robot_radius;
}

}  // namespace vfcbf
