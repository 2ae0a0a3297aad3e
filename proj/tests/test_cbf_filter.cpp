#include <doctest.h>

#include <cmath>
#include <numeric>

#include "vfcbf/cbf_filter.hpp"
#include "vfcbf/worker_pool.hpp"

using namespace vfcbf;

namespace {

const SdfScene& room() {
  static const SdfScene scene = SdfScene::default_room();
  return scene;
}

DensityGrid room_grid() {
  const auto [lo, hi] = *room().room_bounds();
  return DensityGrid(Aabb{lo - Vec3::Constant(0.25), hi + Vec3::Constant(0.25)}, {128, 128, 68}, 50.f);
}

// Grid fused from a handful of views of the +x wall taken along the approach.
const DensityGrid& fused_grid() {
  static const DensityGrid grid = [] {
    DensityGrid g = room_grid();
    const CameraIntrinsics intr;
    const FusionParams fp = FusionParams::for_grid(g, 0.5, 1.5, 0.4, 2.0);
    for (double x : {0.5, 0.5, 1.5, 1.5, 2.3, 2.3, 2.7, 2.7, 2.85, 2.85}) {
      const Pose pose(Vec3(x, 0.0, 0.5), 0.0);
      fuse_observation(g, intr, pose, render_ground_truth(room(), intr, pose), fp);
    }
    return g;
  }();
  return grid;
}

RobotState at_distance(double d, DynamicsMode mode = DynamicsMode::single_integrator) {
  RobotState s;
  s.pose = Pose(Vec3(3.0 - d, 0.0, 0.5), 0.0);
  s.mode = mode;
  return s;
}

FilterConfig single_config() {
  FilterConfig fc;
  fc.sampler.rng_seed = 42;
  return fc;
}

FilterConfig double_config() {
  FilterConfig fc = single_config();
  fc.cbf.kind = CbfKind::depth_second_order;
  fc.dynamics.mode = DynamicsMode::double_integrator;
  fc.sampler.fallback = FallbackPolicy::max_brake;
  return fc;
}

const ControlInput kForward{Vec2(1.0, 0.0), 0.0};

}  // namespace

TEST_CASE("depth barrier examples") {
  CbfConfig c;
  CHECK(cbf_depth(RgbdImage(4, 4, 2.5), c) == doctest::Approx(-2.4));
  CHECK(cbf_depth(RgbdImage(4, 4, 0.1), c) == 0.0);
  CHECK(cbf_depth(RgbdImage(4, 4, 0.05), c) == doctest::Approx(0.05));
}

TEST_CASE("velocity-augmented barrier examples") {
  CbfConfig c;
  c.kind = CbfKind::depth_second_order;
  CHECK(cbf_depth_velocity(RgbdImage(4, 4, 2.5), Vec3(1, 0, 0), c) == doctest::Approx(-1.4));
  CHECK(cbf_depth_velocity(RgbdImage(4, 4, 0.9), Vec3(0.6, 0.8, 0), c) == doctest::Approx(0.2));
  const RgbdImage img(4, 4, 1.7);
  CHECK(cbf_depth_velocity(img, Vec3::Zero(), c) == cbf_depth(img, c));
}

TEST_CASE("density barrier examples") {
  CbfConfig c;
  c.kind = CbfKind::density;
  c.d_c = -30.0;
  DensityGrid g(Aabb{Vec3::Zero(), Vec3::Ones()}, {4, 4, 4}, 50.f);
  const Vec3 p = g.voxel_center(1, 2, 1);
  CHECK(cbf_density(g, p, c) == doctest::Approx(-30.0));
  g.set_sigma(1, 2, 1, 5.f);
  CHECK(cbf_density(g, p, c) == doctest::Approx(-25.0));
  g.set_sigma(1, 2, 1, 30.f);
  CHECK(cbf_density(g, p, c) == doctest::Approx(0.0));
}

TEST_CASE("constraint examples") {
  CHECK(constraint_satisfied(-2.4, -1.4, 0.5));
  CHECK_FALSE(constraint_satisfied(-0.2, -0.05, 0.5));
  for (double a : {0.1, 0.5, 0.9}) CHECK(constraint_satisfied(0.0, 0.0, a));
}

TEST_CASE("barrier config validation") {
  CbfConfig c;
  c.alpha = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.d_c = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.kind = CbfKind::depth_second_order;
  c.beta = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.kind = CbfKind::density;
  c.d_c = -30.0;
  CHECK_NOTHROW(c.validate());
  c.percentile = 0.1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("filter rejects inconsistent pairings at construction") {
  FilterConfig fc = single_config();
  fc.cbf.kind = CbfKind::depth_second_order;
  CHECK_THROWS_AS(SafetyFilter{fc}, std::invalid_argument);
  fc = double_config();
  fc.cbf.kind = CbfKind::depth_first_order;
  CHECK_THROWS_AS(SafetyFilter{fc}, std::invalid_argument);
  fc = single_config();
  fc.cbf.kind = CbfKind::density;
  fc.cbf.d_c = -30;
  fc.cbf.percentile = 0.2;
  CHECK_THROWS_AS(SafetyFilter{fc}, std::invalid_argument);
  fc = single_config();
  fc.sampler.sigma_u[1] = 0.0;
  CHECK_THROWS_AS(SafetyFilter{fc}, std::invalid_argument);
}

TEST_CASE("sampler: degenerate spread returns the nominal") {
  SamplerConfig s;
  s.sigma_u = {1e-300, 1e-300, 1e-300};
  const ControlInput nom{Vec2(0.7, -0.2), 0.0};
  for (const auto& u : sample_candidates(nom, s, 0, ActuatorLimits{2.0, 1.0})) {
    CHECK((u.planar - nom.planar).norm() < 1e-290);
    CHECK(std::abs(u.yaw_rate - nom.yaw_rate) < 1e-290);
  }
}

TEST_CASE("sampler: deterministic in seed, stream and batch") {
  SamplerConfig s;
  s.rng_seed = 42;
  const ActuatorLimits lim{2.0, 1.0};
  const auto a = sample_candidates(kForward, s, 0, lim, 3);
  CHECK(a == sample_candidates(kForward, s, 0, lim, 3));
  CHECK(a != sample_candidates(kForward, s, 1, lim, 3));
  CHECK(a != sample_candidates(kForward, s, 0, lim, 4));
  s.rng_seed = 43;
  CHECK(a != sample_candidates(kForward, s, 0, lim, 3));
  CHECK(a.size() == 10);
  CHECK_THROWS_AS(sample_candidates(kForward, s, 10, lim), std::out_of_range);
}

TEST_CASE("sampler: per-axis moments at sigma_u = 1") {
  SamplerConfig s;
  s.batch_size = 100000;
  s.rng_seed = 7;
  const ActuatorLimits wide{1e9, 1e9};
  const ControlInput nom{Vec2(1.0, -0.5), 0.25};
  const auto c = sample_candidates(nom, s, 0, wide);
  std::array<double, 3> mean{}, sq{};
  for (const auto& u : c) {
    const double v[3] = {u.planar.x(), u.planar.y(), u.yaw_rate};
    for (int a = 0; a < 3; ++a) {
      mean[a] += v[a];
      sq[a] += v[a] * v[a];
    }
  }
  const double nominal[3] = {1.0, -0.5, 0.25};
  for (int a = 0; a < 3; ++a) {
    mean[a] /= c.size();
    const double sd = std::sqrt(sq[a] / c.size() - mean[a] * mean[a]);
    CHECK(std::abs(mean[a] - nominal[a]) < 0.02);
    CHECK(std::abs(sd - 1.0) < 0.02);
  }
  // Later batches widen by 1 + b/2.
  CHECK(SamplerConfig::scale(0) == 1.0);
  CHECK(SamplerConfig::scale(3) == 2.5);
}

TEST_CASE("sampler: candidates respect the actuator bounds") {
  SamplerConfig s;
  s.batch_size = 1000;
  s.max_batches = 10;
  const ActuatorLimits lim{2.0, 0.0};
  for (int b = 0; b < 10; ++b) {
    for (const auto& u : sample_candidates(kForward, s, b, lim)) {
      CHECK(std::abs(u.planar.x()) <= 2.0);
      CHECK(std::abs(u.planar.y()) <= 2.0);
      CHECK(u.yaw_rate == 0.0);
    }
  }
}

TEST_CASE("prediction: zero action reproduces the current view") {
  const DensityGrid& g = fused_grid();
  const FilterConfig fc = single_config();
  const RobotState s = at_distance(1.0);
  const RgbdImage now = volume_render(g, fc.intrinsics, s.pose, fc.render);
  CHECK(predict_next_observation(s, {}, g, fc.dynamics, fc.intrinsics, fc.render) == now);
}

TEST_CASE("prediction: moving toward the fused wall shortens the view by u * dt") {
  const DensityGrid& g = fused_grid();
  const FilterConfig fc = single_config();
  const CameraIntrinsics intr = fc.intrinsics;
  const auto [ci, cj] = center_pixel(intr);
  for (double d : {0.5, 0.8, 1.5}) {
    const RobotState s = at_distance(d);
    const double now = volume_render(g, intr, s.pose, fc.render).depth(ci, cj);
    const double next = predict_next_observation(s, kForward, g, fc.dynamics, intr, fc.render).depth(ci, cj);
    CHECK(std::abs((now - next) - 0.1) < 0.02);
  }
}

TEST_CASE("prediction: outside the grid everything reads max_range") {
  const DensityGrid& g = fused_grid();
  const FilterConfig fc = single_config();
  RobotState s;
  s.pose = Pose(Vec3(10.0, 0.0, 0.5), 0.0);
  const RgbdImage y = predict_next_observation(s, kForward, g, fc.dynamics, fc.intrinsics, fc.render);
  for (double d : y.depths()) CHECK(d == fc.intrinsics.max_range);
}

TEST_CASE("far from the wall the nominal passes with one render") {
  const DensityGrid& g = fused_grid();
  const SafetyFilter f(single_config());
  const RobotState s = at_distance(2.5);
  const RgbdImage y = render_ground_truth(room(), f.config().intrinsics, s.pose);
  const auto dec = f.filter_action(s, y, kForward, g);
  CHECK(dec.h_now == doctest::Approx(-2.4).epsilon(1e-3));
  CHECK(dec.h_next_predicted == doctest::Approx(-2.3).epsilon(0.02));
  CHECK(dec.safe);
  CHECK_FALSE(dec.fallback_used);
  CHECK(dec.intervention == 0.0);
  CHECK(dec.u_applied == kForward);
  CHECK(dec.predict_calls == 1);
  CHECK(dec.candidates_evaluated == 1);
}

TEST_CASE("at the boundary the nominal is rejected and the zero action satisfies the constraint") {
  const DensityGrid& g = fused_grid();
  const FilterConfig fc = single_config();
  const SafetyFilter f(fc);
  RobotState s = at_distance(0.3);
  // Place the robot where the rendered view sits exactly at d_c.
  const double rendered = min_depth(volume_render(g, fc.intrinsics, s.pose, fc.render));
  s.pose.position.x() += rendered - fc.cbf.d_c;
  const RgbdImage y = volume_render(g, fc.intrinsics, s.pose, fc.render);
  const double h_now = cbf_depth(y, fc.cbf);
  CHECK(std::abs(h_now) < 0.01);
  const double h_zero = cbf_depth(predict_next_observation(s, {}, g, fc.dynamics, fc.intrinsics, fc.render), fc.cbf);
  CHECK(h_zero == h_now);
  CHECK(constraint_satisfied(h_now, h_zero, fc.cbf.alpha));

  const auto dec = f.filter_action(s, y, kForward, g);
  CHECK(dec.intervention > 0.0);
  CHECK(dec.u_applied.planar.x() < 1.0);
  if (dec.safe) CHECK(constraint_satisfied(dec.h_now, dec.h_next_predicted, fc.cbf.alpha));
}

TEST_CASE("the chosen action is the nearest accepted candidate among those evaluated") {
  const DensityGrid& g = fused_grid();
  const FilterConfig fc = single_config();
  const SafetyFilter f(fc);
  int checked = 0;
  for (double d : {0.15, 0.2, 0.25, 0.3}) {
    for (std::uint64_t tick = 0; tick < 4; ++tick) {
      const RobotState s = at_distance(d);
      const RgbdImage y = render_ground_truth(room(), fc.intrinsics, s.pose);
      const auto dec = f.filter_action(s, y, kForward, g, tick);
      if (dec.intervention == 0.0) continue;
      // Re-scan every batch the filter drew.
      const int batches = (dec.candidates_evaluated - 1) / fc.sampler.batch_size;
      double best = std::numeric_limits<double>::infinity();
      for (int b = 0; b < batches; ++b) {
        for (const auto& u : sample_candidates(kForward, fc.sampler, b, fc.dynamics.limits, tick)) {
          const RgbdImage p = predict_next_observation(s, u, g, fc.dynamics, fc.intrinsics, fc.render);
          if (constraint_satisfied(dec.h_now, cbf_depth(p, fc.cbf), fc.cbf.alpha)) {
            best = std::min(best, squared_distance(u, kForward));
          }
        }
      }
      if (dec.fallback_used) {
        CHECK(best == std::numeric_limits<double>::infinity());
        CHECK(dec.u_applied == f.fallback_action(s));
        CHECK(std::isnan(dec.h_next_predicted));
      } else {
        CHECK(squared_distance(dec.u_applied, kForward) == best);
        CHECK(constraint_satisfied(dec.h_now, dec.h_next_predicted, fc.cbf.alpha));
      }
      CHECK(dec.intervention == doctest::Approx(std::sqrt(squared_distance(dec.u_applied, kForward))));
      ++checked;
    }
  }
  CHECK(checked > 4);
}

TEST_CASE("the intervention path respects the render budget") {
  const DensityGrid& g = fused_grid();
  FilterConfig fc = single_config();
  fc.sampler.max_batches = 1;
  const SafetyFilter f(fc);
  const RobotState s = at_distance(0.18);
  const RgbdImage y = render_ground_truth(room(), fc.intrinsics, s.pose);
  const auto dec = f.filter_action(s, y, kForward, g);
  CHECK(dec.intervention > 0.0);
  CHECK(dec.predict_calls <= 1 + fc.sampler.batch_size);
}

TEST_CASE("decisions are deterministic and the pool does not change them") {
  const DensityGrid& g = fused_grid();
  WorkerPool pool(3);
  const SafetyFilter a(single_config());
  const SafetyFilter b(single_config(), &pool);
  const RobotState s = at_distance(0.22);
  const RgbdImage y = render_ground_truth(room(), a.config().intrinsics, s.pose);
  const auto da = a.filter_action(s, y, kForward, g, 9);
  const auto db = b.filter_action(s, y, kForward, g, 9);
  const auto dc = a.filter_action(s, y, kForward, g, 9);
  // FilterDecision equality is bitwise except for NaN fields.
  CHECK(da.u_applied == db.u_applied);
  CHECK(da.u_applied == dc.u_applied);
  CHECK(da.candidates_evaluated == db.candidates_evaluated);
  CHECK(da.h_now == db.h_now);
  if (!da.fallback_used) CHECK(da == db);
}

TEST_CASE("second-order barrier brakes a fast approach") {
  const DensityGrid& g = fused_grid();
  const FilterConfig fc = double_config();
  const SafetyFilter f(fc);
  RobotState s = at_distance(0.9, DynamicsMode::double_integrator);
  s.velocity = Vec3(1.0, 0.0, 0.0);
  const RgbdImage y = render_ground_truth(room(), fc.intrinsics, s.pose);
  const auto dec = f.filter_action(s, y, kForward, g);
  CHECK(dec.h_now == doctest::Approx(0.1 - 0.9 + 1.0).epsilon(1e-3));
  CHECK(dec.intervention > 0.0);
  CHECK(dec.u_applied.planar.x() < 0.0);
}

TEST_CASE("max-brake fallback cancels the body-frame velocity") {
  const SafetyFilter f(double_config());
  RobotState s = at_distance(1.0, DynamicsMode::double_integrator);
  s.pose.yaw = 0.5;
  s.velocity = Vec3(0.1, 0.05, 0.0);
  const auto u = f.fallback_action(s);
  const auto next = step_dynamics(s, u, f.config().dynamics.dt);
  CHECK(next.velocity.norm() < 1e-12);
  s.velocity = Vec3(5.0, 0.0, 0.0);
  CHECK(f.fallback_action(s).planar.x() == -2.0);
  const SafetyFilter z(single_config());
  CHECK(z.fallback_action(at_distance(1.0)) == ControlInput{});
}

TEST_CASE("density barrier needs no renders") {
  FilterConfig fc = single_config();
  fc.cbf.kind = CbfKind::density;
  fc.cbf.d_c = -30.0;
  const SafetyFilter f(fc);
  const DensityGrid& g = fused_grid();
  const RobotState s = at_distance(1.0);
  const RgbdImage y(fc.intrinsics.width, fc.intrinsics.height, 1.0);
  const auto dec = f.filter_action(s, y, kForward, g);
  CHECK(dec.predict_calls == 0);
  CHECK(dec.safe);
  CHECK(dec.h_now == doctest::Approx(-30.0));
}
