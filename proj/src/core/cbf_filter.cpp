#include "vfcbf/cbf_filter.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "vfcbf/worker_pool.hpp"

namespace vfcbf {

void CbfConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("cbf: alpha must lie in (0, 1)");
  if (!(percentile >= 0.0 && percentile <= 1.0)) throw std::invalid_argument("cbf: percentile must lie in [0, 1]");
  switch (kind) {
    case CbfKind::depth_first_order:
      if (!(d_c > 0.0)) throw std::invalid_argument("cbf: depth barrier needs d_c > 0");
      break;
    case CbfKind::depth_second_order:
      if (!(d_c > 0.0)) throw std::invalid_argument("cbf: depth barrier needs d_c > 0");
      if (!(beta > 0.0)) throw std::invalid_argument("cbf: second-order barrier needs beta > 0");
      break;
    case CbfKind::density:
      if (percentile != 0.0) throw std::invalid_argument("cbf: percentile has no meaning for the density barrier");
      if (!std::isfinite(d_c)) throw std::invalid_argument("cbf: d_c must be finite");
      break;
  }
}

void SamplerConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("sampler: batch_size must be >= 1");
  if (max_batches < 1) throw std::invalid_argument("sampler: max_batches must be >= 1");
  for (double s : sigma_u) {
    if (!(s > 0.0)) throw std::invalid_argument("sampler: sigma_u must be positive on every axis");
  }
}

double cbf_depth(const RgbdImage& image, const CbfConfig& cfg) { return cfg.d_c - min_depth(image, cfg.percentile); }

double cbf_depth_velocity(const RgbdImage& image, const Vec3& v_hat, const CbfConfig& cfg) {
  return cfg.d_c - min_depth(image, cfg.percentile) + cfg.beta * v_hat.norm();
}

double cbf_density(const DensityGrid& grid, const Vec3& predicted_position, const CbfConfig& cfg) {
  return cfg.d_c + grid.query_density(predicted_position);
}

bool constraint_satisfied(double h_now, double h_next, double alpha) { return h_next <= alpha * h_now; }

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<ControlInput> sample_candidates(const ControlInput& u_nominal, const SamplerConfig& cfg, int batch_index,
                                            const ActuatorLimits& limits, std::uint64_t stream) {
  if (batch_index < 0 || batch_index >= cfg.max_batches) {
    throw std::out_of_range("sample_candidates: batch_index outside [0, max_batches)");
  }
  const std::uint64_t seed =
      splitmix64(cfg.rng_seed ^ splitmix64(stream ^ splitmix64(static_cast<std::uint64_t>(batch_index))));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const double scale = SamplerConfig::scale(batch_index);
  std::vector<ControlInput> out;
  out.reserve(static_cast<std::size_t>(cfg.batch_size));
  for (int k = 0; k < cfg.batch_size; ++k) {
    ControlInput u = u_nominal;
    u.planar.x() += cfg.sigma_u[0] * scale * unit(rng);
    u.planar.y() += cfg.sigma_u[1] * scale * unit(rng);
    u.yaw_rate += cfg.sigma_u[2] * scale * unit(rng);
    out.push_back(limits.clip(u));
  }
  return out;
}

RgbdImage predict_next_observation(const RobotState& estimate, const ControlInput& u, const DensityGrid& grid,
                                   const DynamicsModel& dynamics, const CameraIntrinsics& intr,
                                   const RenderParams& params, WorkerPool* pool) {
  RobotState s = estimate;
  s.mode = dynamics.mode;
  const RobotState next = step_dynamics(s, u, dynamics.dt);
  return volume_render(grid, intr, next.pose, params, pool);
}

SafetyFilter::SafetyFilter(FilterConfig cfg, WorkerPool* pool) : cfg_(std::move(cfg)), pool_(pool) {
  cfg_.cbf.validate();
  cfg_.sampler.validate();
  cfg_.intrinsics.validate();
  cfg_.render.validate();
  depth_render_ = cfg_.render;
  depth_render_.compute_color = false;
  if (!(cfg_.dynamics.dt > 0.0)) throw std::invalid_argument("filter: dt must be positive");
  const bool second = cfg_.cbf.kind == CbfKind::depth_second_order;
  const bool dbl = cfg_.dynamics.mode == DynamicsMode::double_integrator;
  if (second && !dbl) throw std::invalid_argument("filter: second-order barrier requires double-integrator dynamics");
  if (cfg_.cbf.kind == CbfKind::depth_first_order && dbl) {
    throw std::invalid_argument("filter: first-order barrier requires single-integrator dynamics");
  }
}

double SafetyFilter::h_of_image(const RgbdImage& image, const Vec3& velocity) const {
  if (cfg_.cbf.kind == CbfKind::depth_second_order) return cbf_depth_velocity(image, velocity, cfg_.cbf);
  return cbf_depth(image, cfg_.cbf);
}

ControlInput SafetyFilter::fallback_action(const RobotState& estimate) const {
  ControlInput u;
  if (cfg_.sampler.fallback == FallbackPolicy::max_brake && cfg_.dynamics.mode == DynamicsMode::double_integrator) {
    // Body-frame acceleration that cancels the current velocity in one step.
    const double c = std::cos(estimate.pose.yaw);
    const double s = std::sin(estimate.pose.yaw);
    const Vec3& v = estimate.velocity;
    const Vec2 body(c * v.x() + s * v.y(), -s * v.x() + c * v.y());
    u.planar = -body / cfg_.dynamics.dt;
  }
  return cfg_.dynamics.limits.clip(u);
}

FilterDecision SafetyFilter::filter_action(const RobotState& estimate, const RgbdImage& y_now,
                                           const ControlInput& u_nominal, const DensityGrid& grid,
                                           std::uint64_t tick) const {
  if (!y_now.matches(cfg_.intrinsics)) throw std::invalid_argument("filter: observation size does not match camera");
  RobotState est = estimate;
  est.mode = cfg_.dynamics.mode;
  const bool density = cfg_.cbf.kind == CbfKind::density;
  const double alpha = cfg_.cbf.alpha;
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();

  FilterDecision dec;
  dec.u_nominal = u_nominal;
  dec.h_now = density ? cbf_density(grid, est.pose.position, cfg_.cbf) : h_of_image(y_now, est.velocity);

  // Nominal action first: accepted actions leave the command untouched.
  {
    const RobotState next = step_dynamics(est, u_nominal, cfg_.dynamics.dt);
    double h_next;
    if (density) {
      h_next = cbf_density(grid, next.pose.position, cfg_.cbf);
      dec.predicted_min_depth = nan;
    } else {
      const RgbdImage predicted = volume_render(grid, cfg_.intrinsics, next.pose, depth_render_, pool_);
      ++dec.predict_calls;
      h_next = h_of_image(predicted, next.velocity);
      dec.predicted_min_depth = min_depth(predicted, cfg_.cbf.percentile);
    }
    dec.candidates_evaluated = 1;
    if (constraint_satisfied(dec.h_now, h_next, alpha)) {
      dec.u_applied = u_nominal;
      dec.h_next_predicted = h_next;
      dec.safe = true;
      dec.intervention = 0.0;
      return dec;
    }
  }

  bool found = false;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int b = 0; b < cfg_.sampler.max_batches && !found; ++b) {
    const auto candidates = sample_candidates(u_nominal, cfg_.sampler, b, cfg_.dynamics.limits, tick);
    std::vector<RobotState> next;
    std::vector<Pose> poses;
    next.reserve(candidates.size());
    poses.reserve(candidates.size());
    for (const auto& u : candidates) {
      next.push_back(step_dynamics(est, u, cfg_.dynamics.dt));
      poses.push_back(next.back().pose);
    }
    std::vector<RgbdImage> images;
    if (!density) {
      images = volume_render_batch(grid, cfg_.intrinsics, poses, depth_render_, pool_);
      dec.predict_calls += static_cast<int>(images.size());
    }
    dec.candidates_evaluated += static_cast<int>(candidates.size());
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      const double h_next = density ? cbf_density(grid, next[k].pose.position, cfg_.cbf)
                                    : h_of_image(images[k], next[k].velocity);
      if (!constraint_satisfied(dec.h_now, h_next, alpha)) continue;
      const double cost = squared_distance(candidates[k], u_nominal);
      if (cost < best_cost) {
        best_cost = cost;
        found = true;
        dec.u_applied = candidates[k];
        dec.h_next_predicted = h_next;
        dec.predicted_min_depth = density ? nan : min_depth(images[k], cfg_.cbf.percentile);
      }
    }
  }

  if (found) {
    dec.safe = true;
  } else {
    dec.u_applied = fallback_action(est);
    dec.fallback_used = true;
    dec.safe = false;
    if (density) {
      const RobotState next = step_dynamics(est, dec.u_applied, cfg_.dynamics.dt);
      dec.h_next_predicted = cbf_density(grid, next.pose.position, cfg_.cbf);
      dec.safe = constraint_satisfied(dec.h_now, dec.h_next_predicted, alpha);
    } else {
      dec.h_next_predicted = nan;
    }
    dec.predicted_min_depth = nan;
  }
  dec.intervention = dec.u_applied == u_nominal ? 0.0 : std::sqrt(squared_distance(dec.u_applied, u_nominal));
  return dec;
}

}  // namespace vfcbf
