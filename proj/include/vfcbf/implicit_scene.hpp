#pragma once

// Online-fused density/color voxel grid standing in for a neural scene
// representation. Supports the two calls the safety filter needs: render the
// expected observation from an arbitrary pose, and fold a new observation in.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "vfcbf/geometry.hpp"

namespace vfcbf {

class WorkerPool;

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();

  Vec3 extent() const { return max - min; }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

/// Entry/exit parameters of a ray against a box; empty when it misses.
bool intersect_aabb(const Aabb& box, const Ray& ray, double& t_enter, double& t_exit);

class DensityGrid {
 public:
  /// Throws std::invalid_argument for degenerate bounds, resolution < 2 on any
  /// axis or non-positive sigma_max.
  DensityGrid(const Aabb& bounds, std::array<int, 3> resolution, float sigma_max);

  const Aabb& bounds() const { return bounds_; }
  const std::array<int, 3>& resolution() const { return res_; }
  const Vec3& voxel_size() const { return voxel_; }
  double voxel_diagonal() const { return voxel_.norm(); }
  float sigma_max() const { return sigma_max_; }
  std::size_t voxel_count() const { return sigma_.size(); }

  std::size_t index(int ix, int iy, int iz) const {
    return static_cast<std::size_t>(ix) + static_cast<std::size_t>(res_[0]) *
                                              (static_cast<std::size_t>(iy) + static_cast<std::size_t>(res_[1]) * iz);
  }
  Vec3 voxel_center(int ix, int iy, int iz) const;

  float sigma(int ix, int iy, int iz) const { return sigma_[index(ix, iy, iz)]; }
  const Rgb& color(int ix, int iy, int iz) const { return color_[index(ix, iy, iz)]; }
  /// Value is clamped into [0, sigma_max].
  void set_sigma(int ix, int iy, int iz, float value);
  void set_color(int ix, int iy, int iz, const Rgb& c) { color_[index(ix, iy, iz)] = c; }
  void fill(float value);
  std::span<const float> sigma_data() const { return sigma_; }
  /// Raw mutable access; invalidates the occupancy bounds.
  std::span<float> sigma_mutable() {
    occupancy_valid_ = false;
    return sigma_;
  }
  std::span<Rgb> color_mutable() { return color_; }
  std::span<const Rgb> color_data() const { return color_; }

  /// Trilinear interpolation between voxel centers; zero outside the bounds.
  double query_density(const Vec3& p) const;
  /// Density-weighted trilinear color; black where the density is zero.
  Rgb query_color(const Vec3& p) const;

  /// Coarse per-block upper bounds used to skip empty space while rendering.
  /// Any mutation invalidates them; rendering stays exact either way.
  void refresh_occupancy();
  bool occupancy_valid() const { return occupancy_valid_; }
  /// True when every sample whose lower trilinear corner is voxel (ix,iy,iz)
  /// is guaranteed zero. Requires valid occupancy.
  bool block_empty(int ix, int iy, int iz) const;
  /// Occupancy block edge, in voxels.
  static constexpr int kBlock = 8;

  /// Scratch used by fuse_observation.
  struct FusionScratch {
    std::vector<std::uint8_t> mark;
    std::vector<std::uint32_t> touched;
    std::unordered_map<std::uint32_t, std::array<float, 5>> deposit_color;  // rgb sum, count, max target
  };
  FusionScratch& scratch() { return scratch_; }

  friend bool operator==(const DensityGrid& a, const DensityGrid& b) {
    return a.res_ == b.res_ && a.bounds_.min == b.bounds_.min && a.bounds_.max == b.bounds_.max &&
           a.sigma_max_ == b.sigma_max_ && a.sigma_ == b.sigma_ && a.color_ == b.color_;
  }

 private:
  Aabb bounds_;
  std::array<int, 3> res_;
  Vec3 voxel_;
  float sigma_max_;
  std::vector<float> sigma_;
  std::vector<Rgb> color_;

  std::array<int, 3> blocks_{};
  std::vector<float> block_max_;
  bool occupancy_valid_ = false;
  FusionScratch scratch_;
};

struct RenderParams {
  int samples_per_ray = 128;
  double t_near = 0.01;
  double t_far = 10.0;
  /// Residual weight goes to max_range by default (unseen reads as free);
  /// when set it goes to t_near instead (unseen reads as blocked).
  bool unseen_is_unsafe = false;
  /// Stop marching once transmittance drops below this value; the leftover
  /// weight is placed at the stopping sample. 0 disables.
  double transmittance_cutoff = 1e-2;
  /// When false the color channel is left at the background color.
  bool compute_color = true;
  /// Lower bound on the sample spacing in units of the smallest voxel edge.
  /// Short in-grid intervals then get fewer than samples_per_ray samples.
  /// 0 disables.
  double min_spacing_voxels = 0.25;

  void validate() const;
};

/// Per-ray diagnostics, exposed for the transmittance tests.
struct RayRenderResult {
  double depth;
  Rgb rgb;
  double weight_sum;
  double sample_spacing;  // 0 when the ray misses the grid
};

RayRenderResult render_ray(const DensityGrid& grid, const Ray& ray, double max_range, const RenderParams& params,
                           const Rgb& background = {0.f, 0.f, 0.f});

/// Expected observation from `pose` (the NSPredict call).
RgbdImage volume_render(const DensityGrid& grid, const CameraIntrinsics& intr, const Pose& pose,
                        const RenderParams& params, WorkerPool* pool = nullptr);

/// Element-wise identical to volume_render; the work is split across poses and
/// image rows on the given pool.
std::vector<RgbdImage> volume_render_batch(const DensityGrid& grid, const CameraIntrinsics& intr,
                                           std::span<const Pose> poses, const RenderParams& params,
                                           WorkerPool* pool = nullptr);

struct FusionParams {
  double rate = 0.5;
  double carve_margin = 0.15;   // meters before the observed surface
  double deposit_width = 0.1;   // surface band extent in front of the hit, meters
  double deposit_behind = 0.1;  // and behind it
  /// In front of the hit the target density ramps linearly from 0 at
  /// d - deposit_width up to sigma_max at d, so the rendered surface does not
  /// snap to voxel centers. Off: the whole band targets sigma_max.
  bool graded_front = true;

  /// Margins expressed in voxel diagonals of `grid`. A negative
  /// behind_diagonals makes the band symmetric.
  static FusionParams for_grid(const DensityGrid& grid, double rate = 0.5, double carve_diagonals = 1.5,
                               double deposit_diagonals = 1.0, double behind_diagonals = -1.0);
};

/// Folds one observation into the grid (the NSUpdate mapping step). Each voxel
/// is updated at most once per call; when rays disagree, surface evidence wins
/// over free-space evidence. Throws std::invalid_argument on a size mismatch or
/// a rate outside (0, 1].
void fuse_observation(DensityGrid& grid, const CameraIntrinsics& intr, const Pose& pose, const RgbdImage& observed,
                      const FusionParams& params);

/// Binary snapshot: magic, bounds, resolution, sigma_max and the sigma array
/// (x fastest). Throws std::runtime_error naming the path on I/O failure.
void save_grid_snapshot(const DensityGrid& grid, const std::filesystem::path& path);
DensityGrid load_grid_snapshot(const std::filesystem::path& path);

/// Text grid of query_density values at height z, one row per y sample
/// (nx columns, ny rows, sampled at voxel centers).
void export_density_slice(const DensityGrid& grid, double z, const std::filesystem::path& path);

}  // namespace vfcbf
