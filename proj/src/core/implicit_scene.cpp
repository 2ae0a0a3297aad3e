#include "vfcbf/implicit_scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

#include "vfcbf/worker_pool.hpp"

namespace vfcbf {

namespace {

// Lower trilinear corner and fractional offsets of a point in voxel-center
// coordinates. Points beyond the outermost centers (but inside the bounds)
// clamp to the boundary voxels.
struct Corner {
  int i[3];
  double f[3];
};

inline Corner locate(const DensityGrid& g, const Vec3& p) {
  Corner c;
  const auto& res = g.resolution();
  const Vec3& lo = g.bounds().min;
  const Vec3& sz = g.voxel_size();
  for (int a = 0; a < 3; ++a) {
    double u = (p[a] - lo[a]) / sz[a] - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(res[a] - 1));
    int k = static_cast<int>(u);
    if (k > res[a] - 2) k = res[a] - 2;
    c.i[a] = k;
    c.f[a] = u - k;
  }
  return c;
}

template <class Fetch>
inline auto trilinear(const DensityGrid& g, const Corner& c, Fetch&& fetch) {
  const double fx = c.f[0], fy = c.f[1], fz = c.f[2];
  const int x = c.i[0], y = c.i[1], z = c.i[2];
  auto v000 = fetch(g.index(x, y, z)), v100 = fetch(g.index(x + 1, y, z));
  auto v010 = fetch(g.index(x, y + 1, z)), v110 = fetch(g.index(x + 1, y + 1, z));
  auto v001 = fetch(g.index(x, y, z + 1)), v101 = fetch(g.index(x + 1, y, z + 1));
  auto v011 = fetch(g.index(x, y + 1, z + 1)), v111 = fetch(g.index(x + 1, y + 1, z + 1));
  auto c00 = v000 * (1 - fx) + v100 * fx;
  auto c10 = v010 * (1 - fx) + v110 * fx;
  auto c01 = v001 * (1 - fx) + v101 * fx;
  auto c11 = v011 * (1 - fx) + v111 * fx;
  auto c0 = c00 * (1 - fy) + c10 * fy;
  auto c1 = c01 * (1 - fy) + c11 * fy;
  return c0 * (1 - fz) + c1 * fz;
}

}  // namespace

bool intersect_aabb(const Aabb& box, const Ray& ray, double& t_enter, double& t_exit) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.direction[a];
    if (std::abs(d) < 1e-15) {
      if (o < box.min[a] || o > box.max[a]) return false;
      continue;
    }
    double ta = (box.min[a] - o) / d;
    double tb = (box.max[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return false;
  t_enter = t0;
  t_exit = t1;
  return true;
}

DensityGrid::DensityGrid(const Aabb& bounds, std::array<int, 3> resolution, float sigma_max)
    : bounds_(bounds), res_(resolution), sigma_max_(sigma_max) {
  if (!((bounds.max.array() > bounds.min.array()).all())) throw std::invalid_argument("grid: degenerate bounds");
  if (res_[0] < 2 || res_[1] < 2 || res_[2] < 2) throw std::invalid_argument("grid: resolution must be >= 2 per axis");
  if (!(sigma_max > 0.f)) throw std::invalid_argument("grid: sigma_max must be positive");
  voxel_ = bounds.extent().cwiseQuotient(Vec3(res_[0], res_[1], res_[2]));
  const std::size_t n = static_cast<std::size_t>(res_[0]) * res_[1] * res_[2];
  sigma_.assign(n, 0.f);
  color_.assign(n, Rgb{0.5f, 0.5f, 0.5f});
  for (int a = 0; a < 3; ++a) blocks_[a] = (res_[a] + kBlock - 1) / kBlock;
  block_max_.assign(static_cast<std::size_t>(blocks_[0]) * blocks_[1] * blocks_[2], 0.f);
  occupancy_valid_ = true;
}

Vec3 DensityGrid::voxel_center(int ix, int iy, int iz) const {
  return bounds_.min + Vec3((ix + 0.5) * voxel_.x(), (iy + 0.5) * voxel_.y(), (iz + 0.5) * voxel_.z());
}

void DensityGrid::set_sigma(int ix, int iy, int iz, float value) {
  sigma_[index(ix, iy, iz)] = std::clamp(value, 0.f, sigma_max_);
  occupancy_valid_ = false;
}

void DensityGrid::fill(float value) {
  std::fill(sigma_.begin(), sigma_.end(), std::clamp(value, 0.f, sigma_max_));
  occupancy_valid_ = false;
}

double DensityGrid::query_density(const Vec3& p) const {
  if (!bounds_.contains(p)) return 0.0;
  const Corner c = locate(*this, p);
  return trilinear(*this, c, [&](std::size_t k) { return static_cast<double>(sigma_[k]); });
}

Rgb DensityGrid::query_color(const Vec3& p) const {
  if (!bounds_.contains(p)) return {0.f, 0.f, 0.f};
  const Corner c = locate(*this, p);
  const double sigma = trilinear(*this, c, [&](std::size_t k) { return static_cast<double>(sigma_[k]); });
  Rgb out{0.f, 0.f, 0.f};
  if (sigma <= 0.0) return out;
  // Density-weighted, so empty voxels next to a surface do not darken it.
  for (int ch = 0; ch < 3; ++ch) {
    out[ch] = static_cast<float>(
        trilinear(*this, c, [&](std::size_t k) { return static_cast<double>(sigma_[k]) * color_[k][ch]; }) / sigma);
  }
  return out;
}

void DensityGrid::refresh_occupancy() {
  std::fill(block_max_.begin(), block_max_.end(), 0.f);
  // A block covers lower corners [b*B, b*B + B); trilinear reads reach one
  // voxel further, so each block also absorbs the next voxel on every axis.
  for (int bz = 0; bz < blocks_[2]; ++bz) {
    for (int by = 0; by < blocks_[1]; ++by) {
      for (int bx = 0; bx < blocks_[0]; ++bx) {
        float m = 0.f;
        const int x1 = std::min(res_[0] - 1, bx * kBlock + kBlock);
        const int y1 = std::min(res_[1] - 1, by * kBlock + kBlock);
        const int z1 = std::min(res_[2] - 1, bz * kBlock + kBlock);
        for (int z = bz * kBlock; z <= z1; ++z)
          for (int y = by * kBlock; y <= y1; ++y)
            for (int x = bx * kBlock; x <= x1; ++x) m = std::max(m, sigma_[index(x, y, z)]);
        block_max_[static_cast<std::size_t>(bx) + static_cast<std::size_t>(blocks_[0]) * (by + static_cast<std::size_t>(blocks_[1]) * bz)] = m;
      }
    }
  }
  occupancy_valid_ = true;
}

bool DensityGrid::block_empty(int ix, int iy, int iz) const {
  const std::size_t b = static_cast<std::size_t>(ix / kBlock) +
                        static_cast<std::size_t>(blocks_[0]) *
                            (static_cast<std::size_t>(iy / kBlock) + static_cast<std::size_t>(blocks_[1]) * (iz / kBlock));
  return block_max_[b] == 0.f;
}

void RenderParams::validate() const {
  if (samples_per_ray < 2) throw std::invalid_argument("render: samples_per_ray must be >= 2");
  if (!(t_near > 0.0 && t_near < t_far)) throw std::invalid_argument("render: require 0 < t_near < t_far");
  if (!(transmittance_cutoff >= 0.0 && transmittance_cutoff < 1.0)) {
    throw std::invalid_argument("render: transmittance_cutoff must lie in [0, 1)");
  }
  if (!(min_spacing_voxels >= 0.0)) throw std::invalid_argument("render: min_spacing_voxels must be >= 0");
}

RayRenderResult render_ray(const DensityGrid& grid, const Ray& ray, double max_range, const RenderParams& params,
                           const Rgb& background) {
  const double residual_depth = params.unseen_is_unsafe ? params.t_near : max_range;
  RayRenderResult out{residual_depth, background, 0.0, 0.0};

  double t_enter = 0.0, t_exit = 0.0;
  if (!intersect_aabb(grid.bounds(), ray, t_enter, t_exit)) return out;
  const double t0 = std::max(params.t_near, t_enter);
  const double t1 = std::min({params.t_far, t_exit, max_range});
  if (!(t1 > t0)) return out;

  int n = params.samples_per_ray;
  if (params.min_spacing_voxels > 0.0) {
    const double min_delta = params.min_spacing_voxels * grid.voxel_size().minCoeff();
    n = std::clamp(static_cast<int>((t1 - t0) / min_delta), 1, n);
  }
  const double delta = (t1 - t0) / n;
  out.sample_spacing = delta;
  const bool skip = grid.occupancy_valid();
  const auto sig = grid.sigma_data();
  const auto col = grid.color_data();
  const auto& res = grid.resolution();
  constexpr int B = DensityGrid::kBlock;

  // The ray in voxel-center coordinates: u(t) = ou + t * du.
  double ou[3], du[3], inv_du[3];
  int last_block[3];
  for (int a = 0; a < 3; ++a) {
    ou[a] = (ray.origin[a] - grid.bounds().min[a]) / grid.voxel_size()[a] - 0.5;
    du[a] = ray.direction[a] / grid.voxel_size()[a];
    inv_du[a] = du[a] != 0.0 ? 1.0 / du[a] : 0.0;
    last_block[a] = (res[a] - 2) / B;
  }
  const std::size_t sx = 1, sy = static_cast<std::size_t>(res[0]),
                    sz = static_cast<std::size_t>(res[0]) * static_cast<std::size_t>(res[1]);

  double transmittance = 1.0;
  double wsum = 0.0, dsum = 0.0;
  double csum[3] = {0.0, 0.0, 0.0};
  for (int k = 0; k < n; ++k) {
    const double t = t0 + (k + 0.5) * delta;
    int i[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
      const double u = std::clamp(ou[a] + t * du[a], 0.0, static_cast<double>(res[a] - 1));
      i[a] = std::min(static_cast<int>(u), res[a] - 2);
      f[a] = u - i[a];
    }
    if (skip && grid.block_empty(i[0], i[1], i[2])) {
      // Jump to the first sample past the block. A sample on the boundary
      // itself still reads only this block's (dilated) voxels.
      double t_leave = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) {
        if (du[a] == 0.0) continue;
        const int b = i[a] / B;
        if (du[a] > 0.0) {
          if (b == last_block[a]) continue;
          t_leave = std::min(t_leave, ((b + 1) * B - ou[a]) * inv_du[a]);
        } else {
          if (b == 0) continue;
          t_leave = std::min(t_leave, (b * B - ou[a]) * inv_du[a]);
        }
      }
      if (!std::isfinite(t_leave)) break;
      const double last = std::ceil((t_leave - t0) / delta - 0.5 - 1e-7) - 1.0;
      if (last > k) k = static_cast<int>(std::min(last, static_cast<double>(n)));
      continue;
    }
    const std::size_t base = i[0] * sx + i[1] * sy + i[2] * sz;
    const std::size_t idx[8] = {base,           base + sx,           base + sy,           base + sx + sy,
                                base + sz,      base + sx + sz,      base + sy + sz,      base + sx + sy + sz};
    const double gx = 1.0 - f[0], gy = 1.0 - f[1], gz = 1.0 - f[2];
    // Same association order as the nested lerp in query_density.
    const auto lerp3 = [&](auto fetch) {
      const double c00 = fetch(idx[0]) * gx + fetch(idx[1]) * f[0];
      const double c10 = fetch(idx[2]) * gx + fetch(idx[3]) * f[0];
      const double c01 = fetch(idx[4]) * gx + fetch(idx[5]) * f[0];
      const double c11 = fetch(idx[6]) * gx + fetch(idx[7]) * f[0];
      return (c00 * gy + c10 * f[1]) * gz + (c01 * gy + c11 * f[1]) * f[2];
    };
    const double sigma = lerp3([&](std::size_t q) { return static_cast<double>(sig[q]); });
    if (sigma <= 0.0) continue;
    const double alpha = 1.0 - std::exp(-sigma * delta);
    const double w = transmittance * alpha;
    wsum += w;
    dsum += w * t;
    double rgb[3] = {0.0, 0.0, 0.0};
    if (params.compute_color) {
      for (int ch = 0; ch < 3; ++ch) {
        rgb[ch] = lerp3([&](std::size_t q) { return static_cast<double>(sig[q]) * col[q][ch]; }) / sigma;
        csum[ch] += w * rgb[ch];
      }
    }
    transmittance *= 1.0 - alpha;
    if (transmittance < params.transmittance_cutoff) {
      // The remaining weight terminates here rather than at the residual depth.
      wsum += transmittance;
      dsum += transmittance * t;
      for (int ch = 0; ch < 3; ++ch) csum[ch] += transmittance * rgb[ch];
      break;
    }
  }
  wsum = std::min(wsum, 1.0);
  out.weight_sum = wsum;
  out.depth = std::clamp(dsum + (1.0 - wsum) * residual_depth, 1e-6, max_range);
  if (params.compute_color) {
    for (int ch = 0; ch < 3; ++ch) {
      out.rgb[ch] = static_cast<float>(std::clamp(csum[ch] + (1.0 - wsum) * background[ch], 0.0, 1.0));
    }
  }
  return out;
}

namespace {

void render_row(const DensityGrid& grid, const CameraIntrinsics& intr, const Pose& pose, const RenderParams& params,
                int row, RgbdImage& img) {
  for (int j = 0; j < intr.width; ++j) {
    const auto r = render_ray(grid, pixel_ray(intr, pose, row, j), intr.max_range, params);
    img.depth(row, j) = r.depth;
    img.rgb(row, j) = r.rgb;
  }
}

}  // namespace

RgbdImage volume_render(const DensityGrid& grid, const CameraIntrinsics& intr, const Pose& pose,
                        const RenderParams& params, WorkerPool* pool) {
  const Pose one[1] = {pose};
  return std::move(volume_render_batch(grid, intr, one, params, pool).front());
}

std::vector<RgbdImage> volume_render_batch(const DensityGrid& grid, const CameraIntrinsics& intr,
                                           std::span<const Pose> poses, const RenderParams& params,
                                           WorkerPool* pool) {
  intr.validate();
  params.validate();
  std::vector<RgbdImage> out;
  out.reserve(poses.size());
  for (std::size_t k = 0; k < poses.size(); ++k) out.emplace_back(intr.width, intr.height, intr.max_range);
  const std::size_t rows = static_cast<std::size_t>(intr.height);
  auto job = [&](std::size_t task) {
    const std::size_t pose_idx = task / rows;
    render_row(grid, intr, poses[pose_idx], params, static_cast<int>(task % rows), out[pose_idx]);
  };
  const std::size_t tasks = rows * poses.size();
  if (pool) {
    pool->parallel_for(tasks, job);
  } else {
    for (std::size_t t = 0; t < tasks; ++t) job(t);
  }
  return out;
}

FusionParams FusionParams::for_grid(const DensityGrid& grid, double rate, double carve_diagonals,
                                    double deposit_diagonals, double behind_diagonals) {
  const double diag = grid.voxel_diagonal();
  const double behind = behind_diagonals < 0.0 ? deposit_diagonals : behind_diagonals;
  return {rate, carve_diagonals * diag, deposit_diagonals * diag, behind * diag};
}

namespace {

// Visits the voxels a ray passes through for t in [t_begin, t_end]
// (Amanatides-Woo traversal).
template <class Visit>
void traverse_voxels(const DensityGrid& grid, const Ray& ray, double t_begin, double t_end, Visit&& visit) {
  double t_enter = 0.0, t_exit = 0.0;
  if (!intersect_aabb(grid.bounds(), ray, t_enter, t_exit)) return;
  const double ta = std::max(t_begin, t_enter);
  const double tb = std::min(t_end, t_exit);
  if (!(tb > ta)) return;

  const auto& res = grid.resolution();
  const Vec3& lo = grid.bounds().min;
  const Vec3& sz = grid.voxel_size();
  const Vec3 start = ray.at(ta);
  int idx[3], step[3];
  double t_max[3], t_delta[3];
  for (int a = 0; a < 3; ++a) {
    const double u = (start[a] - lo[a]) / sz[a];
    idx[a] = std::clamp(static_cast<int>(std::floor(u)), 0, res[a] - 1);
    const double d = ray.direction[a];
    if (d > 0) {
      step[a] = 1;
      t_max[a] = ta + ((idx[a] + 1) - u) * sz[a] / d;
      t_delta[a] = sz[a] / d;
    } else if (d < 0) {
      step[a] = -1;
      t_max[a] = ta + (idx[a] - u) * sz[a] / d;
      t_delta[a] = -sz[a] / d;
    } else {
      step[a] = 0;
      t_max[a] = std::numeric_limits<double>::infinity();
      t_delta[a] = std::numeric_limits<double>::infinity();
    }
  }
  for (;;) {
    visit(idx[0], idx[1], idx[2]);
    int a = 0;
    if (t_max[1] < t_max[a]) a = 1;
    if (t_max[2] < t_max[a]) a = 2;
    if (t_max[a] > tb) return;
    idx[a] += step[a];
    if (idx[a] < 0 || idx[a] >= res[a]) return;
    t_max[a] += t_delta[a];
  }
}

}  // namespace

void fuse_observation(DensityGrid& grid, const CameraIntrinsics& intr, const Pose& pose, const RgbdImage& observed,
                      const FusionParams& params) {
  if (!observed.matches(intr)) throw std::invalid_argument("fuse_observation: image size does not match intrinsics");
  if (!(params.rate > 0.0 && params.rate <= 1.0)) throw std::invalid_argument("fuse_observation: rate must lie in (0, 1]");

  constexpr std::uint8_t kCarve = 1, kDeposit = 2;
  auto& scratch = grid.scratch();
  scratch.mark.assign(grid.voxel_count(), 0);
  scratch.touched.clear();
  scratch.deposit_color.clear();

  const double miss_depth = intr.max_range * (1.0 - 1e-9);
  const double step = intr.angular_step();
  // Each visited voxel is judged against the pixel its center projects to, so
  // voxels straddling a grazing ray are not filled from that ray's endpoint.
  const auto project = [&](const Vec3& c, int& pi, int& pj) {
    const Vec3 rel = c - pose.position;
    const double az = wrap_angle(std::atan2(rel.y(), rel.x()) - pose.yaw);
    const double el = std::atan2(rel.z(), std::hypot(rel.x(), rel.y()));
    pj = static_cast<int>(std::floor(0.5 * intr.width - az / step));
    pi = static_cast<int>(std::floor(0.5 * intr.height - el / step));
    return pi >= 0 && pi < intr.height && pj >= 0 && pj < intr.width;
  };
  for (int i = 0; i < intr.height; ++i) {
    for (int j = 0; j < intr.width; ++j) {
      const double d_ray = observed.depth(i, j);
      const Ray ray = pixel_ray(intr, pose, i, j);
      const double t_end = d_ray < miss_depth ? d_ray + params.deposit_behind : d_ray;
      traverse_voxels(grid, ray, 0.0, t_end, [&](int x, int y, int z) {
        const auto k = static_cast<std::uint32_t>(grid.index(x, y, z));
        const Vec3 center = grid.voxel_center(x, y, z);
        int pi = i, pj = j;
        double tc = (center - ray.origin).dot(ray.direction);
        if (project(center, pi, pj)) {
          tc = (center - pose.position).norm();
        } else {
          pi = i;
          pj = j;
        }
        const double d = observed.depth(pi, pj);
        const bool hit = d < miss_depth;
        std::uint8_t want = 0;
        if (hit && tc >= d - params.deposit_width && tc <= d + params.deposit_behind) {
          want = kDeposit;
        } else if (tc < d - params.carve_margin) {
          want = kCarve;
        }
        if (want == 0) return;
        auto& m = scratch.mark[k];
        if (m == 0) scratch.touched.push_back(k);
        if (want > m) m = want;
        if (want == kDeposit) {
          const Rgb& c = observed.rgb(pi, pj);
          auto& acc = scratch.deposit_color[k];
          acc[0] += c[0];
          acc[1] += c[1];
          acc[2] += c[2];
          acc[3] += 1.f;
          const double target =
              params.graded_front && tc < d && params.deposit_width > 0.0 ? 1.0 - (d - tc) / params.deposit_width : 1.0;
          acc[4] = std::max(acc[4], static_cast<float>(target));
        }
      });
    }
  }

  const float rate = static_cast<float>(params.rate);
  const float smax = grid.sigma_max();
  auto sigma = grid.sigma_mutable();
  auto color = grid.color_mutable();
  for (const auto k : scratch.touched) {
    if (scratch.mark[k] == kDeposit) {
      const auto& acc = scratch.deposit_color.at(k);
      const float target = acc[4] >= 1.f ? smax : smax * acc[4];
      sigma[k] = rate >= 1.f ? target : std::clamp(sigma[k] + rate * (target - sigma[k]), 0.f, smax);
      for (int ch = 0; ch < 3; ++ch) {
        const float target = acc[ch] / acc[3];
        color[k][ch] = rate >= 1.f ? target : color[k][ch] + rate * (target - color[k][ch]);
      }
    } else {
      sigma[k] = rate >= 1.f ? 0.f : sigma[k] * (1.f - rate);
    }
  }
  grid.refresh_occupancy();
}

namespace {
constexpr char kSnapshotMagic[8] = {'V', 'F', 'C', 'B', 'F', 'G', 'R', 'D'};
constexpr std::uint32_t kSnapshotVersion = 1;
}  // namespace

void save_grid_snapshot(const DensityGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kSnapshotMagic, sizeof kSnapshotMagic);
  out.write(reinterpret_cast<const char*>(&kSnapshotVersion), sizeof kSnapshotVersion);
  const double b[6] = {grid.bounds().min.x(), grid.bounds().min.y(), grid.bounds().min.z(),
                       grid.bounds().max.x(), grid.bounds().max.y(), grid.bounds().max.z()};
  out.write(reinterpret_cast<const char*>(b), sizeof b);
  const std::int32_t r[3] = {grid.resolution()[0], grid.resolution()[1], grid.resolution()[2]};
  out.write(reinterpret_cast<const char*>(r), sizeof r);
  const float smax = grid.sigma_max();
  out.write(reinterpret_cast<const char*>(&smax), sizeof smax);
  const auto s = grid.sigma_data();
  out.write(reinterpret_cast<const char*>(s.data()), static_cast<std::streamsize>(s.size_bytes()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

DensityGrid load_grid_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  double b[6];
  std::int32_t r[3];
  float smax = 0.f;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(b), sizeof b);
  in.read(reinterpret_cast<char*>(r), sizeof r);
  in.read(reinterpret_cast<char*>(&smax), sizeof smax);
  if (!in || std::memcmp(magic, kSnapshotMagic, sizeof magic) != 0 || version != kSnapshotVersion) {
    throw std::runtime_error("not a grid snapshot: " + path.string());
  }
  DensityGrid grid(Aabb{Vec3(b[0], b[1], b[2]), Vec3(b[3], b[4], b[5])}, {r[0], r[1], r[2]}, smax);
  auto s = grid.sigma_mutable();
  in.read(reinterpret_cast<char*>(s.data()), static_cast<std::streamsize>(s.size_bytes()));
  if (!in) throw std::runtime_error("truncated grid snapshot: " + path.string());
  grid.refresh_occupancy();
  return grid;
}

void export_density_slice(const DensityGrid& grid, double z, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const auto& res = grid.resolution();
  const Vec3 c0 = grid.voxel_center(0, 0, 0);
  out << "# density slice z=" << z << " nx=" << res[0] << " ny=" << res[1] << " x0=" << c0.x() << " y0=" << c0.y()
      << " dx=" << grid.voxel_size().x() << " dy=" << grid.voxel_size().y() << '\n';
  out << std::setprecision(6);
  for (int iy = 0; iy < res[1]; ++iy) {
    for (int ix = 0; ix < res[0]; ++ix) {
      const Vec3 c = grid.voxel_center(ix, iy, 0);
      if (ix) out << ' ';
      out << grid.query_density(Vec3(c.x(), c.y(), z));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace vfcbf
