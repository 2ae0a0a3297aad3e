#pragma once

// Shared geometric and image types: planar robot poses, the forward camera,
// rays and RGBd images.

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace vfcbf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Rgb = std::array<float, 3>;

/// Wrap an angle into (-pi, pi].
double wrap_angle(double radians);

/// Camera-bearing robot pose. The camera looks along the heading; its height
/// above the world origin is carried in position.z().
struct Pose {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;

  Pose() = default;
  Pose(const Vec3& p, double heading) : position(p), yaw(wrap_angle(heading)) {}

  Vec3 heading() const;
};

struct CameraIntrinsics {
  int width = 64;
  int height = 64;
  double fov = 1.0471975511965976;  // horizontal, radians (60 deg)
  double max_range = 10.0;

  /// Throws std::invalid_argument when any field is out of range.
  void validate() const;
  /// Angle between neighbouring pixel rays. Rays are spaced evenly in azimuth
  /// and elevation, so the horizontal field of view is exactly fov.
  double angular_step() const { return fov / width; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();

  Vec3 at(double t) const { return origin + t * direction; }
};

/// Row-major RGBd raster. Depth is the Euclidean distance along the pixel ray.
class RgbdImage {
 public:
  RgbdImage() = default;
  RgbdImage(int width, int height, double fill_depth, Rgb fill_rgb = {0.f, 0.f, 0.f});

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return depth_.size(); }
  bool empty() const { return depth_.empty(); }

  double depth(int i, int j) const { return depth_[index(i, j)]; }
  double& depth(int i, int j) { return depth_[index(i, j)]; }
  const Rgb& rgb(int i, int j) const { return rgb_[index(i, j)]; }
  Rgb& rgb(int i, int j) { return rgb_[index(i, j)]; }

  const std::vector<double>& depths() const { return depth_; }
  std::vector<double>& depths() { return depth_; }
  const std::vector<Rgb>& colors() const { return rgb_; }
  std::vector<Rgb>& colors() { return rgb_; }

  bool matches(const CameraIntrinsics& intr) const {
    return width_ == intr.width && height_ == intr.height;
  }

  friend bool operator==(const RgbdImage&, const RgbdImage&) = default;

 private:
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * width_ + j; }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> depth_;
  std::vector<Rgb> rgb_;
};

/// World-space ray through the center of pixel (row i, column j).
/// Throws std::out_of_range for pixels outside the image.
Ray pixel_ray(const CameraIntrinsics& intr, const Pose& pose, int i, int j);

/// Pixel whose ray is closest to the optical axis (exactly on it for odd sizes).
inline std::array<int, 2> center_pixel(const CameraIntrinsics& intr) {
  return {intr.height / 2, intr.width / 2};
}

/// percentile == 0 is the plain minimum; p > 0 returns the lower nearest-rank
/// p-quantile, i.e. sorted[floor(p * (n - 1))].
double min_depth(const RgbdImage& image, double percentile = 0.0);

}  // namespace vfcbf
