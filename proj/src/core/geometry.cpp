#include "vfcbf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace vfcbf {

double wrap_angle(double radians) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::remainder(radians, two_pi);  // [-pi, pi]
  if (a <= -std::numbers::pi) a += two_pi;
  return a;
}

Vec3 Pose::heading() const { return {std::cos(yaw), std::sin(yaw), 0.0}; }

void CameraIntrinsics::validate() const {
  if (width < 1 || height < 1) throw std::invalid_argument("camera: width and height must be >= 1");
  if (!(fov > 0.0 && fov < std::numbers::pi)) throw std::invalid_argument("camera: fov must lie in (0, pi)");
  if (!(height * angular_step() < std::numbers::pi)) {
    throw std::invalid_argument("camera: vertical field of view must stay below pi");
  }
  if (!(max_range > 0.0)) throw std::invalid_argument("camera: max_range must be positive");
}

RgbdImage::RgbdImage(int width, int height, double fill_depth, Rgb fill_rgb)
    : width_(width),
      height_(height),
      depth_(static_cast<std::size_t>(width) * height, fill_depth),
      rgb_(static_cast<std::size_t>(width) * height, fill_rgb) {
  if (width < 0 || height < 0) throw std::invalid_argument("image: negative dimensions");
}

Ray pixel_ray(const CameraIntrinsics& intr, const Pose& pose, int i, int j) {
  if (i < 0 || i >= intr.height || j < 0 || j >= intr.width) {
    throw std::out_of_range("pixel (" + std::to_string(i) + ", " + std::to_string(j) +
                            ") outside " + std::to_string(intr.height) + "x" +
                            std::to_string(intr.width) + " image");
  }
  const double step = intr.angular_step();
  const double azimuth = pose.yaw - ((j + 0.5) - 0.5 * intr.width) * step;
  const double elevation = -((i + 0.5) - 0.5 * intr.height) * step;
  const double ce = std::cos(elevation);
  Ray ray;
  ray.origin = pose.position;
  ray.direction = Vec3(ce * std::cos(azimuth), ce * std::sin(azimuth), std::sin(elevation));
  return ray;
}

double min_depth(const RgbdImage& image, double percentile) {
  if (image.empty()) throw std::invalid_argument("min_depth: empty image");
  if (!(percentile >= 0.0 && percentile <= 1.0)) {
    throw std::invalid_argument("min_depth: percentile must lie in [0, 1]");
  }
  const auto& d = image.depths();
  if (percentile == 0.0) return *std::min_element(d.begin(), d.end());
  std::vector<double> scratch(d);
  const auto k = static_cast<std::size_t>(std::floor(percentile * static_cast<double>(scratch.size() - 1)));
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k), scratch.end());
  return scratch[k];
}

}  // namespace vfcbf
