// Equidistant fisheye camera: theta = atan2(sqrt(X^2+Y^2), Z), r = f*theta_d,
// with the distortion polynomial theta_d = theta (1 + k1 th^2 + ... + k4 th^8).
#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "riglab/pose.hpp"

namespace riglab {

struct FisheyeIntrinsics {
  double f = 300.0;  // single focal length, pixels
  double cx = 0.0;
  double cy = 0.0;
  double k1 = 0.0;
  double k2 = 0.0;
  double k3 = 0.0;
  double k4 = 0.0;
  // Largest supported incident angle; the default covers a 185 degree lens.
  double theta_max = 1.614;

  double distort(double theta) const;
  double distort_deriv(double theta) const;

  // Rejects f <= 0, a theta_max outside (0, pi), non-finite coefficients, and
  // distortion polynomials that are not strictly increasing on [0, theta_max]
  // (the pixel-to-ray inversion relies on monotonicity).
  void validate() const;
};

// Pixel position of a camera-frame point. The optical center itself has no
// projection and is rejected; points on the optical axis map to the principal
// point. Directions at theta > theta_max are still evaluated by the
// polynomial so that solvers may pass through them transiently.
Eigen::Vector2d project_equidistant(const Eigen::Vector3d& point_camera,
                                    const FisheyeIntrinsics& intr);

// Unit ray through a pixel, inverting the distortion polynomial by Newton
// iteration (at most 10 steps for any pixel within the calibrated field of
// view). Pixels with a radius beyond f*distort(theta_max) are rejected.
Eigen::Vector3d unproject_equidistant(const Eigen::Vector2d& pixel,
                                      const FisheyeIntrinsics& intr);

struct ColoredPoint {
  Eigen::Vector3d position;  // unchanged input point, LiDAR frame
  std::array<std::uint8_t, 3> rgb = {0, 0, 0};
  bool colored = false;
};

// Returns the color at a pixel, or nothing when the pixel falls outside the
// image. Keeps raw image handling out of the geometry code.
using ImageSampler =
    std::function<std::optional<std::array<std::uint8_t, 3>>(const Eigen::Vector2d&)>;

// Projects every point through camera_from_lidar and samples its color.
// Points outside the field of view (theta > theta_max, which covers points
// behind the camera) or outside the image stay uncolored.
std::vector<ColoredPoint> colorize_cloud(const std::vector<Eigen::Vector3d>& points_lidar,
                                         const ImageSampler& sampler,
                                         const Pose& camera_from_lidar,
                                         const FisheyeIntrinsics& intr);

}  // namespace riglab
