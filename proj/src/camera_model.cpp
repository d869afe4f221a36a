#include "riglab/camera_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace riglab {

double FisheyeIntrinsics::distort(double theta) const {
  const double t2 = theta * theta;
  return theta * (1.0 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4))));
}

double FisheyeIntrinsics::distort_deriv(double theta) const {
  const double t2 = theta * theta;
  return 1.0 + t2 * (3.0 * k1 + t2 * (5.0 * k2 + t2 * (7.0 * k3 + t2 * 9.0 * k4)));
}

void FisheyeIntrinsics::validate() const {
  if (!(f > 0.0) || !std::isfinite(f)) {
    throw std::invalid_argument("fisheye: focal length must be positive");
  }
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(k1) ||
      !std::isfinite(k2) || !std::isfinite(k3) || !std::isfinite(k4)) {
    throw std::invalid_argument("fisheye: non-finite parameter");
  }
  if (!(theta_max > 0.0) || !(theta_max < M_PI)) {
    throw std::invalid_argument("fisheye: theta_max must lie in (0, pi)");
  }
  constexpr int kSamples = 1024;
  for (int i = 0; i <= kSamples; ++i) {
    const double theta = theta_max * i / kSamples;
    if (!(distort_deriv(theta) > 0.0)) {
      throw std::invalid_argument(
          "fisheye: distortion polynomial is not monotone on [0, theta_max]");
    }
  }
}

Eigen::Vector2d project_equidistant(const Eigen::Vector3d& point_camera,
                                    const FisheyeIntrinsics& intr) {
  const double rho = point_camera.head<2>().norm();
  if (rho < 1e-15) {
    if (point_camera.z() > 0.0) return {intr.cx, intr.cy};
    throw std::invalid_argument(
        "project_equidistant: point on or behind the optical center");
  }
  const double theta = std::atan2(rho, point_camera.z());
  const double r = intr.f * intr.distort(theta);
  return {intr.cx + r * point_camera.x() / rho, intr.cy + r * point_camera.y() / rho};
}

Eigen::Vector3d unproject_equidistant(const Eigen::Vector2d& pixel,
                                      const FisheyeIntrinsics& intr) {
  const Eigen::Vector2d d(pixel.x() - intr.cx, pixel.y() - intr.cy);
  const double r = d.norm();
  if (r < 1e-15) return Eigen::Vector3d::UnitZ();

  const double theta_d = r / intr.f;
  const double theta_d_max = intr.distort(intr.theta_max);
  if (theta_d > theta_d_max + 1e-9) {
    throw std::domain_error("unproject_equidistant: pixel outside the field of view");
  }

  // Monotone scalar equation distort(theta) = theta_d; Newton from the
  // undistorted guess converges in a handful of steps.
  double theta = std::min(theta_d, intr.theta_max);
  double err = intr.distort(theta) - theta_d;
  for (int it = 0; it < 10 && std::abs(err) > 1e-14; ++it) {
    theta -= err / intr.distort_deriv(theta);
    theta = std::clamp(theta, 0.0, intr.theta_max);
    err = intr.distort(theta) - theta_d;
  }
  if (std::abs(err) > 1e-10) {
    throw std::runtime_error("unproject_equidistant: Newton did not converge");
  }
  const Eigen::Vector2d u = d / r;
  const double s = std::sin(theta);
  return {s * u.x(), s * u.y(), std::cos(theta)};
}

std::vector<ColoredPoint> colorize_cloud(const std::vector<Eigen::Vector3d>& points_lidar,
                                         const ImageSampler& sampler,
                                         const Pose& camera_from_lidar,
                                         const FisheyeIntrinsics& intr) {
  std::vector<ColoredPoint> out;
  out.reserve(points_lidar.size());
  for (const Eigen::Vector3d& p : points_lidar) {
    ColoredPoint cp;
    cp.position = p;
    const Eigen::Vector3d xc = camera_from_lidar * p;
    const double rho = xc.head<2>().norm();
    const double theta = std::atan2(rho, xc.z());
    if (xc.norm() > 1e-12 && theta <= intr.theta_max) {
      if (auto color = sampler(project_equidistant(xc, intr))) {
        cp.rgb = *color;
        cp.colored = true;
      }
    }
    out.push_back(cp);
  }
  return out;
}

}  // namespace riglab
