#include "riglab/sensor_sim.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <stdexcept>

namespace riglab {

TriggerTimestamps generate_timestamps(const ClockConfig& clock, double duration) {
  if (duration <= 0.0) {
    throw std::invalid_argument("generate_timestamps: duration must be positive");
  }
  if (clock.lidar_hz <= 0.0 || clock.camera_hz <= 0.0) {
    throw std::invalid_argument("generate_timestamps: rates must be positive");
  }
  const double ratio = clock.camera_hz / clock.lidar_hz;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) {
    throw std::invalid_argument(
        "generate_timestamps: camera_hz must be an integer multiple of lidar_hz");
  }
  TriggerTimestamps out;
  const auto fill = [duration](std::vector<double>& v, double hz, double latency) {
    const long n = static_cast<long>(std::ceil(duration * hz - 1e-9));
    v.reserve(static_cast<std::size_t>(n));
    for (long k = 0; k < n; ++k) v.push_back(static_cast<double>(k) / hz + latency);
  };
  fill(out.lidar, clock.lidar_hz, clock.lidar_latency);
  fill(out.camera, clock.camera_hz, clock.camera_latency);
  return out;
}

std::vector<ImuSample> sample_imu(const TrajectoryModel& traj, double rate_hz,
                                  double sigma_gyro, double sigma_accel,
                                  const Eigen::Vector3d& gyro_bias,
                                  const Eigen::Vector3d& accel_bias,
                                  const Eigen::Vector3d& gravity, Rng& rng) {
  if (rate_hz <= 0.0) {
    throw std::invalid_argument("sample_imu: rate must be positive");
  }
  if (sigma_gyro < 0.0 || sigma_accel < 0.0) {
    throw std::invalid_argument("sample_imu: noise sigmas must be non-negative");
  }
  // Discrete standard deviation for a continuous noise density sampled at rate.
  const double sd_gyro = sigma_gyro * std::sqrt(rate_hz);
  const double sd_accel = sigma_accel * std::sqrt(rate_hz);

  const long n = static_cast<long>(std::floor(traj.spec().duration * rate_hz + 1e-9));
  std::vector<ImuSample> out;
  out.reserve(static_cast<std::size_t>(n + 1));
  for (long k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) / rate_hz;
    const KinematicSample kin = traj.sample(t);
    ImuSample s;
    s.t = t;
    s.gyro = kin.body_rate + gyro_bias +
             Eigen::Vector3d(rng.gaussian(sd_gyro), rng.gaussian(sd_gyro),
                             rng.gaussian(sd_gyro));
    s.accel = kin.attitude.matrix().transpose() * (kin.acceleration - gravity) +
              accel_bias +
              Eigen::Vector3d(rng.gaussian(sd_accel), rng.gaussian(sd_accel),
                              rng.gaussian(sd_accel));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<PatternRay> make_spherical_pattern(int n_rays, double period,
                                               double phase) {
  if (n_rays <= 0 || period <= 0.0) {
    throw std::invalid_argument("make_spherical_pattern: n_rays and period must be positive");
  }
  // Golden-angle spiral: near-uniform coverage, deterministic.
  constexpr double kGoldenAngle = 2.399963229728653;  // pi*(3 - sqrt(5))
  std::vector<PatternRay> rays;
  rays.reserve(static_cast<std::size_t>(n_rays));
  for (int i = 0; i < n_rays; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n_rays;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double az = kGoldenAngle * i + phase;
    PatternRay ray;
    ray.direction = Eigen::Vector3d(r * std::cos(az), r * std::sin(az), z);
    ray.offset_time = period * i / n_rays;
    rays.push_back(std::move(ray));
  }
  return rays;
}

std::vector<PatternRay> make_cone_pattern(const Eigen::Vector3d& axis,
                                          double half_angle, int n_rays,
                                          double period, double phase) {
  if (n_rays <= 0 || period <= 0.0 || half_angle <= 0.0) {
    throw std::invalid_argument("make_cone_pattern: invalid parameters");
  }
  const Eigen::Vector3d a = axis.normalized();
  int k = 0;
  if (std::abs(a[1]) < std::abs(a[k])) k = 1;
  if (std::abs(a[2]) < std::abs(a[k])) k = 2;
  Eigen::Vector3d e = Eigen::Vector3d::Zero();
  e[k] = 1.0;
  const Eigen::Vector3d u = a.cross(e).normalized();
  const Eigen::Vector3d v = a.cross(u);

  constexpr double kGoldenAngle = 2.399963229728653;
  std::vector<PatternRay> rays;
  rays.reserve(static_cast<std::size_t>(n_rays));
  const double cos_min = std::cos(half_angle);
  for (int i = 0; i < n_rays; ++i) {
    // Uniform over the spherical cap via uniform cos(theta).
    const double c = 1.0 - (1.0 - cos_min) * (i + 0.5) / n_rays;
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double az = kGoldenAngle * i + phase;
    PatternRay ray;
    ray.direction = c * a + s * (std::cos(az) * u + std::sin(az) * v);
    ray.offset_time = period * i / n_rays;
    rays.push_back(std::move(ray));
  }
  return rays;
}

LidarScan sample_lidar_scan(const TrajectoryModel& traj, const SceneModel& scene,
                            double frame_time, const std::vector<PatternRay>& pattern,
                            double sigma_r, Rng& rng, const Pose& imu_from_lidar,
                            double max_range) {
  if (scene.planes().empty()) {
    throw std::invalid_argument("sample_lidar_scan: scene is empty");
  }
  if (sigma_r < 0.0) {
    throw std::invalid_argument("sample_lidar_scan: range noise must be non-negative");
  }
  LidarScan scan;
  scan.frame_time = frame_time;
  scan.points.reserve(pattern.size());
  for (const PatternRay& ray : pattern) {
    const Pose lidar_pose = traj.pose(frame_time + ray.offset_time) * imu_from_lidar;
    const Eigen::Vector3d dir_world = lidar_pose.rotation.matrix() * ray.direction;
    const auto hit = scene.cast_ray(lidar_pose.translation, dir_world, 1e-3, max_range);
    const double noise = rng.gaussian(sigma_r);  // drawn per ray, hit or miss
    if (!hit) continue;
    LidarPoint p;
    p.offset_time = ray.offset_time;
    p.position = (hit->range + noise) * ray.direction;
    scan.points.push_back(std::move(p));
  }
  return scan;
}

}  // namespace riglab
