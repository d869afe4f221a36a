// Synthetic sensor rig: IMU streams with bias and noise, motion-distorted
// LiDAR scans of a plane-world scene, and trigger timestamps for the
// PPS-disciplined clock tree (1 Hz PPS, 20 Hz camera, 10 Hz LiDAR).
#pragma once

#include <Eigen/Core>
#include <vector>

#include "riglab/pose.hpp"
#include "riglab/rng.hpp"
#include "riglab/scene.hpp"
#include "riglab/trajectory_model.hpp"

namespace riglab {

struct ImuSample {
  double t = 0.0;          // seconds
  Eigen::Vector3d gyro;    // rad/s, body frame
  Eigen::Vector3d accel;   // m/s^2, body frame, includes gravity reaction
};

struct LidarPoint {
  double offset_time = 0.0;  // seconds since scan frame_time, in [0, period)
  Eigen::Vector3d position;  // LiDAR frame at the sample instant
};

struct LidarScan {
  double frame_time = 0.0;  // scan start, seconds
  std::vector<LidarPoint> points;
};

struct ClockConfig {
  double pps_hz = 1.0;
  double camera_hz = 20.0;
  double lidar_hz = 10.0;  // camera_hz must be an integer multiple
  double camera_latency = 0.0;  // added to emitted stamps, seconds
  double lidar_latency = 0.0;
};

struct TriggerTimestamps {
  std::vector<double> lidar;
  std::vector<double> camera;
};

// Stamps k/rate + latency for k/rate < duration; exact 2:1 interleaving when
// latencies are zero. Throws if camera_hz is not an integer multiple of
// lidar_hz (to 1e-9) or duration <= 0.
TriggerTimestamps generate_timestamps(const ClockConfig& clock, double duration);

// IMU measurements over the full trajectory at t = k/rate_hz (endpoint
// included): w_m = body rate + bias + noise, a_m = R^T(a_world - g) + bias +
// noise. sigma_* are continuous-time noise densities; the discrete sample
// noise is sigma*sqrt(rate). Negative rates or sigmas are rejected.
std::vector<ImuSample> sample_imu(const TrajectoryModel& traj, double rate_hz,
                                  double sigma_gyro, double sigma_accel,
                                  const Eigen::Vector3d& gyro_bias,
                                  const Eigen::Vector3d& accel_bias,
                                  const Eigen::Vector3d& gravity, Rng& rng);

struct PatternRay {
  double offset_time = 0.0;
  Eigen::Vector3d direction;  // unit, LiDAR frame
};

// Deterministic full-sphere Fibonacci-spiral pattern; offsets spread evenly
// over [0, period). `phase` rotates the pattern about +z (distinct sampling
// layouts for invariance tests).
std::vector<PatternRay> make_spherical_pattern(int n_rays, double period,
                                               double phase = 0.0);

// Cone of rays around `axis` (unit, LiDAR frame) with the given half angle.
std::vector<PatternRay> make_cone_pattern(const Eigen::Vector3d& axis,
                                          double half_angle, int n_rays,
                                          double period, double phase = 0.0);

// Casts each pattern ray from the LiDAR pose at frame_time + offset; nearest
// scene intersection is returned in the LiDAR frame at that instant, so a
// moving rig yields motion-distorted scans. The trajectory describes the IMU
// body; imu_from_lidar places the LiDAR on the rig. Rays missing all planes
// are dropped. Range noise sigma_r is applied along the ray.
LidarScan sample_lidar_scan(const TrajectoryModel& traj, const SceneModel& scene,
                            double frame_time, const std::vector<PatternRay>& pattern,
                            double sigma_r, Rng& rng,
                            const Pose& imu_from_lidar = Pose(),
                            double max_range = 100.0);

}  // namespace riglab
