#pragma once

#include <cstdint>
#include <filesystem>

#include "riglab/config.hpp"
#include "riglab/pose.hpp"
#include "riglab/scene.hpp"
#include "riglab/sensor_sim.hpp"
#include "riglab/trajectory_model.hpp"

namespace riglab {

// Everything that defines one synthetic sequence. The trajectory defaults are
// the 10 s benchmark motion (peak speed ~0.5 m/s, peak rate ~1 rad/s) inside
// the corner room.
struct SimConfig {
  TrajectorySpec trajectory;
  double scene_z_floor = -1.0;
  double scene_x_wall = -2.0;
  double scene_y_wall = -2.0;
  double scene_extent = 12.0;

  double imu_rate_hz = 200.0;
  double sigma_gyro = 1e-3;
  double sigma_accel = 1e-2;
  Eigen::Vector3d gyro_bias = Eigen::Vector3d::Zero();
  Eigen::Vector3d accel_bias = Eigen::Vector3d::Zero();
  Eigen::Vector3d gravity = Eigen::Vector3d(0.0, 0.0, -9.81);

  int lidar_rays = 2000;
  double sigma_r = 0.002;
  double lidar_max_range = 100.0;

  ClockConfig clock;
  FrameChain frames;

  bool write_gripper = false;
  bool write_images = false;

  // Zero out all sensor noise (biases kept); used by the noiseless benchmark.
  void make_noiseless();

  static SimConfig from_config(const Config& cfg);
};

// Generates the full log layout (imu.csv, scans/, camera_stamps.csv,
// ground_truth.csv and optional gripper.csv/images) under `out_dir`.
// Deterministic for a fixed (config, seed). The ground truth file holds the
// LiDAR-frame trajectory at scan-end stamps, matching the odometry output.
void simulate_sequence(const SimConfig& cfg, std::uint64_t seed,
                       const std::filesystem::path& out_dir);

}  // namespace riglab
