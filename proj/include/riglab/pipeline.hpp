#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "riglab/config.hpp"
#include "riglab/measurement_update.hpp"
#include "riglab/nav_state.hpp"
#include "riglab/pose.hpp"
#include "riglab/propagation.hpp"
#include "riglab/sensor_sim.hpp"
#include "riglab/voxel_map.hpp"

namespace riglab {

// Everything the odometry needs to run one sequence. `from_config` reads the
// sectioned key=value file format; unknown keys are ignored so one file can
// drive simulation, odometry and evaluation together.
struct PipelineConfig {
  ImuNoiseConfig noise;
  VoxelMapParams map_params;
  UpdateParams update_params;

  double scan_period = 0.1;
  double camera_hz = 20.0;
  double lidar_hz = 10.0;
  double camera_latency = 0.0;
  double lidar_latency = 0.0;

  FrameChain frames;

  // Per-point range noise model: sigma(range) = point_sigma + point_range_coeff * range.
  double point_sigma = 0.002;
  double point_range_coeff = 1e-3;

  double static_init_duration = 1.0;
  double max_gyro_spread = 0.05;  // motion detector for the init window, rad/s
  double max_imu_gap = 0.02;

  ClockConfig clock() const;
  void validate() const;  // throws std::invalid_argument on bad values

  static PipelineConfig from_config(const Config& cfg);
};

struct ScanRecord {
  double t = 0.0;  // scan-end time
  Pose imu_pose;
  Pose lidar_pose;
  Pose camera_pose;
  ErrorVector covariance_diagonal = ErrorVector::Zero();
  int iterations = 0;
  int inliers = 0;
  double residual_rms = 0.0;
  bool degenerate = false;
};

struct OdometryOutput {
  std::vector<ScanRecord> records;
  VoxelPlaneMap map;
};

// A raw (absolute-stamped) LiDAR point, before bucketing into frames.
struct TimedPoint {
  double t = 0.0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

// Buckets a monotone point stream into fixed-period frames; frame k covers
// [k*period, (k+1)*period). Empty buckets produce no scan. Concatenating the
// output (frame_time + offset_time, position) reproduces the input multiset.
std::vector<LidarScan> recombine_scan(const std::vector<TimedPoint>& stream,
                                      double period);

// Re-expresses every point of `scan` in the LiDAR frame at `scan_end_time`.
// The relative motion over the scan is integrated backward from
// `state_at_scan_end` (midpoint rule over the bias-corrected IMU window);
// the state's extrinsics map between the IMU and LiDAR frames. The window
// must cover [frame_time, scan_end_time] without gaps larger than `max_gap`.
std::vector<Eigen::Vector3d> undistort_scan(const LidarScan& scan,
                                            const std::vector<ImuSample>& imu_window,
                                            const NavState& state_at_scan_end,
                                            double scan_end_time,
                                            double max_gap = 0.02);

class Pipeline {
 public:
  explicit Pipeline(const PipelineConfig& config);

  // Static window at the start of the sequence; anchors the global frame at
  // the first IMU frame and seeds biases/gravity. The state clock starts at
  // the window's last sample.
  void initialize(const std::vector<ImuSample>& static_window);
  bool initialized() const { return initialized_; }

  // Propagate to scan end, undistort, update against the map, insert the
  // accepted points. A degenerate update keeps dead-reckoning and is flagged
  // on the returned record.
  ScanRecord process_scan(const LidarScan& scan,
                          const std::vector<ImuSample>& imu_slice);

  const NavState& state() const { return x_; }
  const Covariance24& covariance() const { return P_; }
  double state_time() const { return t_state_; }
  const VoxelPlaneMap& map() const { return map_; }
  VoxelPlaneMap take_map() { return std::move(map_); }
  const PipelineConfig& config() const { return config_; }

 private:
  void propagate_to(double t_target, const std::vector<ImuSample>& imu);

  PipelineConfig config_;
  NavState x_;
  Covariance24 P_ = Covariance24::Zero();
  VoxelPlaneMap map_;
  double t_state_ = 0.0;
  bool initialized_ = false;
};

// Full-sequence processing of a logged directory (simulation log layout).
// Writes `lidar_trajectory.csv`, `camera_trajectory.csv` and
// `diagnostics.csv` (`t,iters,inliers,residual_rms,degenerate`) into
// `out_dir`. Deterministic: identical log + config give byte-identical files.
OdometryOutput run_sequence(const std::filesystem::path& log_dir,
                            const PipelineConfig& config,
                            const std::filesystem::path& out_dir);

}  // namespace riglab
