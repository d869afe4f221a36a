// Native sequence-log layout: one directory per recording with
//   imu.csv            t,wx,wy,wz,ax,ay,az
//   scans/NNNNNN.bin   little-endian records (f64 offset_t, 3x f32 xyz)
//   camera_stamps.csv  t
//   ground_truth.csv   trajectory CSV (simulated logs only)
//   gripper.csv        t,width          (auxiliary scalar channel, optional)
//   images/NNNNNN.bin  opaque per-camera-frame payload blobs (optional)
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "riglab/sensor_sim.hpp"
#include "riglab/trajectory_csv.hpp"

namespace riglab {

struct GripperSample {
  double t = 0.0;
  double width = 0.0;  // meters
};

struct SequenceLog {
  std::vector<ImuSample> imu;
  std::vector<LidarScan> scans;          // scans[k] stored as scans/<k>.bin
  std::vector<double> camera_stamps;
  Trajectory ground_truth;               // empty when absent
  std::vector<GripperSample> gripper;    // empty when absent
  std::vector<std::vector<std::uint8_t>> images;  // per camera frame, empty when absent
};

void write_imu_csv(const std::filesystem::path& file, const std::vector<ImuSample>& imu);
std::vector<ImuSample> read_imu_csv(const std::filesystem::path& file);

void write_camera_stamps_csv(const std::filesystem::path& file,
                             const std::vector<double>& stamps);
std::vector<double> read_camera_stamps_csv(const std::filesystem::path& file);

void write_gripper_csv(const std::filesystem::path& file,
                       const std::vector<GripperSample>& samples);
std::vector<GripperSample> read_gripper_csv(const std::filesystem::path& file);

// Scan payload only; frame_time is carried by the filename index and the
// sequence clocking (see read_sequence_log).
void write_scan_bin(const std::filesystem::path& file, const LidarScan& scan);
LidarScan read_scan_bin(const std::filesystem::path& file);

// Sorted NNNNNN.bin paths under dir; throws if dir is missing.
std::vector<std::filesystem::path> list_indexed_bins(const std::filesystem::path& dir);

// Writes every present field; creates the directory tree.
void write_sequence_log(const std::filesystem::path& dir, const SequenceLog& log);

// Reads the full layout. Scan frame times are reconstructed as
// index/lidar_hz + lidar_latency from the clock config, matching the writer.
SequenceLog read_sequence_log(const std::filesystem::path& dir, const ClockConfig& clock);

}  // namespace riglab
