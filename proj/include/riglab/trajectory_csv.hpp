// Timestamped pose sequences and their CSV serialization.
//
// File format: header `timestamp_s,x,y,z,qx,qy,qz,qw`, one pose per line,
// quaternion in Hamilton convention with scalar last.
#pragma once

#include <string>
#include <vector>

#include "riglab/pose.hpp"

namespace riglab {

struct TimedPose {
  double t = 0.0;
  Pose pose;
};

using Trajectory = std::vector<TimedPose>;

// Each camera pose = lidar_pose * lidar_from_camera; timestamps preserved.
// Throws on non-monotone timestamps.
Trajectory lidar_to_camera_trajectory(const Trajectory& lidar_poses,
                                      const FrameChain& chain);

void write_trajectory_csv(const std::string& path, const Trajectory& traj);

// Throws std::runtime_error naming file and line on malformed input.
Trajectory read_trajectory_csv(const std::string& path);

// Single-pose serialization in the same convention as the CSV columns:
// "x y z qx qy qz qw", space separated, canonical qw >= 0 on output.
Pose parse_pose_string(const std::string& text);
std::string format_pose_string(const Pose& pose);

}  // namespace riglab
