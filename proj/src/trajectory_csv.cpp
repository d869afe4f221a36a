#include "riglab/trajectory_csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace riglab {

Trajectory lidar_to_camera_trajectory(const Trajectory& lidar_poses,
                                      const FrameChain& chain) {
  Trajectory out;
  out.reserve(lidar_poses.size());
  double prev = -std::numeric_limits<double>::infinity();
  for (const auto& tp : lidar_poses) {
    if (!(tp.t > prev)) {
      throw std::invalid_argument(
          "lidar_to_camera_trajectory: timestamps not strictly increasing");
    }
    prev = tp.t;
    out.push_back({tp.t, tp.pose * chain.lidar_from_camera});
  }
  return out;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  std::fputs("timestamp_s,x,y,z,qx,qy,qz,qw\n", f);
  for (const auto& tp : traj) {
    const Eigen::Vector3d& p = tp.pose.translation;
    Eigen::Quaterniond q = tp.pose.rotation.quaternion();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();  // canonical sign
    std::fprintf(f, "%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f\n", tp.t, p.x(),
                 p.y(), p.z(), q.x(), q.y(), q.z(), q.w());
  }
  std::fclose(f);
}

Pose parse_pose_string(const std::string& text) {
  std::istringstream ss(text);
  double v[7];
  for (int i = 0; i < 7; ++i) {
    if (!(ss >> v[i])) {
      throw std::invalid_argument("pose string: expected 7 fields (x y z qx qy qz qw), got '" +
                                  text + "'");
    }
  }
  std::string rest;
  if (ss >> rest) {
    throw std::invalid_argument("pose string: trailing content '" + rest + "'");
  }
  Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);  // w, x, y, z
  if (std::abs(q.norm() - 1.0) > 1e-6) {
    throw std::invalid_argument("pose string: quaternion not unit length: '" + text + "'");
  }
  return Pose(Rotation::from_quaternion(q), {v[0], v[1], v[2]});
}

std::string format_pose_string(const Pose& pose) {
  Eigen::Quaterniond q = pose.rotation.quaternion();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f %.9f %.9f %.9f %.9f",
                pose.translation.x(), pose.translation.y(), pose.translation.z(),
                q.x(), q.y(), q.z(), q.w());
  return buf;
}

Trajectory read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  Trajectory traj;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("timestamp_s", 0) == 0) continue;
    std::istringstream ss(line);
    double v[8];
    char comma;
    for (int i = 0; i < 8; ++i) {
      if (!(ss >> v[i])) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": expected 8 numeric fields");
      }
      if (i < 7 && !(ss >> comma)) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": expected comma-separated fields");
      }
    }
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);  // w, x, y, z
    if (std::abs(q.norm() - 1.0) > 1e-6) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": quaternion not unit length");
    }
    TimedPose tp;
    tp.t = v[0];
    tp.pose = Pose(Rotation::from_quaternion(q), {v[1], v[2], v[3]});
    traj.push_back(tp);
  }
  return traj;
}

}  // namespace riglab
