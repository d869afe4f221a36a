#include "riglab/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace riglab {
namespace {

bool is_sorted_stamps(const std::vector<double>& ts) {
  return std::is_sorted(ts.begin(), ts.end());
}

// Median spacing of a sorted stamp vector; 0 when fewer than two stamps.
double median_spacing(const std::vector<double>& ts) {
  if (ts.size() < 2) return 0.0;
  std::vector<double> diffs(ts.size() - 1);
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) diffs[i] = ts[i + 1] - ts[i];
  auto mid = diffs.begin() + diffs.size() / 2;
  std::nth_element(diffs.begin(), mid, diffs.end());
  return *mid;
}

// Nearest index to `t` in sorted `ts`, earlier index on exact distance ties.
// Returns -1 on empty input.
int nearest_index(const std::vector<double>& ts, double t) {
  if (ts.empty()) return -1;
  const auto it = std::lower_bound(ts.begin(), ts.end(), t);
  if (it == ts.begin()) return 0;
  if (it == ts.end()) return static_cast<int>(ts.size()) - 1;
  const int hi = static_cast<int>(it - ts.begin());
  const int lo = hi - 1;
  return (t - ts[lo] <= ts[hi] - t) ? lo : hi;
}

// Nearest unclaimed index to `t`, expanding outward from the insertion point
// over claimed entries. Earlier stamp wins exact ties.
int nearest_unclaimed(const std::vector<double>& ts,
                      const std::vector<char>& claimed, double t) {
  const int n = static_cast<int>(ts.size());
  if (n == 0) return -1;
  int lo = static_cast<int>(std::lower_bound(ts.begin(), ts.end(), t) -
                            ts.begin()) - 1;
  int hi = lo + 1;
  while (lo >= 0 && claimed[lo]) --lo;
  while (hi < n && claimed[hi]) ++hi;
  if (lo < 0 && hi >= n) return -1;
  if (lo < 0) return hi;
  if (hi >= n) return lo;
  return (t - ts[lo] <= ts[hi] - t) ? lo : hi;
}

}  // namespace

AssociationResult associate_lidar_camera(const std::vector<double>& lidar_ts,
                                         const std::vector<double>& camera_ts,
                                         double gate_s, int ratio) {
  if (!is_sorted_stamps(lidar_ts)) {
    throw std::invalid_argument("associate_lidar_camera: lidar stamps not sorted");
  }
  if (!is_sorted_stamps(camera_ts)) {
    throw std::invalid_argument("associate_lidar_camera: camera stamps not sorted");
  }
  if (!(gate_s >= 0.0) || !std::isfinite(gate_s)) {
    throw std::invalid_argument("associate_lidar_camera: gate must be finite and >= 0");
  }
  if (ratio < 1) {
    throw std::invalid_argument("associate_lidar_camera: ratio must be >= 1");
  }

  AssociationResult out;
  out.camera_fate.assign(camera_ts.size(), FrameFate::gate_dropped);

  // Slot spacing is the nominal camera period: one LiDAR period split into
  // `ratio` slots. Falls back to the camera spacing when there is only one
  // LiDAR frame to measure from.
  double slot_dt = median_spacing(lidar_ts) / ratio;
  if (slot_dt <= 0.0) slot_dt = median_spacing(camera_ts);

  std::vector<char> claimed(camera_ts.size(), 0);
  std::vector<int> slot_match(ratio);
  for (std::size_t i = 0; i < lidar_ts.size(); ++i) {
    int matched = 0;
    for (int j = 0; j < ratio; ++j) {
      const double slot = lidar_ts[i] + j * slot_dt;
      const int c = nearest_unclaimed(camera_ts, claimed, slot);
      if (c < 0 || std::abs(camera_ts[c] - slot) > gate_s) continue;
      claimed[c] = 1;  // permanent: the frame belongs to this LiDAR period
      slot_match[matched++] = c;
    }
    if (matched == ratio) {
      LidarCameraPair pair;
      pair.lidar_index = static_cast<int>(i);
      pair.camera_indices.assign(slot_match.begin(), slot_match.end());
      std::sort(pair.camera_indices.begin(), pair.camera_indices.end());
      for (int c : pair.camera_indices) out.camera_fate[c] = FrameFate::kept;
      out.pairs.push_back(std::move(pair));
    } else {
      ++out.lidar_dropped;
      for (int j = 0; j < matched; ++j) {
        out.camera_fate[slot_match[j]] = FrameFate::ratio_dropped;
      }
    }
  }

  for (const FrameFate fate : out.camera_fate) {
    if (fate == FrameFate::kept) ++out.kept;
    if (fate == FrameFate::gate_dropped) ++out.gate_dropped;
    if (fate == FrameFate::ratio_dropped) ++out.ratio_dropped;
  }
  return out;
}

AlignmentResult align_frames(const std::vector<double>& camera_ts,
                             const Trajectory& poses,
                             const std::vector<GripperSample>& gripper,
                             double tol_s) {
  if (poses.empty()) {
    throw std::invalid_argument("align_frames: empty pose stream");
  }
  if (!is_sorted_stamps(camera_ts)) {
    throw std::invalid_argument("align_frames: camera stamps not sorted");
  }
  if (!(tol_s >= 0.0) || !std::isfinite(tol_s)) {
    throw std::invalid_argument("align_frames: tolerance must be finite and >= 0");
  }
  std::vector<double> pose_ts(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) pose_ts[i] = poses[i].t;
  std::vector<double> aux_ts(gripper.size());
  for (std::size_t i = 0; i < gripper.size(); ++i) aux_ts[i] = gripper[i].t;
  if (!is_sorted_stamps(pose_ts) || !is_sorted_stamps(aux_ts)) {
    throw std::invalid_argument("align_frames: streams not sorted");
  }

  AlignmentResult out;
  out.frames.reserve(camera_ts.size());
  for (std::size_t i = 0; i < camera_ts.size(); ++i) {
    const double t = camera_ts[i];
    const int p = nearest_index(pose_ts, t);
    const double pose_residual = std::abs(pose_ts[p] - t);
    if (pose_residual > tol_s) {
      ++out.pose_dropped;
      continue;
    }
    AlignedFrame frame;
    frame.t = t;
    frame.camera_pose = poses[p].pose;
    frame.image_index = static_cast<int>(i);
    frame.pose_residual = pose_residual;
    if (!gripper.empty()) {
      const int a = nearest_index(aux_ts, t);
      frame.aux_residual = std::abs(aux_ts[a] - t);
      if (frame.aux_residual > tol_s) {
        ++out.aux_dropped;
        continue;
      }
      frame.gripper_width = gripper[a].width;
    }
    out.frames.push_back(frame);
  }
  return out;
}

SegmentationResult segment_episodes(const std::vector<AlignedFrame>& frames,
                                    const SegmentationParams& params) {
  if (!(params.gap_threshold > 0.0) || params.min_frames < 1) {
    throw std::invalid_argument("segment_episodes: bad parameters");
  }
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (!(frames[i].t > frames[i - 1].t)) {
      throw std::invalid_argument(
          "segment_episodes: stamps not strictly increasing");
    }
  }

  SegmentationResult out;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= frames.size(); ++i) {
    const bool boundary =
        i == frames.size() || frames[i].t - frames[i - 1].t > params.gap_threshold;
    if (!boundary) continue;
    const std::size_t len = i - start;
    if (len >= static_cast<std::size_t>(params.min_frames)) {
      Episode ep;
      ep.frames.assign(frames.begin() + start, frames.begin() + i);
      out.episodes.push_back(std::move(ep));
    } else {
      out.short_dropped += static_cast<int>(len);
    }
    start = i;
  }
  return out;
}

Pose camera_from_tcp(const FrameChain& chain) {
  return chain.lidar_from_camera.inverse() * chain.lidar_from_tcp;
}

std::vector<Pose> relative_actions(const Episode& episode, int t, int horizon,
                                   const Pose& camera_from_tcp) {
  const int n = static_cast<int>(episode.frames.size());
  if (t < 0 || t >= n || horizon < 0 || t + horizon >= n) {
    throw std::out_of_range("relative_actions: horizon crosses episode end");
  }
  const Pose anchor_inv =
      (episode.frames[t].camera_pose * camera_from_tcp).inverse();
  std::vector<Pose> out;
  out.reserve(horizon);
  for (int k = 1; k <= horizon; ++k) {
    out.push_back(anchor_inv * (episode.frames[t + k].camera_pose * camera_from_tcp));
  }
  return out;
}

std::vector<Pose> relative_proprioception(const Episode& episode, int t,
                                          int window,
                                          const Pose& camera_from_tcp) {
  const int n = static_cast<int>(episode.frames.size());
  if (t < 0 || t >= n || window < 0 || t - window < 0) {
    throw std::out_of_range(
        "relative_proprioception: window crosses episode start");
  }
  const Pose anchor_inv =
      (episode.frames[t].camera_pose * camera_from_tcp).inverse();
  std::vector<Pose> out;
  out.reserve(window);
  for (int k = 1; k <= window; ++k) {
    out.push_back(anchor_inv * (episode.frames[t - k].camera_pose * camera_from_tcp));
  }
  return out;
}

namespace {

void check_finite_offset(double offset_s) {
  if (!std::isfinite(offset_s)) {
    throw std::invalid_argument("apply_latency_offset: offset must be finite");
  }
}

}  // namespace

std::vector<double> apply_latency_offset(const std::vector<double>& stamps,
                                         double offset_s) {
  check_finite_offset(offset_s);
  std::vector<double> out = stamps;
  for (double& t : out) t += offset_s;
  return out;
}

Trajectory apply_latency_offset(const Trajectory& trajectory, double offset_s) {
  check_finite_offset(offset_s);
  Trajectory out = trajectory;
  for (TimedPose& tp : out) tp.t += offset_s;
  return out;
}

std::vector<GripperSample> apply_latency_offset(
    const std::vector<GripperSample>& samples, double offset_s) {
  check_finite_offset(offset_s);
  std::vector<GripperSample> out = samples;
  for (GripperSample& s : out) s.t += offset_s;
  return out;
}

void write_aligned_csv(const std::filesystem::path& file,
                       const std::vector<AlignedFrame>& frames) {
  std::FILE* f = std::fopen(file.string().c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for write: " + file.string());
  std::fputs(
      "t,x,y,z,qx,qy,qz,qw,gripper_width,image_index,pose_residual,aux_residual\n",
      f);
  for (const AlignedFrame& fr : frames) {
    const Eigen::Vector3d& p = fr.camera_pose.translation;
    Eigen::Quaterniond q = fr.camera_pose.rotation.quaternion();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    std::fprintf(f,
                 "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,"
                 "%.17g,%.17g\n",
                 fr.t, p.x(), p.y(), p.z(), q.x(), q.y(), q.z(), q.w(),
                 fr.gripper_width, fr.image_index, fr.pose_residual,
                 fr.aux_residual);
  }
  std::fclose(f);
}

std::vector<AlignedFrame> read_aligned_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open: " + file.string());
  std::vector<AlignedFrame> frames;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("t,", 0) == 0) continue;
    std::istringstream ss(line);
    double v[12];
    char comma = ',';
    bool ok = true;
    for (int i = 0; i < 12 && ok; ++i) {
      if (i > 0 && (!(ss >> comma) || comma != ',')) ok = false;
      if (ok && !(ss >> v[i])) ok = false;
    }
    if (!ok) {
      throw std::runtime_error("malformed aligned CSV at " + file.string() +
                               ":" + std::to_string(lineno));
    }
    AlignedFrame fr;
    fr.t = v[0];
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);  // w, x, y, z
    if (std::abs(q.norm() - 1.0) > 1e-6) {
      throw std::runtime_error("non-unit quaternion at " + file.string() + ":" +
                               std::to_string(lineno));
    }
    fr.camera_pose = Pose(Rotation::from_quaternion(q), {v[1], v[2], v[3]});
    fr.gripper_width = v[8];
    fr.image_index = static_cast<int>(v[9]);
    fr.pose_residual = v[10];
    fr.aux_residual = v[11];
    frames.push_back(fr);
  }
  return frames;
}

}  // namespace riglab
