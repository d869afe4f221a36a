// Multi-stream temporal association, frame-level alignment, episode
// segmentation and relative-pose representations.
//
// The camera timeline is the primary clock: LiDAR frames claim camera frames
// at a fixed cross-modal ratio, poses and auxiliary channels attach to camera
// stamps by gated nearest-neighbor matching, and episodes are split at
// timestamp gaps. Every input camera frame ends up in exactly one fate
// bucket, so the stage counts always sum to the input size.
#pragma once

#include <filesystem>
#include <vector>

#include "riglab/log_io.hpp"
#include "riglab/pose.hpp"
#include "riglab/trajectory_csv.hpp"

namespace riglab {

// What happened to a camera frame on its way into the dataset.
enum class FrameFate : int {
  kept = 0,
  gate_dropped = 1,    // no slot / pose / aux sample within tolerance
  ratio_dropped = 2,   // matched a slot, but its LiDAR frame was incomplete
  short_episode_dropped = 3,
};

struct LidarCameraPair {
  int lidar_index = -1;
  std::vector<int> camera_indices;  // exactly `ratio` entries, ascending
};

struct AssociationResult {
  std::vector<LidarCameraPair> pairs;   // kept LiDAR frames, in order
  std::vector<FrameFate> camera_fate;   // one entry per input camera stamp
  int kept = 0;
  int gate_dropped = 0;
  int ratio_dropped = 0;
  int lidar_dropped = 0;  // LiDAR frames without a full camera complement
};

// Each LiDAR frame expects `ratio` camera frames at nominal slots
// t_lidar + j * T_lidar / ratio. A slot matches the nearest still-unclaimed
// camera stamp if it lies within `gate_s` (earlier stamp wins exact ties);
// a LiDAR frame is kept only when every slot matched a distinct frame.
// Claims are permanent, so the fate buckets partition the camera stream.
// Inputs must be sorted; throws std::invalid_argument otherwise.
AssociationResult associate_lidar_camera(const std::vector<double>& lidar_ts,
                                         const std::vector<double>& camera_ts,
                                         double gate_s, int ratio = 2);

struct AlignedFrame {
  double t = 0.0;  // camera stamp, the primary timeline
  Pose camera_pose;
  double gripper_width = 0.0;
  int image_index = -1;         // payload handle into the source log, -1 = none
  double pose_residual = 0.0;   // |Δt| to the matched pose sample
  double aux_residual = 0.0;    // |Δt| to the matched auxiliary sample
};

struct AlignmentResult {
  std::vector<AlignedFrame> frames;
  int pose_dropped = 0;  // camera frames with no pose within tolerance
  int aux_dropped = 0;   // pose matched but auxiliary channel out of tolerance
};

// Nearest pose and nearest auxiliary sample per camera stamp (earlier wins
// exact ties); a frame is emitted only when every residual is <= tol_s.
// An empty gripper stream disables the auxiliary match (residual 0). The
// pose stream must be non-empty; all streams must be sorted.
AlignmentResult align_frames(const std::vector<double>& camera_ts,
                             const Trajectory& poses,
                             const std::vector<GripperSample>& gripper,
                             double tol_s = 0.010);

struct Episode {
  std::vector<AlignedFrame> frames;  // strictly increasing stamps
  // Per-frame representation extents used at packaging time; 0 = unset.
  // Neither may cross the episode boundary (relative_actions /
  // relative_proprioception enforce this per query).
  int action_horizon = 0;
  int proprio_window = 0;
};

struct SegmentationParams {
  double gap_threshold = 0.5;  // s; split where the stamp gap exceeds this
  int min_frames = 20;         // shorter segments are dropped and counted
};

struct SegmentationResult {
  std::vector<Episode> episodes;
  int short_dropped = 0;  // frames lost to the minimum-length rule
};

// Splits at gaps strictly greater than the threshold. Frame stamps must be
// strictly increasing; throws std::invalid_argument otherwise.
SegmentationResult segment_episodes(const std::vector<AlignedFrame>& frames,
                                    const SegmentationParams& params = {});

// T_camera_tcp of the frame chain: camera pose composed with this gives the
// tool-center-point pose the relative representations are expressed in.
Pose camera_from_tcp(const FrameChain& chain);

// a_k = T_t^-1 * T_{t+k} for k = 1..horizon, with T the TCP pose of each
// frame. Requires t and t+horizon inside the episode (std::out_of_range).
// Left-multiplying every pose by a global transform leaves the output
// unchanged; that is the point of the representation.
std::vector<Pose> relative_actions(const Episode& episode, int t, int horizon,
                                   const Pose& camera_from_tcp);

// h_k = T_t^-1 * T_{t-k} for k = 1..window (most recent first). Requires
// t - window >= 0 (std::out_of_range).
std::vector<Pose> relative_proprioception(const Episode& episode, int t,
                                          int window,
                                          const Pose& camera_from_tcp);

// Shift every stamp by `offset_s` (applied before association so a camera
// lead is indistinguishable from an equal pose lag). Offsets must be finite.
std::vector<double> apply_latency_offset(const std::vector<double>& stamps,
                                         double offset_s);
Trajectory apply_latency_offset(const Trajectory& trajectory, double offset_s);
std::vector<GripperSample> apply_latency_offset(
    const std::vector<GripperSample>& samples, double offset_s);

// Aligned-frame CSV: header
//   t,x,y,z,qx,qy,qz,qw,gripper_width,image_index,pose_residual,aux_residual
// one frame per line, full round-trip precision. Readers throw
// std::runtime_error naming file and line on malformed input.
void write_aligned_csv(const std::filesystem::path& file,
                       const std::vector<AlignedFrame>& frames);
std::vector<AlignedFrame> read_aligned_csv(const std::filesystem::path& file);

}  // namespace riglab
