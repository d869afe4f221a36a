// Fisheye intrinsic calibration from checkerboard views and LiDAR-camera
// extrinsic calibration from a four-hole target board.
#pragma once

#include <Eigen/Core>
#include <array>
#include <vector>

#include "riglab/camera_model.hpp"
#include "riglab/pose.hpp"

namespace riglab {

struct CornerObservation {
  Eigen::Vector3d board_point;  // board frame, z = 0 on the checkerboard plane
  Eigen::Vector2d pixel;        // detected corner
};

struct CheckerboardView {
  std::vector<CornerObservation> corners;
};

struct IntrinsicsSolution {
  FisheyeIntrinsics intrinsics;
  std::vector<Pose> camera_from_board;  // one pose per input view
  double rms_reprojection_px = 0.0;     // RMS over pixel coordinates
  int iterations = 0;
};

// Joint nonlinear least squares over the intrinsics and all view poses,
// seeded from a homography pose fit. Requires at least 5 views with 20
// corners each; collinear corner layouts are rejected as rank-deficient.
IntrinsicsSolution calibrate_intrinsics(const std::vector<CheckerboardView>& views);

// The calibration board: a rectangle with four circular holes (asymmetric
// layout so the hole identity is recoverable from geometry alone) plus
// fiducial markers used by the camera-side pose recovery.
struct CalibrationTarget {
  std::array<Eigen::Vector3d, 4> hole_centers;  // board frame, z = 0
  double hole_radius = 0.06;                    // m
  double board_width = 0.8;                     // x extent, m
  double board_height = 0.6;                    // y extent, m
  std::array<Eigen::Vector3d, 4> fiducial_corners;  // marker layout, board frame

  // Coplanar (z = 0), non-collinear centers; holes inside the board.
  void validate() const;

  static CalibrationTarget standard();
};

// One hole-center pair expressed in both sensor frames.
struct Correspondence {
  Eigen::Vector3d p_lidar;
  Eigen::Vector3d p_camera;
  int frame_id = 0;
};

struct HoleExtractionDiagnostics {
  // Per-hole ellipse centers before the known-radius correction, same order
  // as the returned centers.
  std::array<Eigen::Vector3d, 4> ellipse_centers;
  double edge_dilation = 0.0;  // fitted shared dilation of the hole edges, m
  std::array<int, 4> edge_counts = {0, 0, 0, 0};
};

// Recovers the four hole centers from a LiDAR cloud cropped to the target:
// plane fit, density-discontinuity edge extraction (no scan-line assumption),
// per-hole ellipse fit, then a joint circle fit with the known hole radius
// and a shared edge-dilation term. Centers come back ordered to match
// target.hole_centers. Throws naming the count when fewer than four holes
// are found.
std::array<Eigen::Vector3d, 4> extract_hole_centers_lidar(
    const std::vector<Eigen::Vector3d>& points, const CalibrationTarget& target,
    HoleExtractionDiagnostics* diagnostics = nullptr);

// Known board-frame hole centers pushed through the fiducial-derived pose.
std::array<Eigen::Vector3d, 4> hole_centers_camera(const Pose& camera_from_board,
                                                   const CalibrationTarget& target);

// Closed-form rigid alignment minimizing sum ||p_camera - T * p_lidar||^2.
// The returned pose maps LiDAR coordinates into the camera frame. Requires
// at least three non-collinear pairs.
Pose solve_extrinsic_svd(const std::vector<Correspondence>& correspondences);

// Joint refinement over all frames, weighted per frame by the residual
// scatter at the initial estimate so that noisy frames count less. The
// optimized cost never exceeds its value at `initial`.
Pose refine_extrinsic(const std::vector<std::vector<Correspondence>>& frames,
                      const Pose& initial);

}  // namespace riglab
