// Trajectory accuracy metrics: timestamp association, optional closed-form
// SE(3) alignment, absolute trajectory error and relative pose error.
#pragma once

#include <filesystem>
#include <vector>

#include "riglab/pose.hpp"
#include "riglab/trajectory_csv.hpp"

namespace riglab {

struct EvalParams {
  double associate_tol = 0.02;  // s; estimate stamp to nearest reference stamp
  bool align = true;            // rigid alignment before the absolute errors
  double rpe_delta = 1.0;       // s; relative-pose-error interval
};

struct ScanError {
  double t = 0.0;
  double translation_m = 0.0;  // after alignment
  double rotation_rad = 0.0;
};

struct EvalReport {
  double ate_rmse = 0.0;  // m; rmse >= mean and rmse <= max always hold
  double ate_mean = 0.0;
  double ate_max = 0.0;
  double ate_rot_max = 0.0;   // rad, geodesic
  double rpe_trans_rmse = 0.0;  // m at rpe_delta
  double rpe_rot_rmse = 0.0;    // rad at rpe_delta
  int rpe_pairs = 0;
  Pose alignment;  // applied to the estimate (identity when align = false)
  bool aligned = false;
  int associated = 0;  // matched pose pairs
  std::vector<ScanError> series;  // per associated estimate pose, in time order
};

// Associates each estimate pose with the nearest ground-truth pose within
// `associate_tol` (earlier stamp wins exact ties), optionally solves the
// rigid alignment on the matched positions (the same closed-form solver the
// extrinsic calibration uses), then computes ATE over the aligned poses and
// RPE over pairs `rpe_delta` apart. Throws std::runtime_error when no stamps
// overlap (or fewer than 3 matches while alignment is requested).
EvalReport evaluate_trajectory(const Trajectory& estimate,
                               const Trajectory& ground_truth,
                               const EvalParams& params = {});

// CSV-file front end of the same computation.
EvalReport evaluate_trajectory_files(const std::filesystem::path& estimate_csv,
                                     const std::filesystem::path& ground_truth_csv,
                                     const EvalParams& params = {});

// Plain-text summary (metrics plus the alignment transform).
void write_eval_report(const std::filesystem::path& file, const EvalReport& report);

// Machine-readable per-scan series: header `t,translation_m,rotation_rad`.
void write_eval_series_csv(const std::filesystem::path& file,
                           const EvalReport& report);

}  // namespace riglab
