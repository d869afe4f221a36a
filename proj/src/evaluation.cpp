#include "riglab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "riglab/calibration.hpp"

namespace riglab {
namespace {

// Nearest index in a sorted stamp vector, earlier index on exact ties.
int nearest_stamp(const std::vector<double>& ts, double t) {
  const auto it = std::lower_bound(ts.begin(), ts.end(), t);
  if (it == ts.begin()) return 0;
  if (it == ts.end()) return static_cast<int>(ts.size()) - 1;
  const int hi = static_cast<int>(it - ts.begin());
  return (t - ts[hi - 1] <= ts[hi] - t) ? hi - 1 : hi;
}

double rotation_geodesic(const Rotation& a, const Rotation& b) {
  return (a.inverse() * b).log().norm();
}

}  // namespace

EvalReport evaluate_trajectory(const Trajectory& estimate,
                               const Trajectory& ground_truth,
                               const EvalParams& params) {
  if (estimate.empty() || ground_truth.empty()) {
    throw std::runtime_error("evaluate_trajectory: empty trajectory");
  }
  if (!(params.associate_tol >= 0.0) || !(params.rpe_delta > 0.0)) {
    throw std::invalid_argument("evaluate_trajectory: bad parameters");
  }
  std::vector<double> gt_ts(ground_truth.size());
  for (std::size_t i = 0; i < ground_truth.size(); ++i) gt_ts[i] = ground_truth[i].t;
  if (!std::is_sorted(gt_ts.begin(), gt_ts.end())) {
    throw std::invalid_argument("evaluate_trajectory: ground truth not sorted");
  }
  for (std::size_t i = 1; i < estimate.size(); ++i) {
    if (estimate[i].t < estimate[i - 1].t) {
      throw std::invalid_argument("evaluate_trajectory: estimate not sorted");
    }
  }

  // Timestamp association: estimate pose -> nearest reference pose.
  std::vector<std::pair<int, int>> matches;  // (estimate idx, reference idx)
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const int g = nearest_stamp(gt_ts, estimate[i].t);
    if (std::abs(gt_ts[g] - estimate[i].t) <= params.associate_tol) {
      matches.emplace_back(static_cast<int>(i), g);
    }
  }
  if (matches.empty()) {
    throw std::runtime_error(
        "evaluate_trajectory: no overlapping stamps within tolerance");
  }

  EvalReport report;
  report.associated = static_cast<int>(matches.size());

  if (params.align) {
    if (matches.size() < 3) {
      throw std::runtime_error(
          "evaluate_trajectory: need at least 3 matches for alignment");
    }
    std::vector<Correspondence> pairs;
    pairs.reserve(matches.size());
    for (const auto& [e, g] : matches) {
      Correspondence c;
      c.p_lidar = estimate[e].pose.translation;
      c.p_camera = ground_truth[g].pose.translation;
      pairs.push_back(c);
    }
    report.alignment = solve_extrinsic_svd(pairs);
    report.aligned = true;
  }

  // Absolute trajectory error over the aligned poses.
  double sum_sq = 0.0;
  for (const auto& [e, g] : matches) {
    const Pose aligned = report.alignment * estimate[e].pose;
    ScanError err;
    err.t = estimate[e].t;
    err.translation_m =
        (aligned.translation - ground_truth[g].pose.translation).norm();
    err.rotation_rad =
        rotation_geodesic(aligned.rotation, ground_truth[g].pose.rotation);
    sum_sq += err.translation_m * err.translation_m;
    report.ate_mean += err.translation_m;
    report.ate_max = std::max(report.ate_max, err.translation_m);
    report.ate_rot_max = std::max(report.ate_rot_max, err.rotation_rad);
    report.series.push_back(err);
  }
  report.ate_rmse = std::sqrt(sum_sq / static_cast<double>(matches.size()));
  report.ate_mean /= static_cast<double>(matches.size());

  // Relative pose error over pairs rpe_delta apart; alignment-invariant.
  std::vector<double> match_ts(matches.size());
  for (std::size_t i = 0; i < matches.size(); ++i) {
    match_ts[i] = estimate[matches[i].first].t;
  }
  double rpe_trans_sq = 0.0;
  double rpe_rot_sq = 0.0;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const double target = match_ts[i] + params.rpe_delta;
    const int j = nearest_stamp(match_ts, target);
    if (j <= static_cast<int>(i) ||
        std::abs(match_ts[j] - target) > params.associate_tol) {
      continue;
    }
    const auto& [ei, gi] = matches[i];
    const auto& [ej, gj] = matches[j];
    const Pose est_rel = estimate[ei].pose.inverse() * estimate[ej].pose;
    const Pose gt_rel =
        ground_truth[gi].pose.inverse() * ground_truth[gj].pose;
    const Pose err = gt_rel.inverse() * est_rel;
    rpe_trans_sq += err.translation.squaredNorm();
    rpe_rot_sq += std::pow(err.rotation.log().norm(), 2);
    ++report.rpe_pairs;
  }
  if (report.rpe_pairs > 0) {
    report.rpe_trans_rmse = std::sqrt(rpe_trans_sq / report.rpe_pairs);
    report.rpe_rot_rmse = std::sqrt(rpe_rot_sq / report.rpe_pairs);
  }
  return report;
}

EvalReport evaluate_trajectory_files(const std::filesystem::path& estimate_csv,
                                     const std::filesystem::path& ground_truth_csv,
                                     const EvalParams& params) {
  return evaluate_trajectory(read_trajectory_csv(estimate_csv.string()),
                             read_trajectory_csv(ground_truth_csv.string()),
                             params);
}

void write_eval_report(const std::filesystem::path& file,
                       const EvalReport& report) {
  std::FILE* f = std::fopen(file.string().c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for write: " + file.string());
  std::fprintf(f, "associated_poses: %d\n", report.associated);
  std::fprintf(f, "ate_rmse_m: %.9f\n", report.ate_rmse);
  std::fprintf(f, "ate_mean_m: %.9f\n", report.ate_mean);
  std::fprintf(f, "ate_max_m: %.9f\n", report.ate_max);
  std::fprintf(f, "ate_rot_max_rad: %.9f\n", report.ate_rot_max);
  std::fprintf(f, "rpe_pairs: %d\n", report.rpe_pairs);
  std::fprintf(f, "rpe_trans_rmse_m: %.9f\n", report.rpe_trans_rmse);
  std::fprintf(f, "rpe_rot_rmse_rad: %.9f\n", report.rpe_rot_rmse);
  std::fprintf(f, "alignment_applied: %s\n", report.aligned ? "yes" : "no");
  std::fprintf(f, "alignment_pose: %s\n",
               format_pose_string(report.alignment).c_str());
  std::fclose(f);
}

void write_eval_series_csv(const std::filesystem::path& file,
                           const EvalReport& report) {
  std::FILE* f = std::fopen(file.string().c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for write: " + file.string());
  std::fputs("t,translation_m,rotation_rad\n", f);
  for (const ScanError& e : report.series) {
    std::fprintf(f, "%.9f,%.9f,%.9f\n", e.t, e.translation_m, e.rotation_rad);
  }
  std::fclose(f);
}

}  // namespace riglab
