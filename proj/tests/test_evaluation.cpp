#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "riglab/evaluation.hpp"
#include "riglab/rng.hpp"
#include "riglab/svg_plot.hpp"

using namespace riglab;
namespace fs = std::filesystem;

namespace {

Rotation random_rotation(Rng& rng, double max_angle = 3.0) {
  Eigen::Vector3d axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
  while (axis.norm() < 1e-9) {
    axis = Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian());
  }
  return Rotation::exp(axis.normalized() * rng.uniform(0.0, max_angle));
}

// Smooth figure-eight path sampled at 10 Hz.
Trajectory smooth_trajectory(int n, double dt = 0.1) {
  Trajectory traj;
  for (int i = 0; i < n; ++i) {
    const double t = i * dt;
    const Eigen::Vector3d p(std::sin(0.4 * t), std::sin(0.8 * t),
                            0.2 * std::sin(0.3 * t));
    const Rotation r = Rotation::exp(
        Eigen::Vector3d(0.1 * std::sin(0.5 * t), 0.1 * std::cos(0.4 * t),
                        0.3 * t));
    traj.push_back({t, Pose(r, p)});
  }
  return traj;
}

}  // namespace

TEST_CASE("a perfect estimate scores zero on every metric") {
  const Trajectory gt = smooth_trajectory(120);
  const EvalReport report = evaluate_trajectory(gt, gt);
  CHECK(report.associated == 120);
  CHECK(report.ate_rmse < 1e-12);
  CHECK(report.ate_mean < 1e-12);
  CHECK(report.ate_max < 1e-12);
  CHECK(report.ate_rot_max < 1e-12);
  CHECK(report.rpe_pairs > 0);
  CHECK(report.rpe_trans_rmse < 1e-12);
  CHECK(report.rpe_rot_rmse < 1e-12);
}

TEST_CASE("alignment absorbs a rigid offset of the whole trajectory") {
  Rng rng(601);
  const Trajectory gt = smooth_trajectory(150);
  const Pose offset(random_rotation(rng), Eigen::Vector3d(4.0, -2.0, 1.5));
  Trajectory est = gt;
  for (auto& tp : est) tp.pose = offset * tp.pose;

  const EvalReport aligned = evaluate_trajectory(est, gt);
  CHECK(aligned.aligned);
  CHECK(aligned.ate_rmse < 1e-9);
  CHECK(aligned.ate_max < 1e-9);

  EvalParams no_align;
  no_align.align = false;
  const EvalReport raw = evaluate_trajectory(est, gt, no_align);
  CHECK(raw.ate_rmse > 1.0);
  // RPE never cares about the global frame.
  CHECK(raw.rpe_trans_rmse < 1e-9);
}

TEST_CASE("ATE RMSE matches the injected noise level") {
  // Isotropic position noise sigma per axis has expected squared norm
  // 3 sigma^2, so the RMSE estimate is sigma * sqrt(3).
  const double sigma = 0.05;
  const Trajectory gt = smooth_trajectory(200);
  double rmse_sum = 0.0;
  const int seeds = 10;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(700 + s);
    Trajectory est = gt;
    for (auto& tp : est) {
      tp.pose.translation += sigma * Eigen::Vector3d(rng.gaussian(),
                                                     rng.gaussian(),
                                                     rng.gaussian());
    }
    EvalParams params;
    params.align = false;
    rmse_sum += evaluate_trajectory(est, gt, params).ate_rmse;
  }
  const double mean_rmse = rmse_sum / seeds;
  const double expected = sigma * std::sqrt(3.0);
  CHECK(mean_rmse == doctest::Approx(expected).epsilon(0.15));
}

TEST_CASE("report invariants hold under random perturbations") {
  Rng rng(602);
  for (int trial = 0; trial < 20; ++trial) {
    const Trajectory gt = smooth_trajectory(100);
    Trajectory est = gt;
    for (auto& tp : est) {
      tp.pose.translation += 0.02 * Eigen::Vector3d(rng.gaussian(),
                                                    rng.gaussian(),
                                                    rng.gaussian());
      tp.pose.rotation = tp.pose.rotation * Rotation::exp(
          0.01 * Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian()));
    }
    const EvalReport r = evaluate_trajectory(est, gt);
    CHECK(r.ate_rmse >= 0.0);
    CHECK(r.ate_mean >= 0.0);
    CHECK(r.ate_rmse >= r.ate_mean - 1e-15);
    CHECK(r.ate_rmse <= r.ate_max + 1e-15);
    CHECK(r.series.size() == static_cast<std::size_t>(r.associated));
  }
}

TEST_CASE("association respects the timestamp tolerance") {
  const Trajectory gt = smooth_trajectory(100);  // 10 Hz
  Trajectory est;
  for (int i = 0; i < 50; ++i) {
    est.push_back({i * 0.2 + 0.004, gt[2 * i].pose});  // 4 ms off, 5 Hz
  }
  EvalParams params;
  params.associate_tol = 0.005;
  const EvalReport r = evaluate_trajectory(est, gt, params);
  CHECK(r.associated == 50);

  params.associate_tol = 0.003;
  CHECK_THROWS_AS(evaluate_trajectory(est, gt, params), std::runtime_error);
}

TEST_CASE("disjoint time ranges are an error") {
  const Trajectory gt = smooth_trajectory(50);
  Trajectory est = smooth_trajectory(50);
  for (auto& tp : est) tp.t += 100.0;
  CHECK_THROWS_AS(evaluate_trajectory(est, gt), std::runtime_error);
  CHECK_THROWS_AS(evaluate_trajectory({}, gt), std::runtime_error);
}

TEST_CASE("RPE catches drift that ATE alignment hides less well") {
  // A slowly accumulating yaw drift: relative error per second is constant.
  const Trajectory gt = smooth_trajectory(200);
  Trajectory est = gt;
  const double drift_per_s = 0.01;  // rad/s
  for (std::size_t i = 0; i < est.size(); ++i) {
    est[i].pose.rotation =
        Rotation::exp(Eigen::Vector3d(0, 0, drift_per_s * est[i].t)) *
        est[i].pose.rotation;
  }
  EvalParams params;
  params.align = false;
  const EvalReport r = evaluate_trajectory(est, gt, params);
  // Rotation RPE at 1 s should sit near the drift rate.
  CHECK(r.rpe_rot_rmse == doctest::Approx(drift_per_s).epsilon(0.25));
}

TEST_CASE("report and series files are written and parseable") {
  const Trajectory gt = smooth_trajectory(80);
  Rng rng(603);
  Trajectory est = gt;
  for (auto& tp : est) {
    tp.pose.translation += 0.01 * Eigen::Vector3d(rng.gaussian(),
                                                  rng.gaussian(),
                                                  rng.gaussian());
  }
  const EvalReport r = evaluate_trajectory(est, gt);
  const fs::path dir = fs::temp_directory_path() / "riglab_eval_out";
  fs::create_directories(dir);

  write_eval_report(dir / "report.txt", r);
  write_eval_series_csv(dir / "series.csv", r);

  std::ifstream report(dir / "report.txt");
  std::string text((std::istreambuf_iterator<char>(report)), {});
  CHECK(text.find("ate_rmse_m:") != std::string::npos);
  CHECK(text.find("alignment_pose:") != std::string::npos);

  std::ifstream series(dir / "series.csv");
  std::string header;
  std::getline(series, header);
  CHECK(header == "t,translation_m,rotation_rad");
  int lines = 0;
  std::string line;
  while (std::getline(series, line)) {
    if (!line.empty()) ++lines;
  }
  CHECK(lines == r.associated);

  // CSV round-trip through the trajectory reader/writer feeds the file API.
  write_trajectory_csv((dir / "est.csv").string(), est);
  write_trajectory_csv((dir / "gt.csv").string(), gt);
  const EvalReport from_files =
      evaluate_trajectory_files(dir / "est.csv", dir / "gt.csv");
  CHECK(from_files.ate_rmse == doctest::Approx(r.ate_rmse).epsilon(1e-6));
  fs::remove_all(dir);
}

TEST_CASE("svg plot writes deterministic well-formed output") {
  const Trajectory gt = smooth_trajectory(60);
  Rng rng(604);
  Trajectory est = gt;
  for (auto& tp : est) {
    tp.pose.translation += 0.01 * Eigen::Vector3d(rng.gaussian(),
                                                  rng.gaussian(),
                                                  rng.gaussian());
  }
  const EvalReport r = evaluate_trajectory(est, gt);
  const fs::path dir = fs::temp_directory_path() / "riglab_svg_out";
  fs::create_directories(dir);

  write_trajectory_svg(dir / "a.svg", est, gt, r.series);
  write_trajectory_svg(dir / "b.svg", est, gt, r.series);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string a = slurp(dir / "a.svg");
  CHECK(a == slurp(dir / "b.svg"));
  CHECK(a.rfind("<svg", 0) == 0);
  CHECK(a.find("</svg>") != std::string::npos);
  // Three polylines: ground truth, estimate, error series.
  std::size_t count = 0;
  for (std::size_t pos = a.find("<polyline"); pos != std::string::npos;
       pos = a.find("<polyline", pos + 1)) {
    ++count;
  }
  CHECK(count == 3);

  CHECK_THROWS_AS(write_trajectory_svg(dir / "bad.svg", {}, gt, r.series),
                  std::invalid_argument);
  fs::remove_all(dir);
}
