#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "calib_synthetic.hpp"
#include "riglab/calibration.hpp"
#include "riglab/camera_model.hpp"
#include "riglab/rng.hpp"
#include "riglab/solvers.hpp"

using namespace riglab;
namespace synth = riglab::calib_synth;

namespace {

double rotation_error(const Pose& a, const Pose& b) {
  return (a.rotation.inverse() * b.rotation).log().norm();
}

std::vector<Correspondence> make_correspondences(const Pose& camera_from_lidar,
                                                 int count, double sigma, Rng& rng,
                                                 int frame_id = 0) {
  std::vector<Correspondence> out;
  for (int i = 0; i < count; ++i) {
    Correspondence c;
    c.p_lidar = {rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(0.5, 3.0)};
    c.p_camera = camera_from_lidar * c.p_lidar;
    for (int k = 0; k < 3; ++k) c.p_camera[k] += rng.gaussian(sigma);
    c.frame_id = frame_id;
    out.push_back(c);
  }
  return out;
}

}  // namespace

TEST_CASE("equidistant projection matches the closed form") {
  FisheyeIntrinsics intr;
  intr.f = 300.0;
  intr.cx = 640.0;
  intr.cy = 512.0;

  const Eigen::Vector2d axis = project_equidistant({0.0, 0.0, 1.0}, intr);
  CHECK((axis - Eigen::Vector2d(640.0, 512.0)).norm() < 1e-15);

  const Eigen::Vector2d diag = project_equidistant({1.0, 0.0, 1.0}, intr);
  CHECK(diag.x() == doctest::Approx(640.0 + 300.0 * M_PI / 4.0).epsilon(1e-12));
  CHECK(diag.y() == doctest::Approx(512.0).epsilon(1e-12));

  CHECK_THROWS_AS(project_equidistant({0.0, 0.0, 0.0}, intr), std::invalid_argument);
  // A 45-degree incident ray lands at the same radius in any direction.
  const Eigen::Vector2d off = project_equidistant({0.0, -2.0, 2.0}, intr);
  CHECK((off - Eigen::Vector2d(640.0, 512.0)).norm() ==
        doctest::Approx(300.0 * M_PI / 4.0).epsilon(1e-12));
}

TEST_CASE("unprojection inverts projection across the field of view") {
  const FisheyeIntrinsics intr = synth::true_intrinsics();
  CHECK((unproject_equidistant({intr.cx, intr.cy}, intr) - Eigen::Vector3d::UnitZ()).norm() <
        1e-15);

  Rng rng(71);
  for (int i = 0; i < 1000; ++i) {
    const double theta = rng.uniform(0.0, intr.theta_max * 0.999);
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const Eigen::Vector3d ray(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                              std::cos(theta));
    const Eigen::Vector3d back =
        unproject_equidistant(project_equidistant(ray * rng.uniform(0.5, 5.0), intr), intr);
    CHECK((back - ray).norm() < 1e-9);
  }

  // Radial sweep to the rim: Newton has to converge everywhere in-domain.
  for (int i = 0; i <= 1000; ++i) {
    const double r = intr.f * intr.distort(intr.theta_max) * i / 1000.0;
    const Eigen::Vector3d ray = unproject_equidistant({intr.cx + r, intr.cy}, intr);
    CHECK(std::abs(ray.norm() - 1.0) < 1e-12);
    const Eigen::Vector2d px = project_equidistant(ray, intr);
    CHECK(std::abs(px.x() - (intr.cx + r)) < 1e-8);
  }

  const double beyond = intr.f * intr.distort(intr.theta_max) + 1.0;
  CHECK_THROWS_AS(unproject_equidistant({intr.cx + beyond, intr.cy}, intr), std::domain_error);

  FisheyeIntrinsics bad = intr;
  bad.k1 = -0.5;  // derivative goes negative well inside theta_max
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  FisheyeIntrinsics neg = intr;
  neg.f = -1.0;
  CHECK_THROWS_AS(neg.validate(), std::invalid_argument);
}

TEST_CASE("levenberg_marquardt reduces cost monotonically to the optimum") {
  // Nonlinear two-parameter fit: y = a * exp(b * t) sampled without noise.
  Eigen::VectorXd t(20), y(20);
  for (int i = 0; i < 20; ++i) {
    t[i] = 0.1 * i;
    y[i] = 2.5 * std::exp(-1.3 * t[i]);
  }
  const auto fn = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(20);
    for (int i = 0; i < 20; ++i) r[i] = x[0] * std::exp(x[1] * t[i]) - y[i];
    return r;
  };
  Eigen::VectorXd x0(2);
  x0 << 1.0, 0.0;
  const LmResult res = levenberg_marquardt(fn, x0);
  CHECK(res.converged);
  CHECK(res.final_cost <= res.initial_cost);
  CHECK(res.params[0] == doctest::Approx(2.5).epsilon(1e-8));
  CHECK(res.params[1] == doctest::Approx(-1.3).epsilon(1e-8));
}

TEST_CASE("intrinsic calibration recovers the exact model from clean views") {
  const FisheyeIntrinsics truth = synth::true_intrinsics();
  const auto board = synth::checkerboard_points();
  Rng rng(11);
  const auto poses = synth::diverse_view_poses(8, rng);
  std::vector<CheckerboardView> views;
  for (const Pose& p : poses) views.push_back(synth::render_view(truth, p, board, 0.0, rng));

  const IntrinsicsSolution sol = calibrate_intrinsics(views);
  CHECK(std::abs(sol.intrinsics.f - truth.f) / truth.f < 1e-6);
  CHECK(std::abs(sol.intrinsics.cx - truth.cx) < 1e-3);
  CHECK(std::abs(sol.intrinsics.cy - truth.cy) < 1e-3);
  CHECK(sol.rms_reprojection_px < 1e-6);
  REQUIRE(sol.camera_from_board.size() == poses.size());
  for (std::size_t v = 0; v < poses.size(); ++v) {
    CHECK(rotation_error(sol.camera_from_board[v], poses[v]) < 1e-6);
    CHECK((sol.camera_from_board[v].translation - poses[v].translation).norm() < 1e-6);
  }
}

TEST_CASE("intrinsic calibration under corner noise stays within a tenth percent") {
  const FisheyeIntrinsics truth = synth::true_intrinsics();
  // A large board seen up close: the wide per-view angular span is what makes
  // the focal length separable from the distortion polynomial at this noise.
  const auto board = synth::checkerboard_points(15, 11, 0.05);
  Rng rng(12);
  const auto poses = synth::fov_sweep_poses(40, rng, 0.7, 0.45, 0.65);
  std::vector<CheckerboardView> views;
  for (const Pose& p : poses) views.push_back(synth::render_view(truth, p, board, 0.2, rng));

  const IntrinsicsSolution sol = calibrate_intrinsics(views);
  CHECK(std::abs(sol.intrinsics.f - truth.f) / truth.f < 1e-3);
  CHECK(sol.rms_reprojection_px > 0.15);
  CHECK(sol.rms_reprojection_px < 0.3);
}

TEST_CASE("intrinsic calibration rejects bad inputs") {
  const FisheyeIntrinsics truth = synth::true_intrinsics();
  const auto board = synth::checkerboard_points();
  Rng rng(13);
  const auto poses = synth::diverse_view_poses(6, rng);
  std::vector<CheckerboardView> views;
  for (const Pose& p : poses) views.push_back(synth::render_view(truth, p, board, 0.0, rng));

  std::vector<CheckerboardView> two(views.begin(), views.begin() + 2);
  CHECK_THROWS_AS(calibrate_intrinsics(two), std::invalid_argument);

  std::vector<CheckerboardView> sparse = views;
  sparse[0].corners.resize(19);
  CHECK_THROWS_AS(calibrate_intrinsics(sparse), std::invalid_argument);

  // All corners on one board line cannot pin a homography.
  std::vector<Eigen::Vector3d> line;
  for (int i = 0; i < 25; ++i) line.emplace_back(0.01 * i, 0.0, 0.0);
  std::vector<CheckerboardView> degenerate;
  for (const Pose& p : poses) degenerate.push_back(synth::render_view(truth, p, line, 0.0, rng));
  CHECK_THROWS_AS(calibrate_intrinsics(degenerate), std::runtime_error);
}

TEST_CASE("calibration target geometry is validated") {
  const CalibrationTarget target = CalibrationTarget::standard();
  CHECK_NOTHROW(target.validate());

  CalibrationTarget off = target;
  off.hole_centers[0] = {0.39, 0.0, 0.0};
  CHECK_THROWS_AS(off.validate(), std::invalid_argument);

  CalibrationTarget flat = target;
  flat.hole_centers = {Eigen::Vector3d(-0.2, 0.0, 0.0), Eigen::Vector3d(-0.1, 0.0, 0.0),
                       Eigen::Vector3d(0.1, 0.0, 0.0), Eigen::Vector3d(0.2, 0.0, 0.0)};
  CHECK_THROWS_AS(flat.validate(), std::invalid_argument);

  CalibrationTarget lifted = target;
  lifted.hole_centers[2].z() = 0.01;
  CHECK_THROWS_AS(lifted.validate(), std::invalid_argument);
}

TEST_CASE("hole centers in the camera frame are the transformed board centers") {
  const CalibrationTarget target = CalibrationTarget::standard();
  const auto at_identity = hole_centers_camera(Pose::identity(), target);
  for (int i = 0; i < 4; ++i) {
    CHECK((at_identity[i] - target.hole_centers[i]).norm() < 1e-15);
  }

  const Eigen::Vector3d shift(0.3, -0.1, 1.2);
  const auto shifted = hole_centers_camera(Pose(Rotation::identity(), shift), target);
  for (int i = 0; i < 4; ++i) {
    CHECK((shifted[i] - (target.hole_centers[i] + shift)).norm() < 1e-15);
  }

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Pose pose(Rotation::exp({rng.gaussian(1.0), rng.gaussian(1.0), rng.gaussian(1.0)}),
                    {rng.gaussian(1.0), rng.gaussian(1.0), rng.gaussian(1.0)});
    const auto centers = hole_centers_camera(pose, target);
    for (int i = 0; i < 4; ++i) {
      CHECK((centers[i] - transform_point(pose, target.hole_centers[i])).norm() < 1e-12);
    }
  }
}

TEST_CASE("svd alignment recovers exact poses and rejects degeneracy") {
  Rng rng(21);
  const Pose truth(Rotation::exp({0.4, -0.2, 0.7}), {0.05, -0.12, 0.08});
  const auto corr = make_correspondences(truth, 10, 0.0, rng);
  const Pose est = solve_extrinsic_svd(corr);
  CHECK(rotation_error(est, truth) < 1e-12);
  CHECK((est.translation - truth.translation).norm() < 1e-12);

  std::vector<Correspondence> ident;
  for (int i = 0; i < 5; ++i) {
    Correspondence c;
    c.p_lidar = {0.3 * i, 0.1 * i * i, 1.0 + 0.2 * i};
    c.p_camera = c.p_lidar;
    ident.push_back(c);
  }
  const Pose id_est = solve_extrinsic_svd(ident);
  CHECK(rotation_error(id_est, Pose::identity()) < 1e-12);
  CHECK(id_est.translation.norm() < 1e-12);

  std::vector<Correspondence> collinear;
  for (int i = 0; i < 6; ++i) {
    Correspondence c;
    c.p_lidar = Eigen::Vector3d(1.0, 2.0, -0.5) * (0.2 * i);
    c.p_camera = truth * c.p_lidar;
    collinear.push_back(c);
  }
  CHECK_THROWS_AS(solve_extrinsic_svd(collinear), std::runtime_error);
  CHECK_THROWS_AS(solve_extrinsic_svd({corr.begin(), corr.begin() + 2}),
                  std::invalid_argument);
}

TEST_CASE("svd alignment is equivariant under a camera-side transform") {
  Rng rng(22);
  const Pose truth(Rotation::exp({-0.3, 0.5, 0.1}), {0.2, 0.0, -0.15});
  const auto corr = make_correspondences(truth, 8, 0.002, rng);
  const Pose base = solve_extrinsic_svd(corr);

  const Pose g(Rotation::exp({0.9, -0.4, 0.3}), {1.0, -2.0, 0.5});
  std::vector<Correspondence> moved = corr;
  for (auto& c : moved) c.p_camera = g * c.p_camera;
  const Pose est = solve_extrinsic_svd(moved);
  const Pose expect = g * base;
  CHECK(rotation_error(est, expect) < 1e-9);
  CHECK((est.translation - expect.translation).norm() < 1e-9);
}

TEST_CASE("svd alignment meets the noisy accuracy contract") {
  const Pose truth(Rotation::exp({0.25, -0.45, 0.6}), {0.04, -0.02, 0.09});
  std::vector<double> trans_err, rot_err;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    std::vector<Correspondence> pooled;
    for (int f = 0; f < 5; ++f) {
      const auto frame = make_correspondences(truth, 4, 0.002, rng, f);
      pooled.insert(pooled.end(), frame.begin(), frame.end());
    }
    const Pose est = solve_extrinsic_svd(pooled);
    trans_err.push_back((est.translation - truth.translation).norm());
    rot_err.push_back(rotation_error(est, truth));
  }
  std::sort(trans_err.begin(), trans_err.end());
  std::sort(rot_err.begin(), rot_err.end());
  CHECK(trans_err[10] < 0.005);
  CHECK(rot_err[10] < 0.5 * M_PI / 180.0);
}

TEST_CASE("extrinsic refinement respects its initialization contracts") {
  const Pose truth(Rotation::exp({0.3, 0.1, -0.5}), {0.06, -0.03, 0.11});

  SUBCASE("noiseless input does not move") {
    Rng rng(31);
    std::vector<std::vector<Correspondence>> frames;
    std::vector<Correspondence> pooled;
    for (int f = 0; f < 5; ++f) {
      frames.push_back(make_correspondences(truth, 4, 0.0, rng, f));
      pooled.insert(pooled.end(), frames.back().begin(), frames.back().end());
    }
    const Pose init = solve_extrinsic_svd(pooled);
    const Pose refined = refine_extrinsic(frames, init);
    CHECK(rotation_error(refined, init) < 1e-10);
    CHECK((refined.translation - init.translation).norm() < 1e-10);
  }

  SUBCASE("single frame equals the svd solution") {
    Rng rng(32);
    std::vector<std::vector<Correspondence>> frames = {
        make_correspondences(truth, 6, 0.003, rng)};
    const Pose init = solve_extrinsic_svd(frames[0]);
    const Pose refined = refine_extrinsic(frames, init);
    CHECK(rotation_error(refined, init) < 1e-10);
    CHECK((refined.translation - init.translation).norm() < 1e-10);
  }

  SUBCASE("heteroscedastic frames: refinement never loses to svd") {
    std::vector<double> svd_err, ref_err;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(600 + seed);
      std::vector<std::vector<Correspondence>> frames;
      std::vector<Correspondence> pooled;
      for (int f = 0; f < 6; ++f) {
        const double sigma = (f < 3) ? 0.0005 : 0.006;
        frames.push_back(make_correspondences(truth, 4, sigma, rng, f));
        pooled.insert(pooled.end(), frames.back().begin(), frames.back().end());
      }
      const Pose init = solve_extrinsic_svd(pooled);
      const Pose refined = refine_extrinsic(frames, init);
      svd_err.push_back((init.translation - truth.translation).norm());
      ref_err.push_back((refined.translation - truth.translation).norm());
    }
    std::sort(svd_err.begin(), svd_err.end());
    std::sort(ref_err.begin(), ref_err.end());
    CHECK(ref_err[10] <= svd_err[10]);
  }
}

TEST_CASE("hole extraction is exact on a symmetric noiseless lattice") {
  const CalibrationTarget target = CalibrationTarget::standard();
  const Pose lidar_from_board(Rotation::exp({0.3, -0.2, 0.5}), {0.4, -0.3, 1.2});
  const auto cloud = synth::grid_target_cloud(target, lidar_from_board, 0.01);
  REQUIRE(cloud.size() > 3000);

  const auto centers = extract_hole_centers_lidar(cloud, target);
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector3d truth = lidar_from_board * target.hole_centers[i];
    CHECK((centers[i] - truth).norm() < 1e-6);
  }
}

TEST_CASE("hole extraction stays within 3 mm under range noise") {
  const CalibrationTarget target = CalibrationTarget::standard();
  const Pose lidar_from_board(Rotation::exp({0.25, 0.45, -0.3}), {0.3, 0.2, 1.5});
  Rng rng(41);
  const auto cloud = synth::raycast_target_cloud(target, lidar_from_board, 9000, 0.002, 0.0, rng);
  REQUIRE(cloud.size() > 4000);

  const auto centers = extract_hole_centers_lidar(cloud, target);
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector3d truth = lidar_from_board * target.hole_centers[i];
    CHECK((centers[i] - truth).norm() < 0.003);
  }
}

TEST_CASE("a scan missing one hole names the count") {
  const CalibrationTarget target = CalibrationTarget::standard();
  const Pose lidar_from_board(Rotation::exp({0.1, -0.15, 0.2}), {0.1, 0.0, 1.1});
  auto cloud = synth::grid_target_cloud(target, lidar_from_board, 0.01);
  // Remove the fourth hole's ring along with its surroundings.
  const Eigen::Vector3d gone = lidar_from_board * target.hole_centers[3];
  std::erase_if(cloud, [&](const Eigen::Vector3d& p) {
    return (p - gone).norm() < 2.5 * target.hole_radius;
  });
  CHECK_THROWS_WITH_AS(extract_hole_centers_lidar(cloud, target),
                       doctest::Contains("3 of 4 holes found"), std::runtime_error);
}

TEST_CASE("hole extraction ignores the input point order") {
  const CalibrationTarget target = CalibrationTarget::standard();
  const Pose lidar_from_board(Rotation::exp({0.2, 0.3, -0.1}), {0.2, -0.1, 1.3});
  Rng rng(43);
  auto cloud = synth::raycast_target_cloud(target, lidar_from_board, 7000, 0.002, 0.0, rng);
  const auto base = extract_hole_centers_lidar(cloud, target);

  std::reverse(cloud.begin(), cloud.end());
  // Deterministic shuffle on top of the reversal.
  Rng shuffle_rng(44);
  for (std::size_t i = cloud.size() - 1; i > 0; --i) {
    std::swap(cloud[i], cloud[shuffle_rng.integer() % (i + 1)]);
  }
  const auto permuted = extract_hole_centers_lidar(cloud, target);
  for (int i = 0; i < 4; ++i) {
    CHECK((base[i] - permuted[i]).norm() == 0.0);
  }
}

TEST_CASE("hole centers are stable across scan pattern seeds") {
  const CalibrationTarget target = CalibrationTarget::standard();
  const Pose lidar_from_board(Rotation::exp({0.35, -0.1, 0.25}), {0.25, 0.15, 1.4});
  std::vector<std::array<Eigen::Vector3d, 4>> runs;
  for (std::uint64_t seed = 50; seed < 55; ++seed) {
    Rng rng(seed);
    const auto cloud =
        synth::raycast_target_cloud(target, lidar_from_board, 50000, 0.002, 0.0, rng);
    runs.push_back(extract_hole_centers_lidar(cloud, target));
  }
  for (int i = 0; i < 4; ++i) {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& run : runs) mean += run[i];
    mean /= static_cast<double>(runs.size());
    for (const auto& run : runs) {
      CHECK((run[i] - mean).norm() < 1e-3);
    }
  }
}

TEST_CASE("known-radius correction beats raw ellipse centers under edge dilation") {
  const CalibrationTarget target = CalibrationTarget::standard();
  const Pose lidar_from_board(Rotation::exp({0.45, -0.25, 0.3}), {0.3, -0.2, 1.3});
  std::vector<double> corrected_err, raw_err;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(700 + seed);
    const auto cloud =
        synth::raycast_target_cloud(target, lidar_from_board, 8000, 0.002, 0.008, rng);
    HoleExtractionDiagnostics diag;
    const auto centers = extract_hole_centers_lidar(cloud, target, &diag);
    double ce = 0.0, re = 0.0;
    for (int i = 0; i < 4; ++i) {
      const Eigen::Vector3d truth = lidar_from_board * target.hole_centers[i];
      ce += (centers[i] - truth).norm();
      re += (diag.ellipse_centers[i] - truth).norm();
    }
    corrected_err.push_back(ce / 4.0);
    raw_err.push_back(re / 4.0);
    CHECK(diag.edge_dilation > 0.0);  // widened edges must show up as positive
  }
  std::sort(corrected_err.begin(), corrected_err.end());
  std::sort(raw_err.begin(), raw_err.end());
  CHECK(corrected_err[10] <= raw_err[10]);
}

TEST_CASE("colorize assigns board cell colors through the calibration") {
  const FisheyeIntrinsics intr = synth::true_intrinsics();
  const Pose camera_from_lidar(Rotation::exp({0.02, -0.03, 0.01}), {0.01, -0.02, 0.04});

  // Checkerboard plane z = 1.5 in the camera frame; color by cell parity.
  const double cell = 0.1;
  const auto cell_color = [&](double x, double y) -> std::array<std::uint8_t, 3> {
    const long cx = static_cast<long>(std::floor(x / cell));
    const long cy = static_cast<long>(std::floor(y / cell));
    return ((cx + cy) % 2 + 2) % 2 == 0 ? std::array<std::uint8_t, 3>{255, 255, 255}
                                        : std::array<std::uint8_t, 3>{20, 20, 20};
  };
  const ImageSampler sampler = [&](const Eigen::Vector2d& px)
      -> std::optional<std::array<std::uint8_t, 3>> {
    const Eigen::Vector3d ray = unproject_equidistant(px, intr);
    if (ray.z() <= 1e-6) return std::nullopt;
    const double s = 1.5 / ray.z();
    return cell_color(s * ray.x(), s * ray.y());
  };

  Rng rng(61);
  std::vector<Eigen::Vector3d> points;
  std::vector<std::array<std::uint8_t, 3>> expected;
  for (int i = 0; i < 2000; ++i) {
    const Eigen::Vector3d on_board(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 1.5);
    points.push_back(camera_from_lidar.inverse() * on_board);
    expected.push_back(cell_color(on_board.x(), on_board.y()));
  }
  const auto colored = colorize_cloud(points, sampler, camera_from_lidar, intr);
  int correct = 0, visible = 0;
  for (std::size_t i = 0; i < colored.size(); ++i) {
    if (!colored[i].colored) continue;
    ++visible;
    if (colored[i].rgb == expected[i]) ++correct;
  }
  REQUIRE(visible > 1900);
  CHECK(static_cast<double>(correct) / visible >= 0.99);

  // A point on the optical axis takes the color at the principal point.
  const Eigen::Vector3d axis_point = camera_from_lidar.inverse() * Eigen::Vector3d(0, 0, 2.0);
  const auto axis = colorize_cloud({axis_point}, sampler, camera_from_lidar, intr);
  REQUIRE(axis[0].colored);
  const Eigen::Vector3d pp_ray = unproject_equidistant({intr.cx, intr.cy}, intr);
  const double s = 1.5 / pp_ray.z();
  CHECK(axis[0].rgb == cell_color(s * pp_ray.x(), s * pp_ray.y()));

  // A point behind the camera stays uncolored.
  const Eigen::Vector3d behind = camera_from_lidar.inverse() * Eigen::Vector3d(0, 0, -1.0);
  const auto back = colorize_cloud({behind}, sampler, camera_from_lidar, intr);
  CHECK(!back[0].colored);
}
