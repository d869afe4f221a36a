#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "riglab/nav_state.hpp"
#include "riglab/pose.hpp"
#include "riglab/rng.hpp"
#include "riglab/so3.hpp"
#include "riglab/trajectory_csv.hpp"

using namespace riglab;

namespace {

Eigen::Vector3d random_axis_angle(Rng& rng, double max_norm) {
  Eigen::Vector3d axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
  while (axis.norm() < 1e-6) {
    axis = Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian());
  }
  return axis.normalized() * rng.uniform(0.0, max_norm);
}

Rotation random_rotation(Rng& rng) {
  return so3_exp(random_axis_angle(rng, M_PI - 1e-3));
}

Pose random_pose(Rng& rng, double translation_scale = 1.0) {
  return Pose(random_rotation(rng),
              translation_scale * Eigen::Vector3d(rng.gaussian(), rng.gaussian(),
                                                  rng.gaussian()));
}

NavState random_state(Rng& rng) {
  NavState x;
  x.attitude = random_rotation(rng);
  x.position = Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian());
  x.velocity = Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian());
  x.gyro_bias = 0.01 * Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian());
  x.accel_bias = 0.1 * Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian());
  x.gravity += 0.1 * Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian());
  x.extrinsic_rotation = random_rotation(rng);
  x.extrinsic_translation =
      0.1 * Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian());
  return x;
}

double rotation_distance(const Rotation& a, const Rotation& b) {
  return (a.inverse() * b).log().norm();
}

}  // namespace

TEST_CASE("so3_exp basics") {
  CHECK(so3_exp(Eigen::Vector3d::Zero()).matrix().isApprox(Eigen::Matrix3d::Identity()));

  const Rotation r = so3_exp(Eigen::Vector3d(0, 0, M_PI_2));
  CHECK((r * Eigen::Vector3d::UnitX() - Eigen::Vector3d::UnitY()).norm() < 1e-12);

  CHECK_THROWS(so3_exp_matrix(Eigen::Vector3d(std::nan(""), 0, 0)));
}

TEST_CASE("so3_log basics") {
  CHECK(so3_log(Rotation()).norm() == 0.0);
  const Eigen::Vector3d w = so3_log(so3_exp(Eigen::Vector3d(0, 0, 0.3)));
  CHECK((w - Eigen::Vector3d(0, 0, 0.3)).norm() < 1e-12);
}

TEST_CASE("so3 exp/log round-trips") {
  Rng rng(11);
  double worst_w = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d w = random_axis_angle(rng, M_PI - 1e-3);
    worst_w = std::max(worst_w, (so3_log(so3_exp(w)) - w).norm());
  }
  CHECK(worst_w < 1e-9);

  double worst_r = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Rotation r = random_rotation(rng);
    worst_r = std::max(worst_r, rotation_distance(so3_exp(so3_log(r)), r));
  }
  CHECK(worst_r < 1e-9);
}

TEST_CASE("so3_log near-pi branch is stable") {
  Rng rng(12);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    Eigen::Vector3d axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
    axis.normalize();
    const double angle = M_PI - rng.uniform(0.0, 1e-4);
    const Eigen::Vector3d w = axis * angle;
    const Eigen::Vector3d back = so3_log(so3_exp(w));
    worst = std::max(worst, std::min((back - w).norm(), (back + w).norm()));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("right Jacobian matches directional derivative of exp") {
  Rng rng(13);
  const double h = 1e-6;
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector3d w = random_axis_angle(rng, 2.5);
    const Eigen::Vector3d d = random_axis_angle(rng, 1.0);
    // exp(w + h d) vs exp(w) exp(h Jr(w) d)
    const Eigen::Matrix3d lhs = so3_exp_matrix(w + h * d);
    const Eigen::Matrix3d rhs =
        so3_exp_matrix(w) * so3_exp_matrix(h * (so3_right_jacobian(w) * d));
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("boxplus identity and vector shift") {
  Rng rng(21);
  const NavState x = random_state(rng);
  const NavState same = boxplus(x, ErrorVector::Zero());
  CHECK(boxminus(same, x).norm() < 1e-15);

  ErrorVector d = ErrorVector::Zero();
  d.segment<3>(kErrPos) = Eigen::Vector3d(0.5, -1.0, 2.0);
  const NavState shifted = boxplus(x, d);
  CHECK((shifted.position - x.position - Eigen::Vector3d(0.5, -1.0, 2.0)).norm() < 1e-15);
  CHECK(rotation_distance(shifted.attitude, x.attitude) < 1e-15);
}

TEST_CASE("boxplus/boxminus round-trips") {
  Rng rng(22);
  double worst_fwd = 0.0;
  double worst_bwd = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const NavState x = random_state(rng);
    ErrorVector d;
    for (int k = 0; k < kErrDim; ++k) d[k] = rng.gaussian();
    d.segment<3>(kErrAtt) = random_axis_angle(rng, M_PI - 0.1);
    d.segment<3>(kErrExtRot) = random_axis_angle(rng, M_PI - 0.1);
    worst_fwd = std::max(worst_fwd,
                         (boxminus(boxplus(x, d), x) - d).cwiseAbs().maxCoeff());

    const NavState y = random_state(rng);
    const NavState y2 = boxplus(x, boxminus(y, x));
    worst_bwd = std::max(worst_bwd, boxminus(y2, y).cwiseAbs().maxCoeff());
  }
  CHECK(worst_fwd < 1e-9);
  CHECK(worst_bwd < 1e-9);
}

TEST_CASE("rotations stay orthonormal over 1e6 compositions") {
  Rng rng(31);
  Rotation r;
  const Rotation step = so3_exp(Eigen::Vector3d(1e-3, -2e-3, 3e-3));
  for (int i = 0; i < 1000000; ++i) r = r * step;
  const Eigen::Matrix3d m = r.matrix();
  CHECK((m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(std::abs(m.determinant() - 1.0) < 1e-6);
}

TEST_CASE("frame chain associativity") {
  Rng rng(32);
  for (int i = 0; i < 100; ++i) {
    const Pose g_t_i = random_pose(rng);
    const Pose i_t_l = random_pose(rng, 0.1);
    const Pose l_t_c = random_pose(rng, 0.1);
    const Pose a = (g_t_i * i_t_l) * l_t_c;
    const Pose b = g_t_i * (i_t_l * l_t_c);
    CHECK(rotation_distance(a.rotation, b.rotation) < 1e-12);
    CHECK((a.translation - b.translation).norm() < 1e-12);
  }
}

TEST_CASE("transform_point basics and composition") {
  CHECK((transform_point(Pose(), Eigen::Vector3d(1, 2, 3)) -
         Eigen::Vector3d(1, 2, 3)).norm() == 0.0);
  CHECK((transform_point(Pose(Rotation(), Eigen::Vector3d(1, 0, 0)),
                         Eigen::Vector3d::Zero()) -
         Eigen::Vector3d(1, 0, 0)).norm() == 0.0);

  Rng rng(33);
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng);
    const Pose b = random_pose(rng);
    const Eigen::Vector3d p(rng.gaussian(), rng.gaussian(), rng.gaussian());
    CHECK((a * (b * p) - (a * b) * p).norm() < 1e-12);
  }
}

TEST_CASE("pose inverse") {
  Rng rng(34);
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng);
    const Pose id = a * a.inverse();
    CHECK(rotation_distance(id.rotation, Rotation()) < 1e-12);
    CHECK(id.translation.norm() < 1e-12);
  }
}

TEST_CASE("Rotation::from_matrix rejects non-orthonormal input") {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 1) = 1e-6;
  CHECK_THROWS(Rotation::from_matrix(m));
  CHECK_THROWS(Rotation::from_matrix(-Eigen::Matrix3d::Identity()));
}

TEST_CASE("lidar_to_camera_trajectory") {
  Rng rng(41);
  Trajectory lidar;
  for (int i = 0; i < 50; ++i) {
    lidar.push_back({0.1 * i, random_pose(rng)});
  }

  FrameChain chain;
  SUBCASE("identity extrinsic is a no-op") {
    const Trajectory cam = lidar_to_camera_trajectory(lidar, chain);
    for (std::size_t i = 0; i < lidar.size(); ++i) {
      CHECK(cam[i].t == lidar[i].t);
      CHECK((cam[i].pose.translation - lidar[i].pose.translation).norm() == 0.0);
    }
  }

  SUBCASE("round-trip with inverse extrinsic") {
    chain.lidar_from_camera = random_pose(rng, 0.2);
    const Trajectory cam = lidar_to_camera_trajectory(lidar, chain);
    FrameChain inv;
    inv.lidar_from_camera = chain.lidar_from_camera.inverse();
    const Trajectory back = lidar_to_camera_trajectory(cam, inv);
    for (std::size_t i = 0; i < lidar.size(); ++i) {
      CHECK(rotation_distance(back[i].pose.rotation, lidar[i].pose.rotation) < 1e-12);
      CHECK((back[i].pose.translation - lidar[i].pose.translation).norm() < 1e-12);
    }
  }

  SUBCASE("non-monotone stamps rejected") {
    std::swap(lidar[3].t, lidar[4].t);
    CHECK_THROWS(lidar_to_camera_trajectory(lidar, chain));
  }
}

TEST_CASE("trajectory CSV round-trip") {
  Rng rng(42);
  Trajectory traj;
  for (int i = 0; i < 200; ++i) {
    traj.push_back({0.05 * i, random_pose(rng, 2.0)});
  }
  const std::string path =
      (std::filesystem::temp_directory_path() / "riglab_traj_test.csv").string();
  write_trajectory_csv(path, traj);
  const Trajectory back = read_trajectory_csv(path);
  REQUIRE(back.size() == traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    CHECK(std::abs(back[i].t - traj[i].t) < 1e-9);
    CHECK(rotation_distance(back[i].pose.rotation, traj[i].pose.rotation) < 1e-7);
    CHECK((back[i].pose.translation - traj[i].pose.translation).norm() < 1e-8);
  }
  std::filesystem::remove(path);
}

TEST_CASE("trajectory CSV parse errors carry file and line") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "riglab_bad_traj.csv";
  {
    std::FILE* f = std::fopen(path.string().c_str(), "w");
    std::fputs("timestamp_s,x,y,z,qx,qy,qz,qw\n0.0,0,0,bad,0,0,0,1\n", f);
    std::fclose(f);
  }
  try {
    read_trajectory_csv(path.string());
    CHECK(false);
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    CHECK(msg.find("riglab_bad_traj.csv") != std::string::npos);
    CHECK(msg.find(":2") != std::string::npos);
  }
  fs::remove(path);
}
