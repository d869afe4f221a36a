// Rotation and rigid pose types shared by the whole stack.
//
// Rotation keeps a 3x3 orthonormal matrix and a composition counter; after
// 1000 composed updates the matrix is re-projected onto SO(3) (polar
// projection) to bound numeric drift.
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <stdexcept>

#include "riglab/so3.hpp"

namespace riglab {

class Rotation {
 public:
  Rotation() : m_(Eigen::Matrix3d::Identity()) {}

  static Rotation identity() { return Rotation(); }

  // Validates orthonormality (R^T R = I, det = +1) to 1e-9.
  static Rotation from_matrix(const Eigen::Matrix3d& m) {
    const double ortho = (m.transpose() * m - Eigen::Matrix3d::Identity())
                             .cwiseAbs()
                             .maxCoeff();
    if (!(ortho < 1e-9) || std::abs(m.determinant() - 1.0) > 1e-9) {
      throw std::invalid_argument("Rotation::from_matrix: not orthonormal");
    }
    return Rotation(m, 0);
  }

  static Rotation exp(const Eigen::Vector3d& omega) {
    return Rotation(so3_exp_matrix(omega), 0);
  }

  static Rotation from_quaternion(const Eigen::Quaterniond& q) {
    return Rotation(q.normalized().toRotationMatrix(), 0);
  }

  Eigen::Vector3d log() const { return so3_log_matrix(m_); }

  Rotation operator*(const Rotation& rhs) const {
    Rotation out(m_ * rhs.m_, std::max(compositions_, rhs.compositions_) + 1);
    if (out.compositions_ >= kReorthonormalizeEvery) out.polar_project();
    return out;
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& v) const { return m_ * v; }

  Rotation inverse() const { return Rotation(m_.transpose(), compositions_); }

  const Eigen::Matrix3d& matrix() const { return m_; }

  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(m_); }

  bool isApprox(const Rotation& o, double tol = 1e-12) const {
    return m_.isApprox(o.m_, tol);
  }

  static constexpr int kReorthonormalizeEvery = 1000;

 private:
  Rotation(const Eigen::Matrix3d& m, int compositions)
      : m_(m), compositions_(compositions) {}

  void polar_project() {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(
        m_, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = svd.matrixU();
    Eigen::Matrix3d v = svd.matrixV();
    if ((u * v.transpose()).determinant() < 0.0) u.col(2) = -u.col(2);
    m_ = u * v.transpose();
    compositions_ = 0;
  }

  Eigen::Matrix3d m_;
  int compositions_ = 0;
};

inline Rotation so3_exp(const Eigen::Vector3d& omega) {
  return Rotation::exp(omega);
}

inline Eigen::Vector3d so3_log(const Rotation& r) { return r.log(); }

struct Pose {
  Rotation rotation;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Pose() = default;
  Pose(const Rotation& r, const Eigen::Vector3d& t)
      : rotation(r), translation(t) {}

  static Pose identity() { return Pose(); }

  Pose operator*(const Pose& rhs) const {
    return Pose(rotation * rhs.rotation,
                rotation * rhs.translation + translation);
  }

  Pose inverse() const {
    const Rotation rinv = rotation.inverse();
    return Pose(rinv, -(rinv * translation));
  }

  // p_out = R p + t
  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }
};

inline Eigen::Vector3d transform_point(const Pose& t, const Eigen::Vector3d& p) {
  return t * p;
}

// Fixed transforms connecting the sensor frames. imu_from_lidar is factory
// calibration, lidar_from_camera comes out of the extrinsic calibration
// solver, lidar_from_tcp is set by the mechanical design.
struct FrameChain {
  Pose imu_from_lidar;
  Pose lidar_from_camera;
  Pose lidar_from_tcp;

  Pose imu_from_camera() const { return imu_from_lidar * lidar_from_camera; }
};

}  // namespace riglab
