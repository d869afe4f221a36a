// Full filter state and its 24-dimensional error-state parameterization.
//
// Error block layout (fixed; shared by propagation and update Jacobians):
//   [0:3)   attitude        (right perturbation on attitude)
//   [3:6)   position
//   [6:9)   velocity
//   [9:12)  gyro bias
//   [12:15) accel bias
//   [15:18) gravity
//   [18:21) extrinsic rotation (right perturbation on imu_from_lidar rotation)
//   [21:24) extrinsic translation
#pragma once

#include <Eigen/Core>

#include "riglab/pose.hpp"

namespace riglab {

inline constexpr int kErrAtt = 0;
inline constexpr int kErrPos = 3;
inline constexpr int kErrVel = 6;
inline constexpr int kErrGyroBias = 9;
inline constexpr int kErrAccelBias = 12;
inline constexpr int kErrGravity = 15;
inline constexpr int kErrExtRot = 18;
inline constexpr int kErrExtPos = 21;
inline constexpr int kErrDim = 24;

using ErrorVector = Eigen::Matrix<double, kErrDim, 1>;
using Covariance24 = Eigen::Matrix<double, kErrDim, kErrDim>;

struct NavState {
  Rotation attitude;                                        // global-from-imu
  Eigen::Vector3d position = Eigen::Vector3d::Zero();       // m
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();       // m/s
  Eigen::Vector3d gyro_bias = Eigen::Vector3d::Zero();      // rad/s
  Eigen::Vector3d accel_bias = Eigen::Vector3d::Zero();     // m/s^2
  Eigen::Vector3d gravity = Eigen::Vector3d(0, 0, -9.81);   // m/s^2, world
  Rotation extrinsic_rotation;                              // imu-from-lidar
  Eigen::Vector3d extrinsic_translation = Eigen::Vector3d::Zero();  // m

  Pose imu_pose() const { return Pose(attitude, position); }
  Pose imu_from_lidar() const {
    return Pose(extrinsic_rotation, extrinsic_translation);
  }
  Pose lidar_pose() const { return imu_pose() * imu_from_lidar(); }
};

// Right-perturbed retraction, block order as above.
inline NavState boxplus(const NavState& x, const ErrorVector& delta) {
  if (!delta.allFinite()) {
    throw std::invalid_argument("boxplus: non-finite delta");
  }
  NavState out = x;
  out.attitude = x.attitude * Rotation::exp(delta.segment<3>(kErrAtt));
  out.position += delta.segment<3>(kErrPos);
  out.velocity += delta.segment<3>(kErrVel);
  out.gyro_bias += delta.segment<3>(kErrGyroBias);
  out.accel_bias += delta.segment<3>(kErrAccelBias);
  out.gravity += delta.segment<3>(kErrGravity);
  out.extrinsic_rotation =
      x.extrinsic_rotation * Rotation::exp(delta.segment<3>(kErrExtRot));
  out.extrinsic_translation += delta.segment<3>(kErrExtPos);
  return out;
}

// Inverse of boxplus under the same layout: boxminus(boxplus(x, d), x) = d.
inline ErrorVector boxminus(const NavState& x1, const NavState& x2) {
  ErrorVector d;
  d.segment<3>(kErrAtt) = (x2.attitude.inverse() * x1.attitude).log();
  d.segment<3>(kErrPos) = x1.position - x2.position;
  d.segment<3>(kErrVel) = x1.velocity - x2.velocity;
  d.segment<3>(kErrGyroBias) = x1.gyro_bias - x2.gyro_bias;
  d.segment<3>(kErrAccelBias) = x1.accel_bias - x2.accel_bias;
  d.segment<3>(kErrGravity) = x1.gravity - x2.gravity;
  d.segment<3>(kErrExtRot) =
      (x2.extrinsic_rotation.inverse() * x1.extrinsic_rotation).log();
  d.segment<3>(kErrExtPos) = x1.extrinsic_translation - x2.extrinsic_translation;
  return d;
}

}  // namespace riglab
