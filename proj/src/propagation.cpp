#include "riglab/propagation.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "riglab/so3.hpp"

namespace riglab {

NavState propagate_state(const NavState& x, const ImuSample& u, double dt) {
  if (!(dt > 0.0) || !(dt < 0.1)) {
    throw std::invalid_argument("propagate_state: dt must lie in (0, 0.1) s, got " +
                                std::to_string(dt));
  }
  const Eigen::Vector3d w = u.gyro - x.gyro_bias;
  const Eigen::Vector3d a = u.accel - x.accel_bias;
  NavState out = x;
  out.attitude = x.attitude * so3_exp(w * dt);
  out.position = x.position + x.velocity * dt;
  out.velocity = x.velocity + (x.attitude.matrix() * a + x.gravity) * dt;
  return out;
}

std::pair<Covariance24, Covariance24> process_jacobians(const NavState& x,
                                                        const ImuSample& u, double dt,
                                                        const ImuNoiseConfig& noise) {
  const Eigen::Vector3d w = u.gyro - x.gyro_bias;
  const Eigen::Vector3d a = u.accel - x.accel_bias;
  const Eigen::Matrix3d R = x.attitude.matrix();
  const Eigen::Matrix3d I3 = Eigen::Matrix3d::Identity();

  Covariance24 F = Covariance24::Identity();
  F.block<3, 3>(kErrAtt, kErrAtt) = so3_exp_matrix(w * dt).transpose();
  F.block<3, 3>(kErrAtt, kErrGyroBias) = -so3_right_jacobian(w * dt) * dt;
  F.block<3, 3>(kErrPos, kErrVel) = I3 * dt;
  F.block<3, 3>(kErrVel, kErrAtt) = -R * skew(a) * dt;
  F.block<3, 3>(kErrVel, kErrAccelBias) = -R * dt;
  F.block<3, 3>(kErrVel, kErrGravity) = I3 * dt;

  Covariance24 Q = Covariance24::Zero();
  const auto sq = [](double v) { return v * v; };
  Q.block<3, 3>(kErrAtt, kErrAtt) = sq(noise.sigma_gyro) * dt * I3;
  Q.block<3, 3>(kErrVel, kErrVel) = sq(noise.sigma_accel) * dt * I3;
  Q.block<3, 3>(kErrGyroBias, kErrGyroBias) = sq(noise.sigma_gyro_bias) * dt * I3;
  Q.block<3, 3>(kErrAccelBias, kErrAccelBias) = sq(noise.sigma_accel_bias) * dt * I3;
  return {F, Q};
}

Covariance24 propagate_covariance(const Covariance24& P, const Covariance24& F,
                                  const Covariance24& Q_d) {
  Covariance24 out = F * P * F.transpose() + Q_d;
  return 0.5 * (out + out.transpose());
}

InitialState static_initialize(const std::vector<ImuSample>& buffer,
                               double min_duration, double max_gyro_spread) {
  if (buffer.size() < 2) {
    throw std::runtime_error("static_initialize: buffer too small");
  }
  const double span = buffer.back().t - buffer.front().t;
  if (span < min_duration) {
    throw std::runtime_error("static_initialize: buffer spans " +
                             std::to_string(span) + " s, need " +
                             std::to_string(min_duration));
  }
  Eigen::Vector3d mean_gyro = Eigen::Vector3d::Zero();
  Eigen::Vector3d mean_accel = Eigen::Vector3d::Zero();
  for (const ImuSample& s : buffer) {
    mean_gyro += s.gyro;
    mean_accel += s.accel;
  }
  mean_gyro /= static_cast<double>(buffer.size());
  mean_accel /= static_cast<double>(buffer.size());

  double spread = 0.0;
  for (const ImuSample& s : buffer) {
    spread = std::max(spread, (s.gyro - mean_gyro).norm());
  }
  if (spread > max_gyro_spread) {
    throw std::runtime_error("static_initialize: motion detected (gyro spread " +
                             std::to_string(spread) + " rad/s)");
  }

  InitialState init;
  init.mean_gyro = mean_gyro;
  init.mean_accel = mean_accel;
  init.state = NavState();  // identity attitude: first IMU frame is global
  init.state.position.setZero();
  init.state.velocity.setZero();
  init.state.gyro_bias = mean_gyro;
  init.state.accel_bias.setZero();
  init.state.gravity = -mean_accel;

  init.covariance = Covariance24::Zero();
  const auto sq = [](double v) { return v * v; };
  const Eigen::Matrix3d I3 = Eigen::Matrix3d::Identity();
  init.covariance.block<3, 3>(kErrAtt, kErrAtt) = sq(1e-4) * I3;
  // Position and velocity are exact by construction (they define the frame).
  init.covariance.block<3, 3>(kErrGyroBias, kErrGyroBias) = sq(1e-3) * I3;
  init.covariance.block<3, 3>(kErrAccelBias, kErrAccelBias) = sq(1e-3) * I3;
  init.covariance.block<3, 3>(kErrGravity, kErrGravity) = sq(1e-2) * I3;
  init.covariance.block<3, 3>(kErrExtRot, kErrExtRot) = sq(1e-6) * I3;
  init.covariance.block<3, 3>(kErrExtPos, kErrExtPos) = sq(1e-6) * I3;
  return init;
}

}  // namespace riglab
