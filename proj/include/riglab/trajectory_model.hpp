// Analytic rig trajectory: a static settle interval, a C2 quintic ramp, then
// sum-of-sinusoids translation and axis-angle attitude wobble. Twice
// differentiable everywhere, so exact IMU signals are available in closed
// form.
#pragma once

#include <Eigen/Core>

#include "riglab/pose.hpp"

namespace riglab {

struct TrajectorySpec {
  double duration = 12.0;     // total, seconds
  double settle_time = 1.5;   // static lead-in (covers filter initialization)
  double ramp_time = 1.0;     // quintic blend from rest into full motion

  Eigen::Vector3d pos_amplitude = Eigen::Vector3d(0.169, 0.132, 0.066);  // m
  Eigen::Vector3d pos_freq_hz = Eigen::Vector3d(0.30, 0.40, 0.50);
  Eigen::Vector3d pos_phase = Eigen::Vector3d(0.0, 1.3, 2.1);

  Eigen::Vector3d rot_amplitude = Eigen::Vector3d(0.274, 0.353, 0.235);  // rad
  Eigen::Vector3d rot_freq_hz = Eigen::Vector3d(0.40, 0.30, 0.25);
  Eigen::Vector3d rot_phase = Eigen::Vector3d(0.7, 0.0, 1.9);

  static TrajectorySpec stationary(double duration) {
    TrajectorySpec s;
    s.duration = duration;
    s.pos_amplitude.setZero();
    s.rot_amplitude.setZero();
    return s;
  }
};

struct KinematicSample {
  Rotation attitude;        // global-from-body
  Eigen::Vector3d position;
  Eigen::Vector3d velocity;
  Eigen::Vector3d acceleration;  // world frame, gravity not included
  Eigen::Vector3d body_rate;     // rad/s, body frame
};

class TrajectoryModel {
 public:
  explicit TrajectoryModel(const TrajectorySpec& spec) : spec_(spec) {}

  // Throws std::out_of_range if t is outside [0, duration].
  KinematicSample sample(double t) const;

  Pose pose(double t) const {
    const KinematicSample k = sample(t);
    return Pose(k.attitude, k.position);
  }

  const TrajectorySpec& spec() const { return spec_; }

 private:
  TrajectorySpec spec_;
};

}  // namespace riglab
