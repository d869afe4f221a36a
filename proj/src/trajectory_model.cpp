#include "riglab/trajectory_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "riglab/so3.hpp"

namespace riglab {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Quintic smoothstep and derivatives on u in [0,1]; C2 at both ends.
void smoothstep5(double u, double& s, double& ds, double& dds) {
  if (u <= 0.0) {
    s = ds = dds = 0.0;
    return;
  }
  if (u >= 1.0) {
    s = 1.0;
    ds = dds = 0.0;
    return;
  }
  const double u2 = u * u;
  const double u3 = u2 * u;
  s = u3 * (10.0 - 15.0 * u + 6.0 * u2);
  ds = 30.0 * u2 * (1.0 - 2.0 * u + u2);
  dds = 60.0 * u * (1.0 - 3.0 * u + 2.0 * u2);
}

struct Sinusoid {
  Eigen::Vector3d value;
  Eigen::Vector3d d1;
  Eigen::Vector3d d2;
};

Sinusoid eval_sinusoid(const Eigen::Vector3d& amp, const Eigen::Vector3d& freq_hz,
                       const Eigen::Vector3d& phase, double tau) {
  Sinusoid out;
  for (int i = 0; i < 3; ++i) {
    const double w = kTwoPi * freq_hz[i];
    const double arg = w * tau + phase[i];
    out.value[i] = amp[i] * std::sin(arg);
    out.d1[i] = amp[i] * w * std::cos(arg);
    out.d2[i] = -amp[i] * w * w * std::sin(arg);
  }
  return out;
}

}  // namespace

KinematicSample TrajectoryModel::sample(double t) const {
  if (t < 0.0 || t > spec_.duration) {
    throw std::out_of_range("TrajectoryModel: t=" + std::to_string(t) +
                            " outside [0, " + std::to_string(spec_.duration) + "]");
  }

  const double tau = t - spec_.settle_time;
  double s = 0.0, ds = 0.0, dds = 0.0;
  if (tau > 0.0 && spec_.ramp_time > 0.0) {
    const double u = tau / spec_.ramp_time;
    smoothstep5(u, s, ds, dds);
    ds /= spec_.ramp_time;
    dds /= spec_.ramp_time * spec_.ramp_time;
  } else if (tau > 0.0) {
    s = 1.0;
  }

  KinematicSample k;
  if (tau <= 0.0) {
    k.attitude = Rotation();
    k.position.setZero();
    k.velocity.setZero();
    k.acceleration.setZero();
    k.body_rate.setZero();
    return k;
  }

  const Sinusoid p = eval_sinusoid(spec_.pos_amplitude, spec_.pos_freq_hz,
                                   spec_.pos_phase, tau);
  const Sinusoid th = eval_sinusoid(spec_.rot_amplitude, spec_.rot_freq_hz,
                                    spec_.rot_phase, tau);

  k.position = s * p.value;
  k.velocity = ds * p.value + s * p.d1;
  k.acceleration = dds * p.value + 2.0 * ds * p.d1 + s * p.d2;

  const Eigen::Vector3d theta = s * th.value;
  const Eigen::Vector3d theta_dot = ds * th.value + s * th.d1;
  k.attitude = so3_exp(theta);
  // Body rate for a right-trivialized axis-angle path: w = Jr(theta) * theta_dot.
  k.body_rate = so3_right_jacobian(theta) * theta_dot;
  return k;
}

}  // namespace riglab
