// Forward propagation of the 24-state filter: first-order discretization of
// the IMU-driven kinematics, its error-state Jacobian, discrete process
// noise, and static initialization from a stationary IMU buffer.
#pragma once

#include <utility>
#include <vector>

#include "riglab/nav_state.hpp"
#include "riglab/sensor_sim.hpp"

namespace riglab {

struct ImuNoiseConfig {
  double sigma_gyro = 1e-3;        // rad/s/sqrt(Hz)
  double sigma_accel = 1e-2;       // m/s^2/sqrt(Hz)
  double sigma_gyro_bias = 1e-5;   // rad/s^2/sqrt(Hz), bias random walk
  double sigma_accel_bias = 1e-4;  // m/s^3/sqrt(Hz)
};

// One Euler step of
//   R+ = R exp((w - b_w) dt),  p+ = p + v dt,  v+ = v + (R(a - b_a) + g) dt
// with all right-hand sides evaluated at the old state. Biases, gravity, and
// extrinsics pass through. dt must lie in (0, 0.1) s; larger gaps indicate a
// corrupt log and are rejected.
NavState propagate_state(const NavState& x, const ImuSample& u, double dt);

// Error-state transition F = d(x1' [-] x1)/d(x0' [-] x0) of the step above and
// discrete process noise Q_d (diagonal blocks sigma^2 * dt on attitude,
// velocity, and the two bias blocks).
std::pair<Covariance24, Covariance24> process_jacobians(const NavState& x,
                                                        const ImuSample& u, double dt,
                                                        const ImuNoiseConfig& noise);

// F P F^T + Q_d, explicitly symmetrized.
Covariance24 propagate_covariance(const Covariance24& P, const Covariance24& F,
                                  const Covariance24& Q_d);

struct InitialState {
  NavState state;
  Covariance24 covariance;
  Eigen::Vector3d mean_gyro;
  Eigen::Vector3d mean_accel;
};

// Averages a stationary buffer: b_w = mean gyro, g = -mean accel, attitude
// identity (the first IMU frame is the global frame), position/velocity zero.
// Throws std::runtime_error if the buffer spans < min_duration or the gyro
// spread indicates motion.
InitialState static_initialize(const std::vector<ImuSample>& buffer,
                               double min_duration = 1.0,
                               double max_gyro_spread = 0.05);

}  // namespace riglab
