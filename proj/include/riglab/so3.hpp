// SO(3) primitives: hat map, exponential/logarithm, right Jacobian.
#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

namespace riglab {

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  // clang-format off
  s <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

// Rodrigues formula; series expansion below 1e-8 rad.
inline Eigen::Matrix3d so3_exp_matrix(const Eigen::Vector3d& omega) {
  if (!omega.allFinite()) {
    throw std::invalid_argument("so3_exp: non-finite rotation vector");
  }
  const double theta = omega.norm();
  const Eigen::Matrix3d k = skew(omega);
  if (theta < 1e-8) {
    return Eigen::Matrix3d::Identity() + k + 0.5 * k * k;
  }
  const double s = std::sin(theta) / theta;
  const double c = (1.0 - std::cos(theta)) / (theta * theta);
  return Eigen::Matrix3d::Identity() + s * k + c * k * k;
}

// Principal axis-angle, |result| <= pi. Near pi the axis is recovered from
// the symmetric part R + R^T which stays well conditioned.
inline Eigen::Vector3d so3_log_matrix(const Eigen::Matrix3d& r) {
  const double trace = r.trace();
  const double cos_theta = std::clamp((trace - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  const Eigen::Vector3d antisym(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0),
                                r(1, 0) - r(0, 1));
  if (theta < 1e-8) {
    return 0.5 * antisym;
  }
  if (theta > M_PI - 1e-4) {
    // B = (R + R^T)/2 = I + (1-cos)*K^2 with K = skew(axis); diagonal gives
    // axis magnitudes, antisymmetric part (or largest component) fixes signs.
    const Eigen::Matrix3d b = 0.5 * (r + r.transpose());
    const double one_minus_cos = 1.0 - cos_theta;
    Eigen::Vector3d axis;
    for (int i = 0; i < 3; ++i) {
      const double sq = 1.0 + (b(i, i) - 1.0) / one_minus_cos;
      axis[i] = std::sqrt(std::max(sq, 0.0));
    }
    int imax = 0;
    axis.maxCoeff(&imax);
    // off-diagonal of B gives relative signs: B_ij = (1-cos)*a_i*a_j
    for (int i = 0; i < 3; ++i) {
      if (i == imax) continue;
      if (b(i, imax) < 0.0) axis[i] = -axis[i];
    }
    // overall sign from the antisymmetric part, sin(theta) >= 0 for theta<=pi
    if (antisym.dot(axis) < 0.0) axis = -axis;
    return theta * axis.normalized();
  }
  return (theta / (2.0 * std::sin(theta))) * antisym;
}

// J_r(phi): exp(phi + d) = exp(phi) * exp(J_r(phi) d) to first order.
inline Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d k = skew(phi);
  if (theta < 1e-7) {
    return Eigen::Matrix3d::Identity() - 0.5 * k + (1.0 / 6.0) * k * k;
  }
  const double t2 = theta * theta;
  const double a = (1.0 - std::cos(theta)) / t2;
  const double b = (theta - std::sin(theta)) / (t2 * theta);
  return Eigen::Matrix3d::Identity() - a * k + b * k * k;
}

// Closed-form inverse of J_r: log(exp(phi) exp(d)) = phi + J_r(phi)^-1 d to
// first order.
inline Eigen::Matrix3d so3_right_jacobian_inverse(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d k = skew(phi);
  if (theta < 1e-7) {
    return Eigen::Matrix3d::Identity() + 0.5 * k + (1.0 / 12.0) * k * k;
  }
  const double half = 0.5 * theta;
  const double cot = std::cos(half) / std::sin(half);
  const double b = (1.0 - half * cot) / (theta * theta);
  return Eigen::Matrix3d::Identity() + 0.5 * k + b * k * k;
}

}  // namespace riglab
