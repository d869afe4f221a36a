// Point-to-plane measurement model and the iterated manifold EKF update.
//
// Residual for a LiDAR point p_L against a map plane (n, q):
//   r = n^T (G_R_I (I_R_L p_L + I_p_L) + G_p_I - q)
// with variance from both the point and the plane:
//   Sigma_r = n^T Sigma_Gp n + J_Pi Sigma_Pi J_Pi^T,
//   J_Pi = [(G_p - q)^T, -n^T].
// Inliers pass the scalar Mahalanobis gate r^2 / Sigma_r < tau.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "riglab/nav_state.hpp"
#include "riglab/voxel_map.hpp"

namespace riglab {

struct ResidualTerm {
  double r = 0.0;
  double sigma_r = 0.0;
  Eigen::Matrix<double, 1, kErrDim> H;
  int point_index = -1;
};

// Signed point-to-plane distance of p_L transformed by the state.
double residual(const NavState& x, const Eigen::Vector3d& p_L, const PlaneVoxel& plane);

// Sigma_point is the point covariance in the LiDAR frame; it is rotated into
// the global frame before projection onto the normal. Throws on asymmetric or
// negative-diagonal covariances.
double residual_covariance(const NavState& x, const Eigen::Vector3d& p_L,
                           const Eigen::Matrix3d& sigma_point, const PlaneVoxel& plane);

// Strict chi-square gate; throws if sigma_r is not positive.
bool gate(double r, double sigma_r, double tau);

// Analytic 1x24 row under the right-perturbation convention. Velocity, bias,
// and gravity columns are zero; nonzero blocks:
//   attitude:              -n^T R [s]x        with s = I_R_L p_L + I_p_L
//   position:               n^T
//   extrinsic rotation:    -n^T R I_R_L [p_L]x
//   extrinsic translation:  n^T R
Eigen::Matrix<double, 1, kErrDim> measurement_jacobian(const NavState& x,
                                                       const Eigen::Vector3d& p_L,
                                                       const PlaneVoxel& plane);

struct ScanPoint {
  Eigen::Vector3d position;  // LiDAR frame (undistorted to scan end)
  double variance = 0.0;     // isotropic, m^2
};

struct UpdateParams {
  double tau = 3.84;   // chi-square 1-dof 95%
  int max_iters = 5;
  double eps = 1e-4;   // convergence threshold on |delta x|
  int min_inliers = 20;
  double degeneracy_ratio = 1e-6;  // lambda_min/lambda_max of the pose info block
};

struct UpdateResult {
  NavState state;
  Covariance24 covariance;
  int iterations = 0;
  int inliers = 0;
  double residual_rms = 0.0;  // over inliers at the converged state
  bool degenerate = false;
  std::vector<std::uint8_t> inlier_mask;  // per input point, last iteration
};

// Iterated update: each iteration re-associates points against the map,
// rebuilds gated residuals, and solves the manifold step in information form
// (the boxminus prior is transported to the current iterate through the
// inverse right Jacobian). Fewer than min_inliers gated residuals leaves the
// prior untouched with the degenerate flag set; a rank-deficient pose
// information block (single-plane scans) applies the update but also flags
// degeneracy.
UpdateResult iterated_update(const NavState& x0, const Covariance24& P0,
                             const std::vector<ScanPoint>& points,
                             const VoxelPlaneMap& map, const UpdateParams& params);

}  // namespace riglab
