#include "riglab/measurement_update.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

#include "riglab/so3.hpp"

namespace riglab {

double residual(const NavState& x, const Eigen::Vector3d& p_L, const PlaneVoxel& plane) {
  const Eigen::Vector3d p_global = x.lidar_pose() * p_L;
  return plane.normal.dot(p_global - plane.point);
}

double residual_covariance(const NavState& x, const Eigen::Vector3d& p_L,
                           const Eigen::Matrix3d& sigma_point, const PlaneVoxel& plane) {
  if ((sigma_point - sigma_point.transpose()).cwiseAbs().maxCoeff() > 1e-9 ||
      sigma_point.diagonal().minCoeff() < 0.0) {
    throw std::invalid_argument("residual_covariance: point covariance not PSD");
  }
  if ((plane.sigma - plane.sigma.transpose()).cwiseAbs().maxCoeff() > 1e-9 ||
      plane.sigma.diagonal().minCoeff() < -1e-12) {
    throw std::invalid_argument("residual_covariance: plane covariance not PSD");
  }
  const Eigen::Matrix3d rot = (x.attitude * x.extrinsic_rotation).matrix();
  const Eigen::Matrix3d sigma_global = rot * sigma_point * rot.transpose();
  const double point_term = plane.normal.dot(sigma_global * plane.normal);

  const Eigen::Vector3d p_global = x.lidar_pose() * p_L;
  Eigen::Matrix<double, 1, 6> j_pi;
  j_pi << (p_global - plane.point).transpose(), -plane.normal.transpose();
  const double plane_term = j_pi * plane.sigma * j_pi.transpose();
  const double var = point_term + plane_term;
  if (!(var >= 0.0)) {
    throw std::invalid_argument("residual_covariance: negative variance");
  }
  return var;
}

bool gate(double r, double sigma_r, double tau) {
  if (!(sigma_r > 0.0)) {
    throw std::invalid_argument("gate: sigma_r must be positive");
  }
  return r * r / sigma_r < tau;
}

Eigen::Matrix<double, 1, kErrDim> measurement_jacobian(const NavState& x,
                                                       const Eigen::Vector3d& p_L,
                                                       const PlaneVoxel& plane) {
  const Eigen::Matrix3d R = x.attitude.matrix();
  const Eigen::Matrix3d R_ext = x.extrinsic_rotation.matrix();
  const Eigen::Vector3d s = R_ext * p_L + x.extrinsic_translation;
  const Eigen::RowVector3d nT = plane.normal.transpose();

  Eigen::Matrix<double, 1, kErrDim> H = Eigen::Matrix<double, 1, kErrDim>::Zero();
  H.segment<3>(kErrAtt) = -nT * R * skew(s);
  H.segment<3>(kErrPos) = nT;
  H.segment<3>(kErrExtRot) = -nT * R * R_ext * skew(p_L);
  H.segment<3>(kErrExtPos) = nT * R;
  return H;
}

namespace {

// Columns of H that can be nonzero: attitude, position, extrinsics.
constexpr int kActive = 12;

Eigen::Matrix<double, kActive, 1> compress_row(
    const Eigen::Matrix<double, 1, kErrDim>& H) {
  Eigen::Matrix<double, kActive, 1> h;
  h.segment<6>(0) = H.segment<6>(kErrAtt).transpose();
  h.segment<6>(6) = H.segment<6>(kErrExtRot).transpose();
  return h;
}

// Scatters the compressed information matrix/vector into the full error space.
void scatter(const Eigen::Matrix<double, kActive, kActive>& M12,
             const Eigen::Matrix<double, kActive, 1>& b12, Covariance24& M,
             ErrorVector& b) {
  M.setZero();
  b.setZero();
  M.block<6, 6>(kErrAtt, kErrAtt) = M12.block<6, 6>(0, 0);
  M.block<6, 6>(kErrAtt, kErrExtRot) = M12.block<6, 6>(0, 6);
  M.block<6, 6>(kErrExtRot, kErrAtt) = M12.block<6, 6>(6, 0);
  M.block<6, 6>(kErrExtRot, kErrExtRot) = M12.block<6, 6>(6, 6);
  b.segment<6>(kErrAtt) = b12.segment<6>(0);
  b.segment<6>(kErrExtRot) = b12.segment<6>(6);
}

// Prior-transport Jacobian J = d((x_k boxplus d) boxminus x_hat)/dd at d = 0:
// inverse right Jacobian of the rotation errors, identity elsewhere.
Covariance24 prior_transport(const ErrorVector& x_tilde) {
  Covariance24 J = Covariance24::Identity();
  J.block<3, 3>(kErrAtt, kErrAtt) =
      so3_right_jacobian_inverse(x_tilde.segment<3>(kErrAtt));
  J.block<3, 3>(kErrExtRot, kErrExtRot) =
      so3_right_jacobian_inverse(x_tilde.segment<3>(kErrExtRot));
  return J;
}

// The active-column block of the transported prior covariance, used for the
// innovation variance in the gate.
Eigen::Matrix<double, kActive, kActive> gather_active(const Covariance24& P) {
  Eigen::Matrix<double, kActive, kActive> P12;
  P12.block<6, 6>(0, 0) = P.block<6, 6>(kErrAtt, kErrAtt);
  P12.block<6, 6>(0, 6) = P.block<6, 6>(kErrAtt, kErrExtRot);
  P12.block<6, 6>(6, 0) = P.block<6, 6>(kErrExtRot, kErrAtt);
  P12.block<6, 6>(6, 6) = P.block<6, 6>(kErrExtRot, kErrExtRot);
  return P12;
}

}  // namespace

UpdateResult iterated_update(const NavState& x0, const Covariance24& P0,
                             const std::vector<ScanPoint>& points,
                             const VoxelPlaneMap& map, const UpdateParams& params) {
  UpdateResult out;
  out.state = x0;
  out.covariance = P0;
  out.inlier_mask.assign(points.size(), 0);

  NavState x = x0;
  Covariance24 P_hat = P0;
  Covariance24 M;            // H^T R^-1 H at the last iterate
  bool have_update = false;

  for (int iter = 0; iter < params.max_iters; ++iter) {
    out.iterations = iter + 1;

    // Transport the prior to the current iterate.
    const ErrorVector x_tilde = boxminus(x, x0);
    const Covariance24 J = prior_transport(x_tilde);
    const Covariance24 J_inv = J.inverse();
    P_hat = J_inv * P0 * J_inv.transpose();
    P_hat = 0.5 * (P_hat + P_hat.transpose());
    const Eigen::Matrix<double, kActive, kActive> P12 = gather_active(P_hat);

    const Pose lidar_pose = x.lidar_pose();
    Eigen::Matrix<double, kActive, kActive> M12;
    Eigen::Matrix<double, kActive, 1> b12;
    M12.setZero();
    b12.setZero();
    int inliers = 0;
    double sq_sum = 0.0;
    std::fill(out.inlier_mask.begin(), out.inlier_mask.end(), 0);

    for (std::size_t i = 0; i < points.size(); ++i) {
      const ScanPoint& sp = points[i];
      const Eigen::Vector3d p_global = lidar_pose * sp.position;
      const auto plane = map.query_plane(p_global);
      if (!plane) continue;
      const double r = plane->normal.dot(p_global - plane->point);
      const double var = residual_covariance(
          x, sp.position, sp.variance * Eigen::Matrix3d::Identity(), *plane);
      const auto H = measurement_jacobian(x, sp.position, *plane);
      const Eigen::Matrix<double, kActive, 1> h = compress_row(H);
      // Gate on the innovation variance: under the prior the residual has
      // variance H P_hat H^T + Sigma_r, so the chi-square test stays
      // calibrated whether the prior is tight or loose.
      const double innovation_var = var + h.dot(P12 * h);
      if (!gate(r, innovation_var, params.tau)) continue;
      const double w = 1.0 / var;
      M12.noalias() += w * h * h.transpose();
      b12.noalias() += (w * r) * h;
      out.inlier_mask[i] = 1;
      ++inliers;
      sq_sum += r * r;
    }

    out.inliers = inliers;
    out.residual_rms = inliers > 0 ? std::sqrt(sq_sum / inliers) : 0.0;

    if (inliers < params.min_inliers) {
      // Not enough evidence: keep the prior, flag, and bail out.
      out.state = x0;
      out.covariance = P0;
      out.degenerate = true;
      return out;
    }

    ErrorVector b;
    scatter(M12, b12, M, b);

    // Degeneracy of the 6-dof pose information block.
    const Eigen::Matrix<double, 6, 6> pose_info = M12.block<6, 6>(0, 0);
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(pose_info);
    const double lam_max = eig.eigenvalues().maxCoeff();
    if (lam_max <= 0.0 ||
        eig.eigenvalues().minCoeff() < params.degeneracy_ratio * lam_max) {
      out.degenerate = true;
    }

    const Eigen::LDLT<Covariance24> prior_ldlt(P_hat);
    const Covariance24 P_hat_inv = prior_ldlt.solve(Covariance24::Identity());
    // MAP normal equations: (P_hat^-1 + M) delta = -(b + P_hat^-1 J^-1 x_tilde),
    // the classic -K z - (I - K H) J^-1 x_tilde step in information form.
    const ErrorVector g = J_inv * x_tilde;

    const Covariance24 S = 0.5 * ((M + P_hat_inv) + (M + P_hat_inv).transpose());
    const Eigen::LDLT<Covariance24> s_ldlt(S);
    const ErrorVector delta = -s_ldlt.solve(b + P_hat_inv * g);

    x = boxplus(x, delta);
    have_update = true;

    if (delta.norm() < params.eps) break;
  }

  // Posterior covariance with last-iteration Jacobians: P = (I - K H) P_hat
  // where K H = (M + P_hat^-1)^-1 M.
  if (have_update) {
    const Eigen::LDLT<Covariance24> prior_ldlt(P_hat);
    const Covariance24 P_hat_inv = prior_ldlt.solve(Covariance24::Identity());
    const Covariance24 S = M + P_hat_inv;
    const Eigen::LDLT<Covariance24> s_ldlt(0.5 * (S + S.transpose()));
    const Covariance24 KH = s_ldlt.solve(M);
    Covariance24 P_post = (Covariance24::Identity() - KH) * P_hat;
    out.covariance = 0.5 * (P_post + P_post.transpose());
    out.state = x;
  }
  return out;
}

}  // namespace riglab
