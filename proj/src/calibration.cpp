#include "riglab/calibration.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "riglab/solvers.hpp"

namespace riglab {

namespace {

// Parameter layout for the joint intrinsics solve:
// [f, cx, cy, k1..k4, then (rotation log, translation) per view].
constexpr int kIntrinsicParams = 7;

FisheyeIntrinsics unpack_intrinsics(const Eigen::VectorXd& x) {
  FisheyeIntrinsics intr;
  intr.f = x[0];
  intr.cx = x[1];
  intr.cy = x[2];
  intr.k1 = x[3];
  intr.k2 = x[4];
  intr.k3 = x[5];
  intr.k4 = x[6];
  return intr;
}

Pose unpack_view_pose(const Eigen::VectorXd& x, int view) {
  const int base = kIntrinsicParams + 6 * view;
  return Pose(Rotation::exp(x.segment<3>(base)), x.segment<3>(base + 3));
}

Eigen::VectorXd reprojection_residuals(const std::vector<CheckerboardView>& views,
                                       const Eigen::VectorXd& x, Eigen::Index total) {
  const FisheyeIntrinsics intr = unpack_intrinsics(x);
  Eigen::VectorXd r(2 * total);
  Eigen::Index row = 0;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const Pose pose = unpack_view_pose(x, static_cast<int>(v));
    for (const CornerObservation& c : views[v].corners) {
      const Eigen::Vector3d xc = pose * c.board_point;
      if (xc.norm() < 1e-12 || !(intr.f > 0.0)) {
        // Off-model candidate during damping retries; make it expensive.
        r[row++] = 1e6;
        r[row++] = 1e6;
        continue;
      }
      const Eigen::Vector2d px = project_equidistant(xc, intr);
      r[row++] = px.x() - c.pixel.x();
      r[row++] = px.y() - c.pixel.y();
    }
  }
  return r;
}

Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) = -u.col(2);
  return u * v.transpose();
}

// DLT homography board (x, y) -> undistorted image-plane coordinates, with
// Hartley normalization. Rank deficiency here means the view geometry cannot
// constrain a homography (e.g. collinear corners).
Eigen::Matrix3d fit_homography(const std::vector<Eigen::Vector2d>& src,
                               const std::vector<Eigen::Vector2d>& dst,
                               std::size_t view_index) {
  const auto normalizer = [](const std::vector<Eigen::Vector2d>& pts) {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    double scale = 0.0;
    for (const auto& p : pts) scale += (p - mean).norm();
    scale = std::sqrt(2.0) * static_cast<double>(pts.size()) / std::max(scale, 1e-12);
    Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
    t(0, 0) = scale;
    t(1, 1) = scale;
    t(0, 2) = -scale * mean.x();
    t(1, 2) = -scale * mean.y();
    return t;
  };
  const Eigen::Matrix3d ts = normalizer(src);
  const Eigen::Matrix3d td = normalizer(dst);

  const Eigen::Index n = static_cast<Eigen::Index>(src.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d s = ts * src[i].homogeneous();
    const Eigen::Vector3d d = td * dst[i].homogeneous();
    a.row(2 * i) << -s.x(), -s.y(), -1, 0, 0, 0, d.x() * s.x(), d.x() * s.y(), d.x();
    a.row(2 * i + 1) << 0, 0, 0, -s.x(), -s.y(), -1, d.y() * s.x(), d.y() * s.y(), d.y();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv[7] < 1e-10 * sv[0]) {
    throw std::runtime_error("calibrate_intrinsics: rank-deficient view geometry (view " +
                             std::to_string(view_index) + ")");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];
  return td.inverse() * hn * ts;
}

Pose pose_from_homography(const Eigen::Matrix3d& h) {
  Eigen::Vector3d h1 = h.col(0), h2 = h.col(1), h3 = h.col(2);
  const double lambda = 2.0 / (h1.norm() + h2.norm());
  h1 *= lambda;
  h2 *= lambda;
  h3 *= lambda;
  if (h3.z() < 0.0) {  // board must sit in front of the camera
    h1 = -h1;
    h2 = -h2;
    h3 = -h3;
  }
  Eigen::Matrix3d r;
  r.col(0) = h1;
  r.col(1) = h2;
  r.col(2) = h1.cross(h2);
  return Pose(Rotation::from_matrix(orthonormalize(r)), h3);
}

}  // namespace

IntrinsicsSolution calibrate_intrinsics(const std::vector<CheckerboardView>& views) {
  if (views.size() < 5) {
    throw std::invalid_argument("calibrate_intrinsics: need at least 5 views");
  }
  Eigen::Index total = 0;
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].corners.size() < 20) {
      throw std::invalid_argument("calibrate_intrinsics: view " + std::to_string(v) +
                                  " has fewer than 20 corners");
    }
    total += static_cast<Eigen::Index>(views[v].corners.size());
  }

  // Principal point seed: centroid of every detection.
  Eigen::Vector2d c0 = Eigen::Vector2d::Zero();
  for (const auto& view : views) {
    for (const auto& c : view.corners) c0 += c.pixel;
  }
  c0 /= static_cast<double>(total);
  double r_max = 0.0;
  for (const auto& view : views) {
    for (const auto& c : view.corners) r_max = std::max(r_max, (c.pixel - c0).norm());
  }
  if (!(r_max > 0.0)) {
    throw std::runtime_error("calibrate_intrinsics: all detections coincide");
  }

  // Focal sweep: undistort with each candidate, fit per-view homographies,
  // keep the candidate whose reprojection is best. This lands close enough
  // for the joint solve without needing an external initial guess.
  double best_cost = std::numeric_limits<double>::infinity();
  double best_f = r_max;
  std::vector<Pose> best_poses;
  for (const double theta_ref : {0.35, 0.55, 0.75, 0.95, 1.15, 1.35}) {
    const double f_cand = r_max / theta_ref;
    FisheyeIntrinsics intr;
    intr.f = f_cand;
    intr.cx = c0.x();
    intr.cy = c0.y();
    std::vector<Pose> poses;
    double cost = 0.0;
    bool usable = true;
    for (std::size_t v = 0; v < views.size(); ++v) {
      std::vector<Eigen::Vector2d> src, dst;
      src.reserve(views[v].corners.size());
      dst.reserve(views[v].corners.size());
      for (const auto& c : views[v].corners) {
        src.emplace_back(c.board_point.x(), c.board_point.y());
        const Eigen::Vector2d d = c.pixel - c0;
        const double r = d.norm();
        const double theta = std::min(r / f_cand, 1.45);  // keep tan() sane
        dst.push_back(r < 1e-12 ? Eigen::Vector2d::Zero()
                                : Eigen::Vector2d(std::tan(theta) * d / r));
      }
      const Pose pose = pose_from_homography(fit_homography(src, dst, v));
      poses.push_back(pose);
      for (const auto& c : views[v].corners) {
        const Eigen::Vector3d xc = pose * c.board_point;
        if (xc.norm() < 1e-9 || xc.z() < 1e-6) {
          usable = false;
          break;
        }
        cost += (project_equidistant(xc, intr) - c.pixel).squaredNorm();
      }
      if (!usable) break;
    }
    if (usable && cost < best_cost) {
      best_cost = cost;
      best_f = f_cand;
      best_poses = std::move(poses);
    }
  }
  if (best_poses.empty()) {
    throw std::runtime_error("calibrate_intrinsics: initialization failed for all views");
  }

  Eigen::VectorXd x0(kIntrinsicParams + 6 * static_cast<int>(views.size()));
  x0.setZero();
  x0[0] = best_f;
  x0[1] = c0.x();
  x0[2] = c0.y();
  for (std::size_t v = 0; v < views.size(); ++v) {
    const int base = kIntrinsicParams + 6 * static_cast<int>(v);
    x0.segment<3>(base) = best_poses[v].rotation.log();
    x0.segment<3>(base + 3) = best_poses[v].translation;
  }

  const auto residual_fn = [&views, total](const Eigen::VectorXd& x) {
    return reprojection_residuals(views, x, total);
  };
  const LmResult lm = levenberg_marquardt(residual_fn, x0);
  if (!lm.converged) {
    throw std::runtime_error("calibrate_intrinsics: solver stalled before convergence");
  }

  IntrinsicsSolution out;
  out.intrinsics = unpack_intrinsics(lm.params);
  for (std::size_t v = 0; v < views.size(); ++v) {
    out.camera_from_board.push_back(unpack_view_pose(lm.params, static_cast<int>(v)));
  }
  // The calibrated model is only claimed out to the largest observed field
  // angle; beyond the data the polynomial is extrapolation, not calibration.
  double theta_seen = 0.0;
  for (std::size_t v = 0; v < views.size(); ++v) {
    for (const CornerObservation& obs : views[v].corners) {
      const Eigen::Vector3d pc = out.camera_from_board[v] * obs.board_point;
      theta_seen = std::max(theta_seen, std::atan2(pc.head<2>().norm(), pc.z()));
    }
  }
  out.intrinsics.theta_max = std::min(out.intrinsics.theta_max, theta_seen);
  out.intrinsics.validate();
  out.rms_reprojection_px = std::sqrt(lm.final_cost / static_cast<double>(2 * total));
  out.iterations = lm.iterations;
  return out;
}

void CalibrationTarget::validate() const {
  if (!(hole_radius > 0.0) || !(board_width > 0.0) || !(board_height > 0.0)) {
    throw std::invalid_argument("calibration target: non-positive dimensions");
  }
  Eigen::Matrix<double, 2, 4> centered;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& c : hole_centers) {
    if (std::abs(c.z()) > 1e-12) {
      throw std::invalid_argument("calibration target: hole centers must lie on z = 0");
    }
    mean += c.head<2>();
  }
  mean /= 4.0;
  for (int i = 0; i < 4; ++i) centered.col(i) = hole_centers[i].head<2>() - mean;
  Eigen::JacobiSVD<Eigen::Matrix<double, 2, 4>> svd(centered);
  if (svd.singularValues()[1] < 1e-9) {
    throw std::invalid_argument("calibration target: hole centers are collinear");
  }
  for (const auto& c : hole_centers) {
    if (std::abs(c.x()) + hole_radius > board_width / 2.0 ||
        std::abs(c.y()) + hole_radius > board_height / 2.0) {
      throw std::invalid_argument("calibration target: hole outside the board");
    }
  }
}

CalibrationTarget CalibrationTarget::standard() {
  CalibrationTarget t;
  // Chiral layout: the fourth hole sits off the rectangle grid so geometry
  // alone identifies each hole (no symmetric or mirrored match).
  t.hole_centers = {Eigen::Vector3d(-0.22, -0.16, 0.0), Eigen::Vector3d(0.22, -0.16, 0.0),
                    Eigen::Vector3d(0.22, 0.16, 0.0), Eigen::Vector3d(-0.12, 0.08, 0.0)};
  t.hole_radius = 0.06;
  t.board_width = 0.8;
  t.board_height = 0.6;
  t.fiducial_corners = {Eigen::Vector3d(-0.05, -0.05, 0.0), Eigen::Vector3d(0.05, -0.05, 0.0),
                        Eigen::Vector3d(0.05, 0.05, 0.0), Eigen::Vector3d(-0.05, 0.05, 0.0)};
  t.validate();
  return t;
}

std::array<Eigen::Vector3d, 4> hole_centers_camera(const Pose& camera_from_board,
                                                   const CalibrationTarget& target) {
  std::array<Eigen::Vector3d, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = camera_from_board * target.hole_centers[i];
  return out;
}

Pose solve_extrinsic_svd(const std::vector<Correspondence>& correspondences) {
  if (correspondences.size() < 3) {
    throw std::invalid_argument("solve_extrinsic_svd: need at least 3 correspondences");
  }
  Eigen::Vector3d cl = Eigen::Vector3d::Zero(), cc = Eigen::Vector3d::Zero();
  for (const auto& c : correspondences) {
    if (!c.p_lidar.allFinite() || !c.p_camera.allFinite()) {
      throw std::invalid_argument("solve_extrinsic_svd: non-finite correspondence");
    }
    cl += c.p_lidar;
    cc += c.p_camera;
  }
  const double n = static_cast<double>(correspondences.size());
  cl /= n;
  cc /= n;

  Eigen::Matrix3d w = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (const auto& c : correspondences) {
    const Eigen::Vector3d dl = c.p_lidar - cl;
    w += (c.p_camera - cc) * dl.transpose();
    scatter += dl * dl.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(scatter);
  if (es.eigenvalues()[1] < 1e-12 * std::max(es.eigenvalues()[2], 1.0)) {
    throw std::runtime_error(
        "solve_extrinsic_svd: degenerate geometry (collinear or coincident centers)");
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) = -u.col(2);
  const Eigen::Matrix3d r = u * v.transpose();
  return Pose(Rotation::from_matrix(r), cc - r * cl);
}

Pose refine_extrinsic(const std::vector<std::vector<Correspondence>>& frames,
                      const Pose& initial) {
  if (frames.empty()) {
    throw std::invalid_argument("refine_extrinsic: no frames");
  }
  Eigen::Index total = 0;
  std::vector<double> weight(frames.size());
  double max_msr = 0.0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].empty()) {
      throw std::invalid_argument("refine_extrinsic: empty frame " + std::to_string(f));
    }
    double msr = 0.0;
    for (const auto& c : frames[f]) {
      msr += (c.p_camera - initial * c.p_lidar).squaredNorm();
    }
    msr /= static_cast<double>(frames[f].size());
    weight[f] = msr;  // variance estimate for now, inverted below
    max_msr = std::max(max_msr, msr);
    total += static_cast<Eigen::Index>(frames[f].size());
  }
  // Frames with larger residual scatter at the initial estimate get less
  // weight; the floor keeps noiseless frames finite and equal. Normalizing by
  // the largest weight keeps the residual vector near the metric scale.
  const double floor_var = 1e-12 + 1e-6 * max_msr;
  for (double& wf : weight) wf = 1.0 / std::sqrt(wf + floor_var);
  const double max_weight = *std::max_element(weight.begin(), weight.end());
  for (double& wf : weight) wf /= max_weight;

  const auto residual_fn = [&frames, &weight, total](const Eigen::VectorXd& x) {
    const Pose t(Rotation::exp(x.head<3>()), x.tail<3>());
    Eigen::VectorXd r(3 * total);
    Eigen::Index row = 0;
    for (std::size_t f = 0; f < frames.size(); ++f) {
      for (const auto& c : frames[f]) {
        r.segment<3>(row) = weight[f] * (c.p_camera - t * c.p_lidar);
        row += 3;
      }
    }
    return r;
  };

  Eigen::VectorXd x0(6);
  x0.head<3>() = initial.rotation.log();
  x0.tail<3>() = initial.translation;
  const LmResult lm = levenberg_marquardt(residual_fn, x0);
  if (!lm.converged) {
    throw std::runtime_error("refine_extrinsic: solver stalled before convergence");
  }
  return Pose(Rotation::exp(lm.params.head<3>()), lm.params.tail<3>());
}

}  // namespace riglab
