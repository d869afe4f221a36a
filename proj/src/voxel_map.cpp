#include "riglab/voxel_map.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace riglab {

std::optional<PlaneVoxel> fit_plane(const VoxelStats& stats,
                                    const VoxelMapParams& params) {
  if (stats.count < params.min_fit_count) return std::nullopt;
  const double n = static_cast<double>(stats.count);
  const Eigen::Vector3d q = stats.sum_p / n;
  const Eigen::Matrix3d scatter =
      stats.sum_pp / n - q * q.transpose();  // (1/N) sum (p-q)(p-q)^T

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
  if (eig.info() != Eigen::Success) return std::nullopt;
  const Eigen::Vector3d lam = eig.eigenvalues().cwiseMax(0.0);  // ascending
  if (lam[1] < 1e-12) return std::nullopt;  // rank < 2: no plane direction
  if (lam[0] / lam[1] >= params.planarity_ratio) return std::nullopt;

  Eigen::Matrix3d U = eig.eigenvectors();
  // Normal sign: toward the first observing sensor.
  if (U.col(0).dot(stats.first_origin - q) < 0.0) U.col(0) = -U.col(0);
  const Eigen::Vector3d u_n = U.col(0);

  // First-order covariance of (n, q) from isotropic per-point noise.
  // With W = sum sigma_i^2 (p_i - q)(p_i - q)^T and w1 = sum sigma_i^2 (p_i - q):
  //   Sigma_nn = (1/N^2) sum_{k,l != 0} s_kl / ((l0-lk)(l0-ll)) u_k u_l^T,
  //     s_kl = delta_kl (n^T W n) + u_k^T W u_l
  //   Sigma_nq = (1/N^2) sum_{k != 0} [(n^T w1) u_k^T + (u_k^T w1) n^T]
  //              scaled by u_k / (l0 - lk)
  //   Sigma_qq = (sum sigma_i^2) / N^2 * I
  const Eigen::Matrix3d W = stats.sum_var_pp - stats.sum_var_p * q.transpose() -
                            q * stats.sum_var_p.transpose() +
                            stats.sum_var * q * q.transpose();
  const Eigen::Vector3d w1 = stats.sum_var_p - stats.sum_var * q;
  const double nWn = u_n.dot(W * u_n);

  Eigen::Matrix3d sigma_nn = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d sigma_nq = Eigen::Matrix3d::Zero();
  for (int k = 1; k < 3; ++k) {
    const double dk = lam[0] - lam[k];
    for (int l = 1; l < 3; ++l) {
      const double dl = lam[0] - lam[l];
      const double s_kl = (k == l ? nWn : 0.0) + U.col(k).dot(W * U.col(l));
      sigma_nn += (s_kl / (n * n * dk * dl)) * U.col(k) * U.col(l).transpose();
    }
    sigma_nq += (U.col(k) / (n * n * dk)) *
                (u_n.dot(w1) * U.col(k).transpose() + U.col(k).dot(w1) * u_n.transpose());
  }

  PlaneVoxel plane;
  plane.normal = u_n;
  plane.point = q;
  plane.count = stats.count;
  plane.sigma.setZero();
  plane.sigma.block<3, 3>(0, 0) = 0.5 * (sigma_nn + sigma_nn.transpose());
  plane.sigma.block<3, 3>(0, 3) = sigma_nq;
  plane.sigma.block<3, 3>(3, 0) = sigma_nq.transpose();
  plane.sigma.block<3, 3>(3, 3) =
      (stats.sum_var / (n * n)) * Eigen::Matrix3d::Identity();
  return plane;
}

VoxelKey VoxelPlaneMap::key_for(const Eigen::Vector3d& p) const {
  return VoxelKey{static_cast<std::int64_t>(std::floor(p.x() / params_.voxel_size)),
                  static_cast<std::int64_t>(std::floor(p.y() / params_.voxel_size)),
                  static_cast<std::int64_t>(std::floor(p.z() / params_.voxel_size))};
}

void VoxelPlaneMap::insert_points(const std::vector<MapPoint>& points,
                                  const Eigen::Vector3d& sensor_origin) {
  for (const MapPoint& mp : points) {
    if (!mp.position.allFinite() || !(mp.variance >= 0.0)) {
      throw std::invalid_argument("VoxelPlaneMap::insert_points: bad point");
    }
    Cell& cell = cells_[key_for(mp.position)];
    VoxelStats& s = cell.stats;
    if (s.count == 0) s.first_origin = sensor_origin;
    s.count += 1;
    s.sum_p += mp.position;
    s.sum_pp += mp.position * mp.position.transpose();
    s.sum_var += mp.variance;
    s.sum_var_p += mp.variance * mp.position;
    s.sum_var_pp += mp.variance * mp.position * mp.position.transpose();
    ++points_inserted_;
  }
  for (auto& [key, cell] : cells_) refit_if_due(cell);
}

void VoxelPlaneMap::refit_if_due(Cell& cell) {
  const std::int64_t count = cell.stats.count;
  if (count < params_.min_fit_count) return;
  if (cell.fitted_count > 0 &&
      static_cast<double>(count) <
          params_.refresh_growth * static_cast<double>(cell.fitted_count)) {
    return;
  }
  cell.plane = fit_plane(cell.stats, params_);
  cell.fitted_count = count;
}

std::optional<PlaneVoxel> VoxelPlaneMap::query_plane(const Eigen::Vector3d& point) const {
  const VoxelKey center = key_for(point);
  if (auto it = cells_.find(center); it != cells_.end() && it->second.plane) {
    return it->second.plane;
  }
  // Nearest valid neighbor by centroid distance; fixed scan order keeps ties
  // deterministic.
  const PlaneVoxel* best = nullptr;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::int64_t dz = -1; dz <= 1; ++dz) {
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0 && dz == 0) continue;
        const VoxelKey k{center.x + dx, center.y + dy, center.z + dz};
        const auto it = cells_.find(k);
        if (it == cells_.end() || !it->second.plane) continue;
        const double d = (it->second.plane->point - point).norm();
        if (d < best_dist) {
          best_dist = d;
          best = &*it->second.plane;
        }
      }
    }
  }
  if (!best) return std::nullopt;
  return *best;
}

std::size_t VoxelPlaneMap::valid_plane_count() const {
  std::size_t n = 0;
  for (const auto& [key, cell] : cells_) {
    if (cell.plane) ++n;
  }
  return n;
}

void VoxelPlaneMap::evict_beyond(const Eigen::Vector3d& center, double radius) {
  for (auto it = cells_.begin(); it != cells_.end();) {
    const Eigen::Vector3d voxel_center =
        params_.voxel_size * Eigen::Vector3d(it->first.x + 0.5, it->first.y + 0.5,
                                             it->first.z + 0.5);
    if ((voxel_center - center).norm() > radius) {
      it = cells_.erase(it);
    } else {
      ++it;
    }
  }
}

void VoxelPlaneMap::export_ply(const std::string& path) const {
  std::vector<std::pair<VoxelKey, const PlaneVoxel*>> rows;
  rows.reserve(cells_.size());
  for (const auto& [key, cell] : cells_) {
    if (cell.plane) rows.emplace_back(key, &*cell.plane);
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.first.x, a.first.y, a.first.z) <
           std::tie(b.first.x, b.first.y, b.first.z);
  });

  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path);
  std::fprintf(f,
               "ply\nformat ascii 1.0\nelement vertex %zu\n"
               "property float x\nproperty float y\nproperty float z\n"
               "property float nx\nproperty float ny\nproperty float nz\n"
               "end_header\n",
               rows.size());
  for (const auto& [key, plane] : rows) {
    std::fprintf(f, "%.6f %.6f %.6f %.6f %.6f %.6f\n", plane->point.x(),
                 plane->point.y(), plane->point.z(), plane->normal.x(),
                 plane->normal.y(), plane->normal.z());
  }
  std::fclose(f);
}

}  // namespace riglab
