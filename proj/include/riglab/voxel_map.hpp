// Hash-indexed voxel grid of probabilistic plane features.
//
// Each voxel accumulates commutative sufficient statistics (count, point sum,
// outer-product sum, plus variance-weighted versions); plane fits and their
// 6x6 (n, q) covariance are derived from those sums alone, so insertion order
// never affects the fitted plane.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace riglab {

struct VoxelKey {
  std::int64_t x = 0, y = 0, z = 0;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    // splitmix-style scramble of the three lattice coordinates
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::int64_t v : {k.x, k.y, k.z}) {
      std::uint64_t u = static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull;
      u = (u ^ (u >> 30)) * 0xbf58476d1ce4e5b9ull;
      u = (u ^ (u >> 27)) * 0x94d049bb133111ebull;
      h ^= u ^ (u >> 31);
      h *= 0x100000001b3ull;
    }
    return static_cast<std::size_t>(h);
  }
};

struct MapPoint {
  Eigen::Vector3d position;  // global frame
  double variance = 0.0;     // isotropic per-point variance, m^2
};

// Commutative accumulators; enough to fit the plane and its covariance.
struct VoxelStats {
  std::int64_t count = 0;
  Eigen::Vector3d sum_p = Eigen::Vector3d::Zero();
  Eigen::Matrix3d sum_pp = Eigen::Matrix3d::Zero();
  double sum_var = 0.0;                                  // sum of sigma^2
  Eigen::Vector3d sum_var_p = Eigen::Vector3d::Zero();   // sum of sigma^2 p
  Eigen::Matrix3d sum_var_pp = Eigen::Matrix3d::Zero();  // sum of sigma^2 p p^T
  Eigen::Vector3d first_origin = Eigen::Vector3d::Zero();  // fixes normal sign
};

struct PlaneVoxel {
  Eigen::Vector3d normal;                // unit, points toward first_origin
  Eigen::Vector3d point;                 // centroid q
  Eigen::Matrix<double, 6, 6> sigma;     // covariance over (n, q)
  std::int64_t count = 0;
};

struct VoxelMapParams {
  double voxel_size = 0.5;        // m
  int min_fit_count = 10;
  double planarity_ratio = 0.1;   // accept iff lambda_min / lambda_mid < ratio
  double refresh_growth = 1.25;   // refit when count grows by this factor
};

// Eigen-fit of the accumulated points: q = centroid, n = smallest-eigenvalue
// direction of the scatter, covariance by first-order perturbation of the
// eigenproblem. Returns nullopt when the voxel is not planar (too few points,
// degenerate scatter, or planarity ratio violated).
std::optional<PlaneVoxel> fit_plane(const VoxelStats& stats,
                                    const VoxelMapParams& params);

class VoxelPlaneMap {
 public:
  explicit VoxelPlaneMap(const VoxelMapParams& params = {}) : params_(params) {}

  // sensor_origin is recorded on first touch of each voxel and anchors the
  // normal sign convention for all later refits.
  void insert_points(const std::vector<MapPoint>& points,
                     const Eigen::Vector3d& sensor_origin);

  // Plane of the containing voxel, else the nearest (by centroid distance)
  // valid plane among the 26 neighbors, else nullopt.
  std::optional<PlaneVoxel> query_plane(const Eigen::Vector3d& point) const;

  bool empty() const { return cells_.empty(); }
  std::size_t voxel_count() const { return cells_.size(); }
  std::size_t valid_plane_count() const;
  std::int64_t point_count() const { return points_inserted_; }

  // Drops voxels whose centers lie beyond radius from center.
  void evict_beyond(const Eigen::Vector3d& center, double radius);

  // ASCII PLY of valid-plane voxel centroids with normals, sorted by key so
  // the export is byte-deterministic.
  void export_ply(const std::string& path) const;

  VoxelKey key_for(const Eigen::Vector3d& p) const;
  const VoxelMapParams& params() const { return params_; }

 private:
  struct Cell {
    VoxelStats stats;
    std::optional<PlaneVoxel> plane;
    std::int64_t fitted_count = 0;  // count at the last fit attempt
  };

  void refit_if_due(Cell& cell);

  VoxelMapParams params_;
  std::unordered_map<VoxelKey, Cell, VoxelKeyHash> cells_;
  std::int64_t points_inserted_ = 0;
};

}  // namespace riglab
