// Plane-world scene used by the sensor simulator: each surface is a planar
// polygon (optionally with circular holes) that LiDAR rays can hit.
#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

namespace riglab {

struct PlaneHole {
  Eigen::Vector3d center;  // lies on the plane
  double radius = 0.0;     // m
};

struct ScenePlane {
  Eigen::Vector3d normal;               // unit length to 1e-9
  Eigen::Vector3d point;                // any point on the plane
  std::vector<Eigen::Vector3d> polygon; // >= 3 planar vertices, CCW or CW
  std::vector<PlaneHole> holes;         // rays through a hole pass the plane
};

struct RayHit {
  Eigen::Vector3d point;  // world frame
  double range = 0.0;
  int plane_index = -1;
};

class SceneModel {
 public:
  // Validates unit normals and polygon planarity; throws std::invalid_argument.
  explicit SceneModel(std::vector<ScenePlane> planes);

  // Nearest intersection along origin + t*direction with t in (min_range, max_range].
  std::optional<RayHit> cast_ray(const Eigen::Vector3d& origin,
                                 const Eigen::Vector3d& direction,
                                 double min_range = 1e-3,
                                 double max_range = 100.0) const;

  const std::vector<ScenePlane>& planes() const { return planes_; }

  // Signed distance of a point to the nearest scene plane (unsigned magnitude,
  // infinite planes, ignores polygon bounds). Used by geometric oracles.
  double distance_to_nearest_plane(const Eigen::Vector3d& p) const;

  // Three mutually orthogonal faces of a room corner: floor z = z_floor
  // (normal +z) and walls x = x_wall, y = y_wall (normals +x, +y), each
  // extending `extent` meters.
  static SceneModel corner_room(double z_floor = -1.0, double x_wall = -2.0,
                                double y_wall = -2.0, double extent = 12.0);

 private:
  struct PlaneFrame {
    Eigen::Vector3d u, v;                     // in-plane orthonormal basis
    std::vector<Eigen::Vector2d> polygon2d;   // vertices in (u, v) coords
  };

  std::vector<ScenePlane> planes_;
  std::vector<PlaneFrame> frames_;
};

}  // namespace riglab
