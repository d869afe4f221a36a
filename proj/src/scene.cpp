#include "riglab/scene.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace riglab {
namespace {

// Even-odd rule point-in-polygon on 2D coordinates.
bool point_in_polygon(const std::vector<Eigen::Vector2d>& poly,
                      const Eigen::Vector2d& p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Eigen::Vector2d& a = poly[i];
    const Eigen::Vector2d& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x_cross = a.x() + (p.y() - a.y()) / (b.y() - a.y()) * (b.x() - a.x());
      if (p.x() < x_cross) inside = !inside;
    }
  }
  return inside;
}

Eigen::Vector3d any_orthogonal(const Eigen::Vector3d& n) {
  // Axis least aligned with n gives a stable basis.
  int k = 0;
  if (std::abs(n[1]) < std::abs(n[k])) k = 1;
  if (std::abs(n[2]) < std::abs(n[k])) k = 2;
  Eigen::Vector3d e = Eigen::Vector3d::Zero();
  e[k] = 1.0;
  return n.cross(e).normalized();
}

}  // namespace

SceneModel::SceneModel(std::vector<ScenePlane> planes) : planes_(std::move(planes)) {
  frames_.reserve(planes_.size());
  for (std::size_t i = 0; i < planes_.size(); ++i) {
    const ScenePlane& pl = planes_[i];
    if (std::abs(pl.normal.norm() - 1.0) > 1e-9) {
      throw std::invalid_argument("SceneModel: plane " + std::to_string(i) +
                                  " normal is not unit length");
    }
    if (pl.polygon.size() < 3) {
      throw std::invalid_argument("SceneModel: plane " + std::to_string(i) +
                                  " polygon has fewer than 3 vertices");
    }
    PlaneFrame fr;
    fr.u = any_orthogonal(pl.normal);
    fr.v = pl.normal.cross(fr.u);
    fr.polygon2d.reserve(pl.polygon.size());
    for (const Eigen::Vector3d& vtx : pl.polygon) {
      const Eigen::Vector3d d = vtx - pl.point;
      if (std::abs(d.dot(pl.normal)) > 1e-9) {
        throw std::invalid_argument("SceneModel: plane " + std::to_string(i) +
                                    " polygon vertex off-plane");
      }
      fr.polygon2d.emplace_back(d.dot(fr.u), d.dot(fr.v));
    }
    for (const PlaneHole& h : pl.holes) {
      if (std::abs((h.center - pl.point).dot(pl.normal)) > 1e-9) {
        throw std::invalid_argument("SceneModel: plane " + std::to_string(i) +
                                    " hole center off-plane");
      }
    }
    frames_.push_back(std::move(fr));
  }
}

std::optional<RayHit> SceneModel::cast_ray(const Eigen::Vector3d& origin,
                                           const Eigen::Vector3d& direction,
                                           double min_range, double max_range) const {
  const Eigen::Vector3d dir = direction.normalized();
  RayHit best;
  best.range = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < planes_.size(); ++i) {
    const ScenePlane& pl = planes_[i];
    const double denom = pl.normal.dot(dir);
    if (std::abs(denom) < 1e-12) continue;
    const double t = pl.normal.dot(pl.point - origin) / denom;
    if (t <= min_range || t > max_range || t >= best.range) continue;
    const Eigen::Vector3d p = origin + t * dir;
    const Eigen::Vector3d d = p - pl.point;
    const PlaneFrame& fr = frames_[i];
    if (!point_in_polygon(fr.polygon2d, {d.dot(fr.u), d.dot(fr.v)})) continue;
    bool in_hole = false;
    for (const PlaneHole& h : pl.holes) {
      if ((p - h.center).norm() < h.radius) {
        in_hole = true;
        break;
      }
    }
    if (in_hole) continue;
    best.point = p;
    best.range = t;
    best.plane_index = static_cast<int>(i);
  }
  if (best.plane_index < 0) return std::nullopt;
  return best;
}

double SceneModel::distance_to_nearest_plane(const Eigen::Vector3d& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const ScenePlane& pl : planes_) {
    best = std::min(best, std::abs(pl.normal.dot(p - pl.point)));
  }
  return best;
}

SceneModel SceneModel::corner_room(double z_floor, double x_wall, double y_wall,
                                   double extent) {
  auto rect = [](const Eigen::Vector3d& c, const Eigen::Vector3d& u,
                 const Eigen::Vector3d& v, double hu, double hv) {
    return std::vector<Eigen::Vector3d>{c - hu * u - hv * v, c + hu * u - hv * v,
                                        c + hu * u + hv * v, c - hu * u + hv * v};
  };
  const double h = extent * 0.5;
  std::vector<ScenePlane> planes;
  {
    ScenePlane floor;
    floor.normal = Eigen::Vector3d::UnitZ();
    floor.point = Eigen::Vector3d(0, 0, z_floor);
    floor.polygon = rect(floor.point, Eigen::Vector3d::UnitX(),
                         Eigen::Vector3d::UnitY(), h, h);
    planes.push_back(std::move(floor));
  }
  {
    ScenePlane wall_x;
    wall_x.normal = Eigen::Vector3d::UnitX();
    wall_x.point = Eigen::Vector3d(x_wall, 0, 0);
    wall_x.polygon = rect(wall_x.point, Eigen::Vector3d::UnitY(),
                          Eigen::Vector3d::UnitZ(), h, h);
    planes.push_back(std::move(wall_x));
  }
  {
    ScenePlane wall_y;
    wall_y.normal = Eigen::Vector3d::UnitY();
    wall_y.point = Eigen::Vector3d(0, y_wall, 0);
    wall_y.polygon = rect(wall_y.point, Eigen::Vector3d::UnitX(),
                          Eigen::Vector3d::UnitZ(), h, h);
    planes.push_back(std::move(wall_y));
  }
  return SceneModel(std::move(planes));
}

}  // namespace riglab
