#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "riglab/calibration.hpp"
#include "riglab/solvers.hpp"

namespace riglab {

namespace {

struct PlaneBasis {
  Eigen::Vector3d centroid;
  Eigen::Vector3d normal;
  Eigen::Vector3d u, v;  // in-plane orthonormal basis
};

PlaneBasis fit_plane(const std::vector<Eigen::Vector3d>& pts) {
  PlaneBasis basis;
  basis.centroid = Eigen::Vector3d::Zero();
  for (const auto& p : pts) basis.centroid += p;
  basis.centroid /= static_cast<double>(pts.size());
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector3d d = p - basis.centroid;
    scatter += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(scatter);
  basis.normal = es.eigenvectors().col(0);
  basis.u = basis.normal.unitOrthogonal();
  basis.v = basis.normal.cross(basis.u);
  return basis;
}

// Uniform grid over the plane coordinates for radius queries.
class NeighborGrid {
 public:
  NeighborGrid(const std::vector<Eigen::Vector2d>& pts, double cell)
      : pts_(pts), cell_(cell) {
    for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
      cells_[key(pts[i])].push_back(i);
    }
  }

  template <typename Fn>
  void for_neighbors(const Eigen::Vector2d& q, double radius, Fn&& fn) const {
    const double r2 = radius * radius;
    const auto [kx, ky] = key(q);
    for (long dx = -1; dx <= 1; ++dx) {
      for (long dy = -1; dy <= 1; ++dy) {
        const auto it = cells_.find({kx + dx, ky + dy});
        if (it == cells_.end()) continue;
        for (int idx : it->second) {
          if ((pts_[idx] - q).squaredNorm() <= r2) fn(idx);
        }
      }
    }
  }

 private:
  std::pair<long, long> key(const Eigen::Vector2d& p) const {
    return {static_cast<long>(std::floor(p.x() / cell_)),
            static_cast<long>(std::floor(p.y() / cell_))};
  }

  const std::vector<Eigen::Vector2d>& pts_;
  double cell_;
  std::map<std::pair<long, long>, std::vector<int>> cells_;
};

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

struct EllipseFit {
  Eigen::Vector2d center;
  double axis_a = 0.0, axis_b = 0.0;  // semi-axes, a >= b
};

// Direct conic least squares with the ellipse constraint (numerically stable
// split form). Points are centered beforehand for conditioning.
EllipseFit fit_ellipse(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());

  const Eigen::Index n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd d1(n, 3), d2(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector2d q = pts[i] - mean;
    d1.row(i) << q.x() * q.x(), q.x() * q.y(), q.y() * q.y();
    d2.row(i) << q.x(), q.y(), 1.0;
  }
  const Eigen::Matrix3d s1 = d1.transpose() * d1;
  const Eigen::Matrix3d s2 = d1.transpose() * d2;
  const Eigen::Matrix3d s3 = d2.transpose() * d2;
  const Eigen::Matrix3d t = -s3.ldlt().solve(s2.transpose());
  const Eigen::Matrix3d m0 = s1 + s2 * t;
  Eigen::Matrix3d m;
  m.row(0) = m0.row(2) / 2.0;
  m.row(1) = -m0.row(1);
  m.row(2) = m0.row(0) / 2.0;

  Eigen::EigenSolver<Eigen::Matrix3d> es(m);
  Eigen::Vector3d a1 = Eigen::Vector3d::Zero();
  bool found = false;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d cand = es.eigenvectors().col(i).real();
    const double constraint = 4.0 * cand[0] * cand[2] - cand[1] * cand[1];
    if (constraint > 0.0) {
      a1 = cand;
      found = true;
      break;
    }
  }
  if (!found) {
    throw std::runtime_error("fit_ellipse: no elliptical solution");
  }
  const Eigen::Vector3d a2 = t * a1;
  const double a = a1[0], b = a1[1], c = a1[2], dd = a2[0], e = a2[1], f = a2[2];

  const double den = b * b - 4.0 * a * c;  // negative for an ellipse
  EllipseFit fit;
  const Eigen::Vector2d center_local((2.0 * c * dd - b * e) / den,
                                     (2.0 * a * e - b * dd) / den);
  fit.center = center_local + mean;

  const double value = a * center_local.x() * center_local.x() +
                       b * center_local.x() * center_local.y() +
                       c * center_local.y() * center_local.y() + dd * center_local.x() +
                       e * center_local.y() + f;
  Eigen::Matrix2d quad;
  quad << a, b / 2.0, b / 2.0, c;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> qes(quad);
  const double l0 = qes.eigenvalues()[0], l1 = qes.eigenvalues()[1];
  if (!(l0 * l1 > 0.0) || !(-value / l0 > 0.0)) {
    throw std::runtime_error("fit_ellipse: degenerate conic");
  }
  const double s0 = std::sqrt(-value / l0);
  const double s1v = std::sqrt(-value / l1);
  fit.axis_a = std::max(s0, s1v);
  fit.axis_b = std::min(s0, s1v);
  return fit;
}

struct Cluster {
  std::vector<Eigen::Vector2d> points;  // sorted lexicographically
  EllipseFit ellipse;
};

bool lex_less2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y();
}

// Rigid 2D alignment residual of board centers onto extracted centers for a
// fixed assignment; used to recover which extracted hole is which.
double match_residual(const std::array<Eigen::Vector2d, 4>& board,
                      const std::array<Eigen::Vector2d, 4>& extracted) {
  Eigen::Vector2d mb = Eigen::Vector2d::Zero(), me = Eigen::Vector2d::Zero();
  for (int i = 0; i < 4; ++i) {
    mb += board[i];
    me += extracted[i];
  }
  mb /= 4.0;
  me /= 4.0;
  Eigen::Matrix2d w = Eigen::Matrix2d::Zero();
  for (int i = 0; i < 4; ++i) w += (extracted[i] - me) * (board[i] - mb).transpose();
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix2d u = svd.matrixU();
  const Eigen::Matrix2d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(1) = -u.col(1);
  const Eigen::Matrix2d r = u * v.transpose();
  double residual = 0.0;
  for (int i = 0; i < 4; ++i) {
    residual += (extracted[i] - (r * (board[i] - mb) + me)).squaredNorm();
  }
  return residual;
}

struct LayoutMatch {
  double residual = std::numeric_limits<double>::infinity();
  std::array<int, 4> perm = {0, 1, 2, 3};
};

// Best rigid embedding of the board layout onto four extracted centers, over
// every assignment and both plane orientations (the fitted normal sign is
// arbitrary, which mirrors the projected coordinates).
LayoutMatch match_layout(const std::array<Eigen::Vector2d, 4>& board,
                         const std::array<Eigen::Vector2d, 4>& extracted) {
  LayoutMatch out;
  for (int flip = 0; flip < 2; ++flip) {
    std::array<Eigen::Vector2d, 4> probe = extracted;
    if (flip) {
      for (auto& p : probe) p.y() = -p.y();
    }
    std::array<int, 4> perm = {0, 1, 2, 3};
    do {
      std::array<Eigen::Vector2d, 4> assigned;
      for (int i = 0; i < 4; ++i) assigned[i] = board[perm[i]];
      const double res = match_residual(assigned, probe);
      if (res < out.residual) {
        out.residual = res;
        out.perm = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return out;
}

}  // namespace

std::array<Eigen::Vector3d, 4> extract_hole_centers_lidar(
    const std::vector<Eigen::Vector3d>& points, const CalibrationTarget& target,
    HoleExtractionDiagnostics* diagnostics) {
  target.validate();
  if (points.size() < 200) {
    throw std::invalid_argument("extract_hole_centers_lidar: too few points for a target scan");
  }
  // Canonical ordering makes the whole extraction invariant to the input
  // point order, bit for bit.
  std::vector<Eigen::Vector3d> pts = points;
  std::sort(pts.begin(), pts.end(), [](const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    if (a.x() != b.x()) return a.x() < b.x();
    if (a.y() != b.y()) return a.y() < b.y();
    return a.z() < b.z();
  });

  const PlaneBasis plane = fit_plane(pts);
  std::vector<Eigen::Vector2d> q(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Eigen::Vector3d d = pts[i] - plane.centroid;
    q[i] = {d.dot(plane.u), d.dot(plane.v)};
  }

  // Sample spacing from the median nearest-neighbour distance. A bounding-box
  // estimate would inflate with the board's in-plane orientation and tie the
  // discontinuity scale to the pose instead of the scan density. The coarse
  // search cell comes from the box, which only ever overestimates, so the true
  // neighbour sits inside the 3x3 stencil.
  Eigen::Vector2d lo = q[0], hi = q[0];
  for (const auto& p : q) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double area = std::max((hi - lo).prod(), 1e-12);
  const double coarse_cell =
      std::max(std::sqrt(area / static_cast<double>(q.size())), 1e-9);
  std::vector<double> nn_dist;
  nn_dist.reserve(q.size());
  {
    const NeighborGrid coarse(q, coarse_cell);
    for (int i = 0; i < static_cast<int>(q.size()); ++i) {
      double best = std::numeric_limits<double>::infinity();
      coarse.for_neighbors(q[i], coarse_cell, [&](int j) {
        if (j != i) best = std::min(best, (q[j] - q[i]).squaredNorm());
      });
      if (std::isfinite(best)) nn_dist.push_back(std::sqrt(best));
    }
  }
  if (nn_dist.empty()) {
    throw std::runtime_error("extract_hole_centers_lidar: degenerate sample spacing");
  }
  std::nth_element(nn_dist.begin(), nn_dist.begin() + nn_dist.size() / 2, nn_dist.end());
  const double spacing = std::max(nn_dist[nn_dist.size() / 2], 1e-9);

  // Discontinuity radius: rescale so a disc holds about fifty samples whatever
  // the scan pattern. Counts of that size separate a half-empty rim disc from
  // ordinary density fluctuations in the board interior.
  double radius = 3.0 * spacing;
  {
    const NeighborGrid probe(q, radius);
    std::vector<int> occupancy(q.size(), 0);
    for (int i = 0; i < static_cast<int>(q.size()); ++i) {
      int count = 0;
      probe.for_neighbors(q[i], radius, [&](int j) {
        if (j != i) ++count;
      });
      occupancy[i] = count;
    }
    std::nth_element(occupancy.begin(), occupancy.begin() + occupancy.size() / 2,
                     occupancy.end());
    const int median_occupancy = std::max(occupancy[occupancy.size() / 2], 1);
    radius *= std::clamp(std::sqrt(50.0 / static_cast<double>(median_occupancy)), 0.5, 4.0);
  }

  // Edge points: a disc truncated by a hole or by the board boundary both
  // loses a large share of its samples and has its centroid pushed off the
  // query point. Requiring the two effects together rejects the density
  // fluctuations either statistic alone lets through.
  const NeighborGrid grid(q, radius);
  std::vector<int> disc_count(q.size(), 0);
  std::vector<Eigen::Vector2d> disc_sum(q.size(), Eigen::Vector2d::Zero());
  for (int i = 0; i < static_cast<int>(q.size()); ++i) {
    int count = 0;
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    grid.for_neighbors(q[i], radius, [&](int j) {
      if (j == i) return;
      sum += q[j];
      ++count;
    });
    disc_count[i] = count;
    disc_sum[i] = sum;
  }
  std::vector<int> sorted_counts = disc_count;
  std::nth_element(sorted_counts.begin(), sorted_counts.begin() + sorted_counts.size() / 2,
                   sorted_counts.end());
  const double median_count =
      static_cast<double>(std::max(sorted_counts[sorted_counts.size() / 2], 1));
  std::vector<int> edge_idx;
  for (int i = 0; i < static_cast<int>(q.size()); ++i) {
    if (disc_count[i] < 3 || disc_count[i] > 0.7 * median_count) continue;
    const Eigen::Vector2d centroid_2d = disc_sum[i] / static_cast<double>(disc_count[i]);
    if ((centroid_2d - q[i]).norm() > 0.2 * radius) {
      edge_idx.push_back(i);
    }
  }
  if (edge_idx.size() < 16) {
    throw std::runtime_error("extract_hole_centers_lidar: 0 of 4 holes found");
  }

  // Cluster edge points by where they say the missing mass is: each one votes
  // for a center one hole radius along its inward direction. Rim votes
  // concentrate near the hole center however patchily the rim is sampled,
  // while board-boundary votes smear into ridges the extent filter rejects.
  const double r_hole = target.hole_radius;
  std::vector<Eigen::Vector2d> eq(edge_idx.size());
  std::vector<Eigen::Vector2d> votes(edge_idx.size());
  for (std::size_t i = 0; i < edge_idx.size(); ++i) {
    const int src = edge_idx[i];
    eq[i] = q[src];
    const Eigen::Vector2d away =
        (disc_sum[src] / static_cast<double>(disc_count[src]) - q[src]).normalized();
    votes[i] = q[src] - r_hole * away;
  }
  const NeighborGrid vote_grid(votes, radius);
  DisjointSet ds(static_cast<int>(votes.size()));
  for (int i = 0; i < static_cast<int>(votes.size()); ++i) {
    vote_grid.for_neighbors(votes[i], radius, [&](int j) { ds.unite(i, j); });
  }
  std::map<int, std::vector<Eigen::Vector2d>> groups;
  for (int i = 0; i < static_cast<int>(eq.size()); ++i) groups[ds.find(i)].push_back(eq[i]);

  std::vector<Cluster> candidates;
  for (auto& [root, members] : groups) {
    if (members.size() < 12) continue;
    Eigen::Vector2d clo = members[0], chi = members[0];
    for (const auto& p : members) {
      clo = clo.cwiseMin(p);
      chi = chi.cwiseMax(p);
    }
    const double extent = (chi - clo).maxCoeff();
    if (extent < 1.3 * r_hole || extent > 5.0 * r_hole) continue;
    std::sort(members.begin(), members.end(), lex_less2);
    Cluster cluster;
    cluster.points = std::move(members);
    try {
      cluster.ellipse = fit_ellipse(cluster.points);
    } catch (const std::runtime_error&) {
      continue;
    }
    // Both semi-axes must sit near the known hole radius; boundary-corner arcs
    // fit as long thin or oversized ellipses and fall outside this window.
    if (cluster.ellipse.axis_a > 1.7 * r_hole || cluster.ellipse.axis_b < 0.5 * r_hole ||
        cluster.ellipse.axis_a > 1.6 * cluster.ellipse.axis_b) {
      continue;
    }
    candidates.push_back(std::move(cluster));
  }

  if (candidates.size() < 4) {
    throw std::runtime_error("extract_hole_centers_lidar: " +
                             std::to_string(candidates.size()) + " of 4 holes found");
  }
  std::sort(candidates.begin(), candidates.end(), [](const Cluster& a, const Cluster& b) {
    return lex_less2(a.ellipse.center, b.ellipse.center);
  });
  std::array<Eigen::Vector2d, 4> board;
  for (int i = 0; i < 4; ++i) board[i] = target.hole_centers[i].head<2>();
  if (candidates.size() > 4) {
    // Keep the four candidates whose centers best embed the board's rigid hole
    // layout; a lone surviving boundary arc never beats a true ring here.
    const int n = static_cast<int>(candidates.size());
    double best_subset = std::numeric_limits<double>::infinity();
    std::array<int, 4> keep = {0, 1, 2, 3};
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        for (int c = b + 1; c < n; ++c) {
          for (int d = c + 1; d < n; ++d) {
            const std::array<Eigen::Vector2d, 4> centers = {
                candidates[a].ellipse.center, candidates[b].ellipse.center,
                candidates[c].ellipse.center, candidates[d].ellipse.center};
            const double res = match_layout(board, centers).residual;
            if (res < best_subset) {
              best_subset = res;
              keep = {a, b, c, d};
            }
          }
        }
      }
    }
    std::vector<Cluster> chosen;
    chosen.reserve(4);
    for (int idx : keep) chosen.push_back(std::move(candidates[idx]));
    candidates = std::move(chosen);
  }

  // Joint circle fit: four centers plus one shared dilation of the apparent
  // radius (beam-spot widening affects every hole edge equally). The known
  // hole radius anchors the fit.
  Eigen::Index total_edges = 0;
  for (const auto& c : candidates) total_edges += static_cast<Eigen::Index>(c.points.size());
  Eigen::VectorXd x0(9);
  double mean_axis_all = 0.0;
  for (int i = 0; i < 4; ++i) {
    x0.segment<2>(2 * i) = candidates[i].ellipse.center;
    mean_axis_all += 0.5 * (candidates[i].ellipse.axis_a + candidates[i].ellipse.axis_b);
  }
  x0[8] = mean_axis_all / 4.0 - r_hole;

  const auto residual_fn = [&candidates, r_hole, &total_edges](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(total_edges);
    Eigen::Index row = 0;
    const double apparent = r_hole + x[8];
    for (int i = 0; i < 4; ++i) {
      const Eigen::Vector2d c = x.segment<2>(2 * i);
      for (const auto& p : candidates[i].points) {
        r[row++] = (p - c).norm() - apparent;
      }
    }
    return r;
  };
  LmOptions opts;
  opts.max_iterations = 60;
  LmResult lm = levenberg_marquardt(residual_fn, x0, opts);

  // One robust re-fit: a stray interior sample whose vote landed inside a ring
  // cluster sits far off the rim band and would drag that center. Points past
  // six median absolute residuals go, the fit repeats from the solution.
  {
    const Eigen::VectorXd res = residual_fn(lm.params);
    std::vector<double> mags(static_cast<std::size_t>(res.size()));
    for (Eigen::Index i = 0; i < res.size(); ++i) mags[static_cast<std::size_t>(i)] = std::abs(res[i]);
    std::nth_element(mags.begin(), mags.begin() + mags.size() / 2, mags.end());
    const double cut = std::max(6.0 * mags[mags.size() / 2], 1e-9);
    Eigen::Index row = 0;
    bool trimmed = false;
    for (int i = 0; i < 4; ++i) {
      std::vector<Eigen::Vector2d> kept;
      kept.reserve(candidates[i].points.size());
      for (const auto& p : candidates[i].points) {
        if (std::abs(res[row++]) <= cut) kept.push_back(p);
      }
      if (kept.size() >= 8 && kept.size() < candidates[i].points.size()) {
        candidates[i].points = std::move(kept);
        trimmed = true;
      }
    }
    if (trimmed) {
      total_edges = 0;
      for (const auto& c : candidates) total_edges += static_cast<Eigen::Index>(c.points.size());
      lm = levenberg_marquardt(residual_fn, lm.params, opts);
    }
  }

  // Identify which extracted hole is which by rigidly matching the layout.
  std::array<Eigen::Vector2d, 4> extracted;
  for (int i = 0; i < 4; ++i) extracted[i] = lm.params.segment<2>(2 * i);
  const LayoutMatch match = match_layout(board, extracted);
  if (match.residual > 4 * 0.04 * 0.04) {
    throw std::runtime_error(
        "extract_hole_centers_lidar: hole layout does not match the calibration target");
  }
  const std::array<int, 4>& best_perm = match.perm;

  std::array<Eigen::Vector3d, 4> out;
  std::array<Eigen::Vector3d, 4> raw;
  std::array<int, 4> counts = {0, 0, 0, 0};
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector2d c = extracted[i];
    out[best_perm[i]] = plane.centroid + c.x() * plane.u + c.y() * plane.v;
    const Eigen::Vector2d ce = candidates[i].ellipse.center;
    raw[best_perm[i]] = plane.centroid + ce.x() * plane.u + ce.y() * plane.v;
    counts[best_perm[i]] = static_cast<int>(candidates[i].points.size());
  }
  if (diagnostics) {
    diagnostics->ellipse_centers = raw;
    diagnostics->edge_dilation = lm.params[8];
    diagnostics->edge_counts = counts;
  }
  return out;
}

}  // namespace riglab
