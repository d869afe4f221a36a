#include "riglab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "riglab/log_io.hpp"
#include "riglab/so3.hpp"
#include "riglab/trajectory_csv.hpp"

namespace riglab {

ClockConfig PipelineConfig::clock() const {
  ClockConfig c;
  c.camera_hz = camera_hz;
  c.lidar_hz = lidar_hz;
  c.camera_latency = camera_latency;
  c.lidar_latency = lidar_latency;
  return c;
}

void PipelineConfig::validate() const {
  if (!(scan_period > 0.0)) throw std::invalid_argument("pipeline: scan_period must be > 0");
  if (!(camera_hz > 0.0) || !(lidar_hz > 0.0)) {
    throw std::invalid_argument("pipeline: clock rates must be > 0");
  }
  if (!(point_sigma >= 0.0) || !(point_range_coeff >= 0.0)) {
    throw std::invalid_argument("pipeline: point noise model must be non-negative");
  }
  if (!(static_init_duration > 0.0)) {
    throw std::invalid_argument("pipeline: static_init_duration must be > 0");
  }
  if (!(max_gyro_spread > 0.0)) {
    throw std::invalid_argument("pipeline: max_gyro_spread must be > 0");
  }
  if (!(max_imu_gap > 0.0)) throw std::invalid_argument("pipeline: max_imu_gap must be > 0");
  if (!(update_params.tau > 0.0) || update_params.max_iters < 1 ||
      !(update_params.eps > 0.0) || update_params.min_inliers < 1) {
    throw std::invalid_argument("pipeline: bad update parameters");
  }
  if (!(map_params.voxel_size > 0.0) || map_params.min_fit_count < 3) {
    throw std::invalid_argument("pipeline: bad map parameters");
  }
  if (!(noise.sigma_gyro >= 0.0) || !(noise.sigma_accel >= 0.0) ||
      !(noise.sigma_gyro_bias >= 0.0) || !(noise.sigma_accel_bias >= 0.0)) {
    throw std::invalid_argument("pipeline: noise densities must be non-negative");
  }
}

PipelineConfig PipelineConfig::from_config(const Config& cfg) {
  PipelineConfig out;
  out.noise.sigma_gyro = cfg.get_double("imu", "sigma_gyro", out.noise.sigma_gyro);
  out.noise.sigma_accel = cfg.get_double("imu", "sigma_accel", out.noise.sigma_accel);
  out.noise.sigma_gyro_bias =
      cfg.get_double("imu", "sigma_gyro_bias", out.noise.sigma_gyro_bias);
  out.noise.sigma_accel_bias =
      cfg.get_double("imu", "sigma_accel_bias", out.noise.sigma_accel_bias);

  out.map_params.voxel_size = cfg.get_double("map", "voxel_size", out.map_params.voxel_size);
  out.map_params.min_fit_count =
      static_cast<int>(cfg.get_int("map", "min_fit_count", out.map_params.min_fit_count));
  out.map_params.planarity_ratio =
      cfg.get_double("map", "planarity_ratio", out.map_params.planarity_ratio);
  out.map_params.refresh_growth =
      cfg.get_double("map", "refresh_growth", out.map_params.refresh_growth);

  out.update_params.tau = cfg.get_double("update", "tau", out.update_params.tau);
  out.update_params.max_iters =
      static_cast<int>(cfg.get_int("update", "max_iters", out.update_params.max_iters));
  out.update_params.eps = cfg.get_double("update", "eps", out.update_params.eps);
  out.update_params.min_inliers =
      static_cast<int>(cfg.get_int("update", "min_inliers", out.update_params.min_inliers));
  out.update_params.degeneracy_ratio =
      cfg.get_double("update", "degeneracy_ratio", out.update_params.degeneracy_ratio);

  out.camera_hz = cfg.get_double("clock", "camera_hz", out.camera_hz);
  out.lidar_hz = cfg.get_double("clock", "lidar_hz", out.lidar_hz);
  out.camera_latency = cfg.get_double("clock", "camera_latency", out.camera_latency);
  out.lidar_latency = cfg.get_double("clock", "lidar_latency", out.lidar_latency);
  out.scan_period = cfg.get_double("pipeline", "scan_period", 1.0 / out.lidar_hz);

  if (cfg.has("frames", "imu_from_lidar")) {
    out.frames.imu_from_lidar = parse_pose_string(cfg.get_string("frames", "imu_from_lidar"));
  }
  if (cfg.has("frames", "lidar_from_camera")) {
    out.frames.lidar_from_camera =
        parse_pose_string(cfg.get_string("frames", "lidar_from_camera"));
  }
  if (cfg.has("frames", "lidar_from_tcp")) {
    out.frames.lidar_from_tcp = parse_pose_string(cfg.get_string("frames", "lidar_from_tcp"));
  }

  out.point_sigma = cfg.get_double("lidar", "sigma_r", out.point_sigma);
  out.point_range_coeff = cfg.get_double("lidar", "range_coeff", out.point_range_coeff);
  out.static_init_duration =
      cfg.get_double("pipeline", "static_init_duration", out.static_init_duration);
  out.max_gyro_spread = cfg.get_double("pipeline", "max_gyro_spread", out.max_gyro_spread);
  out.max_imu_gap = cfg.get_double("pipeline", "max_imu_gap", out.max_imu_gap);
  out.validate();
  return out;
}

std::vector<LidarScan> recombine_scan(const std::vector<TimedPoint>& stream,
                                      double period) {
  if (!(period > 0.0)) throw std::invalid_argument("recombine_scan: period must be > 0");
  std::map<long long, LidarScan> frames;
  double prev = -std::numeric_limits<double>::infinity();
  for (const TimedPoint& pt : stream) {
    if (pt.t < prev) {
      throw std::invalid_argument("recombine_scan: point timestamps not monotone");
    }
    prev = pt.t;
    const long long k = static_cast<long long>(std::floor(pt.t / period + 1e-9));
    LidarScan& scan = frames[k];
    scan.frame_time = static_cast<double>(k) * period;
    LidarPoint lp;
    lp.offset_time = std::max(0.0, pt.t - scan.frame_time);
    lp.position = pt.position;
    scan.points.push_back(lp);
  }
  std::vector<LidarScan> out;
  out.reserve(frames.size());
  for (auto& [k, scan] : frames) out.push_back(std::move(scan));
  return out;
}

namespace {

// Linear interpolation of the IMU stream at time tau (clamped at the ends).
void imu_at(const std::vector<ImuSample>& imu, double tau, Eigen::Vector3d* gyro,
            Eigen::Vector3d* accel) {
  auto it = std::lower_bound(imu.begin(), imu.end(), tau,
                             [](const ImuSample& s, double v) { return s.t < v; });
  if (it == imu.begin()) {
    *gyro = it->gyro;
    *accel = it->accel;
    return;
  }
  if (it == imu.end()) {
    *gyro = imu.back().gyro;
    *accel = imu.back().accel;
    return;
  }
  const ImuSample& hi = *it;
  const ImuSample& lo = *(it - 1);
  const double dt = hi.t - lo.t;
  const double s = dt > 0.0 ? (tau - lo.t) / dt : 0.0;
  *gyro = lo.gyro + s * (hi.gyro - lo.gyro);
  *accel = lo.accel + s * (hi.accel - lo.accel);
}

void check_imu_window(const std::vector<ImuSample>& imu, double t0, double t1,
                      double max_gap, const char* who) {
  if (imu.size() < 2) {
    throw std::runtime_error(std::string(who) + ": IMU window has fewer than 2 samples");
  }
  if (imu.front().t > t0 + 1e-9 || imu.back().t < t1 - 1e-9) {
    throw std::runtime_error(std::string(who) + ": IMU window does not cover [" +
                             std::to_string(t0) + ", " + std::to_string(t1) + "]");
  }
  double prev = imu.front().t;
  for (const ImuSample& s : imu) {
    // Only gaps overlapping the open interval can corrupt interpolation there.
    if (s.t > t0 + 1e-12 && prev < t1 - 1e-12 && s.t - prev > max_gap + 1e-12) {
      throw std::runtime_error(std::string(who) + ": IMU gap of " +
                               std::to_string(s.t - prev) + " s inside the scan interval");
    }
    prev = s.t;
  }
}

}  // namespace

std::vector<Eigen::Vector3d> undistort_scan(const LidarScan& scan,
                                            const std::vector<ImuSample>& imu_window,
                                            const NavState& state_at_scan_end,
                                            double scan_end_time, double max_gap) {
  const double t_start = scan.frame_time;
  if (!(scan_end_time >= t_start)) {
    throw std::invalid_argument("undistort_scan: scan end before frame time");
  }
  check_imu_window(imu_window, t_start, scan_end_time, max_gap, "undistort_scan");

  // Node times: scan start, interior IMU sample times, scan end.
  std::vector<double> node_t;
  node_t.push_back(t_start);
  for (const ImuSample& s : imu_window) {
    if (s.t > t_start + 1e-12 && s.t < scan_end_time - 1e-12) node_t.push_back(s.t);
  }
  node_t.push_back(scan_end_time);
  const int n = static_cast<int>(node_t.size());

  // Integrate backward from the end state with midpoint measurements.
  std::vector<Eigen::Matrix3d> R(n);
  std::vector<Eigen::Vector3d> p(n), v(n);
  R[n - 1] = state_at_scan_end.attitude.matrix();
  p[n - 1] = state_at_scan_end.position;
  v[n - 1] = state_at_scan_end.velocity;
  for (int i = n - 2; i >= 0; --i) {
    const double dt = node_t[i + 1] - node_t[i];
    if (dt <= 0.0) {
      R[i] = R[i + 1];
      p[i] = p[i + 1];
      v[i] = v[i + 1];
      continue;
    }
    Eigen::Vector3d w_m, a_m;
    imu_at(imu_window, 0.5 * (node_t[i] + node_t[i + 1]), &w_m, &a_m);
    const Eigen::Vector3d w = w_m - state_at_scan_end.gyro_bias;
    const Eigen::Vector3d a = a_m - state_at_scan_end.accel_bias;
    const Eigen::Matrix3d r_mid = R[i + 1] * so3_exp_matrix(-0.5 * dt * w);
    R[i] = R[i + 1] * so3_exp_matrix(-dt * w);
    const Eigen::Vector3d acc_world = r_mid * a + state_at_scan_end.gravity;
    v[i] = v[i + 1] - acc_world * dt;
    p[i] = p[i + 1] - 0.5 * (v[i] + v[i + 1]) * dt;
  }

  const Pose T_IL = state_at_scan_end.imu_from_lidar();
  const Eigen::Matrix3d R_L = T_IL.rotation.matrix();
  const Eigen::Vector3d p_L = T_IL.translation;
  const Eigen::Matrix3d R_end_T = R[n - 1].transpose();
  const Eigen::Vector3d p_end = p[n - 1];

  std::vector<Eigen::Vector3d> out;
  out.reserve(scan.points.size());
  for (const LidarPoint& lp : scan.points) {
    const double tp = t_start + lp.offset_time;
    if (tp < t_start - 1e-9 || tp > scan_end_time + 1e-9) {
      throw std::invalid_argument("undistort_scan: point offset outside scan interval");
    }
    int hi = static_cast<int>(std::upper_bound(node_t.begin(), node_t.end(), tp) -
                              node_t.begin());
    hi = std::clamp(hi, 1, n - 1);
    const int lo = hi - 1;
    const double span = node_t[hi] - node_t[lo];
    double s = span > 0.0 ? (tp - node_t[lo]) / span : 1.0;
    s = std::clamp(s, 0.0, 1.0);
    const Eigen::Matrix3d R_t =
        R[lo] * so3_exp_matrix(s * so3_log_matrix(R[lo].transpose() * R[hi]));
    const Eigen::Vector3d p_t = p[lo] + s * (p[hi] - p[lo]);

    const Eigen::Vector3d p_world = R_t * (R_L * lp.position + p_L) + p_t;
    const Eigen::Vector3d p_imu_end = R_end_T * (p_world - p_end);
    out.push_back(R_L.transpose() * (p_imu_end - p_L));
  }
  return out;
}

Pipeline::Pipeline(const PipelineConfig& config)
    : config_(config), map_(config.map_params) {
  config_.validate();
}

void Pipeline::initialize(const std::vector<ImuSample>& static_window) {
  const InitialState init = static_initialize(
      static_window, 0.9 * config_.static_init_duration, config_.max_gyro_spread);
  x_ = init.state;
  P_ = init.covariance;
  x_.extrinsic_rotation = config_.frames.imu_from_lidar.rotation;
  x_.extrinsic_translation = config_.frames.imu_from_lidar.translation;
  t_state_ = static_window.back().t;
  initialized_ = true;
}

void Pipeline::propagate_to(double t_target, const std::vector<ImuSample>& imu) {
  if (t_target < t_state_ - 1e-9) {
    throw std::invalid_argument("pipeline: propagation target precedes state time");
  }
  if (t_target <= t_state_ + 1e-12) {
    t_state_ = std::max(t_state_, t_target);
    return;
  }
  if (imu.empty() || imu.front().t > t_state_ + 1e-9) {
    throw std::runtime_error("pipeline: IMU stream does not reach back to the state time");
  }
  // Zero-order hold: the sample at or before the current time drives the step.
  std::size_t idx =
      std::upper_bound(imu.begin(), imu.end(), t_state_ + 1e-9,
                       [](double v, const ImuSample& s) { return v < s.t; }) -
      imu.begin();
  if (idx == 0) throw std::runtime_error("pipeline: no IMU sample before state time");
  --idx;

  double t = t_state_;
  while (t < t_target - 1e-12) {
    while (idx + 1 < imu.size() && imu[idx + 1].t <= t + 1e-12) ++idx;
    double t_next = t_target;
    if (idx + 1 < imu.size() && imu[idx + 1].t < t_target) t_next = imu[idx + 1].t;
    const double dt = t_next - t;
    if (dt > config_.max_imu_gap + 1e-12) {
      throw std::runtime_error("pipeline: IMU gap of " + std::to_string(dt) +
                               " s at t=" + std::to_string(t));
    }
    if (dt > 1e-12) {
      const ImuSample& u = imu[idx];
      const auto [F, Qd] = process_jacobians(x_, u, dt, config_.noise);
      x_ = propagate_state(x_, u, dt);
      P_ = propagate_covariance(P_, F, Qd);
    }
    t = t_next;
  }
  t_state_ = t_target;
}

ScanRecord Pipeline::process_scan(const LidarScan& scan,
                                  const std::vector<ImuSample>& imu_slice) {
  if (!initialized_) throw std::logic_error("pipeline: process_scan before initialize");
  if (scan.frame_time < t_state_ - 1e-9) {
    throw std::invalid_argument("pipeline: scan starts before the current state time");
  }
  const double t_end = scan.frame_time + config_.scan_period;
  propagate_to(t_end, imu_slice);

  ScanRecord rec;
  rec.t = t_end;

  if (scan.points.empty()) {
    rec.degenerate = true;
  } else {
    const std::vector<Eigen::Vector3d> pts =
        undistort_scan(scan, imu_slice, x_, t_end, config_.max_imu_gap);
    std::vector<ScanPoint> cloud(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      cloud[i].position = pts[i];
      const double range = scan.points[i].position.norm();
      const double sigma = config_.point_sigma + config_.point_range_coeff * range;
      cloud[i].variance = std::max(sigma * sigma, 1e-12);
    }

    const UpdateResult res = iterated_update(x_, P_, cloud, map_, config_.update_params);
    x_ = res.state;
    P_ = res.covariance;
    rec.iterations = res.iterations;
    rec.inliers = res.inliers;
    rec.residual_rms = res.residual_rms;
    rec.degenerate = res.degenerate;

    // Grow the map in the converged pose: gated inliers reinforce existing
    // planes, unassociated points open new voxels. Gated-out residuals stay out.
    const Pose lidar_pose = x_.lidar_pose();
    std::vector<MapPoint> batch;
    batch.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const Eigen::Vector3d p_global = transform_point(lidar_pose, cloud[i].position);
      if (res.inlier_mask[i] || !map_.query_plane(p_global)) {
        batch.push_back({p_global, cloud[i].variance});
      }
    }
    map_.insert_points(batch, lidar_pose.translation);
  }

  rec.imu_pose = x_.imu_pose();
  rec.lidar_pose = x_.lidar_pose();
  rec.camera_pose = rec.lidar_pose * config_.frames.lidar_from_camera;
  rec.covariance_diagonal = P_.diagonal();
  return rec;
}

OdometryOutput run_sequence(const std::filesystem::path& log_dir,
                            const PipelineConfig& config,
                            const std::filesystem::path& out_dir) {
  config.validate();
  const SequenceLog log = read_sequence_log(log_dir, config.clock());
  if (log.scans.empty()) {
    throw std::runtime_error(log_dir.string() + ": no scans to process");
  }
  if (log.imu.size() < 2) {
    throw std::runtime_error(log_dir.string() + ": IMU log too short");
  }

  Pipeline pipe(config);
  std::vector<ImuSample> window;
  for (const ImuSample& s : log.imu) {
    if (s.t <= config.static_init_duration + 1e-9) window.push_back(s);
  }
  pipe.initialize(window);

  OdometryOutput out;
  Trajectory lidar_traj;
  for (const LidarScan& scan : log.scans) {
    if (scan.frame_time < pipe.state_time() - 1e-9) continue;
    ScanRecord rec = pipe.process_scan(scan, log.imu);
    lidar_traj.push_back({rec.t, rec.lidar_pose});
    out.records.push_back(std::move(rec));
  }
  if (out.records.empty()) {
    throw std::runtime_error(log_dir.string() +
                             ": no scans left after the initialization window");
  }

  std::filesystem::create_directories(out_dir);
  write_trajectory_csv((out_dir / "lidar_trajectory.csv").string(), lidar_traj);
  FrameChain chain = config.frames;
  write_trajectory_csv((out_dir / "camera_trajectory.csv").string(),
                       lidar_to_camera_trajectory(lidar_traj, chain));

  const std::filesystem::path diag_path = out_dir / "diagnostics.csv";
  std::FILE* f = std::fopen(diag_path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for write: " + diag_path.string());
  std::fputs("t,iters,inliers,residual_rms,degenerate\n", f);
  for (const ScanRecord& r : out.records) {
    std::fprintf(f, "%.9f,%d,%d,%.9f,%d\n", r.t, r.iterations, r.inliers,
                 r.residual_rms, r.degenerate ? 1 : 0);
  }
  std::fclose(f);

  out.map = pipe.take_map();
  return out;
}

}  // namespace riglab
