#include "riglab/simulate.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "riglab/log_io.hpp"
#include "riglab/rng.hpp"
#include "riglab/trajectory_csv.hpp"  // parse_pose_string, Trajectory

namespace riglab {

namespace {

Eigen::Vector3d parse_vec3(const std::string& text, const std::string& what) {
  std::istringstream in(text);
  Eigen::Vector3d v;
  if (!(in >> v.x() >> v.y() >> v.z())) {
    throw std::invalid_argument(what + ": expected three numbers, got '" + text + "'");
  }
  std::string rest;
  if (in >> rest) {
    throw std::invalid_argument(what + ": trailing content '" + rest + "'");
  }
  return v;
}

Eigen::Vector3d get_vec3(const Config& cfg, const std::string& section,
                         const std::string& key, const Eigen::Vector3d& fallback) {
  if (!cfg.has(section, key)) return fallback;
  return parse_vec3(cfg.get_string(section, key), cfg.name() + ": [" + section + "] " + key);
}

}  // namespace

void SimConfig::make_noiseless() {
  sigma_gyro = 0.0;
  sigma_accel = 0.0;
  sigma_r = 0.0;
}

SimConfig SimConfig::from_config(const Config& cfg) {
  SimConfig out;
  TrajectorySpec& tr = out.trajectory;
  tr.duration = cfg.get_double("trajectory", "duration", tr.duration);
  tr.settle_time = cfg.get_double("trajectory", "settle_time", tr.settle_time);
  tr.ramp_time = cfg.get_double("trajectory", "ramp_time", tr.ramp_time);
  tr.pos_amplitude = get_vec3(cfg, "trajectory", "pos_amplitude", tr.pos_amplitude);
  tr.pos_freq_hz = get_vec3(cfg, "trajectory", "pos_freq_hz", tr.pos_freq_hz);
  tr.pos_phase = get_vec3(cfg, "trajectory", "pos_phase", tr.pos_phase);
  tr.rot_amplitude = get_vec3(cfg, "trajectory", "rot_amplitude", tr.rot_amplitude);
  tr.rot_freq_hz = get_vec3(cfg, "trajectory", "rot_freq_hz", tr.rot_freq_hz);
  tr.rot_phase = get_vec3(cfg, "trajectory", "rot_phase", tr.rot_phase);

  out.scene_z_floor = cfg.get_double("scene", "z_floor", out.scene_z_floor);
  out.scene_x_wall = cfg.get_double("scene", "x_wall", out.scene_x_wall);
  out.scene_y_wall = cfg.get_double("scene", "y_wall", out.scene_y_wall);
  out.scene_extent = cfg.get_double("scene", "extent", out.scene_extent);

  out.imu_rate_hz = cfg.get_double("imu", "rate_hz", out.imu_rate_hz);
  out.sigma_gyro = cfg.get_double("imu", "sigma_gyro", out.sigma_gyro);
  out.sigma_accel = cfg.get_double("imu", "sigma_accel", out.sigma_accel);
  out.gyro_bias = get_vec3(cfg, "imu", "gyro_bias", out.gyro_bias);
  out.accel_bias = get_vec3(cfg, "imu", "accel_bias", out.accel_bias);
  out.gravity = get_vec3(cfg, "imu", "gravity", out.gravity);

  out.lidar_rays = static_cast<int>(cfg.get_int("lidar", "rays", out.lidar_rays));
  out.sigma_r = cfg.get_double("lidar", "sigma_r", out.sigma_r);
  out.lidar_max_range = cfg.get_double("lidar", "max_range", out.lidar_max_range);

  out.clock.camera_hz = cfg.get_double("clock", "camera_hz", out.clock.camera_hz);
  out.clock.lidar_hz = cfg.get_double("clock", "lidar_hz", out.clock.lidar_hz);
  out.clock.camera_latency = cfg.get_double("clock", "camera_latency", out.clock.camera_latency);
  out.clock.lidar_latency = cfg.get_double("clock", "lidar_latency", out.clock.lidar_latency);

  if (cfg.has("frames", "imu_from_lidar")) {
    out.frames.imu_from_lidar = parse_pose_string(cfg.get_string("frames", "imu_from_lidar"));
  }
  if (cfg.has("frames", "lidar_from_camera")) {
    out.frames.lidar_from_camera = parse_pose_string(cfg.get_string("frames", "lidar_from_camera"));
  }
  if (cfg.has("frames", "lidar_from_tcp")) {
    out.frames.lidar_from_tcp = parse_pose_string(cfg.get_string("frames", "lidar_from_tcp"));
  }

  out.write_gripper = cfg.get_bool("dataset", "gripper", out.write_gripper);
  out.write_images = cfg.get_bool("dataset", "images", out.write_images);
  return out;
}

void simulate_sequence(const SimConfig& cfg, std::uint64_t seed,
                       const std::filesystem::path& out_dir) {
  const TrajectoryModel traj(cfg.trajectory);
  const SceneModel scene = SceneModel::corner_room(cfg.scene_z_floor, cfg.scene_x_wall,
                                                   cfg.scene_y_wall, cfg.scene_extent);
  const double duration = cfg.trajectory.duration;
  const double period = 1.0 / cfg.clock.lidar_hz;

  Rng root(seed);
  Rng imu_rng = root.fork(1);
  Rng lidar_rng = root.fork(2);

  SequenceLog log;
  log.imu = sample_imu(traj, cfg.imu_rate_hz, cfg.sigma_gyro, cfg.sigma_accel,
                       cfg.gyro_bias, cfg.accel_bias, cfg.gravity, imu_rng);

  const TriggerTimestamps stamps = generate_timestamps(cfg.clock, duration);
  log.camera_stamps = stamps.camera;

  const auto pattern = make_spherical_pattern(cfg.lidar_rays, period);
  Trajectory truth;
  for (double t : stamps.lidar) {
    if (t + period > duration + 1e-9) break;  // scan would outlive the trajectory
    log.scans.push_back(sample_lidar_scan(traj, scene, t, pattern, cfg.sigma_r,
                                          lidar_rng, cfg.frames.imu_from_lidar,
                                          cfg.lidar_max_range));
    const double t_end = t + period;
    truth.push_back({t_end, traj.pose(t_end) * cfg.frames.imu_from_lidar});
  }
  log.ground_truth = truth;

  if (cfg.write_gripper) {
    // A smooth opening/closing profile on the camera clock, in meters.
    for (double t : stamps.camera) {
      GripperSample g;
      g.t = t;
      g.width = 0.04 + 0.03 * std::sin(0.8 * t);
      log.gripper.push_back(g);
    }
  }
  if (cfg.write_images) {
    Rng img_rng = root.fork(3);
    for (std::size_t k = 0; k < stamps.camera.size(); ++k) {
      std::vector<std::uint8_t> blob(64);
      for (auto& b : blob) b = static_cast<std::uint8_t>(img_rng.integer() & 0xff);
      log.images.push_back(std::move(blob));
    }
  }

  write_sequence_log(out_dir, log);
}

}  // namespace riglab
