// riglab command line: simulation, odometry, calibration, alignment,
// packaging and evaluation behind one binary.
//
// Exit codes: 0 success, 1 domain error (bad data, failed solve), 2 usage.
#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "riglab/alignment.hpp"
#include "riglab/calibration.hpp"
#include "riglab/config.hpp"
#include "riglab/evaluation.hpp"
#include "riglab/log_io.hpp"
#include "riglab/pipeline.hpp"
#include "riglab/replay_store.hpp"
#include "riglab/simulate.hpp"
#include "riglab/svg_plot.hpp"
#include "riglab/trajectory_csv.hpp"

namespace fs = std::filesystem;
using namespace riglab;

namespace {

Config load_config(const std::string& path,
                   const std::vector<std::string>& overrides) {
  Config cfg = path.empty() ? Config() : Config::from_file(path);
  for (const std::string& item : overrides) {
    const auto dot = item.find('.');
    const auto eq = item.find('=', dot == std::string::npos ? 0 : dot);
    if (dot == std::string::npos || eq == std::string::npos || dot > eq) {
      throw std::invalid_argument("--set expects section.key=value, got '" +
                                  item + "'");
    }
    cfg.set(item.substr(0, dot), item.substr(dot + 1, eq - dot - 1),
            item.substr(eq + 1));
  }
  return cfg;
}

// Runs fn(i) for i in [0, count) on up to `jobs` threads. The first error
// wins and is rethrown after all workers finish.
void parallel_for(std::size_t count, int jobs,
                  const std::function<void(std::size_t)>& fn) {
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(count)));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::string first_error;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error.empty()) first_error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (!first_error.empty()) throw std::runtime_error(first_error);
}

// Output directory per input: the --out directory itself for a single
// input, one subdirectory per input stem otherwise.
fs::path fanout_dir(const fs::path& out, const std::vector<std::string>& inputs,
                    std::size_t i) {
  if (inputs.size() == 1) return out;
  return out / fs::path(inputs[i]).filename();
}

std::vector<std::vector<double>> read_numeric_csv(const fs::path& file,
                                                  std::size_t columns) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open: " + file.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && !line.empty() &&
        !(std::isdigit(static_cast<unsigned char>(line[0])) || line[0] == '-' ||
          line[0] == '+' || line[0] == '.')) {
      continue;  // header
    }
    std::istringstream ss(line);
    std::vector<double> row(columns);
    char comma = ',';
    for (std::size_t c = 0; c < columns; ++c) {
      if (c > 0 && (!(ss >> comma) || comma != ',')) {
        throw std::runtime_error("malformed CSV at " + file.string() + ":" +
                                 std::to_string(lineno));
      }
      if (!(ss >> row[c])) {
        throw std::runtime_error("malformed CSV at " + file.string() + ":" +
                                 std::to_string(lineno));
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<fs::path> sorted_files(const fs::path& dir,
                                   const std::string& suffix) {
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("not a directory: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() >= suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

CalibrationTarget load_target_spec(const fs::path& file) {
  const Config cfg = Config::from_file(file.string());
  CalibrationTarget target = CalibrationTarget::standard();
  for (int h = 0; h < 4; ++h) {
    const std::string key = "hole_" + std::to_string(h);
    if (cfg.has("target", key)) {
      target.hole_centers[h] = cfg.get_vec3("target", key);
    }
  }
  target.hole_radius = cfg.get_double("target", "radius", target.hole_radius);
  target.board_width = cfg.get_double("target", "width", target.board_width);
  target.board_height = cfg.get_double("target", "height", target.board_height);
  target.validate();
  return target;
}

int run_simulate(const std::string& out, const std::string& config_path,
                 const std::vector<std::string>& overrides, std::uint64_t seed,
                 bool gripper, bool images) {
  SimConfig cfg = SimConfig::from_config(load_config(config_path, overrides));
  cfg.write_gripper = cfg.write_gripper || gripper;
  cfg.write_images = cfg.write_images || images;
  simulate_sequence(cfg, seed, out);
  std::cout << "simulate: wrote " << out << " (seed " << seed << ")\n";
  return 0;
}

int run_slam(const std::vector<std::string>& logs,
             const std::string& config_path,
             const std::vector<std::string>& overrides, const std::string& out,
             int jobs, bool export_map) {
  const PipelineConfig config =
      PipelineConfig::from_config(load_config(config_path, overrides));
  std::vector<std::string> summaries(logs.size());
  parallel_for(logs.size(), jobs, [&](std::size_t i) {
    const fs::path out_dir = fanout_dir(out, logs, i);
    OdometryOutput result = run_sequence(logs[i], config, out_dir);
    if (export_map) {
      result.map.export_ply((out_dir / "map.ply").string());
    }
    std::ostringstream line;
    line << "slam: " << logs[i] << " -> " << out_dir.string() << " ("
         << result.records.size() << " scans)";
    summaries[i] = line.str();
  });
  for (const std::string& s : summaries) std::cout << s << "\n";
  return 0;
}

int run_calib_intrinsics(const std::string& views_dir, const std::string& out) {
  std::vector<CheckerboardView> views;
  for (const fs::path& file : sorted_files(views_dir, ".csv")) {
    CheckerboardView view;
    for (const auto& row : read_numeric_csv(file, 5)) {
      view.corners.push_back(
          {Eigen::Vector3d(row[0], row[1], row[2]),
           Eigen::Vector2d(row[3], row[4])});
    }
    views.push_back(std::move(view));
  }
  const IntrinsicsSolution solution = calibrate_intrinsics(views);
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for write: " + out);
  const FisheyeIntrinsics& k = solution.intrinsics;
  f << "# fisheye intrinsics, equidistant model; f/cx/cy in pixels\n";
  f << "[intrinsics]\n";
  f << "f = " << std::setprecision(12) << k.f << "\n";
  f << "cx = " << k.cx << "\ncy = " << k.cy << "\n";
  f << "k1 = " << k.k1 << "\nk2 = " << k.k2 << "\nk3 = " << k.k3
    << "\nk4 = " << k.k4 << "\n";
  f << "theta_max = " << k.theta_max << "\n";
  f << "rms_px = " << solution.rms_reprojection_px << "\n";
  f << "views = " << views.size() << "\n";
  if (!f) throw std::runtime_error("write failed: " + out);
  std::cout << "calib intrinsics: f = " << k.f
            << " px, rms = " << solution.rms_reprojection_px << " px over "
            << views.size() << " views\n";
  return 0;
}

int run_calib_extrinsics(const std::string& frames_dir,
                         const std::string& target_file,
                         const std::string& out) {
  const CalibrationTarget target = load_target_spec(target_file);
  const auto lidar_files = sorted_files(frames_dir, "_lidar.csv");
  if (lidar_files.empty()) {
    throw std::runtime_error("no *_lidar.csv frames under " + frames_dir);
  }
  std::vector<std::vector<Correspondence>> frames;
  std::vector<Correspondence> pooled;
  for (std::size_t i = 0; i < lidar_files.size(); ++i) {
    const std::string stem = lidar_files[i].filename().string();
    const fs::path camera_file =
        lidar_files[i].parent_path() /
        (stem.substr(0, stem.size() - std::string("_lidar.csv").size()) +
         "_camera.csv");
    std::vector<Eigen::Vector3d> cloud;
    for (const auto& row : read_numeric_csv(lidar_files[i], 3)) {
      cloud.emplace_back(row[0], row[1], row[2]);
    }
    const auto camera_rows = read_numeric_csv(camera_file, 3);
    if (camera_rows.size() != 4) {
      throw std::runtime_error(camera_file.string() +
                               ": expected exactly 4 hole centers");
    }
    const auto lidar_centers = extract_hole_centers_lidar(cloud, target);
    std::vector<Correspondence> frame;
    for (int h = 0; h < 4; ++h) {
      Correspondence c;
      c.p_lidar = lidar_centers[h];
      c.p_camera =
          Eigen::Vector3d(camera_rows[h][0], camera_rows[h][1], camera_rows[h][2]);
      c.frame_id = static_cast<int>(i);
      frame.push_back(c);
      pooled.push_back(c);
    }
    frames.push_back(std::move(frame));
  }
  const Pose camera_from_lidar =
      refine_extrinsic(frames, solve_extrinsic_svd(pooled));
  const Pose lidar_from_camera = camera_from_lidar.inverse();

  double rms = 0.0;
  for (const Correspondence& c : pooled) {
    rms += (c.p_camera - camera_from_lidar * c.p_lidar).squaredNorm();
  }
  rms = std::sqrt(rms / static_cast<double>(pooled.size()));

  std::ofstream f(out, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for write: " + out);
  f << "# lidar_from_camera maps camera-frame points into the LiDAR frame:\n";
  f << "#   p_lidar = R * p_camera + t\n";
  f << "# pose format: x y z qx qy qz qw (Hamilton, scalar last)\n";
  f << "[extrinsics]\n";
  f << "lidar_from_camera = " << format_pose_string(lidar_from_camera) << "\n";
  f << std::setprecision(12) << "rms_m = " << rms << "\n";
  f << "frames = " << frames.size() << "\n";
  if (!f) throw std::runtime_error("write failed: " + out);
  std::cout << "calib extrinsics: rms = " << rms << " m over "
            << frames.size() << " frames\n";
  return 0;
}

int run_align(const std::string& log_dir, const std::string& trajectory,
              const std::string& out, double tol_ms,
              const std::string& config_path,
              const std::vector<std::string>& overrides) {
  const Config cfg = load_config(config_path, overrides);
  const PipelineConfig pipeline_cfg = PipelineConfig::from_config(cfg);
  const SequenceLog log = read_sequence_log(log_dir, pipeline_cfg.clock());

  fs::path traj_path(trajectory);
  if (!fs::exists(traj_path) && traj_path.is_relative()) {
    traj_path = fs::path(log_dir) / traj_path;  // allow log-relative names
  }
  const Trajectory poses = read_trajectory_csv(traj_path.string());

  const auto camera_ts = apply_latency_offset(
      log.camera_stamps, cfg.get_double("latency", "camera", 0.0));
  const auto shifted_poses =
      apply_latency_offset(poses, cfg.get_double("latency", "pose", 0.0));
  const auto gripper = apply_latency_offset(
      log.gripper, cfg.get_double("latency", "gripper", 0.0));

  AlignmentResult result =
      align_frames(camera_ts, shifted_poses, gripper, tol_ms / 1000.0);

  if (!log.images.empty() && log.images.size() != log.camera_stamps.size()) {
    throw std::runtime_error(log_dir +
                             ": image payload count does not match camera stamps");
  }
  fs::create_directories(out);
  if (!log.images.empty()) {
    fs::create_directories(fs::path(out) / "images");
    for (std::size_t k = 0; k < result.frames.size(); ++k) {
      const auto& payload = log.images[result.frames[k].image_index];
      char name[32];
      std::snprintf(name, sizeof(name), "%06zu.bin", k);
      const fs::path dst = fs::path(out) / "images" / name;
      std::ofstream img(dst, std::ios::binary | std::ios::trunc);
      img.write(reinterpret_cast<const char*>(payload.data()),
                static_cast<std::streamsize>(payload.size()));
      if (!img) throw std::runtime_error("write failed: " + dst.string());
      result.frames[k].image_index = static_cast<int>(k);
    }
  }
  write_aligned_csv(fs::path(out) / "frames.csv", result.frames);
  std::cout << "align: kept " << result.frames.size() << " of "
            << camera_ts.size() << " camera frames (pose drops "
            << result.pose_dropped << ", aux drops " << result.aux_dropped
            << ")\n";
  return 0;
}

int run_package(const std::vector<std::string>& aligned_dirs,
                const std::string& out, int horizon, int window, double gap,
                int min_frames, int chunk_frames, int jobs) {
  std::vector<std::string> summaries(aligned_dirs.size());
  parallel_for(aligned_dirs.size(), jobs, [&](std::size_t i) {
    const fs::path src(aligned_dirs[i]);
    const auto frames = read_aligned_csv(src / "frames.csv");

    std::vector<std::vector<std::uint8_t>> payloads;
    const bool has_images = fs::is_directory(src / "images");
    if (has_images) {
      for (const fs::path& file : list_indexed_bins(src / "images")) {
        std::ifstream in(file, std::ios::binary);
        payloads.emplace_back(std::istreambuf_iterator<char>(in),
                              std::istreambuf_iterator<char>());
        if (in.bad()) throw std::runtime_error("read failed: " + file.string());
      }
    }

    SegmentationParams seg;
    seg.gap_threshold = gap;
    seg.min_frames = min_frames;
    SegmentationResult segmented = segment_episodes(frames, seg);
    if (segmented.episodes.empty()) {
      throw std::runtime_error(src.string() +
                               ": no episode reaches the minimum length");
    }
    for (Episode& ep : segmented.episodes) {
      ep.action_horizon = horizon;
      ep.proprio_window = window;
    }
    ReplayStoreParams params;
    params.chunk_frames = chunk_frames;
    const fs::path store_dir = fanout_dir(out, aligned_dirs, i);
    const ReplayStore store =
        build_replay_store(segmented.episodes, store_dir, params,
                           has_images ? &payloads : nullptr);
    std::ostringstream line;
    line << "package: " << store_dir.string() << " <- "
         << segmented.episodes.size() << " episodes, "
         << store.index().frame_count << " frames (short-episode drops "
         << segmented.short_dropped << ")";
    summaries[i] = line.str();
  });
  for (const std::string& s : summaries) std::cout << s << "\n";
  return 0;
}

int run_verify(const std::string& store) {
  const StoreVerifyReport report = verify_replay_store(store);
  std::cout << "verify: " << store << ": " << report.frames << " frames in "
            << report.episodes << " episodes, " << report.chunk_files
            << " chunk files, " << report.payload_bytes
            << " payload bytes, all checksums match\n";
  return 0;
}

EvalReport run_eval_common(const std::string& estimate,
                           const std::string& ground_truth, double tol,
                           double rpe_delta, bool no_align) {
  EvalParams params;
  params.associate_tol = tol;
  params.rpe_delta = rpe_delta;
  params.align = !no_align;
  return evaluate_trajectory_files(estimate, ground_truth, params);
}

int run_eval(const std::string& estimate, const std::string& ground_truth,
             const std::string& out, double tol, double rpe_delta,
             bool no_align) {
  const EvalReport report =
      run_eval_common(estimate, ground_truth, tol, rpe_delta, no_align);
  fs::create_directories(out);
  write_eval_report(fs::path(out) / "report.txt", report);
  write_eval_series_csv(fs::path(out) / "series.csv", report);
  std::cout << "eval: ate_rmse = " << report.ate_rmse
            << " m, ate_max = " << report.ate_max
            << " m, rpe_trans_rmse = " << report.rpe_trans_rmse
            << " m over " << report.associated << " poses\n";
  return 0;
}

int run_plot(const std::string& estimate, const std::string& ground_truth,
             const std::string& out, double tol, bool no_align,
             const std::string& title) {
  const EvalReport report =
      run_eval_common(estimate, ground_truth, tol, 1.0, no_align);
  SvgPlotOptions options;
  if (!title.empty()) options.title = title;
  write_trajectory_svg(out, read_trajectory_csv(estimate),
                       read_trajectory_csv(ground_truth), report.series,
                       options);
  std::cout << "plot: wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"riglab: LiDAR-inertial rig simulation, odometry, calibration "
               "and dataset tooling"};
  app.require_subcommand(1);
  int rc = 0;

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic sequence log");
  std::string sim_out, sim_config;
  std::vector<std::string> sim_set;
  std::uint64_t sim_seed = 0;
  bool sim_gripper = false, sim_images = false;
  sim->add_option("--out", sim_out, "output log directory")->required();
  sim->add_option("--config", sim_config, "key=value config file");
  sim->add_option("--set", sim_set, "override: section.key=value");
  sim->add_option("--seed", sim_seed, "random seed (default 0)");
  sim->add_flag("--gripper", sim_gripper, "write the gripper channel");
  sim->add_flag("--images", sim_images, "write synthetic image payloads");
  sim->callback([&] {
    rc = run_simulate(sim_out, sim_config, sim_set, sim_seed, sim_gripper,
                      sim_images);
  });

  // slam
  auto* slam = app.add_subcommand("slam", "run odometry over sequence logs");
  std::vector<std::string> slam_logs;
  std::string slam_config, slam_out;
  std::vector<std::string> slam_set;
  int slam_jobs = 1;
  bool slam_map = false;
  slam->add_option("--log", slam_logs, "sequence log directory (repeatable)")
      ->required();
  slam->add_option("--config", slam_config, "key=value config file");
  slam->add_option("--set", slam_set, "override: section.key=value");
  slam->add_option("--out", slam_out, "output directory")->required();
  slam->add_option("--jobs", slam_jobs, "parallel sequences (default 1)");
  slam->add_flag("--export-map", slam_map, "write map.ply of the voxel map");
  slam->callback([&] {
    rc = run_slam(slam_logs, slam_config, slam_set, slam_out, slam_jobs,
                  slam_map);
  });

  // calib
  auto* calib = app.add_subcommand("calib", "camera and rig calibration");
  calib->require_subcommand(1);
  auto* calib_in = calib->add_subcommand(
      "intrinsics", "fisheye intrinsics from checkerboard corner files");
  std::string views_dir, calib_in_out = "intrinsics.txt";
  calib_in->add_option("--views", views_dir,
                       "directory of per-view corner CSVs "
                       "(board_x,board_y,board_z,pixel_u,pixel_v)")
      ->required();
  calib_in->add_option("--out", calib_in_out, "output calibration file");
  calib_in->callback([&] { rc = run_calib_intrinsics(views_dir, calib_in_out); });

  auto* calib_ex = calib->add_subcommand(
      "extrinsics", "LiDAR-camera extrinsics from target-board frames");
  std::string frames_dir, target_file, calib_ex_out = "extrinsics.txt";
  calib_ex->add_option("--frames", frames_dir,
                       "directory of NNN_lidar.csv / NNN_camera.csv pairs")
      ->required();
  calib_ex->add_option("--target", target_file, "target spec file")->required();
  calib_ex->add_option("--out", calib_ex_out, "output calibration file");
  calib_ex->callback(
      [&] { rc = run_calib_extrinsics(frames_dir, target_file, calib_ex_out); });

  // align
  auto* align = app.add_subcommand(
      "align", "attach poses and aux channels to the camera timeline");
  std::string align_log, align_traj, align_out, align_config;
  std::vector<std::string> align_set;
  double align_tol_ms = 10.0;
  align->add_option("--log", align_log, "sequence log directory")->required();
  align->add_option("--trajectory", align_traj,
                    "trajectory CSV (log-relative names allowed)")
      ->required();
  align->add_option("--out", align_out, "output directory")->required();
  align->add_option("--tol-ms", align_tol_ms, "match tolerance, ms (default 10)");
  align->add_option("--config", align_config,
                    "config with [clock] rates and [latency] offsets");
  align->add_option("--set", align_set, "override: section.key=value");
  align->callback([&] {
    rc = run_align(align_log, align_traj, align_out, align_tol_ms, align_config,
                   align_set);
  });

  // package
  auto* package = app.add_subcommand(
      "package", "segment aligned frames into episodes and build replay stores");
  std::vector<std::string> package_dirs;
  std::string package_out;
  int package_horizon = 16, package_window = 2, package_min_frames = 20;
  int package_chunk = 1024, package_jobs = 1;
  double package_gap = 0.5;
  package->add_option("--aligned", package_dirs,
                      "aligned directory (repeatable)")
      ->required();
  package->add_option("--out", package_out, "store output directory")->required();
  package->add_option("--horizon", package_horizon,
                      "relative action horizon (default 16)");
  package->add_option("--window", package_window,
                      "proprioception window (default 2)");
  package->add_option("--gap", package_gap,
                      "episode gap threshold, s (default 0.5)");
  package->add_option("--min-frames", package_min_frames,
                      "minimum episode length (default 20)");
  package->add_option("--chunk-frames", package_chunk,
                      "records per chunk file (default 1024)");
  package->add_option("--jobs", package_jobs, "parallel stores (default 1)");
  package->callback([&] {
    rc = run_package(package_dirs, package_out, package_horizon, package_window,
                     package_gap, package_min_frames, package_chunk,
                     package_jobs);
  });

  // verify
  auto* verify = app.add_subcommand("verify", "audit a replay store on disk");
  std::string verify_store;
  verify->add_option("--store", verify_store, "store directory")->required();
  verify->callback([&] { rc = run_verify(verify_store); });

  // eval
  auto* eval = app.add_subcommand("eval", "trajectory accuracy metrics");
  std::string eval_est, eval_gt, eval_out = "eval";
  double eval_tol = 0.02, eval_rpe = 1.0;
  bool eval_no_align = false;
  eval->add_option("--estimate", eval_est, "estimated trajectory CSV")->required();
  eval->add_option("--ground-truth", eval_gt, "reference trajectory CSV")
      ->required();
  eval->add_option("--out", eval_out, "report directory (default ./eval)");
  eval->add_option("--tol", eval_tol, "association tolerance, s (default 0.02)");
  eval->add_option("--rpe-delta", eval_rpe, "RPE interval, s (default 1)");
  eval->add_flag("--no-align", eval_no_align, "skip the rigid alignment");
  eval->callback([&] {
    rc = run_eval(eval_est, eval_gt, eval_out, eval_tol, eval_rpe, eval_no_align);
  });

  // plot
  auto* plot = app.add_subcommand("plot", "SVG figure of estimate vs truth");
  std::string plot_est, plot_gt, plot_out = "trajectory.svg", plot_title;
  double plot_tol = 0.02;
  bool plot_no_align = false;
  plot->add_option("--estimate", plot_est, "estimated trajectory CSV")->required();
  plot->add_option("--ground-truth", plot_gt, "reference trajectory CSV")
      ->required();
  plot->add_option("--out", plot_out, "output SVG file");
  plot->add_option("--tol", plot_tol, "association tolerance, s");
  plot->add_option("--title", plot_title, "figure title");
  plot->add_flag("--no-align", plot_no_align, "skip the rigid alignment");
  plot->callback([&] {
    rc = run_plot(plot_est, plot_gt, plot_out, plot_tol, plot_no_align,
                  plot_title);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // help text on stdout, exit 0
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
