#include "riglab/log_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace riglab {
namespace {

static_assert(std::endian::native == std::endian::little,
              "scan .bin layout assumes a little-endian host");

namespace fs = std::filesystem;

FILE* open_or_throw(const fs::path& file, const char* mode) {
  FILE* f = std::fopen(file.string().c_str(), mode);
  if (!f) throw std::runtime_error("cannot open " + file.string());
  return f;
}

struct FileCloser {
  FILE* f;
  ~FileCloser() { std::fclose(f); }
};

std::vector<std::string> read_lines(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

[[noreturn]] void parse_fail(const fs::path& file, std::size_t line_no,
                             const std::string& what) {
  throw std::runtime_error(file.string() + ":" + std::to_string(line_no) + ": " + what);
}

}  // namespace

void write_imu_csv(const fs::path& file, const std::vector<ImuSample>& imu) {
  FILE* f = open_or_throw(file, "w");
  FileCloser closer{f};
  std::fprintf(f, "t,wx,wy,wz,ax,ay,az\n");
  for (const ImuSample& s : imu) {
    std::fprintf(f, "%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f\n", s.t, s.gyro.x(),
                 s.gyro.y(), s.gyro.z(), s.accel.x(), s.accel.y(), s.accel.z());
  }
}

std::vector<ImuSample> read_imu_csv(const fs::path& file) {
  const auto lines = read_lines(file);
  std::vector<ImuSample> out;
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    if (i == 0 && line.rfind("t,", 0) == 0) continue;
    ImuSample s;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf", &s.t, &s.gyro.x(),
                    &s.gyro.y(), &s.gyro.z(), &s.accel.x(), &s.accel.y(),
                    &s.accel.z()) != 7) {
      parse_fail(file, i + 1, "expected 7 comma-separated fields");
    }
    if (!out.empty() && s.t <= out.back().t) {
      parse_fail(file, i + 1, "timestamps not strictly increasing");
    }
    out.push_back(s);
  }
  return out;
}

void write_camera_stamps_csv(const fs::path& file, const std::vector<double>& stamps) {
  FILE* f = open_or_throw(file, "w");
  FileCloser closer{f};
  std::fprintf(f, "t\n");
  for (double t : stamps) std::fprintf(f, "%.9f\n", t);
}

std::vector<double> read_camera_stamps_csv(const fs::path& file) {
  const auto lines = read_lines(file);
  std::vector<double> out;
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    if (i == 0 && line == "t") continue;
    double t = 0.0;
    if (std::sscanf(line.c_str(), "%lf", &t) != 1) {
      parse_fail(file, i + 1, "expected a timestamp");
    }
    out.push_back(t);
  }
  return out;
}

void write_gripper_csv(const fs::path& file, const std::vector<GripperSample>& samples) {
  FILE* f = open_or_throw(file, "w");
  FileCloser closer{f};
  std::fprintf(f, "t,width\n");
  for (const GripperSample& s : samples) std::fprintf(f, "%.9f,%.9f\n", s.t, s.width);
}

std::vector<GripperSample> read_gripper_csv(const fs::path& file) {
  const auto lines = read_lines(file);
  std::vector<GripperSample> out;
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    if (i == 0 && line.rfind("t,", 0) == 0) continue;
    GripperSample s;
    if (std::sscanf(line.c_str(), "%lf,%lf", &s.t, &s.width) != 2) {
      parse_fail(file, i + 1, "expected t,width");
    }
    out.push_back(s);
  }
  return out;
}

void write_scan_bin(const fs::path& file, const LidarScan& scan) {
  FILE* f = open_or_throw(file, "wb");
  FileCloser closer{f};
  // Record: f64 offset_t, f32 x, f32 y, f32 z (20 bytes, packed).
  char rec[20];
  for (const LidarPoint& p : scan.points) {
    const double off = p.offset_time;
    const float xyz[3] = {static_cast<float>(p.position.x()),
                          static_cast<float>(p.position.y()),
                          static_cast<float>(p.position.z())};
    std::memcpy(rec, &off, 8);
    std::memcpy(rec + 8, xyz, 12);
    if (std::fwrite(rec, 1, sizeof(rec), f) != sizeof(rec)) {
      throw std::runtime_error("short write on " + file.string());
    }
  }
}

LidarScan read_scan_bin(const fs::path& file) {
  FILE* f = open_or_throw(file, "rb");
  FileCloser closer{f};
  LidarScan scan;
  char rec[20];
  std::size_t n;
  while ((n = std::fread(rec, 1, sizeof(rec), f)) == sizeof(rec)) {
    double off;
    float xyz[3];
    std::memcpy(&off, rec, 8);
    std::memcpy(xyz, rec + 8, 12);
    LidarPoint p;
    p.offset_time = off;
    p.position = Eigen::Vector3d(xyz[0], xyz[1], xyz[2]);
    scan.points.push_back(std::move(p));
  }
  if (n != 0) {
    throw std::runtime_error(file.string() + ": truncated record (" +
                             std::to_string(n) + " trailing bytes)");
  }
  return scan;
}

std::vector<fs::path> list_indexed_bins(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("not a directory: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".bin") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

void write_sequence_log(const fs::path& dir, const SequenceLog& log) {
  fs::create_directories(dir / "scans");
  write_imu_csv(dir / "imu.csv", log.imu);
  write_camera_stamps_csv(dir / "camera_stamps.csv", log.camera_stamps);
  char name[32];
  for (std::size_t k = 0; k < log.scans.size(); ++k) {
    std::snprintf(name, sizeof(name), "%06zu.bin", k);
    write_scan_bin(dir / "scans" / name, log.scans[k]);
  }
  if (!log.ground_truth.empty()) {
    write_trajectory_csv(dir / "ground_truth.csv", log.ground_truth);
  }
  if (!log.gripper.empty()) {
    write_gripper_csv(dir / "gripper.csv", log.gripper);
  }
  if (!log.images.empty()) {
    fs::create_directories(dir / "images");
    for (std::size_t k = 0; k < log.images.size(); ++k) {
      std::snprintf(name, sizeof(name), "%06zu.bin", k);
      std::ofstream out(dir / "images" / name, std::ios::binary);
      out.write(reinterpret_cast<const char*>(log.images[k].data()),
                static_cast<std::streamsize>(log.images[k].size()));
      if (!out) throw std::runtime_error("failed writing image payload " +
                                         std::to_string(k));
    }
  }
}

SequenceLog read_sequence_log(const fs::path& dir, const ClockConfig& clock) {
  SequenceLog log;
  log.imu = read_imu_csv(dir / "imu.csv");
  log.camera_stamps = read_camera_stamps_csv(dir / "camera_stamps.csv");
  const auto scan_files = list_indexed_bins(dir / "scans");
  log.scans.reserve(scan_files.size());
  for (std::size_t k = 0; k < scan_files.size(); ++k) {
    LidarScan scan = read_scan_bin(scan_files[k]);
    scan.frame_time = static_cast<double>(k) / clock.lidar_hz + clock.lidar_latency;
    log.scans.push_back(std::move(scan));
  }
  if (fs::exists(dir / "ground_truth.csv")) {
    log.ground_truth = read_trajectory_csv(dir / "ground_truth.csv");
  }
  if (fs::exists(dir / "gripper.csv")) {
    log.gripper = read_gripper_csv(dir / "gripper.csv");
  }
  if (fs::is_directory(dir / "images")) {
    for (const fs::path& file : list_indexed_bins(dir / "images")) {
      std::ifstream in(file, std::ios::binary);
      std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>());
      log.images.push_back(std::move(bytes));
    }
  }
  return log;
}

}  // namespace riglab
