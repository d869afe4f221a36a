#include "riglab/replay_store.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace riglab {
namespace {

using nlohmann::json;

constexpr const char* kFormatTag = "riglab-replay-v1";

// Fixed-width field schema; image payloads are the only variable field.
struct FieldSpec {
  const char* name;
  std::size_t record_bytes;
};
constexpr FieldSpec kScalarFields[] = {
    {"t", 8}, {"position", 24}, {"rotation", 32}, {"gripper", 8}};
constexpr FieldSpec kLocatorField = {"image_locator", 24};

std::filesystem::path chunk_path(const std::filesystem::path& dir,
                                 const std::string& field, std::size_t chunk) {
  char name[32];
  std::snprintf(name, sizeof(name), "chunk_%06zu.bin", chunk);
  return dir / field / name;
}

[[noreturn]] void write_failure(const std::string& field, std::size_t chunk,
                                std::uint64_t offset) {
  throw std::runtime_error("replay store: write failed: field '" + field +
                           "' chunk " + std::to_string(chunk) + " offset " +
                           std::to_string(offset));
}

// Buffers one chunk at a time; a chunk is written and checksummed in a
// single piece so the index always describes the bytes actually on disk.
class ChunkWriter {
 public:
  ChunkWriter(const std::filesystem::path& root, std::string field)
      : dir_(root / field), field_(std::move(field)) {}

  void append(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buffer_.insert(buffer_.end(), p, p + bytes);
  }

  void flush() {
    std::filesystem::create_directories(dir_);
    const auto path = chunk_path(dir_.parent_path(), field_, chunks_.size());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (out) {
      out.write(reinterpret_cast<const char*>(buffer_.data()),
                static_cast<std::streamsize>(buffer_.size()));
      out.flush();
    }
    if (!out) write_failure(field_, chunks_.size(), buffer_.size());
    chunks_.push_back({buffer_.size(), fnv1a64(buffer_.data(), buffer_.size())});
    buffer_.clear();
  }

  std::size_t buffered() const { return buffer_.size(); }
  std::size_t chunk_count() const { return chunks_.size(); }
  const std::vector<ChunkInfo>& chunks() const { return chunks_; }

 private:
  std::filesystem::path dir_;
  std::string field_;
  std::vector<std::uint8_t> buffer_;
  std::vector<ChunkInfo> chunks_;
};

std::vector<std::uint8_t> read_chunk_region(const std::filesystem::path& root,
                                            const std::string& field,
                                            std::size_t chunk,
                                            std::uint64_t offset,
                                            std::uint64_t bytes) {
  const auto path = chunk_path(root, field, chunk);
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("replay store: cannot open field '" + field +
                             "' chunk " + std::to_string(chunk));
  }
  in.seekg(static_cast<std::streamoff>(offset));
  std::vector<std::uint8_t> out(bytes);
  in.read(reinterpret_cast<char*>(out.data()),
          static_cast<std::streamsize>(bytes));
  if (!in) {
    throw std::runtime_error("replay store: short read: field '" + field +
                             "' chunk " + std::to_string(chunk) + " offset " +
                             std::to_string(offset));
  }
  return out;
}

std::string to_hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t from_hex(const std::string& s) {
  return std::stoull(s, nullptr, 16);
}

// Stored rotation: canonical-sign quaternion, scalar last, matching the
// trajectory CSV convention.
Eigen::Vector4d stored_quaternion(const Pose& pose) {
  Eigen::Quaterniond q = pose.rotation.quaternion();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return Eigen::Vector4d(q.x(), q.y(), q.z(), q.w());
}

bool bits_equal(double a, double b) {
  return std::memcmp(&a, &b, sizeof(double)) == 0;
}

std::int64_t checked_global_index(const ReplayStoreIndex& index, int episode,
                                  int frame) {
  const int episodes = static_cast<int>(index.episode_offsets.size()) - 1;
  if (episode < 0 || episode >= episodes) {
    throw std::out_of_range("replay store: episode out of range");
  }
  const std::int64_t len =
      index.episode_offsets[episode + 1] - index.episode_offsets[episode];
  if (frame < 0 || frame >= len) {
    throw std::out_of_range("replay store: frame out of range");
  }
  return index.episode_offsets[episode] + frame;
}

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

ReplayStore ReplayStore::open(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) {
    throw std::runtime_error("replay store: cannot open index: " +
                             (dir / "index.json").string());
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("replay store: malformed index: " +
                             std::string(e.what()));
  }

  ReplayStore store;
  store.dir_ = dir;
  ReplayStoreIndex& index = store.index_;
  try {
    if (j.at("format").get<std::string>() != kFormatTag) {
      throw std::runtime_error("replay store: unknown format tag");
    }
    index.frame_count = j.at("frame_count").get<std::int64_t>();
    index.chunk_frames = j.at("chunk_frames").get<int>();
    index.episode_offsets =
        j.at("episode_offsets").get<std::vector<std::int64_t>>();
    index.action_horizon = j.at("action_horizon").get<int>();
    index.proprio_window = j.at("proprio_window").get<int>();
    index.has_images = j.at("has_images").get<bool>();
    for (const auto& [name, chunks] : j.at("fields").items()) {
      std::vector<ChunkInfo>& list = index.fields[name];
      for (const auto& c : chunks) {
        list.push_back({c.at("bytes").get<std::uint64_t>(),
                        from_hex(c.at("fnv1a64").get<std::string>())});
      }
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("replay store: malformed index: " +
                             std::string(e.what()));
  }

  if (index.chunk_frames < 1) {
    throw std::runtime_error("replay store: chunk_frames must be positive");
  }
  if (index.episode_offsets.size() < 2 || index.episode_offsets.front() != 0 ||
      index.episode_offsets.back() != index.frame_count) {
    throw std::runtime_error(
        "replay store: episode offsets do not partition the arrays");
  }
  for (std::size_t i = 1; i < index.episode_offsets.size(); ++i) {
    if (index.episode_offsets[i] <= index.episode_offsets[i - 1]) {
      throw std::runtime_error("replay store: empty or negative episode");
    }
  }
  for (const FieldSpec& spec : kScalarFields) {
    if (!index.fields.count(spec.name)) {
      throw std::runtime_error("replay store: index missing field '" +
                               std::string(spec.name) + "'");
    }
  }
  if (index.has_images &&
      (!index.fields.count(kLocatorField.name) || !index.fields.count("image"))) {
    throw std::runtime_error("replay store: index missing image fields");
  }
  return store;
}

std::int64_t ReplayStore::episode_length(int episode) const {
  const int episodes = episode_count();
  if (episode < 0 || episode >= episodes) {
    throw std::out_of_range("replay store: episode out of range");
  }
  return index_.episode_offsets[episode + 1] - index_.episode_offsets[episode];
}

StoredRecord ReplayStore::record(int episode, int frame) const {
  const std::int64_t g = checked_global_index(index_, episode, frame);
  const std::size_t chunk = static_cast<std::size_t>(g / index_.chunk_frames);
  const std::uint64_t within = static_cast<std::uint64_t>(g % index_.chunk_frames);

  StoredRecord rec;
  auto read_field = [&](const char* name, std::size_t record_bytes, void* dst) {
    const auto bytes = read_chunk_region(dir_, name, chunk,
                                         within * record_bytes, record_bytes);
    std::memcpy(dst, bytes.data(), record_bytes);
  };
  read_field("t", 8, &rec.t);
  double pos[3], quat[4];
  read_field("position", 24, pos);
  read_field("rotation", 32, quat);
  rec.position = Eigen::Vector3d(pos[0], pos[1], pos[2]);
  rec.rotation = Eigen::Vector4d(quat[0], quat[1], quat[2], quat[3]);
  read_field("gripper", 8, &rec.gripper);
  if (index_.has_images) {
    std::uint64_t loc[3];
    read_field(kLocatorField.name, 24, loc);
    rec.image_chunk = loc[0];
    rec.image_offset = loc[1];
    rec.image_bytes = loc[2];
  }
  return rec;
}

std::vector<std::uint8_t> ReplayStore::image(int episode, int frame) const {
  if (!index_.has_images) return {};
  const StoredRecord rec = record(episode, frame);
  if (rec.image_bytes == 0) return {};
  return read_chunk_region(dir_, "image", rec.image_chunk, rec.image_offset,
                           rec.image_bytes);
}

AlignedFrame ReplayStore::frame(int episode, int frame_index) const {
  const StoredRecord rec = record(episode, frame_index);
  AlignedFrame out;
  out.t = rec.t;
  const Eigen::Quaterniond q(rec.rotation[3], rec.rotation[0], rec.rotation[1],
                             rec.rotation[2]);
  out.camera_pose = Pose(Rotation::from_quaternion(q), rec.position);
  out.gripper_width = rec.gripper;
  return out;
}

ReplayStore build_replay_store(
    const std::vector<Episode>& episodes, const std::filesystem::path& out_dir,
    const ReplayStoreParams& params,
    const std::vector<std::vector<std::uint8_t>>* image_payloads) {
  if (episodes.empty()) {
    throw std::invalid_argument("build_replay_store: need at least 1 episode");
  }
  if (params.chunk_frames < 1 || params.image_chunk_bytes < 1) {
    throw std::invalid_argument("build_replay_store: bad chunk parameters");
  }
  for (const Episode& ep : episodes) {
    if (ep.frames.empty()) {
      throw std::invalid_argument("build_replay_store: empty episode");
    }
    if (ep.action_horizon != episodes.front().action_horizon ||
        ep.proprio_window != episodes.front().proprio_window) {
      throw std::invalid_argument(
          "build_replay_store: episodes disagree on horizon/window");
    }
  }
  std::filesystem::create_directories(out_dir);
  if (std::filesystem::exists(out_dir / "index.json")) {
    throw std::runtime_error("build_replay_store: " + out_dir.string() +
                             " already contains a store");
  }

  const bool has_images = image_payloads != nullptr;
  ChunkWriter t_writer(out_dir, "t");
  ChunkWriter pos_writer(out_dir, "position");
  ChunkWriter rot_writer(out_dir, "rotation");
  ChunkWriter grip_writer(out_dir, "gripper");
  ChunkWriter loc_writer(out_dir, kLocatorField.name);
  ChunkWriter img_writer(out_dir, "image");

  ReplayStoreIndex index;
  index.chunk_frames = params.chunk_frames;
  index.action_horizon = episodes.front().action_horizon;
  index.proprio_window = episodes.front().proprio_window;
  index.has_images = has_images;
  index.episode_offsets.push_back(0);

  std::int64_t in_chunk = 0;
  auto roll_fixed_chunks = [&] {
    if (++in_chunk < params.chunk_frames) return;
    t_writer.flush();
    pos_writer.flush();
    rot_writer.flush();
    grip_writer.flush();
    if (has_images) loc_writer.flush();
    in_chunk = 0;
  };

  for (const Episode& ep : episodes) {
    for (const AlignedFrame& fr : ep.frames) {
      t_writer.append(&fr.t, 8);
      const double pos[3] = {fr.camera_pose.translation.x(),
                             fr.camera_pose.translation.y(),
                             fr.camera_pose.translation.z()};
      pos_writer.append(pos, 24);
      const Eigen::Vector4d q = stored_quaternion(fr.camera_pose);
      rot_writer.append(q.data(), 32);
      grip_writer.append(&fr.gripper_width, 8);

      if (has_images) {
        if (fr.image_index < 0 ||
            fr.image_index >= static_cast<int>(image_payloads->size())) {
          throw std::runtime_error(
              "build_replay_store: frame without image payload (index " +
              std::to_string(fr.image_index) + ")");
        }
        const auto& payload = (*image_payloads)[fr.image_index];
        if (img_writer.buffered() > 0 &&
            img_writer.buffered() + payload.size() > params.image_chunk_bytes) {
          img_writer.flush();
        }
        const std::uint64_t loc[3] = {img_writer.chunk_count(),
                                      img_writer.buffered(), payload.size()};
        loc_writer.append(loc, 24);
        img_writer.append(payload.data(), payload.size());
      }
      roll_fixed_chunks();
    }
    index.frame_count += static_cast<std::int64_t>(ep.frames.size());
    index.episode_offsets.push_back(index.frame_count);
  }
  if (in_chunk > 0) {
    t_writer.flush();
    pos_writer.flush();
    rot_writer.flush();
    grip_writer.flush();
    if (has_images) loc_writer.flush();
  }
  if (has_images && img_writer.buffered() > 0) img_writer.flush();

  index.fields["t"] = t_writer.chunks();
  index.fields["position"] = pos_writer.chunks();
  index.fields["rotation"] = rot_writer.chunks();
  index.fields["gripper"] = grip_writer.chunks();
  if (has_images) {
    index.fields[kLocatorField.name] = loc_writer.chunks();
    index.fields["image"] = img_writer.chunks();
  }

  json j;
  j["format"] = kFormatTag;
  j["frame_count"] = index.frame_count;
  j["chunk_frames"] = index.chunk_frames;
  j["episode_offsets"] = index.episode_offsets;
  j["action_horizon"] = index.action_horizon;
  j["proprio_window"] = index.proprio_window;
  j["has_images"] = index.has_images;
  j["fields"] = json::object();
  for (const auto& [name, chunks] : index.fields) {
    json list = json::array();
    for (const ChunkInfo& c : chunks) {
      list.push_back({{"bytes", c.bytes}, {"fnv1a64", to_hex(c.checksum)}});
    }
    j["fields"][name] = std::move(list);
  }
  {
    std::ofstream out(out_dir / "index.json", std::ios::trunc);
    if (out) out << j.dump(2) << "\n";
    if (!out) write_failure("index", 0, 0);
  }

  // Read-back verification: every record must byte-compare against its
  // source before the store is handed to the caller.
  ReplayStore store = ReplayStore::open(out_dir);
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const Episode& ep = episodes[e];
    for (std::size_t f = 0; f < ep.frames.size(); ++f) {
      const AlignedFrame& src = ep.frames[f];
      const StoredRecord rec =
          store.record(static_cast<int>(e), static_cast<int>(f));
      const Eigen::Vector4d q = stored_quaternion(src.camera_pose);
      bool ok = bits_equal(rec.t, src.t) &&
                bits_equal(rec.gripper, src.gripper_width);
      for (int i = 0; i < 3 && ok; ++i) {
        ok = bits_equal(rec.position[i], src.camera_pose.translation[i]);
      }
      for (int i = 0; i < 4 && ok; ++i) {
        ok = bits_equal(rec.rotation[i], q[i]);
      }
      if (ok && has_images) {
        ok = store.image(static_cast<int>(e), static_cast<int>(f)) ==
             (*image_payloads)[src.image_index];
      }
      if (!ok) {
        throw std::runtime_error(
            "build_replay_store: read-back mismatch at episode " +
            std::to_string(e) + " frame " + std::to_string(f));
      }
    }
  }
  return store;
}

StoreVerifyReport verify_replay_store(const std::filesystem::path& dir) {
  const ReplayStore store = ReplayStore::open(dir);
  const ReplayStoreIndex& index = store.index();

  StoreVerifyReport report;
  report.frames = index.frame_count;
  report.episodes = static_cast<int>(index.episode_offsets.size()) - 1;

  const std::int64_t expected_chunks =
      (index.frame_count + index.chunk_frames - 1) / index.chunk_frames;

  auto audit_chunks = [&](const std::string& name,
                          const std::vector<ChunkInfo>& chunks) {
    for (std::size_t c = 0; c < chunks.size(); ++c) {
      const auto path = chunk_path(dir, name, c);
      std::error_code ec;
      const std::uint64_t on_disk = std::filesystem::file_size(path, ec);
      if (ec || on_disk != chunks[c].bytes) {
        throw std::runtime_error("replay store verify: field '" + name +
                                 "' chunk " + std::to_string(c) +
                                 " has wrong size");
      }
      const auto bytes = read_chunk_region(dir, name, c, 0, chunks[c].bytes);
      if (fnv1a64(bytes.data(), bytes.size()) != chunks[c].checksum) {
        throw std::runtime_error("replay store verify: field '" + name +
                                 "' chunk " + std::to_string(c) +
                                 " checksum mismatch");
      }
      ++report.chunk_files;
    }
  };

  for (const auto& [name, chunks] : index.fields) {
    if (name != "image") {
      std::size_t record_bytes = 0;
      for (const FieldSpec& spec : kScalarFields) {
        if (name == spec.name) record_bytes = spec.record_bytes;
      }
      if (name == kLocatorField.name) record_bytes = kLocatorField.record_bytes;
      if (record_bytes == 0) {
        throw std::runtime_error("replay store verify: unknown field '" + name +
                                 "'");
      }
      if (static_cast<std::int64_t>(chunks.size()) != expected_chunks) {
        throw std::runtime_error("replay store verify: field '" + name +
                                 "' has wrong chunk count");
      }
      std::int64_t records = 0;
      for (std::size_t c = 0; c < chunks.size(); ++c) {
        if (chunks[c].bytes % record_bytes != 0) {
          throw std::runtime_error("replay store verify: field '" + name +
                                   "' chunk " + std::to_string(c) +
                                   " is not record aligned");
        }
        const std::int64_t n =
            static_cast<std::int64_t>(chunks[c].bytes / record_bytes);
        if (c + 1 < chunks.size() && n != index.chunk_frames) {
          throw std::runtime_error("replay store verify: field '" + name +
                                   "' chunk " + std::to_string(c) +
                                   " is not full");
        }
        records += n;
      }
      if (records != index.frame_count) {
        throw std::runtime_error("replay store verify: field '" + name +
                                 "' record count does not match frame count");
      }
    }
    audit_chunks(name, chunks);
  }

  // Decode every record; image locators must stay inside their chunk.
  const auto image_chunks = index.has_images
                                ? index.fields.at("image")
                                : std::vector<ChunkInfo>{};
  for (int e = 0; e < report.episodes; ++e) {
    const std::int64_t len = store.episode_length(e);
    for (std::int64_t f = 0; f < len; ++f) {
      const StoredRecord rec = store.record(e, static_cast<int>(f));
      if (!index.has_images || rec.image_bytes == 0) continue;
      if (rec.image_chunk >= image_chunks.size() ||
          rec.image_offset + rec.image_bytes >
              image_chunks[rec.image_chunk].bytes) {
        throw std::runtime_error(
            "replay store verify: image locator out of bounds at episode " +
            std::to_string(e) + " frame " + std::to_string(f));
      }
      report.payload_bytes += rec.image_bytes;
      store.image(e, static_cast<int>(f));
    }
  }
  return report;
}

}  // namespace riglab
