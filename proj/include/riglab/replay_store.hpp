// On-disk replay store: per-field directories of fixed-size chunk files plus
// a plain-text JSON index.
//
// Layout under the store root:
//   index.json                      frame/episode bookkeeping, chunk checksums
//   t/chunk_000000.bin              1 f64 per frame
//   position/chunk_000000.bin       3 f64 per frame
//   rotation/chunk_000000.bin       4 f64 per frame (qx qy qz qw)
//   gripper/chunk_000000.bin        1 f64 per frame
//   image_locator/chunk_000000.bin  3 u64 per frame (chunk, offset, bytes)
//   image/chunk_000000.bin          payload heap; a payload never spans chunks
//
// Fixed-width fields hold `chunk_frames` records per chunk, so any
// (episode, frame) lookup touches exactly one chunk per field. All numeric
// fields round-trip bit-exactly. Little-endian host assumed.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "riglab/alignment.hpp"

namespace riglab {

struct ReplayStoreParams {
  int chunk_frames = 1024;                  // records per fixed-width chunk
  std::uint64_t image_chunk_bytes = 1 << 20;  // soft cap; payloads never split
};

struct ChunkInfo {
  std::uint64_t bytes = 0;
  std::uint64_t checksum = 0;  // FNV-1a 64 of the chunk file contents
};

struct ReplayStoreIndex {
  std::int64_t frame_count = 0;
  int chunk_frames = 0;
  std::vector<std::int64_t> episode_offsets;  // (0, n1, n1+n2, ...); size = episodes + 1
  int action_horizon = 0;
  int proprio_window = 0;
  bool has_images = false;
  std::map<std::string, std::vector<ChunkInfo>> fields;
};

// Raw numeric content of one frame, exactly as stored.
struct StoredRecord {
  double t = 0.0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation = Eigen::Vector4d::Zero();  // qx qy qz qw
  double gripper = 0.0;
  std::uint64_t image_chunk = 0;
  std::uint64_t image_offset = 0;
  std::uint64_t image_bytes = 0;
};

class ReplayStore {
 public:
  static ReplayStore open(const std::filesystem::path& dir);

  const ReplayStoreIndex& index() const { return index_; }
  const std::filesystem::path& dir() const { return dir_; }

  int episode_count() const {
    return static_cast<int>(index_.episode_offsets.size()) - 1;
  }
  std::int64_t episode_length(int episode) const;

  // Single-record random access; reads one chunk region per field.
  StoredRecord record(int episode, int frame) const;
  std::vector<std::uint8_t> image(int episode, int frame) const;

  // Convenience decode of a record back into an aligned frame (alignment
  // residuals are not stored and come back zero).
  AlignedFrame frame(int episode, int frame) const;

 private:
  std::filesystem::path dir_;
  ReplayStoreIndex index_;
};

// Writes episodes into `out_dir` (created, must not already contain a store),
// then re-opens the result and byte-compares every record against the input
// before returning it. All episodes must agree on action_horizon /
// proprio_window; those extents plus the episode offsets go into the index.
// `image_payloads`, when given, is indexed by AlignedFrame::image_index and
// every frame must carry a valid index. Write failures and verification
// mismatches throw std::runtime_error naming the field and offset.
ReplayStore build_replay_store(
    const std::vector<Episode>& episodes, const std::filesystem::path& out_dir,
    const ReplayStoreParams& params = {},
    const std::vector<std::vector<std::uint8_t>>* image_payloads = nullptr);

struct StoreVerifyReport {
  std::int64_t frames = 0;
  int episodes = 0;
  std::uint64_t chunk_files = 0;
  std::uint64_t payload_bytes = 0;
};

// Structural audit of an existing store: index consistency (offsets start at
// zero, increase, and end at frame_count), per-field chunk counts and sizes,
// chunk checksums, image locators in bounds, and a full decode of every
// record. Throws std::runtime_error naming the failing field/chunk/offset.
StoreVerifyReport verify_replay_store(const std::filesystem::path& dir);

// FNV-1a 64-bit, the chunk checksum.
std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

}  // namespace riglab
