#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "memdb/types.hpp"

namespace memdb {

/// Entry type tags. Values are part of the on-disk format.
enum class EntryType : std::uint8_t {
  kRecord = 1,
  kEdge = 2,
  kMetaPatch = 3,
  kPrune = 4,
  kViewPatch = 5,
  kCoherenceSample = 6,
  kMaintenanceReport = 7,
};

struct LogEntry {
  EntryType type;
  std::vector<std::byte> payload;
};

/// Byte offset of an entry inside a segment file.
struct LogLocation {
  std::uint64_t segment_id = 0;
  std::uint64_t offset = 0;

  friend bool operator==(const LogLocation&, const LogLocation&) = default;
};

struct SegmentInfo {
  std::uint64_t segment_id = 0;
  Timestamp min_time;
  Timestamp max_time;
  std::uint64_t record_count = 0;
  bool sealed = false;
};

enum class Durability {
  kFsync,     // fdatasync after every commit group
  kBuffered,  // write(2) only; survives process crashes, not power loss
};

struct LogOptions {
  std::uint64_t segment_max_bytes = 64ULL << 20;
  std::int64_t segment_max_span_micros = 24LL * 3600 * 1000 * 1000;
  Durability durability = Durability::kFsync;
  /// Every Nth record of a sealed segment gets a sparse index slot.
  std::uint32_t sparse_index_stride = 64;
  /// Read each group back after writing and compare checksums.
  bool verify_writes = false;
};

struct ReplayStats {
  std::uint64_t groups = 0;
  std::uint64_t entries = 0;
  /// Bytes dropped from the tail of the active segment (torn final group).
  std::uint64_t torn_bytes = 0;
};

/// Segmented append-only log for one namespace directory.
///
/// Segment file: 24-byte header, then commit groups. A group is a 16-byte
/// header {magic, entry_count, body_len, header_crc}, a body of entries
/// {type u8, len u32, payload, crc u32} and a trailing CRC-32C of the body.
/// A group is applied only when all of it is present and verified.
class SegmentedLog {
 public:
  using Visitor = std::function<void(EntryType, std::span<const std::byte>, LogLocation)>;

  /// Opens or creates the log under `dir` and replays every complete commit
  /// group in order. A torn final group in the active segment is cut off;
  /// any other damage throws Error(kCorruptInterior).
  static SegmentedLog open(const std::filesystem::path& dir, LogOptions options,
                           const Visitor& visitor, ReplayStats* stats = nullptr);

  SegmentedLog(SegmentedLog&&) noexcept;
  SegmentedLog& operator=(SegmentedLog&&) noexcept;
  ~SegmentedLog();

  /// Writes one commit group and returns each entry's location. The group is
  /// durable on return under Durability::kFsync. The active segment is sealed
  /// first when it is over the size limit or the group's first record would
  /// stretch its time span past the configured limit.
  std::vector<LogLocation> append_group(std::span<const LogEntry> entries);

  /// Seals the active segment (if it has content) and starts a new one.
  void seal_active();

  const std::vector<SegmentInfo>& segments() const noexcept { return segments_; }
  std::optional<SegmentInfo> segment(std::uint64_t segment_id) const;
  std::uint64_t active_segment_id() const noexcept;
  std::uint64_t total_bytes() const;

  /// All committed groups of a segment, in order.
  std::vector<std::vector<LogEntry>> read_groups(std::uint64_t segment_id) const;

  /// Replaces a sealed segment with `groups` (tmp file + rename). Calls
  /// `visitor` with the new location of every entry. Returns bytes reclaimed.
  std::uint64_t rewrite_sealed(std::uint64_t segment_id,
                               std::span<const std::vector<LogEntry>> groups,
                               const Visitor& visitor);

  /// Reads one entry back from disk and verifies its CRC.
  LogEntry read_entry(LogLocation location) const;

  /// Finds a record entry in a sealed segment through its sparse index.
  std::optional<LogLocation> locate_record(std::uint64_t segment_id, Timestamp t) const;

  void sync();

  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path segment_path(std::uint64_t segment_id) const;
  std::filesystem::path sidecar_path(std::uint64_t segment_id, const char* ext) const;

  static constexpr std::size_t kSegmentHeaderSize = 24;
  static constexpr std::size_t kGroupHeaderSize = 16;

 private:
  SegmentedLog(std::filesystem::path dir, LogOptions options);

  void open_active(std::uint64_t segment_id, bool create);
  void write_manifest() const;
  void write_sparse_index(const SegmentInfo& info) const;
  bool sparse_index_matches(const SegmentInfo& info) const;
  std::vector<std::pair<Timestamp, std::uint64_t>> build_sparse_index(
      std::uint64_t segment_id) const;
  void maybe_roll(std::optional<Timestamp> first_record_time);

  std::filesystem::path dir_;
  LogOptions options_;
  std::vector<SegmentInfo> segments_;  // ascending id; last one active
  int active_fd_ = -1;
  std::uint64_t active_size_ = 0;
};

/// Encodes one commit group as it appears on disk.
std::vector<std::byte> encode_group(std::span<const LogEntry> entries);

}  // namespace memdb
