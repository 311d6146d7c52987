#include "memdb/segment_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <string>

#include "file_util.hpp"
#include "memdb/codec.hpp"

namespace memdb {
namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 8> kSegmentMagic = {'M', 'D', 'B', 'S', 'E', 'G', '0', '1'};
constexpr std::array<char, 8> kManifestMagic = {'M', 'D', 'B', 'M', 'A', 'N', '0', '1'};
constexpr std::array<char, 8> kIndexMagic = {'M', 'D', 'B', 'I', 'D', 'X', '0', '1'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint32_t kGroupMagic = 0x31505247;  // "GRP1"
constexpr std::size_t kEntryOverhead = 1 + 4 + 4;   // type, len, crc

std::span<const std::byte> magic_bytes(const std::array<char, 8>& m) {
  return std::as_bytes(std::span(m));
}

bool has_magic(std::span<const std::byte> data, const std::array<char, 8>& m) {
  return data.size() >= m.size() && std::equal(m.begin(), m.end(), data.begin(), [](char c, std::byte b) {
           return static_cast<std::byte>(c) == b;
         });
}

std::uint32_t read_u32(std::span<const std::byte> data, std::size_t pos) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(data[pos + i])) << (8 * i);
  }
  return v;
}

std::vector<std::byte> encode_segment_header(std::uint64_t segment_id) {
  ByteWriter w;
  w.bytes(magic_bytes(kSegmentMagic));
  w.u32(kFormatVersion);
  w.u64(segment_id);
  w.u32(crc32c(w.buffer()));
  return w.take();
}

enum class GroupStatus { kOk, kIncomplete, kBadHeader, kBadBody };

struct ParsedEntry {
  EntryType type;
  std::span<const std::byte> payload;
  std::uint64_t offset;
};

struct ParsedGroup {
  std::vector<ParsedEntry> entries;
  std::size_t end = 0;
};

bool valid_entry_type(std::uint8_t t) { return t >= 1 && t <= 7; }

GroupStatus parse_group(std::span<const std::byte> file, std::size_t pos, ParsedGroup& out) {
  out.entries.clear();
  if (file.size() - pos < SegmentedLog::kGroupHeaderSize) return GroupStatus::kIncomplete;
  const auto header = file.subspan(pos, SegmentedLog::kGroupHeaderSize);
  if (read_u32(header, 0) != kGroupMagic || read_u32(header, 12) != crc32c(header.first(12))) {
    return GroupStatus::kBadHeader;
  }
  const std::uint32_t entry_count = read_u32(header, 4);
  const std::uint64_t body_len = read_u32(header, 8);
  const std::uint64_t body_start = pos + SegmentedLog::kGroupHeaderSize;
  if (body_start + body_len + 4 > file.size()) return GroupStatus::kIncomplete;
  const auto body = file.subspan(body_start, body_len);
  if (read_u32(file, body_start + body_len) != crc32c(body)) return GroupStatus::kBadBody;

  std::size_t p = 0;
  for (std::uint32_t i = 0; i < entry_count; ++i) {
    if (body.size() - p < kEntryOverhead) return GroupStatus::kBadBody;
    const auto type = std::to_integer<std::uint8_t>(body[p]);
    const std::uint64_t len = read_u32(body, p + 1);
    if (!valid_entry_type(type) || body.size() - p - kEntryOverhead < len) {
      return GroupStatus::kBadBody;
    }
    const auto covered = body.subspan(p, 5 + len);
    if (read_u32(body, p + 5 + len) != crc32c(covered)) return GroupStatus::kBadBody;
    out.entries.push_back(
        ParsedEntry{static_cast<EntryType>(type), body.subspan(p + 5, len), body_start + p});
    p += kEntryOverhead + len;
  }
  if (p != body.size()) return GroupStatus::kBadBody;
  out.end = body_start + body_len + 4;
  return GroupStatus::kOk;
}

void note_record(SegmentInfo& info, std::span<const std::byte> payload) {
  ByteReader r(payload);
  const Timestamp t{r.i64()};
  if (info.record_count == 0) {
    info.min_time = t;
    info.max_time = t;
  } else {
    info.min_time = std::min(info.min_time, t);
    info.max_time = std::max(info.max_time, t);
  }
  ++info.record_count;
}

[[noreturn]] void corrupt(const fs::path& path, const std::string& why,
                          ErrorCode code = ErrorCode::kCorruptInterior) {
  throw Error(code, path.string() + ": " + why);
}

/// Walks every group of a segment image. Returns the byte offset just past
/// the last good group. In tolerant mode a damaged final group is treated as
/// a torn write; otherwise any damage throws `code`.
std::size_t walk_segment(std::span<const std::byte> file, std::uint64_t segment_id,
                         const fs::path& path, bool tolerant, ErrorCode code,
                         const std::function<void(const ParsedGroup&)>& on_group) {
  if (file.size() < SegmentedLog::kSegmentHeaderSize) {
    if (tolerant) return 0;
    corrupt(path, "short segment header", code);
  }
  const auto header = file.first(SegmentedLog::kSegmentHeaderSize);
  ByteReader hr(header);
  if (!has_magic(header, kSegmentMagic)) corrupt(path, "bad segment magic", code);
  hr.take(8);
  const auto version = hr.u32();
  const auto id = hr.u64();
  if (hr.u32() != crc32c(header.first(20)) || version != kFormatVersion || id != segment_id) {
    corrupt(path, "bad segment header", code);
  }

  std::size_t pos = SegmentedLog::kSegmentHeaderSize;
  ParsedGroup group;
  while (pos < file.size()) {
    switch (parse_group(file, pos, group)) {
      case GroupStatus::kOk:
        on_group(group);
        pos = group.end;
        continue;
      case GroupStatus::kIncomplete:
        if (tolerant) return pos;
        corrupt(path, "truncated group at offset " + std::to_string(pos), code);
      case GroupStatus::kBadBody: {
        // A damaged body that runs exactly to end of file is a torn final
        // write; anything followed by more data is interior corruption.
        const std::uint64_t body_len = read_u32(file, pos + 8);
        const bool at_tail = pos + SegmentedLog::kGroupHeaderSize + body_len + 4 == file.size();
        if (tolerant && at_tail) return pos;
        corrupt(path, "checksum mismatch in group at offset " + std::to_string(pos), code);
      }
      case GroupStatus::kBadHeader:
        corrupt(path, "bad group header at offset " + std::to_string(pos), code);
    }
  }
  return pos;
}

std::uint64_t parse_segment_id(const fs::path& p) {
  const auto name = p.filename().string();
  if (name.size() != 16 || name.rfind("seg-", 0) != 0 || p.extension() != ".log") return 0;
  std::uint64_t id = 0;
  auto [ptr, ec] = std::from_chars(name.data() + 4, name.data() + 12, id);
  if (ec != std::errc() || ptr != name.data() + 12) return 0;
  return id;
}

}  // namespace

std::vector<std::byte> encode_group(std::span<const LogEntry> entries) {
  ByteWriter w;
  w.u32(kGroupMagic);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  w.u32(0);  // body length, patched below
  w.u32(0);  // header crc
  for (const auto& e : entries) {
    const std::size_t start = w.size();
    w.u8(static_cast<std::uint8_t>(e.type));
    w.u32(static_cast<std::uint32_t>(e.payload.size()));
    w.bytes(e.payload);
    w.u32(crc32c(std::span(w.buffer()).subspan(start)));
  }
  const std::size_t body_len = w.size() - SegmentedLog::kGroupHeaderSize;
  w.patch_u32(8, static_cast<std::uint32_t>(body_len));
  w.patch_u32(12, crc32c(std::span(w.buffer()).first(12)));
  w.u32(crc32c(std::span(w.buffer()).subspan(SegmentedLog::kGroupHeaderSize, body_len)));
  return w.take();
}

SegmentedLog::SegmentedLog(fs::path dir, LogOptions options)
    : dir_(std::move(dir)), options_(options) {}

SegmentedLog::SegmentedLog(SegmentedLog&& other) noexcept
    : dir_(std::move(other.dir_)),
      options_(other.options_),
      segments_(std::move(other.segments_)),
      active_fd_(std::exchange(other.active_fd_, -1)),
      active_size_(other.active_size_) {}

SegmentedLog& SegmentedLog::operator=(SegmentedLog&& other) noexcept {
  if (this != &other) {
    if (active_fd_ >= 0) ::close(active_fd_);
    dir_ = std::move(other.dir_);
    options_ = other.options_;
    segments_ = std::move(other.segments_);
    active_fd_ = std::exchange(other.active_fd_, -1);
    active_size_ = other.active_size_;
  }
  return *this;
}

SegmentedLog::~SegmentedLog() {
  if (active_fd_ >= 0) ::close(active_fd_);
}

fs::path SegmentedLog::segment_path(std::uint64_t segment_id) const {
  char name[32];
  std::snprintf(name, sizeof name, "seg-%08llu.log", static_cast<unsigned long long>(segment_id));
  return dir_ / name;
}

fs::path SegmentedLog::sidecar_path(std::uint64_t segment_id, const char* ext) const {
  auto p = segment_path(segment_id);
  p.replace_extension(ext);
  return p;
}

SegmentedLog SegmentedLog::open(const fs::path& dir, LogOptions options, const Visitor& visitor,
                                ReplayStats* stats) {
  fs::create_directories(dir);
  SegmentedLog log(dir, options);
  ReplayStats local;

  // Leftovers from an interrupted compaction or manifest write.
  std::vector<std::uint64_t> ids;
  for (const auto& de : fs::directory_iterator(dir)) {
    const auto& p = de.path();
    if (p.extension() == ".tmp") {
      fs::remove(p);
      continue;
    }
    if (auto id = parse_segment_id(p); id != 0) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());

  std::vector<SegmentInfo> sealed;
  const auto manifest_path = dir / "MANIFEST";
  if (fs::exists(manifest_path)) {
    const auto data = detail::read_file(manifest_path);
    if (data.size() < 20 || !has_magic(data, kManifestMagic) ||
        read_u32(data, data.size() - 4) != crc32c(std::span(data).first(data.size() - 4))) {
      corrupt(manifest_path, "bad manifest");
    }
    ByteReader r(std::span<const std::byte>(data).first(data.size() - 4));
    r.take(8);
    if (r.u32() != kFormatVersion) corrupt(manifest_path, "unsupported manifest version");
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      SegmentInfo info;
      info.segment_id = r.u64();
      info.min_time = Timestamp{r.i64()};
      info.max_time = Timestamp{r.i64()};
      info.record_count = r.u64();
      info.sealed = true;
      sealed.push_back(info);
    }
  }

  const std::uint64_t last_sealed = sealed.empty() ? 0 : sealed.back().segment_id;
  std::vector<std::uint64_t> unsealed;
  for (auto id : ids) {
    const bool is_sealed = std::any_of(sealed.begin(), sealed.end(),
                                       [&](const SegmentInfo& s) { return s.segment_id == id; });
    if (!is_sealed) {
      if (id < last_sealed) corrupt(log.segment_path(id), "unsealed segment behind sealed ones");
      unsealed.push_back(id);
    }
  }
  if (unsealed.size() > 1) corrupt(dir, "more than one active segment");

  auto deliver = [&](std::uint64_t id, SegmentInfo* info) {
    return [&, id, info](const ParsedGroup& g) {
      ++local.groups;
      for (const auto& e : g.entries) {
        ++local.entries;
        if (e.type == EntryType::kRecord && info != nullptr) note_record(*info, e.payload);
        visitor(e.type, e.payload, LogLocation{id, e.offset});
      }
    };
  };

  for (auto& info : sealed) {
    const auto path = log.segment_path(info.segment_id);
    if (!fs::exists(path)) corrupt(path, "sealed segment missing");
    const auto data = detail::read_file(path);
    walk_segment(data, info.segment_id, path, false, ErrorCode::kCorruptInterior,
                 deliver(info.segment_id, nullptr));
    log.segments_.push_back(info);
    if (!log.sparse_index_matches(info)) log.write_sparse_index(info);
  }

  if (!unsealed.empty()) {
    const auto id = unsealed.front();
    const auto path = log.segment_path(id);
    SegmentInfo info;
    info.segment_id = id;
    auto data = detail::read_file(path);
    std::size_t valid_end = 0;
    if (data.size() >= kSegmentHeaderSize) {
      valid_end = walk_segment(data, id, path, true, ErrorCode::kCorruptInterior, deliver(id, &info));
    }
    log.segments_.push_back(info);
    if (valid_end < kSegmentHeaderSize) {
      // Torn segment header: nothing in it was ever committed.
      local.torn_bytes += data.size();
      log.open_active(id, true);
    } else {
      local.torn_bytes += data.size() - valid_end;
      log.open_active(id, false);
      if (valid_end != data.size()) {
        if (::ftruncate(log.active_fd_, static_cast<off_t>(valid_end)) != 0) {
          detail::throw_io("truncate", path);
        }
        ::fsync(log.active_fd_);
      }
      log.active_size_ = valid_end;
    }
  } else {
    SegmentInfo info;
    info.segment_id = last_sealed + 1;
    log.segments_.push_back(info);
    log.open_active(info.segment_id, true);
  }

  if (stats != nullptr) *stats = local;
  return log;
}

void SegmentedLog::open_active(std::uint64_t segment_id, bool create) {
  if (active_fd_ >= 0) ::close(active_fd_);
  const auto path = segment_path(segment_id);
  int flags = O_RDWR | O_CLOEXEC;
  if (create) flags |= O_CREAT | O_TRUNC;
  active_fd_ = ::open(path.c_str(), flags, 0644);
  if (active_fd_ < 0) detail::throw_io("open", path);
  if (create) {
    const auto header = encode_segment_header(segment_id);
    detail::write_all(active_fd_, header, 0, path);
    ::fsync(active_fd_);
    detail::fsync_dir(dir_);
    active_size_ = header.size();
  }
}

std::optional<SegmentInfo> SegmentedLog::segment(std::uint64_t segment_id) const {
  for (const auto& s : segments_) {
    if (s.segment_id == segment_id) return s;
  }
  return std::nullopt;
}

std::uint64_t SegmentedLog::active_segment_id() const noexcept {
  return segments_.empty() ? 0 : segments_.back().segment_id;
}

std::uint64_t SegmentedLog::total_bytes() const {
  std::uint64_t total = 0;
  for (const auto& s : segments_) {
    std::error_code ec;
    const auto n = fs::file_size(segment_path(s.segment_id), ec);
    if (!ec) total += n;
  }
  return total;
}

void SegmentedLog::maybe_roll(std::optional<Timestamp> first_record_time) {
  const auto& active = segments_.back();
  if (active_size_ <= kSegmentHeaderSize) return;
  bool roll = active_size_ >= options_.segment_max_bytes;
  if (!roll && first_record_time && active.record_count > 0) {
    roll = first_record_time->micros - active.min_time.micros >= options_.segment_max_span_micros;
  }
  if (roll) seal_active();
}

std::vector<LogLocation> SegmentedLog::append_group(std::span<const LogEntry> entries) {
  if (entries.empty()) throw Error(ErrorCode::kEmptyBatch, "empty commit group");
  std::optional<Timestamp> first_record;
  for (const auto& e : entries) {
    if (e.type == EntryType::kRecord) {
      ByteReader r(e.payload);
      first_record = Timestamp{r.i64()};
      break;
    }
  }
  maybe_roll(first_record);

  const auto bytes = encode_group(entries);
  const auto path = segment_path(active_segment_id());
  try {
    detail::write_all(active_fd_, bytes, active_size_, path);
    if (options_.durability == Durability::kFsync && ::fdatasync(active_fd_) != 0) {
      detail::throw_io("fdatasync", path);
    }
  } catch (...) {
    // Leave no partial group behind.
    [[maybe_unused]] int rc = ::ftruncate(active_fd_, static_cast<off_t>(active_size_));
    throw;
  }
  if (options_.verify_writes) {
    std::vector<std::byte> back(bytes.size());
    detail::read_exact(active_fd_, back, active_size_, path);
    if (crc32c(back) != crc32c(bytes)) {
      [[maybe_unused]] int rc = ::ftruncate(active_fd_, static_cast<off_t>(active_size_));
      throw Error(ErrorCode::kChecksumFailure, "write verification failed for " + path.string());
    }
  }

  std::vector<LogLocation> locations;
  locations.reserve(entries.size());
  std::uint64_t offset = active_size_ + kGroupHeaderSize;
  auto& info = segments_.back();
  for (const auto& e : entries) {
    locations.push_back(LogLocation{info.segment_id, offset});
    offset += kEntryOverhead + e.payload.size();
    if (e.type == EntryType::kRecord) note_record(info, e.payload);
  }
  active_size_ += bytes.size();
  return locations;
}

void SegmentedLog::seal_active() {
  if (active_size_ <= kSegmentHeaderSize) return;
  ::fsync(active_fd_);
  auto& info = segments_.back();
  info.sealed = true;
  write_sparse_index(info);
  write_manifest();
  SegmentInfo next;
  next.segment_id = info.segment_id + 1;
  segments_.push_back(next);
  open_active(next.segment_id, true);
}

void SegmentedLog::sync() {
  if (active_fd_ >= 0) ::fsync(active_fd_);
}

void SegmentedLog::write_manifest() const {
  ByteWriter w;
  w.bytes(magic_bytes(kManifestMagic));
  w.u32(kFormatVersion);
  std::uint32_t count = 0;
  for (const auto& s : segments_) count += s.sealed ? 1 : 0;
  w.u32(count);
  for (const auto& s : segments_) {
    if (!s.sealed) continue;
    w.u64(s.segment_id);
    w.i64(s.min_time.micros);
    w.i64(s.max_time.micros);
    w.u64(s.record_count);
  }
  w.u32(crc32c(w.buffer()));
  detail::write_file_atomic(dir_ / "MANIFEST", w.buffer());
}

std::vector<std::pair<Timestamp, std::uint64_t>> SegmentedLog::build_sparse_index(
    std::uint64_t segment_id) const {
  const auto path = segment_path(segment_id);
  const auto data = detail::read_file(path);
  std::vector<std::pair<Timestamp, std::uint64_t>> slots;
  std::uint64_t n = 0;
  std::size_t group_start = kSegmentHeaderSize;
  walk_segment(data, segment_id, path, false, ErrorCode::kCorruptInterior, [&](const ParsedGroup& g) {
    for (const auto& e : g.entries) {
      if (e.type != EntryType::kRecord) continue;
      if (n++ % options_.sparse_index_stride == 0) {
        ByteReader r(e.payload);
        slots.emplace_back(Timestamp{r.i64()}, group_start);
      }
    }
    group_start = g.end;
  });
  return slots;
}

namespace {

std::vector<std::byte> encode_sparse_index(std::uint64_t segment_id, std::uint64_t segment_bytes,
                                           std::uint32_t stride,
                                           const std::vector<std::pair<Timestamp, std::uint64_t>>& slots) {
  ByteWriter w;
  w.bytes(magic_bytes(kIndexMagic));
  w.u64(segment_id);
  w.u64(segment_bytes);
  w.u32(stride);
  w.u32(static_cast<std::uint32_t>(slots.size()));
  for (const auto& [t, off] : slots) {
    w.i64(t.micros);
    w.u64(off);
  }
  w.u32(crc32c(w.buffer()));
  return w.take();
}

}  // namespace

void SegmentedLog::write_sparse_index(const SegmentInfo& info) const {
  const auto slots = build_sparse_index(info.segment_id);
  const auto bytes = encode_sparse_index(info.segment_id, fs::file_size(segment_path(info.segment_id)),
                                         options_.sparse_index_stride, slots);
  detail::write_file_atomic(sidecar_path(info.segment_id, ".idx"), bytes);
}

bool SegmentedLog::sparse_index_matches(const SegmentInfo& info) const {
  const auto path = sidecar_path(info.segment_id, ".idx");
  if (!fs::exists(path)) return false;
  const auto expected =
      encode_sparse_index(info.segment_id, fs::file_size(segment_path(info.segment_id)),
                          options_.sparse_index_stride, build_sparse_index(info.segment_id));
  return detail::read_file(path) == expected;
}

std::optional<LogLocation> SegmentedLog::locate_record(std::uint64_t segment_id, Timestamp t) const {
  const auto info = segment(segment_id);
  if (!info || !info->sealed) return std::nullopt;
  const auto idx = detail::read_file(sidecar_path(segment_id, ".idx"));
  if (idx.size() < 36 || !has_magic(idx, kIndexMagic) ||
      read_u32(idx, idx.size() - 4) != crc32c(std::span(idx).first(idx.size() - 4))) {
    throw Error(ErrorCode::kChecksumFailure, "bad sparse index for segment " + std::to_string(segment_id));
  }
  ByteReader r(std::span<const std::byte>(idx).first(idx.size() - 4));
  r.take(8);
  r.u64();
  r.u64();
  r.u32();
  const auto count = r.u32();
  std::uint64_t start = kSegmentHeaderSize;
  for (std::uint32_t i = 0; i < count; ++i) {
    const Timestamp slot{r.i64()};
    const auto off = r.u64();
    if (slot > t) break;
    start = off;
  }

  const auto path = segment_path(segment_id);
  const auto data = detail::read_file(path);
  std::size_t pos = start;
  ParsedGroup g;
  while (pos < data.size()) {
    if (parse_group(data, pos, g) != GroupStatus::kOk) {
      throw Error(ErrorCode::kChecksumFailure, "damaged group in " + path.string());
    }
    for (const auto& e : g.entries) {
      if (e.type != EntryType::kRecord) continue;
      ByteReader er(e.payload);
      const Timestamp rt{er.i64()};
      if (rt == t) return LogLocation{segment_id, e.offset};
      if (rt > t) return std::nullopt;
    }
    pos = g.end;
  }
  return std::nullopt;
}

std::vector<std::vector<LogEntry>> SegmentedLog::read_groups(std::uint64_t segment_id) const {
  const auto info = segment(segment_id);
  if (!info) throw Error(ErrorCode::kNotFound, "no segment " + std::to_string(segment_id));
  const auto path = segment_path(segment_id);
  const auto data = detail::read_file(path);
  std::vector<std::vector<LogEntry>> groups;
  walk_segment(data, segment_id, path, false, ErrorCode::kChecksumFailure, [&](const ParsedGroup& g) {
    auto& out = groups.emplace_back();
    for (const auto& e : g.entries) {
      out.push_back(LogEntry{e.type, std::vector<std::byte>(e.payload.begin(), e.payload.end())});
    }
  });
  return groups;
}

std::uint64_t SegmentedLog::rewrite_sealed(std::uint64_t segment_id,
                                           std::span<const std::vector<LogEntry>> groups,
                                           const Visitor& visitor) {
  const auto info = segment(segment_id);
  if (!info) throw Error(ErrorCode::kNotFound, "no segment " + std::to_string(segment_id));
  if (!info->sealed) {
    throw Error(ErrorCode::kSegmentActive, "segment " + std::to_string(segment_id) + " is active");
  }
  const auto path = segment_path(segment_id);
  const auto old_size = fs::file_size(path);

  std::vector<std::byte> image = encode_segment_header(segment_id);
  std::vector<std::pair<EntryType, LogLocation>> placed;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    std::uint64_t offset = image.size() + kGroupHeaderSize;
    for (const auto& e : g) {
      placed.emplace_back(e.type, LogLocation{segment_id, offset});
      offset += kEntryOverhead + e.payload.size();
    }
    const auto bytes = encode_group(g);
    image.insert(image.end(), bytes.begin(), bytes.end());
  }
  detail::write_file_atomic(path, image);
  write_sparse_index(*info);

  std::size_t i = 0;
  for (const auto& g : groups) {
    for (const auto& e : g) {
      visitor(e.type, e.payload, placed[i++].second);
    }
  }
  return old_size > image.size() ? old_size - image.size() : 0;
}

LogEntry SegmentedLog::read_entry(LogLocation location) const {
  const auto path = segment_path(location.segment_id);
  detail::FileHandle fd(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
  if (!fd) detail::throw_io("open", path);
  std::array<std::byte, 5> head{};
  detail::read_exact(fd.get(), head, location.offset, path);
  const auto len = read_u32(head, 1);
  std::vector<std::byte> rest(static_cast<std::size_t>(len) + 4);
  detail::read_exact(fd.get(), rest, location.offset + 5, path);
  std::vector<std::byte> covered(head.begin(), head.end());
  covered.insert(covered.end(), rest.begin(), rest.end() - 4);
  if (read_u32(rest, len) != crc32c(covered) ||
      !valid_entry_type(std::to_integer<std::uint8_t>(head[0]))) {
    throw Error(ErrorCode::kChecksumFailure, "entry checksum mismatch in " + path.string());
  }
  rest.resize(len);
  return LogEntry{static_cast<EntryType>(std::to_integer<std::uint8_t>(head[0])), std::move(rest)};
}

}  // namespace memdb
