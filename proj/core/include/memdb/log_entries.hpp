#pragma once

#include <span>
#include <string>
#include <vector>

#include "memdb/coherence.hpp"
#include "memdb/segment_log.hpp"
#include "memdb/types.hpp"

namespace memdb {

struct MetaPatch {
  Timestamp target;
  Metadata patch = Metadata::object();
};

struct ViewPatch {
  Timestamp target;
  std::string view;
  std::vector<float> values;
};

struct PruneEvent {
  EdgeId edge_id = 0;
  Timestamp pruned_at;
};

/// Persisted summary of one maintenance cycle.
struct MaintenanceReport {
  std::uint64_t cycle_id = 0;
  Timestamp started_at;
  Timestamp finished_at;
  std::uint64_t low_views_regenerated = 0;
  std::uint64_t vectors_renormalized = 0;
  std::uint64_t edges_pruned = 0;
  std::uint64_t samples_written = 0;
  std::uint64_t segments_compacted = 0;
  std::uint64_t bytes_compacted = 0;
  /// {"task", "code", "message"} for every task that failed.
  nlohmann::json errors = nlohmann::json::array();

  friend bool operator==(const MaintenanceReport&, const MaintenanceReport&) = default;
};

nlohmann::json to_json(const MaintenanceReport& report);
MaintenanceReport report_from_json(const nlohmann::json& j);

// Payload codecs. Every record payload starts with its i64 id_time, which the
// log relies on for segment time ranges.
LogEntry encode_record(const MemoryRecord& record);
MemoryRecord decode_record(std::span<const std::byte> payload);

LogEntry encode_edge(const Edge& edge);
Edge decode_edge(std::span<const std::byte> payload);

LogEntry encode_meta_patch(const MetaPatch& patch);
MetaPatch decode_meta_patch(std::span<const std::byte> payload);

LogEntry encode_view_patch(const ViewPatch& patch);
ViewPatch decode_view_patch(std::span<const std::byte> payload);

LogEntry encode_prune(const PruneEvent& event);
PruneEvent decode_prune(std::span<const std::byte> payload);

LogEntry encode_sample(const CoherenceSample& sample);
CoherenceSample decode_sample(std::span<const std::byte> payload);

LogEntry encode_report(const MaintenanceReport& report);
MaintenanceReport decode_report(std::span<const std::byte> payload);

/// Shallow merge: keys of `patch` overwrite or insert into `meta`.
void apply_meta_patch(Metadata& meta, const Metadata& patch);

}  // namespace memdb
