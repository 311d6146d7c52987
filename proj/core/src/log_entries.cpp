#include "memdb/log_entries.hpp"

#include "memdb/codec.hpp"

namespace memdb {

namespace {

Metadata parse_meta(const std::string& text) {
  try {
    return Metadata::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kChecksumFailure, std::string("undecodable metadata: ") + e.what());
  }
}

void expect_done(const ByteReader& r, const char* what) {
  if (!r.done()) throw Error(ErrorCode::kChecksumFailure, std::string("trailing bytes in ") + what);
}

}  // namespace

LogEntry encode_record(const MemoryRecord& record) {
  ByteWriter w;
  w.i64(record.id_time.micros);
  w.str(record.kind.label);
  w.u8(record.content ? 1 : 0);
  if (record.content) w.str(*record.content);
  w.u32(static_cast<std::uint32_t>(record.embeddings.views.size()));
  for (const auto& [name, values] : record.embeddings.views) {
    w.str(name);
    w.floats(values);
  }
  w.str(record.meta.dump());
  return LogEntry{EntryType::kRecord, w.take()};
}

MemoryRecord decode_record(std::span<const std::byte> payload) {
  ByteReader r(payload);
  MemoryRecord rec;
  rec.id_time = Timestamp{r.i64()};
  rec.kind.label = r.str();
  if (r.u8() != 0) rec.content = r.str();
  const auto n_views = r.u32();
  for (std::uint32_t i = 0; i < n_views; ++i) {
    auto name = r.str();
    rec.embeddings.views.emplace(std::move(name), r.floats());
  }
  rec.meta = parse_meta(r.str());
  expect_done(r, "record");
  return rec;
}

LogEntry encode_edge(const Edge& edge) {
  ByteWriter w;
  w.u64(edge.edge_id);
  w.i64(edge.source.micros);
  w.i64(edge.destination.micros);
  w.str(edge.destination_namespace);
  w.str(edge.relationship);
  w.f32(edge.weight.strength());
  w.f32(edge.weight.confidence());
  w.str(edge.meta.dump());
  w.i64(edge.created_at.micros);
  return LogEntry{EntryType::kEdge, w.take()};
}

Edge decode_edge(std::span<const std::byte> payload) {
  ByteReader r(payload);
  Edge e;
  e.edge_id = r.u64();
  e.source = Timestamp{r.i64()};
  e.destination = Timestamp{r.i64()};
  e.destination_namespace = r.str();
  e.relationship = r.str();
  const float strength = r.f32();
  const float confidence = r.f32();
  e.weight = Weight::from_stored(strength, confidence);
  e.meta = parse_meta(r.str());
  e.created_at = Timestamp{r.i64()};
  expect_done(r, "edge");
  return e;
}

LogEntry encode_meta_patch(const MetaPatch& patch) {
  ByteWriter w;
  w.i64(patch.target.micros);
  w.str(patch.patch.dump());
  return LogEntry{EntryType::kMetaPatch, w.take()};
}

MetaPatch decode_meta_patch(std::span<const std::byte> payload) {
  ByteReader r(payload);
  MetaPatch p;
  p.target = Timestamp{r.i64()};
  p.patch = parse_meta(r.str());
  expect_done(r, "meta patch");
  return p;
}

LogEntry encode_view_patch(const ViewPatch& patch) {
  ByteWriter w;
  w.i64(patch.target.micros);
  w.str(patch.view);
  w.floats(patch.values);
  return LogEntry{EntryType::kViewPatch, w.take()};
}

ViewPatch decode_view_patch(std::span<const std::byte> payload) {
  ByteReader r(payload);
  ViewPatch p;
  p.target = Timestamp{r.i64()};
  p.view = r.str();
  p.values = r.floats();
  expect_done(r, "view patch");
  return p;
}

LogEntry encode_prune(const PruneEvent& event) {
  ByteWriter w;
  w.u64(event.edge_id);
  w.i64(event.pruned_at.micros);
  return LogEntry{EntryType::kPrune, w.take()};
}

PruneEvent decode_prune(std::span<const std::byte> payload) {
  ByteReader r(payload);
  PruneEvent p;
  p.edge_id = r.u64();
  p.pruned_at = Timestamp{r.i64()};
  expect_done(r, "prune");
  return p;
}

LogEntry encode_sample(const CoherenceSample& sample) {
  ByteWriter w;
  w.i64(sample.window_lo.micros);
  w.i64(sample.window_hi.micros);
  w.u64(sample.edge_count);
  w.u8(sample.c_local ? 1 : 0);
  w.f64(sample.c_local.value_or(0.0));
  w.i64(sample.computed_at.micros);
  w.u8(static_cast<std::uint8_t>(sample.mode));
  return LogEntry{EntryType::kCoherenceSample, w.take()};
}

CoherenceSample decode_sample(std::span<const std::byte> payload) {
  ByteReader r(payload);
  CoherenceSample s;
  s.window_lo = Timestamp{r.i64()};
  s.window_hi = Timestamp{r.i64()};
  s.edge_count = r.u64();
  const bool has_value = r.u8() != 0;
  const double value = r.f64();
  if (has_value) s.c_local = value;
  s.computed_at = Timestamp{r.i64()};
  const auto mode = r.u8();
  if (mode > 1) throw Error(ErrorCode::kChecksumFailure, "unknown coherence mode");
  s.mode = static_cast<DistanceMode>(mode);
  expect_done(r, "coherence sample");
  return s;
}

nlohmann::json to_json(const MaintenanceReport& report) {
  return nlohmann::json{
      {"cycle_id", report.cycle_id},
      {"started_at", report.started_at.micros},
      {"finished_at", report.finished_at.micros},
      {"low_views_regenerated", report.low_views_regenerated},
      {"vectors_renormalized", report.vectors_renormalized},
      {"edges_pruned", report.edges_pruned},
      {"samples_written", report.samples_written},
      {"segments_compacted", report.segments_compacted},
      {"bytes_compacted", report.bytes_compacted},
      {"errors", report.errors},
  };
}

MaintenanceReport report_from_json(const nlohmann::json& j) {
  MaintenanceReport r;
  r.cycle_id = j.at("cycle_id").get<std::uint64_t>();
  r.started_at = Timestamp{j.at("started_at").get<std::int64_t>()};
  r.finished_at = Timestamp{j.at("finished_at").get<std::int64_t>()};
  r.low_views_regenerated = j.value("low_views_regenerated", std::uint64_t{0});
  r.vectors_renormalized = j.value("vectors_renormalized", std::uint64_t{0});
  r.edges_pruned = j.value("edges_pruned", std::uint64_t{0});
  r.samples_written = j.value("samples_written", std::uint64_t{0});
  r.segments_compacted = j.value("segments_compacted", std::uint64_t{0});
  r.bytes_compacted = j.value("bytes_compacted", std::uint64_t{0});
  r.errors = j.value("errors", nlohmann::json::array());
  return r;
}

LogEntry encode_report(const MaintenanceReport& report) {
  ByteWriter w;
  w.str(to_json(report).dump());
  return LogEntry{EntryType::kMaintenanceReport, w.take()};
}

MaintenanceReport decode_report(std::span<const std::byte> payload) {
  ByteReader r(payload);
  const auto text = r.str();
  expect_done(r, "maintenance report");
  try {
    return report_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kChecksumFailure, std::string("undecodable report: ") + e.what());
  }
}

void apply_meta_patch(Metadata& meta, const Metadata& patch) {
  if (!meta.is_object()) meta = Metadata::object();
  for (const auto& [key, value] : patch.items()) meta[key] = value;
}

}  // namespace memdb
