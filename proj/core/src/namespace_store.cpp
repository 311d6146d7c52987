#include "memdb/namespace_store.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "file_util.hpp"
#include "memdb/codec.hpp"

namespace memdb {

namespace fs = std::filesystem;

std::int64_t system_clock_micros() {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

namespace {

bool off_norm(std::span<const float> v) {
  return std::abs(l2_norm(v) - 1.0) > kUnitNormTolerance;
}

Timestamp peek_time(std::span<const std::byte> payload) {
  ByteReader r(payload);
  return Timestamp{r.i64()};
}

}  // namespace

// ---------------------------------------------------------------------------
// StoreSnapshot

StoreSnapshot::StoreSnapshot(const NamespaceStore& store)
    : store_(&store), lock_(store.state_mutex_) {}

const MemoryRecord* StoreSnapshot::header(Timestamp t) const {
  const auto* slot = store_->find_slot(t);
  return slot == nullptr ? nullptr : &slot->header;
}

std::optional<MemoryRecord> StoreSnapshot::materialize(Timestamp t, bool with_derived) const {
  const auto* slot = store_->find_slot(t);
  if (slot == nullptr) return std::nullopt;
  return store_->materialize(*slot, with_derived);
}

const VectorView* StoreSnapshot::view(std::string_view name) const {
  auto it = store_->views_.find(name);
  return it == store_->views_.end() ? nullptr : &it->second;
}

const GraphStore& StoreSnapshot::graph() const { return store_->graph_; }

const std::map<std::string, std::size_t, std::less<>>& StoreSnapshot::dims() const {
  return store_->dims_;
}

std::vector<Timestamp> StoreSnapshot::window_ids(Timestamp lo, Timestamp hi,
                                                 const std::string* kind) const {
  std::vector<Timestamp> out;
  if (lo > hi) return out;
  if (kind != nullptr) {
    auto it = store_->by_kind_.find(*kind);
    if (it == store_->by_kind_.end()) return out;
    const auto& ids = it->second;
    auto first = std::lower_bound(ids.begin(), ids.end(), lo);
    auto last = std::upper_bound(first, ids.end(), hi);
    out.assign(first, last);
    return out;
  }
  for (auto it = store_->records_.lower_bound(lo); it != store_->records_.end() && it->first <= hi;
       ++it) {
    out.push_back(it->first);
  }
  return out;
}

std::size_t StoreSnapshot::record_count() const { return store_->records_.size(); }

// ---------------------------------------------------------------------------
// open / replay

NamespaceStore::NamespaceStore(fs::path dir, Namespace name, StoreOptions options, Clock clock)
    : dir_(std::move(dir)),
      name_(std::move(name)),
      options_(std::move(options)),
      clock_(clock ? std::move(clock) : Clock(system_clock_micros)) {}

NamespaceStore::~NamespaceStore() {
  if (log_) {
    try {
      log_->sync();
    } catch (...) {
    }
  }
}

void NamespaceStore::sync() {
  std::lock_guard writer(writer_mutex_);
  log_->sync();
}

std::unique_ptr<NamespaceStore> NamespaceStore::open(const fs::path& dir, Namespace name,
                                                     StoreOptions options, Clock clock,
                                                     ReplayStats* stats) {
  std::unique_ptr<NamespaceStore> store(
      new NamespaceStore(dir, std::move(name), std::move(options), std::move(clock)));
  auto* raw = store.get();
  store->log_.emplace(SegmentedLog::open(
      dir, store->options_.log,
      [raw](EntryType type, std::span<const std::byte> payload, LogLocation loc) {
        raw->replay_entry(type, payload, loc);
      },
      stats));
  store->refresh_segment_cache();
  return store;
}

void NamespaceStore::replay_entry(EntryType type, std::span<const std::byte> payload,
                                  LogLocation loc) {
  switch (type) {
    case EntryType::kRecord:
      apply_record(decode_record(payload), loc);
      break;
    case EntryType::kEdge:
      graph_.apply_edge(decode_edge(payload));
      break;
    case EntryType::kMetaPatch:
      apply_meta_patch(decode_meta_patch(payload), loc);
      break;
    case EntryType::kViewPatch:
      apply_view_patch(decode_view_patch(payload), loc);
      break;
    case EntryType::kPrune: {
      const auto p = decode_prune(payload);
      graph_.apply_prune(p.edge_id, p.pruned_at);
      break;
    }
    case EntryType::kCoherenceSample:
      samples_.push_back(decode_sample(payload));
      break;
    case EntryType::kMaintenanceReport:
      reports_.push_back(decode_report(payload));
      break;
  }
}

VectorView& NamespaceStore::view_for(const std::string& name, std::size_t dim) {
  auto it = views_.find(name);
  if (it == views_.end()) it = views_.emplace(name, VectorView(name, dim)).first;
  dims_.emplace(name, dim);
  return it->second;
}

void NamespaceStore::derive_low(Slot& slot) {
  const auto id = slot.header.id_time;
  const auto high = views_.at(std::string(kHighView)).get(id);
  auto dim_it = dims_.find(kLowView);
  const std::size_t dim =
      dim_it != dims_.end() ? dim_it->second : std::min(options_.low_dim, high.size());
  if (dim == 0 || dim > high.size()) {
    underivable_low_.insert(id);
    return;
  }
  try {
    const auto low = matryoshka_truncate(high, dim);
    if (options_.derive_low_views) {
      view_for(std::string(kLowView), dim).upsert(id, low);
      slot.low_derived = true;
    }
    missing_low_.insert(id);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kZeroPrefix) throw;
    underivable_low_.insert(id);
  }
}

void NamespaceStore::apply_record(MemoryRecord record, LogLocation loc) {
  const auto id = record.id_time;
  Slot slot;
  slot.location = loc;
  bool unnormalized = false;
  for (auto& [name, values] : record.embeddings.views) {
    view_for(name, values.size()).upsert(id, values);
    slot.views.push_back(name);
    unnormalized = unnormalized || off_norm(values);
  }
  record.embeddings.views.clear();
  slot.header = std::move(record);
  if (unnormalized) unnormalized_.insert(id);

  auto& kind_ids = by_kind_[slot.header.kind.label];
  if (kind_ids.empty() || kind_ids.back() < id) {
    kind_ids.push_back(id);
  } else {
    kind_ids.insert(std::lower_bound(kind_ids.begin(), kind_ids.end(), id), id);
  }
  segment_records_[loc.segment_id].push_back(id);
  last_minted_ = std::max(last_minted_, id);

  auto [it, inserted] = records_.insert_or_assign(id, std::move(slot));
  (void)inserted;
  if (std::find(it->second.views.begin(), it->second.views.end(), kLowView) ==
      it->second.views.end()) {
    derive_low(it->second);
  }
}

void NamespaceStore::note_patch(std::uint64_t segment_id, Timestamp target,
                                const std::string& view) {
  const auto* slot = find_slot(target);
  auto& stats = segment_patches_[segment_id];
  if (slot != nullptr && slot->location.segment_id == segment_id) {
    ++stats.folded;
  } else {
    ++stats.foreign[{target.micros, view}];
  }
}

void NamespaceStore::apply_meta_patch(const MetaPatch& patch, LogLocation loc) {
  auto it = records_.find(patch.target);
  if (it == records_.end()) {
    throw Error(ErrorCode::kCorruptInterior,
                "meta patch for unknown record " + std::to_string(patch.target.micros));
  }
  memdb::apply_meta_patch(it->second.header.meta, patch.patch);
  ++meta_patch_count_;
  note_patch(loc.segment_id, patch.target, std::string{});
}

void NamespaceStore::apply_view_patch(const ViewPatch& patch, LogLocation loc) {
  auto it = records_.find(patch.target);
  if (it == records_.end()) {
    throw Error(ErrorCode::kCorruptInterior,
                "view patch for unknown record " + std::to_string(patch.target.micros));
  }
  auto& slot = it->second;
  const auto id = patch.target;
  view_for(patch.view, patch.values.size()).upsert(id, patch.values);
  if (std::find(slot.views.begin(), slot.views.end(), patch.view) == slot.views.end()) {
    slot.views.push_back(patch.view);
    std::sort(slot.views.begin(), slot.views.end());
  }
  if (patch.view == kLowView) {
    slot.low_derived = false;
    missing_low_.erase(id);
    underivable_low_.erase(id);
  }
  if (patch.view == kHighView) {
    if (slot.low_derived) {
      missing_low_.erase(id);
      derive_low(slot);
    }
    std::lock_guard ivf_lock(ivf_mutex_);
    ivf_cache_.erase(slot.location.segment_id);
    if (log_) {
      std::error_code ec;
      fs::remove(log_->sidecar_path(slot.location.segment_id, ".ivf"), ec);
    }
  }
  bool unnormalized = false;
  for (const auto& name : slot.views) unnormalized = unnormalized || off_norm(views_.at(name).get(id));
  if (unnormalized) {
    unnormalized_.insert(id);
  } else {
    unnormalized_.erase(id);
  }
  note_patch(loc.segment_id, id, patch.view);
}

void NamespaceStore::refresh_segment_cache() {
  segment_cache_ = log_->segments();
  log_bytes_ = log_->total_bytes();
}

const NamespaceStore::Slot* NamespaceStore::find_slot(Timestamp t) const {
  auto it = records_.find(t);
  return it == records_.end() ? nullptr : &it->second;
}

MemoryRecord NamespaceStore::materialize(const Slot& slot, bool with_derived) const {
  MemoryRecord rec = slot.header;
  const auto id = rec.id_time;
  for (const auto& name : slot.views) {
    const auto v = views_.at(name).get(id);
    rec.embeddings.views.emplace(name, std::vector<float>(v.begin(), v.end()));
  }
  if (with_derived && slot.low_derived) {
    const auto v = views_.at(std::string(kLowView)).get(id);
    rec.embeddings.views.emplace(std::string(kLowView), std::vector<float>(v.begin(), v.end()));
  }
  return rec;
}

// ---------------------------------------------------------------------------
// writes

std::vector<Timestamp> NamespaceStore::commit_records(std::vector<MemoryRecord> records,
                                                      bool require_unit_norm) {
  std::lock_guard writer(writer_mutex_);
  if (records.empty()) throw Error(ErrorCode::kEmptyBatch, "batch holds no records");

  auto dims = dims_;
  Timestamp last = last_minted_;
  std::vector<LogEntry> entries;
  entries.reserve(records.size());
  for (auto& r : records) {
    if (auto v = validate_record(r, dims, require_unit_norm)) throw Error(v->code, v->message);
    for (const auto& [name, values] : r.embeddings.views) {
      if (!require_unit_norm && l2_norm(values) == 0.0) {
        throw Error(ErrorCode::kZeroVector, "view '" + name + "' is a zero vector");
      }
      dims.emplace(name, values.size());
    }
    const std::int64_t wall = r.id_time.micros > 0 ? r.id_time.micros : clock_();
    r.id_time = mint_timestamp(wall, last);
    last = r.id_time;
    entries.push_back(encode_record(r));
  }

  const auto locations = log_->append_group(entries);
  std::vector<Timestamp> ids;
  ids.reserve(records.size());
  std::unique_lock state(state_mutex_);
  for (std::size_t i = 0; i < records.size(); ++i) {
    ids.push_back(records[i].id_time);
    apply_record(std::move(records[i]), locations[i]);
  }
  refresh_segment_cache();
  return ids;
}

Timestamp NamespaceStore::append(MemoryRecord record) {
  std::vector<MemoryRecord> one;
  one.push_back(std::move(record));
  return commit_records(std::move(one), true).front();
}

std::vector<Timestamp> NamespaceStore::append_batch(std::vector<MemoryRecord> records) {
  return commit_records(std::move(records), true);
}

Timestamp NamespaceStore::import_unchecked(MemoryRecord record) {
  std::vector<MemoryRecord> one;
  one.push_back(std::move(record));
  return commit_records(std::move(one), false).front();
}

Edge NamespaceStore::add_edge(EdgeRequest request) {
  std::vector<EdgeRequest> one;
  one.push_back(std::move(request));
  return add_edges(std::move(one)).front();
}

std::vector<Edge> NamespaceStore::add_edges(std::vector<EdgeRequest> requests) {
  std::lock_guard writer(writer_mutex_);
  if (requests.empty()) throw Error(ErrorCode::kEmptyBatch, "no edges given");

  std::vector<Edge> edges;
  std::vector<LogEntry> entries;
  EdgeId next_id = graph_.next_edge_id();
  Timestamp created = std::max(Timestamp{clock_()}, graph_.last_created_at());
  for (auto& req : requests) {
    if (find_slot(req.source) == nullptr) {
      throw Error(ErrorCode::kSourceNotFound,
                  "source " + std::to_string(req.source.micros) + " does not exist");
    }
    if (req.relationship.empty()) throw Error(ErrorCode::kValidation, "relationship label is empty");
    if (!is_valid_utf8(req.relationship)) {
      throw Error(ErrorCode::kInvalidUtf8, "relationship label is not valid UTF-8");
    }
    if (auto v = validate_meta(req.meta)) throw Error(v->code, v->message);
    if (req.destination_namespace == name_.str()) req.destination_namespace.clear();
    if (req.destination_namespace.empty()) {
      if (find_slot(req.destination) == nullptr) {
        throw Error(ErrorCode::kValidation,
                    "destination " + std::to_string(req.destination.micros) + " does not exist");
      }
    } else if (!Namespace::is_valid(req.destination_namespace)) {
      throw Error(ErrorCode::kInvalidNamespace,
                  "invalid destination namespace '" + req.destination_namespace + "'");
    }
    Edge e;
    e.edge_id = next_id++;
    e.source = req.source;
    e.destination = req.destination;
    e.destination_namespace = std::move(req.destination_namespace);
    e.relationship = std::move(req.relationship);
    e.weight = req.weight;
    e.meta = std::move(req.meta);
    e.created_at = created;
    entries.push_back(encode_edge(e));
    edges.push_back(std::move(e));
  }

  log_->append_group(entries);
  std::unique_lock state(state_mutex_);
  for (const auto& e : edges) graph_.apply_edge(e);
  refresh_segment_cache();
  return edges;
}

Metadata NamespaceStore::update_meta(Timestamp id, const Metadata& patch) {
  std::lock_guard writer(writer_mutex_);
  const auto* slot = find_slot(id);
  if (slot == nullptr) throw Error(ErrorCode::kNotFound, "no record " + std::to_string(id.micros));
  if (!patch.is_object()) throw Error(ErrorCode::kInvalidMeta, "meta patch must be an object");
  Metadata merged = slot->header.meta;
  memdb::apply_meta_patch(merged, patch);
  if (auto v = validate_meta(merged)) throw Error(v->code, v->message);

  const LogEntry entry = encode_meta_patch(MetaPatch{id, patch});
  const auto locations = log_->append_group(std::span(&entry, 1));
  std::unique_lock state(state_mutex_);
  apply_meta_patch(MetaPatch{id, patch}, locations.front());
  refresh_segment_cache();
  return merged;
}

std::size_t NamespaceStore::decay_and_prune(Timestamp now, std::int64_t half_life_micros,
                                            double floor, std::size_t limit) {
  if (half_life_micros <= 0) throw Error(ErrorCode::kValidation, "half_life must be positive");
  if (!(floor > 0.0 && floor < 1.0)) throw Error(ErrorCode::kValidation, "floor must be in (0, 1)");
  std::lock_guard writer(writer_mutex_);
  const auto ids = graph_.prune_candidates(now, half_life_micros, floor, limit);
  if (ids.empty()) return 0;
  std::vector<PruneEvent> events;
  std::vector<LogEntry> entries;
  for (const auto id : ids) {
    const auto* state = graph_.find(id);
    PruneEvent ev{id, std::max(now, state->edge.created_at)};
    entries.push_back(encode_prune(ev));
    events.push_back(ev);
  }
  log_->append_group(entries);
  std::unique_lock state(state_mutex_);
  for (const auto& ev : events) graph_.apply_prune(ev.edge_id, ev.pruned_at);
  refresh_segment_cache();
  return events.size();
}

// ---------------------------------------------------------------------------
// reads

std::optional<MemoryRecord> NamespaceStore::get(Timestamp id) const {
  std::shared_lock state(state_mutex_);
  const auto* slot = find_slot(id);
  if (slot == nullptr) return std::nullopt;
  return materialize(*slot, false);
}

std::vector<MemoryRecord> NamespaceStore::scan_window(Timestamp t_min, Timestamp t_max,
                                                      const std::optional<Kind>& kind) const {
  if (t_min > t_max) throw Error(ErrorCode::kInvalidWindow, "window start after window end");
  const auto snap = snapshot();
  const auto ids = snap.window_ids(t_min, t_max, kind ? &kind->label : nullptr);
  std::vector<MemoryRecord> out;
  out.reserve(ids.size());
  for (const auto id : ids) out.push_back(materialize(*find_slot(id), false));
  return out;
}

std::vector<Edge> NamespaceStore::edges_out(Timestamp source,
                                            std::optional<std::string_view> relationship,
                                            std::optional<Timestamp> as_of) const {
  std::shared_lock state(state_mutex_);
  return graph_.edges_out(source, relationship, as_of);
}

std::vector<Edge> NamespaceStore::edges_in(Timestamp destination,
                                           std::optional<Timestamp> as_of) const {
  std::shared_lock state(state_mutex_);
  return graph_.edges_in(destination, as_of);
}

std::optional<EdgeState> NamespaceStore::edge(EdgeId id) const {
  std::shared_lock state(state_mutex_);
  const auto* e = graph_.find(id);
  if (e == nullptr) return std::nullopt;
  return *e;
}

CoherenceSample NamespaceStore::compute_coherence(
    std::vector<Edge> edges, std::unordered_map<Timestamp, MemoryRecord> local, Timestamp lo,
    Timestamp hi, const CoherenceConfig& cfg, const ForeignResolver* resolver) const {
  std::map<std::pair<std::string, std::int64_t>, std::optional<MemoryRecord>> foreign;
  if (resolver != nullptr) {
    for (const auto& e : edges) {
      if (e.destination_namespace.empty()) continue;
      const auto key = std::make_pair(e.destination_namespace, e.destination.micros);
      if (!foreign.contains(key)) foreign.emplace(key, (*resolver)(key.first, e.destination));
    }
  }
  const RecordLookup lookup = [&](const std::string& ns, Timestamp t) -> const MemoryRecord* {
    if (ns.empty()) {
      auto it = local.find(t);
      return it == local.end() ? nullptr : &it->second;
    }
    auto it = foreign.find({ns, t.micros});
    return it == foreign.end() || !it->second ? nullptr : &*it->second;
  };
  return memdb::local_coherence(edges, lookup, lo, hi, cfg, Timestamp{clock_()});
}

CoherenceSample NamespaceStore::local_coherence(Timestamp lo, Timestamp hi,
                                                const CoherenceConfig& cfg,
                                                const ForeignResolver* resolver) const {
  if (lo > hi) throw Error(ErrorCode::kInvalidWindow, "window start after window end");
  cfg.validate();
  std::vector<Edge> edges;
  std::unordered_map<Timestamp, MemoryRecord> local;
  {
    std::shared_lock state(state_mutex_);
    edges = graph_.edges_created_in(lo, hi);
    for (const auto& e : edges) {
      for (const auto t : {e.source, e.destination}) {
        if (t == e.destination && !e.destination_namespace.empty()) continue;
        if (local.contains(t)) continue;
        if (const auto* slot = find_slot(t)) local.emplace(t, materialize(*slot, true));
      }
    }
  }
  return compute_coherence(std::move(edges), std::move(local), lo, hi, cfg, resolver);
}

std::vector<PlanePoint> NamespaceStore::project_local_plane(Timestamp vertex,
                                                            const ForeignResolver* resolver) const {
  std::vector<Edge> edges;
  std::unordered_map<Timestamp, MemoryRecord> local;
  {
    std::shared_lock state(state_mutex_);
    const auto* slot = find_slot(vertex);
    if (slot == nullptr) {
      throw Error(ErrorCode::kVertexNotFound, "no record " + std::to_string(vertex.micros));
    }
    local.emplace(vertex, materialize(*slot, false));
    edges = graph_.edges_out(vertex);
    for (const auto& e : edges) {
      if (!e.destination_namespace.empty() || local.contains(e.destination)) continue;
      if (const auto* d = find_slot(e.destination)) local.emplace(e.destination, materialize(*d, false));
    }
  }
  std::map<std::pair<std::string, std::int64_t>, std::optional<MemoryRecord>> foreign;
  for (const auto& e : edges) {
    if (e.destination_namespace.empty() || resolver == nullptr) continue;
    const auto key = std::make_pair(e.destination_namespace, e.destination.micros);
    if (!foreign.contains(key)) foreign.emplace(key, (*resolver)(key.first, e.destination));
  }
  const RecordLookup lookup = [&](const std::string& ns, Timestamp t) -> const MemoryRecord* {
    if (ns.empty()) {
      auto it = local.find(t);
      return it == local.end() ? nullptr : &it->second;
    }
    auto it = foreign.find({ns, t.micros});
    return it == foreign.end() || !it->second ? nullptr : &*it->second;
  };
  return memdb::project_local_plane(local.at(vertex), edges, lookup);
}

CoherenceSample NamespaceStore::sample_coherence(Timestamp lo, Timestamp hi,
                                                 const CoherenceConfig& cfg,
                                                 const ForeignResolver* resolver) {
  auto sample = local_coherence(lo, hi, cfg, resolver);
  std::lock_guard writer(writer_mutex_);
  const LogEntry entry = encode_sample(sample);
  log_->append_group(std::span(&entry, 1));
  std::unique_lock state(state_mutex_);
  samples_.push_back(sample);
  refresh_segment_cache();
  return sample;
}

std::vector<CoherenceSample> NamespaceStore::samples() const {
  std::shared_lock state(state_mutex_);
  return samples_;
}

void NamespaceStore::record_report(const MaintenanceReport& report) {
  std::lock_guard writer(writer_mutex_);
  const LogEntry entry = encode_report(report);
  log_->append_group(std::span(&entry, 1));
  std::unique_lock state(state_mutex_);
  reports_.push_back(report);
  refresh_segment_cache();
}

std::vector<MaintenanceReport> NamespaceStore::reports() const {
  std::shared_lock state(state_mutex_);
  return reports_;
}

// ---------------------------------------------------------------------------
// IVF over sealed segments

std::shared_ptr<const IvfIndex> NamespaceStore::ivf_for_segment(
    std::uint64_t segment_id, const VectorView& high, const std::vector<Timestamp>& ids) const {
  std::lock_guard lock(ivf_mutex_);
  if (auto it = ivf_cache_.find(segment_id); it != ivf_cache_.end()) return it->second;

  const auto path = log_->sidecar_path(segment_id, ".ivf");
  std::shared_ptr<const IvfIndex> index;
  std::error_code ec;
  if (fs::exists(path, ec)) {
    try {
      auto loaded = IvfIndex::deserialize(detail::read_file(path));
      if (loaded.view_name == kHighView && loaded.dim == high.dim() && loaded.trained_on == ids.size()) {
        index = std::make_shared<const IvfIndex>(std::move(loaded));
      }
    } catch (const Error&) {
      // stale or damaged sidecar: retrain below
    }
  }
  if (!index) {
    auto trained = train_ivf(high, options_.ivf, &ids);
    try {
      detail::write_file_atomic(path, trained.serialize());
    } catch (const Error&) {
      // the index still serves this process; the sidecar is an optimization
    }
    index = std::make_shared<const IvfIndex>(std::move(trained));
  }
  ivf_cache_.emplace(segment_id, index);
  return index;
}

std::vector<Neighbor> NamespaceStore::knn_ivf(std::span<const float> q, std::size_t k,
                                              std::size_t n_probe,
                                              const CandidateList* candidates) const {
  if (k == 0) throw Error(ErrorCode::kInvalidK, "k must be >= 1");
  const auto snap = snapshot();
  return knn_ivf(snap, q, k, n_probe, candidates);
}

std::vector<Neighbor> NamespaceStore::knn_ivf(const StoreSnapshot& snap, std::span<const float> q,
                                              std::size_t k, std::size_t n_probe,
                                              const CandidateList* candidates) const {
  if (snap.store_ != this) throw Error(ErrorCode::kValidation, "snapshot of another store");
  if (k == 0) throw Error(ErrorCode::kInvalidK, "k must be >= 1");
  if (n_probe == 0) throw Error(ErrorCode::kValidation, "n_probe must be >= 1");
  const auto* high = snap.view(kHighView);
  if (high == nullptr || high->size() == 0) return {};
  if (q.size() != high->dim()) throw Error(ErrorCode::kDimensionMismatch, "query dimension mismatch");

  std::vector<Neighbor> merged;
  for (const auto& info : segment_cache_) {
    auto it = segment_records_.find(info.segment_id);
    if (it == segment_records_.end() || it->second.empty()) continue;
    const auto& ids = it->second;
    std::vector<Neighbor> part;
    if (info.sealed) {
      const auto index = ivf_for_segment(info.segment_id, *high, ids);
      part = memdb::knn_ivf(*index, *high, q, k, std::min(n_probe, index->n_lists), candidates);
    } else if (candidates != nullptr) {
      CandidateList both;
      std::set_intersection(ids.begin(), ids.end(), candidates->begin(), candidates->end(),
                            std::back_inserter(both));
      part = knn_flat(*high, q, k, &both);
    } else {
      part = knn_flat(*high, q, k, &ids);
    }
    merged.insert(merged.end(), part.begin(), part.end());
  }
  std::sort(merged.begin(), merged.end(), ranks_before);
  if (merged.size() > k) merged.resize(k);
  return merged;
}

// ---------------------------------------------------------------------------
// maintenance

std::size_t NamespaceStore::missing_low_views() const {
  std::shared_lock state(state_mutex_);
  return missing_low_.size();
}

std::size_t NamespaceStore::unnormalized_records() const {
  std::shared_lock state(state_mutex_);
  return unnormalized_.size();
}

std::size_t NamespaceStore::regen_low_views(std::size_t limit) {
  std::lock_guard writer(writer_mutex_);
  std::vector<ViewPatch> patches;
  for (auto it = missing_low_.begin(); it != missing_low_.end() && patches.size() < limit; ++it) {
    const auto& slot = records_.at(*it);
    ViewPatch p{*it, std::string(kLowView), {}};
    if (slot.low_derived) {
      const auto v = views_.at(std::string(kLowView)).get(*it);
      p.values.assign(v.begin(), v.end());
    } else {
      const auto high = views_.at(std::string(kHighView)).get(*it);
      auto dim_it = dims_.find(kLowView);
      const std::size_t dim =
          dim_it != dims_.end() ? dim_it->second : std::min(options_.low_dim, high.size());
      p.values = matryoshka_truncate(high, dim);
    }
    patches.push_back(std::move(p));
  }
  if (patches.empty()) return 0;
  std::vector<LogEntry> entries;
  for (const auto& p : patches) entries.push_back(encode_view_patch(p));
  const auto locations = log_->append_group(entries);
  std::unique_lock state(state_mutex_);
  for (std::size_t i = 0; i < patches.size(); ++i) apply_view_patch(patches[i], locations[i]);
  refresh_segment_cache();
  return patches.size();
}

std::size_t NamespaceStore::renormalize(std::size_t limit) {
  std::lock_guard writer(writer_mutex_);
  std::vector<ViewPatch> patches;
  std::size_t touched = 0;
  for (auto it = unnormalized_.begin(); it != unnormalized_.end() && touched < limit; ++it) {
    const auto& slot = records_.at(*it);
    bool any = false;
    for (const auto& name : slot.views) {
      const auto v = views_.at(name).get(*it);
      if (!off_norm(v)) continue;
      try {
        patches.push_back(ViewPatch{*it, name, normalize(v)});
        any = true;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kZeroVector) throw;
      }
    }
    touched += any ? 1 : 0;
  }
  if (patches.empty()) return 0;
  std::vector<LogEntry> entries;
  for (const auto& p : patches) entries.push_back(encode_view_patch(p));
  const auto locations = log_->append_group(entries);
  std::unique_lock state(state_mutex_);
  for (std::size_t i = 0; i < patches.size(); ++i) apply_view_patch(patches[i], locations[i]);
  refresh_segment_cache();
  return touched;
}

std::vector<std::uint64_t> NamespaceStore::compactable_segments() const {
  std::shared_lock state(state_mutex_);
  std::vector<std::uint64_t> out;
  for (const auto& info : segment_cache_) {
    if (!info.sealed) continue;
    auto it = segment_patches_.find(info.segment_id);
    if (it == segment_patches_.end()) continue;
    bool dirty = it->second.folded > 0;
    for (const auto& [key, n] : it->second.foreign) dirty = dirty || n > 1;
    if (dirty) out.push_back(info.segment_id);
  }
  return out;
}

std::uint64_t NamespaceStore::compact(std::uint64_t segment_id) {
  std::lock_guard writer(writer_mutex_);
  const auto info = log_->segment(segment_id);
  if (!info) throw Error(ErrorCode::kNotFound, "no segment " + std::to_string(segment_id));
  if (!info->sealed) {
    throw Error(ErrorCode::kSegmentActive, "segment " + std::to_string(segment_id) + " is active");
  }
  const auto groups = log_->read_groups(segment_id);
  const auto owned = [this, segment_id](Timestamp t) {
    const auto* slot = find_slot(t);
    return slot != nullptr && slot->location.segment_id == segment_id;
  };
  using Pos = std::pair<std::size_t, std::size_t>;
  using ViewKey = std::pair<std::int64_t, std::string>;

  std::map<std::int64_t, Metadata> fold_meta;
  std::map<ViewKey, std::vector<float>> fold_view;
  std::map<std::int64_t, Metadata> merged_meta;
  std::map<std::int64_t, Pos> last_meta;
  std::map<ViewKey, std::vector<float>> merged_view;
  std::map<ViewKey, Pos> last_view;
  std::uint64_t meta_before = 0;

  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t e = 0; e < groups[g].size(); ++e) {
      const auto& entry = groups[g][e];
      if (entry.type == EntryType::kMetaPatch) {
        ++meta_before;
        auto p = decode_meta_patch(entry.payload);
        const auto t = p.target.micros;
        if (owned(p.target)) {
          memdb::apply_meta_patch(fold_meta.try_emplace(t, Metadata::object()).first->second, p.patch);
        } else {
          memdb::apply_meta_patch(merged_meta.try_emplace(t, Metadata::object()).first->second, p.patch);
          last_meta[t] = {g, e};
        }
      } else if (entry.type == EntryType::kViewPatch) {
        auto p = decode_view_patch(entry.payload);
        ViewKey key{p.target.micros, p.view};
        if (owned(p.target)) {
          fold_view[key] = std::move(p.values);
        } else {
          merged_view[key] = std::move(p.values);
          last_view[key] = {g, e};
        }
      }
    }
  }

  std::vector<std::vector<LogEntry>> rewritten;
  std::uint64_t meta_after = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<LogEntry> out;
    for (std::size_t e = 0; e < groups[g].size(); ++e) {
      const auto& entry = groups[g][e];
      switch (entry.type) {
        case EntryType::kRecord: {
          const auto t = peek_time(entry.payload).micros;
          auto meta_it = fold_meta.find(t);
          auto view_it = fold_view.lower_bound(ViewKey{t, std::string{}});
          const bool has_view = view_it != fold_view.end() && view_it->first.first == t;
          if (meta_it == fold_meta.end() && !has_view) {
            out.push_back(entry);
            break;
          }
          auto rec = decode_record(entry.payload);
          if (meta_it != fold_meta.end()) memdb::apply_meta_patch(rec.meta, meta_it->second);
          for (; view_it != fold_view.end() && view_it->first.first == t; ++view_it) {
            rec.embeddings.views[view_it->first.second] = view_it->second;
          }
          out.push_back(encode_record(rec));
          break;
        }
        case EntryType::kMetaPatch: {
          const auto p = decode_meta_patch(entry.payload);
          auto it = last_meta.find(p.target.micros);
          if (it != last_meta.end() && it->second == Pos{g, e}) {
            out.push_back(encode_meta_patch(MetaPatch{p.target, merged_meta.at(p.target.micros)}));
            ++meta_after;
          }
          break;
        }
        case EntryType::kViewPatch: {
          const auto p = decode_view_patch(entry.payload);
          ViewKey key{p.target.micros, p.view};
          auto it = last_view.find(key);
          if (it != last_view.end() && it->second == Pos{g, e}) {
            out.push_back(encode_view_patch(ViewPatch{p.target, p.view, merged_view.at(key)}));
          }
          break;
        }
        default:
          out.push_back(entry);
      }
    }
    if (!out.empty()) rewritten.push_back(std::move(out));
  }

  std::vector<std::pair<Timestamp, LogLocation>> moved;
  std::vector<std::pair<Timestamp, std::string>> patches;
  const auto reclaimed = log_->rewrite_sealed(
      segment_id, rewritten,
      [&](EntryType type, std::span<const std::byte> payload, LogLocation loc) {
        if (type == EntryType::kRecord) {
          moved.emplace_back(peek_time(payload), loc);
        } else if (type == EntryType::kMetaPatch) {
          patches.emplace_back(decode_meta_patch(payload).target, std::string{});
        } else if (type == EntryType::kViewPatch) {
          auto p = decode_view_patch(payload);
          patches.emplace_back(p.target, std::move(p.view));
        }
      });

  std::unique_lock state(state_mutex_);
  for (const auto& [t, loc] : moved) records_.at(t).location = loc;
  segment_patches_.erase(segment_id);
  for (const auto& [t, view] : patches) note_patch(segment_id, t, view);
  meta_patch_count_ -= meta_before - meta_after;
  refresh_segment_cache();
  return reclaimed;
}

void NamespaceStore::seal_active() {
  std::lock_guard writer(writer_mutex_);
  log_->seal_active();
  std::unique_lock state(state_mutex_);
  refresh_segment_cache();
}

// ---------------------------------------------------------------------------
// introspection

StoreStats NamespaceStore::stats() const {
  std::shared_lock state(state_mutex_);
  StoreStats s;
  s.name = name_.str();
  s.records = records_.size();
  s.edges = graph_.size();
  s.pruned_edges = graph_.pruned_count();
  s.segments = segment_cache_.size();
  s.sealed_segments = static_cast<std::uint64_t>(
      std::count_if(segment_cache_.begin(), segment_cache_.end(),
                    [](const SegmentInfo& i) { return i.sealed; }));
  s.log_bytes = log_bytes_;
  s.meta_patches = meta_patch_count_;
  s.missing_low_views = missing_low_.size();
  s.samples = samples_.size();
  s.maintenance_cycles = reports_.size();
  s.last_minted = last_minted_;
  s.dims = dims_;
  double weighted = 0.0;
  std::uint64_t edges = 0;
  for (const auto& sample : samples_) {
    if (!sample.c_local) continue;
    weighted += *sample.c_local * static_cast<double>(sample.edge_count);
    edges += sample.edge_count;
  }
  if (edges > 0) s.lifetime_coherence = weighted / static_cast<double>(edges);
  if (!samples_.empty()) s.last_sample = samples_.back();
  if (!reports_.empty()) s.last_report = reports_.back();
  return s;
}

std::vector<SegmentInfo> NamespaceStore::segments() const {
  std::shared_lock state(state_mutex_);
  return segment_cache_;
}

Timestamp NamespaceStore::last_minted() const {
  std::shared_lock state(state_mutex_);
  return last_minted_;
}

std::vector<std::byte> NamespaceStore::snapshot_bytes() const {
  std::shared_lock state(state_mutex_);
  ByteWriter w;
  w.str(name_.str());
  w.i64(last_minted_.micros);
  w.u32(static_cast<std::uint32_t>(dims_.size()));
  for (const auto& [name, dim] : dims_) {
    w.str(name);
    w.u64(dim);
  }
  w.u64(records_.size());
  for (const auto& [t, slot] : records_) {
    const auto rec = encode_record(materialize(slot, true));
    w.bytes(rec.payload);
    w.u64(slot.location.segment_id);
    w.u64(slot.location.offset);
    w.u8(slot.low_derived ? 1 : 0);
  }
  w.u64(graph_.size());
  for (const auto& state_entry : graph_.all()) {
    w.bytes(encode_edge(state_entry.edge).payload);
    w.u8(state_entry.pruned_at ? 1 : 0);
    w.i64(state_entry.pruned_at.value_or(Timestamp{}).micros);
  }
  w.u64(samples_.size());
  for (const auto& s : samples_) w.bytes(encode_sample(s).payload);
  w.u64(reports_.size());
  for (const auto& r : reports_) w.bytes(encode_report(r).payload);
  w.u64(meta_patch_count_);
  return w.take();
}

}  // namespace memdb
