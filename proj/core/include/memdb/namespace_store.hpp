#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "memdb/coherence.hpp"
#include "memdb/graph_store.hpp"
#include "memdb/log_entries.hpp"
#include "memdb/segment_log.hpp"
#include "memdb/types.hpp"
#include "memdb/vector_index.hpp"

namespace memdb {

/// Wall clock in microseconds since the epoch. Injectable for tests.
using Clock = std::function<std::int64_t()>;

std::int64_t system_clock_micros();

struct StoreOptions {
  LogOptions log;
  /// Dimension of "low" views derived by truncation when a record has none.
  std::size_t low_dim = kDefaultLowDim;
  bool derive_low_views = true;
  IvfParams ivf;
};

struct EdgeRequest {
  Timestamp source;
  Timestamp destination;
  std::string destination_namespace;  // empty: same namespace
  std::string relationship;
  Weight weight;
  Metadata meta = Metadata::object();
};

struct StoreStats {
  std::string name;
  std::uint64_t records = 0;
  std::uint64_t edges = 0;
  std::uint64_t pruned_edges = 0;
  std::uint64_t segments = 0;
  std::uint64_t sealed_segments = 0;
  std::uint64_t log_bytes = 0;
  std::uint64_t meta_patches = 0;
  std::uint64_t missing_low_views = 0;
  std::uint64_t samples = 0;
  std::uint64_t maintenance_cycles = 0;
  Timestamp last_minted;
  std::map<std::string, std::size_t, std::less<>> dims;
  /// Edge-weighted mean of every persisted coherence sample.
  std::optional<double> lifetime_coherence;
  std::optional<CoherenceSample> last_sample;
  std::optional<MaintenanceReport> last_report;
};

/// Looks up a record living in another namespace.
using ForeignResolver = std::function<std::optional<MemoryRecord>(const std::string& ns, Timestamp t)>;

class NamespaceStore;

/// Consistent read view of a namespace. Holds a shared lock for its
/// lifetime, so keep it short and never call a writer while holding one.
class StoreSnapshot {
 public:
  /// Record without embeddings, or nullptr.
  const MemoryRecord* header(Timestamp t) const;
  bool contains(Timestamp t) const { return header(t) != nullptr; }
  /// Record with its persisted views. Derived low views are included only
  /// when `with_derived` is set.
  std::optional<MemoryRecord> materialize(Timestamp t, bool with_derived = false) const;

  /// Vectors of one view across the namespace (derived low views included).
  const VectorView* view(std::string_view name) const;
  const GraphStore& graph() const;
  const std::map<std::string, std::size_t, std::less<>>& dims() const;

  /// Ids in [lo, hi], ascending, optionally restricted to one kind.
  std::vector<Timestamp> window_ids(Timestamp lo, Timestamp hi,
                                    const std::string* kind = nullptr) const;
  std::size_t record_count() const;

 private:
  friend class NamespaceStore;
  StoreSnapshot(const NamespaceStore& store);

  const NamespaceStore* store_;
  std::shared_lock<std::shared_mutex> lock_;
};

/// One namespace: its log, in-memory materialized state and indexes.
///
/// Writers are serialized by a writer mutex and do log I/O without blocking
/// readers; state changes become visible atomically after the commit group
/// is on disk.
class NamespaceStore {
 public:
  static std::unique_ptr<NamespaceStore> open(const std::filesystem::path& dir, Namespace name,
                                              StoreOptions options, Clock clock,
                                              ReplayStats* stats = nullptr);
  ~NamespaceStore();

  NamespaceStore(const NamespaceStore&) = delete;
  NamespaceStore& operator=(const NamespaceStore&) = delete;

  const Namespace& name() const noexcept { return name_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }

  // -- writes ---------------------------------------------------------------

  /// Validates, mints the id (record.id_time, when positive, is used as the
  /// wall clock reading) and commits. Returns the stored id_time.
  Timestamp append(MemoryRecord record);
  /// One atomic commit group. Throws Error(kEmptyBatch) for no records.
  std::vector<Timestamp> append_batch(std::vector<MemoryRecord> records);
  /// Ingest path for vectors from older formats: the unit-norm rule is not
  /// enforced, renormalize() repairs them later.
  Timestamp import_unchecked(MemoryRecord record);

  Edge add_edge(EdgeRequest request);
  /// All edges in one commit group.
  std::vector<Edge> add_edges(std::vector<EdgeRequest> requests);

  /// Returns the resulting meta map. Throws Error(kNotFound).
  Metadata update_meta(Timestamp id, const Metadata& patch);

  /// Marks edges whose decayed strength and confidence both fell below
  /// `floor` as pruned at `now`. Returns the number pruned.
  std::size_t decay_and_prune(Timestamp now, std::int64_t half_life_micros, double floor,
                              std::size_t limit = SIZE_MAX);

  // -- reads ----------------------------------------------------------------

  StoreSnapshot snapshot() const { return StoreSnapshot(*this); }

  std::optional<MemoryRecord> get(Timestamp id) const;
  /// Throws Error(kInvalidWindow) when t_min > t_max.
  std::vector<MemoryRecord> scan_window(Timestamp t_min, Timestamp t_max,
                                        const std::optional<Kind>& kind = std::nullopt) const;

  std::vector<Edge> edges_out(Timestamp source, std::optional<std::string_view> relationship = {},
                              std::optional<Timestamp> as_of = {}) const;
  std::vector<Edge> edges_in(Timestamp destination, std::optional<Timestamp> as_of = {}) const;
  std::optional<EdgeState> edge(EdgeId id) const;

  /// Mean pair coherence over edges created in [lo, hi] and still visible at
  /// hi. Cross-namespace endpoints are resolved through `resolver` (after the
  /// store lock is released) and skipped when unresolvable.
  CoherenceSample local_coherence(Timestamp lo, Timestamp hi, const CoherenceConfig& cfg,
                                  const ForeignResolver* resolver = nullptr) const;
  /// Throws Error(kVertexNotFound).
  std::vector<PlanePoint> project_local_plane(Timestamp vertex,
                                              const ForeignResolver* resolver = nullptr) const;

  /// local_coherence followed by a durable sample entry.
  CoherenceSample sample_coherence(Timestamp lo, Timestamp hi, const CoherenceConfig& cfg,
                                   const ForeignResolver* resolver = nullptr);
  std::vector<CoherenceSample> samples() const;

  void record_report(const MaintenanceReport& report);
  std::vector<MaintenanceReport> reports() const;

  /// Approximate search over the high view: IVF per sealed segment (trained
  /// on first use and kept as a sidecar file), flat scan of the active one.
  std::vector<Neighbor> knn_ivf(std::span<const float> q, std::size_t k, std::size_t n_probe,
                                const CandidateList* candidates = nullptr) const;
  /// Same, inside an existing snapshot of this store.
  std::vector<Neighbor> knn_ivf(const StoreSnapshot& snapshot, std::span<const float> q,
                                std::size_t k, std::size_t n_probe,
                                const CandidateList* candidates = nullptr) const;

  // -- maintenance ----------------------------------------------------------

  /// Persists up to `limit` missing low views. Returns records touched.
  std::size_t regen_low_views(std::size_t limit);
  std::size_t missing_low_views() const;
  /// Re-normalizes up to `limit` records holding off-norm vectors.
  std::size_t renormalize(std::size_t limit);
  std::size_t unnormalized_records() const;

  /// Folds meta and view patches into a sealed segment. Returns bytes
  /// reclaimed. Throws Error(kSegmentActive) or Error(kNotFound).
  std::uint64_t compact(std::uint64_t segment_id);
  /// Sealed segments whose rewrite would drop at least one entry.
  std::vector<std::uint64_t> compactable_segments() const;
  void seal_active();
  /// Held for the duration of a maintenance cycle.
  std::mutex& maintenance_mutex() noexcept { return maintenance_mutex_; }
  /// Flushes buffered commit groups to disk.
  void sync();

  StoreStats stats() const;
  std::vector<SegmentInfo> segments() const;
  Timestamp last_minted() const;
  std::int64_t now() const { return clock_(); }

  /// Canonical encoding of the whole logical state, for determinism checks.
  std::vector<std::byte> snapshot_bytes() const;

 private:
  friend class StoreSnapshot;

  struct Slot {
    MemoryRecord header;  // embeddings live in views_
    LogLocation location;
    std::vector<std::string> views;  // persisted view names
    bool low_derived = false;
  };

  struct SegmentPatches {
    std::uint64_t folded = 0;  // patches on records of the same segment
    std::map<std::pair<std::int64_t, std::string>, std::uint64_t> foreign;  // (target, view|"") -> n
  };

  NamespaceStore(std::filesystem::path dir, Namespace name, StoreOptions options, Clock clock);

  void replay_entry(EntryType type, std::span<const std::byte> payload, LogLocation loc);
  void apply_record(MemoryRecord record, LogLocation loc);
  void apply_meta_patch(const MetaPatch& patch, LogLocation loc);
  void apply_view_patch(const ViewPatch& patch, LogLocation loc);
  void note_patch(std::uint64_t segment_id, Timestamp target, const std::string& view);
  void refresh_segment_cache();
  VectorView& view_for(const std::string& name, std::size_t dim);
  void derive_low(Slot& slot);
  MemoryRecord materialize(const Slot& slot, bool with_derived) const;
  const Slot* find_slot(Timestamp t) const;

  std::vector<Timestamp> commit_records(std::vector<MemoryRecord> records, bool require_unit_norm);
  CoherenceSample compute_coherence(std::vector<Edge> edges,
                                    std::unordered_map<Timestamp, MemoryRecord> local,
                                    Timestamp lo, Timestamp hi, const CoherenceConfig& cfg,
                                    const ForeignResolver* resolver) const;
  std::shared_ptr<const IvfIndex> ivf_for_segment(std::uint64_t segment_id,
                                                  const VectorView& high,
                                                  const std::vector<Timestamp>& ids) const;

  std::filesystem::path dir_;
  Namespace name_;
  StoreOptions options_;
  Clock clock_;

  std::mutex writer_mutex_;
  std::mutex maintenance_mutex_;
  mutable std::shared_mutex state_mutex_;
  std::optional<SegmentedLog> log_;

  // state (guarded by state_mutex_; mutated only with writer_mutex_ held)
  std::map<Timestamp, Slot> records_;
  std::map<std::string, std::vector<Timestamp>, std::less<>> by_kind_;
  std::map<std::string, VectorView, std::less<>> views_;
  std::map<std::string, std::size_t, std::less<>> dims_;
  std::map<std::uint64_t, std::vector<Timestamp>> segment_records_;
  std::map<std::uint64_t, SegmentPatches> segment_patches_;
  std::set<Timestamp> missing_low_;
  std::set<Timestamp> underivable_low_;
  std::set<Timestamp> unnormalized_;
  GraphStore graph_;
  std::vector<CoherenceSample> samples_;
  std::vector<MaintenanceReport> reports_;
  std::uint64_t meta_patch_count_ = 0;
  Timestamp last_minted_;
  std::vector<SegmentInfo> segment_cache_;
  std::uint64_t log_bytes_ = 0;

  mutable std::mutex ivf_mutex_;
  mutable std::map<std::uint64_t, std::shared_ptr<const IvfIndex>> ivf_cache_;
};

}  // namespace memdb
