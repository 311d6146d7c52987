#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "memdb/types.hpp"

namespace memdb {

struct EdgeState {
  Edge edge;
  /// Set once a prune event is applied. Pruning is logical: the edge stays
  /// visible to reconstructions with as_of earlier than this.
  std::optional<Timestamp> pruned_at;

  /// Visible at `as_of` (nullopt = now): created by then and not yet pruned.
  bool visible_at(std::optional<Timestamp> as_of) const noexcept {
    if (!as_of) return !pruned_at.has_value();
    return edge.created_at <= *as_of && (!pruned_at || *pruned_at > *as_of);
  }
};

/// In-memory labeled multigraph over record timestamps. All adjacency lists
/// are ordered by edge_id.
class GraphStore {
 public:
  /// Edge ids must arrive strictly increasing.
  void apply_edge(Edge edge);
  /// Returns false when the edge is unknown or already pruned.
  bool apply_prune(EdgeId id, Timestamp at);

  const EdgeState* find(EdgeId id) const;

  std::vector<Edge> edges_out(Timestamp source, std::optional<std::string_view> relationship = {},
                              std::optional<Timestamp> as_of = {}) const;
  std::vector<Edge> edges_in(Timestamp destination, std::optional<Timestamp> as_of = {}) const;
  std::size_t out_degree(Timestamp source, std::optional<Timestamp> as_of = {}) const;

  /// Edges with created_at in [lo, hi] that are visible at `hi`.
  std::vector<Edge> edges_created_in(Timestamp lo, Timestamp hi) const;

  /// Unpruned edges whose decayed weight has fallen below `floor` in both
  /// components at `now`, in edge_id order, at most `limit`.
  std::vector<EdgeId> prune_candidates(Timestamp now, std::int64_t half_life_micros, double floor,
                                       std::size_t limit) const;

  const std::vector<EdgeState>& all() const noexcept { return edges_; }
  std::size_t size() const noexcept { return edges_.size(); }
  std::size_t pruned_count() const noexcept { return pruned_; }
  EdgeId next_edge_id() const noexcept { return edges_.empty() ? 1 : edges_.back().edge.edge_id + 1; }
  Timestamp last_created_at() const noexcept {
    return edges_.empty() ? Timestamp{} : max_created_;
  }

 private:
  std::vector<EdgeState> edges_;  // ascending edge_id
  std::unordered_map<EdgeId, std::size_t> slot_;
  std::unordered_map<Timestamp, std::vector<EdgeId>> out_;
  std::unordered_map<Timestamp, std::vector<EdgeId>> in_;
  std::map<std::pair<Timestamp, std::string>, std::vector<EdgeId>, std::less<>> by_relationship_;
  std::size_t pruned_ = 0;
  Timestamp max_created_;
  bool created_sorted_ = true;
};

/// Temporal and semantic displacement of an edge.
struct Displacement {
  std::int64_t delta_t = 0;  // t_destination - t_source, microseconds
  double s = 0.0;            // 1 - cos(v_src^H, v_dst^H), in [0, 2]

  friend bool operator==(const Displacement&, const Displacement&) = default;
};

/// Throws Error(kEndpointMissing) when either record (or its high view) is
/// absent, Error(kDimensionMismatch) when the high views differ in size.
Displacement displacement(const Edge& edge, const MemoryRecord* source,
                          const MemoryRecord* destination);

/// Weight after exponential decay: w * 2^(-age / half_life), age clamped at 0.
struct DecayedWeight {
  double strength = 0.0;
  double confidence = 0.0;
};
DecayedWeight decayed_weight(const Edge& edge, Timestamp now, std::int64_t half_life_micros);

}  // namespace memdb
