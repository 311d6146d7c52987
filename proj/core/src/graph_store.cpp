#include "memdb/graph_store.hpp"

#include <algorithm>
#include <cmath>

#include "memdb/vector_index.hpp"

namespace memdb {

void GraphStore::apply_edge(Edge edge) {
  if (!edges_.empty() && edge.edge_id <= edges_.back().edge.edge_id) {
    throw Error(ErrorCode::kValidation, "edge ids must increase");
  }
  if (!edges_.empty() && edge.created_at < max_created_) created_sorted_ = false;
  max_created_ = edges_.empty() ? edge.created_at : std::max(max_created_, edge.created_at);
  const auto id = edge.edge_id;
  out_[edge.source].push_back(id);
  if (edge.destination_namespace.empty()) in_[edge.destination].push_back(id);
  by_relationship_[{edge.source, edge.relationship}].push_back(id);
  slot_.emplace(id, edges_.size());
  edges_.push_back(EdgeState{std::move(edge), std::nullopt});
}

bool GraphStore::apply_prune(EdgeId id, Timestamp at) {
  auto it = slot_.find(id);
  if (it == slot_.end()) return false;
  auto& state = edges_[it->second];
  if (state.pruned_at) return false;
  state.pruned_at = at;
  ++pruned_;
  return true;
}

const EdgeState* GraphStore::find(EdgeId id) const {
  auto it = slot_.find(id);
  return it == slot_.end() ? nullptr : &edges_[it->second];
}

std::vector<Edge> GraphStore::edges_out(Timestamp source, std::optional<std::string_view> relationship,
                                        std::optional<Timestamp> as_of) const {
  const std::vector<EdgeId>* ids = nullptr;
  if (relationship) {
    auto it = by_relationship_.find(std::pair<Timestamp, std::string>{source, std::string(*relationship)});
    if (it != by_relationship_.end()) ids = &it->second;
  } else if (auto it = out_.find(source); it != out_.end()) {
    ids = &it->second;
  }
  std::vector<Edge> result;
  if (ids == nullptr) return result;
  for (const auto id : *ids) {
    const auto& state = edges_[slot_.at(id)];
    if (state.visible_at(as_of)) result.push_back(state.edge);
  }
  return result;
}

std::vector<Edge> GraphStore::edges_in(Timestamp destination, std::optional<Timestamp> as_of) const {
  std::vector<Edge> result;
  auto it = in_.find(destination);
  if (it == in_.end()) return result;
  for (const auto id : it->second) {
    const auto& state = edges_[slot_.at(id)];
    if (state.visible_at(as_of)) result.push_back(state.edge);
  }
  return result;
}

std::size_t GraphStore::out_degree(Timestamp source, std::optional<Timestamp> as_of) const {
  auto it = out_.find(source);
  if (it == out_.end()) return 0;
  std::size_t n = 0;
  for (const auto id : it->second) n += edges_[slot_.at(id)].visible_at(as_of) ? 1 : 0;
  return n;
}

std::vector<Edge> GraphStore::edges_created_in(Timestamp lo, Timestamp hi) const {
  std::vector<Edge> result;
  auto first = edges_.begin();
  auto last = edges_.end();
  if (created_sorted_) {
    first = std::lower_bound(edges_.begin(), edges_.end(), lo,
                             [](const EdgeState& s, Timestamp t) { return s.edge.created_at < t; });
    last = std::upper_bound(first, edges_.end(), hi,
                            [](Timestamp t, const EdgeState& s) { return t < s.edge.created_at; });
  }
  for (auto it = first; it != last; ++it) {
    const auto& e = it->edge;
    if (e.created_at < lo || e.created_at > hi) continue;
    if (it->visible_at(hi)) result.push_back(e);
  }
  return result;
}

DecayedWeight decayed_weight(const Edge& edge, Timestamp now, std::int64_t half_life_micros) {
  const double age = static_cast<double>(std::max<std::int64_t>(0, now.micros - edge.created_at.micros));
  const double factor = std::exp2(-age / static_cast<double>(half_life_micros));
  return DecayedWeight{edge.weight.strength() * factor, edge.weight.confidence() * factor};
}

std::vector<EdgeId> GraphStore::prune_candidates(Timestamp now, std::int64_t half_life_micros,
                                                 double floor, std::size_t limit) const {
  std::vector<EdgeId> out;
  for (const auto& state : edges_) {
    if (out.size() >= limit) break;
    if (state.pruned_at) continue;
    const auto w = decayed_weight(state.edge, now, half_life_micros);
    if (std::abs(w.strength) < floor && w.confidence < floor) out.push_back(state.edge.edge_id);
  }
  return out;
}

Displacement displacement(const Edge& edge, const MemoryRecord* source,
                          const MemoryRecord* destination) {
  if (source == nullptr || destination == nullptr) {
    throw Error(ErrorCode::kEndpointMissing,
                "edge " + std::to_string(edge.edge_id) + " has an unresolvable endpoint");
  }
  const auto* hs = source->embeddings.high();
  const auto* hd = destination->embeddings.high();
  if (hs == nullptr || hd == nullptr) {
    throw Error(ErrorCode::kEndpointMissing,
                "edge " + std::to_string(edge.edge_id) + " endpoint lacks a high view");
  }
  const double norms = l2_norm(*hs) * l2_norm(*hd);
  const double cosine = norms > 0.0 ? similarity(*hs, *hd) / norms : 0.0;
  const double s = std::clamp(1.0 - cosine, 0.0, 2.0);
  return Displacement{destination->id_time.micros - source->id_time.micros, s};
}

}  // namespace memdb
