#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memdb/graph_store.hpp"
#include "memdb/types.hpp"

namespace memdb {

enum class DistanceMode : std::uint8_t { kPractical = 0, kIdealized = 1 };

/// How a record's views are combined before measuring distance. An empty
/// weight map means identity on the high view, which is what coherence uses
/// by default. With weights, the fused vector is the concatenation of each
/// view scaled by sqrt(w / sum(w)), so it stays unit length.
struct FusionPolicy {
  std::map<std::string, double, std::less<>> weights;

  bool is_identity() const noexcept { return weights.empty(); }
};

struct CoherenceConfig {
  /// Per-microsecond time weight. Unset in idealized mode means
  /// 1 / (window span), so a full-window gap contributes distance 1.
  std::optional<double> lambda_t;
  double lambda_s = 1.0;
  DistanceMode mode = DistanceMode::kPractical;
  FusionPolicy fusion;

  /// Throws Error(kValidation).
  void validate() const;
};

/// ||f(a) - f(b)||_2 computed componentwise over the fused high views.
double practical_distance(const MemoryRecord& a, const MemoryRecord& b,
                          const FusionPolicy& fusion = {});

/// sqrt((lambda_t * dt)^2 + (lambda_s * s)^2), s = 1 - cos(v_a^H, v_b^H).
double idealized_distance(const MemoryRecord& a, const MemoryRecord& b, const CoherenceConfig& cfg);

double coherence_distance(const MemoryRecord& a, const MemoryRecord& b, const CoherenceConfig& cfg);

/// exp(-d) in (0, 1].
double pair_coherence(const MemoryRecord& a, const MemoryRecord& b, const CoherenceConfig& cfg);

struct CoherenceSample {
  Timestamp window_lo;
  Timestamp window_hi;
  std::uint64_t edge_count = 0;
  std::optional<double> c_local;  // present iff edge_count >= 1
  Timestamp computed_at;
  DistanceMode mode = DistanceMode::kPractical;

  friend bool operator==(const CoherenceSample&, const CoherenceSample&) = default;
};

/// Resolves an edge endpoint. `ns` is empty for the source's own namespace.
using RecordLookup = std::function<const MemoryRecord*(const std::string& ns, Timestamp t)>;

/// Mean pairwise coherence over `edges` whose endpoints both resolve. Edges
/// are expected to be the window's edges (created_at in [lo, hi]).
CoherenceSample local_coherence(const std::vector<Edge>& edges, const RecordLookup& lookup,
                                Timestamp lo, Timestamp hi, const CoherenceConfig& cfg,
                                Timestamp computed_at);

struct PlanePoint {
  EdgeId edge_id = 0;
  std::int64_t delta_t = 0;
  double s = 0.0;

  friend bool operator==(const PlanePoint&, const PlanePoint&) = default;
};

/// (dt, s) of each outgoing edge of `vertex`: its local flow field.
std::vector<PlanePoint> project_local_plane(const MemoryRecord& vertex,
                                            const std::vector<Edge>& outgoing,
                                            const RecordLookup& lookup);

}  // namespace memdb
