#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "memdb/coherence.hpp"
#include "memdb/embedder.hpp"
#include "memdb/namespace_store.hpp"
#include "memdb/types.hpp"

namespace memdb {

/// How stage 2 finds candidates under identity fusion.
enum class SearchMode : std::uint8_t { kExact, kCoarse, kIvf };

enum class FusionKind : std::uint8_t { kIdentity, kWeighted, kRrf };

struct FusionSpec {
  FusionKind kind = FusionKind::kIdentity;
  /// kWeighted: view name ("high" or "low") -> weight.
  std::map<std::string, double, std::less<>> weights;
  /// kRrf: rank constant.
  std::size_t k_rrf = 60;
  /// kRrf: add a BM25 ranking over record content when query text is given.
  bool lexical = false;
};

/// Exact-match (`equals` set) or existence predicate on a meta key. A key
/// "a.b" addresses field b of the nested object a.
struct MetaPredicate {
  std::string key;
  std::optional<nlohmann::json> equals;
};

struct ExpansionSpec {
  double threshold = 0.5;  // in (0, 1]
  std::size_t max_hops = 1;
  CoherenceConfig coherence;
};

struct RankingConfig {
  double alpha = 0.55;
  double beta = 0.35;
  double gamma = 0.10;
  /// Microseconds. Unset: a quarter of the window span (at least 1).
  std::optional<double> rank_tau;
  std::map<std::string, double, std::less<>> phi_relation_boost;

  /// Throws Error(kInvalidSpec).
  void validate() const;
};

struct QuerySpec {
  Timestamp t_min;
  Timestamp t_max;
  std::optional<std::vector<float>> query_vector;
  std::optional<std::string> query_text;
  std::optional<Kind> kind_filter;
  std::vector<MetaPredicate> meta_filter;
  /// When set, expansion only follows edges with these labels.
  std::optional<std::set<std::string>> relational_filter;
  std::size_t k = 10;
  std::optional<ExpansionSpec> expansion;
  RankingConfig ranking;
  FusionSpec fusion;
  SearchMode mode = SearchMode::kExact;
  /// Direct candidates kept for re-ranking; 0 means 4 * k.
  std::size_t rerank_depth = 0;
  /// Coarse-stage width under kCoarse; 0 means 10 * pool.
  std::size_t k_coarse = 0;
  std::size_t n_probe = 8;
  /// Graph state used for expansion and structure scores; unset means now.
  std::optional<Timestamp> as_of;
};

enum class Provenance : std::uint8_t { kDirect, kExpanded };

struct RankedHit {
  Timestamp id_time;
  double score = 0.0;
  double sim = 0.0;
  double temporal_decay = 0.0;
  double phi = 0.0;
  Provenance provenance = Provenance::kDirect;
  EdgeId via_edge = 0;      // expanded only
  std::size_t hop = 0;      // expanded only
  Timestamp expanded_from;  // expanded only

  friend bool operator==(const RankedHit&, const RankedHit&) = default;
};

/// Throws Error(kInvalidWindow), Error(kInvalidK), Error(kInvalidSpec) or
/// Error(kNoViews) for a malformed spec.
void validate_query(const QuerySpec& spec);

/// Runs the four-stage pipeline against a snapshot of `store`. `embedder`
/// is needed only when the spec carries text but no vector.
std::vector<RankedHit> execute(const NamespaceStore& store, const QuerySpec& spec,
                               const Embedder* embedder = nullptr);

struct FusedItem {
  Timestamp id;
  double score = 0.0;

  friend bool operator==(const FusedItem&, const FusedItem&) = default;
};

/// Sum of 1 / (k_rrf + rank) over the lists holding an item (rank from 1).
/// Descending score, ties by ascending timestamp.
std::vector<FusedItem> fuse_rrf(const std::vector<std::vector<Timestamp>>& lists, std::size_t k_rrf);

/// sum(w * sim) / sum(w). Throws Error(kNoViews) for no views and
/// Error(kInvalidSpec) for a missing, negative or all-zero weight.
double fuse_weighted(const std::map<std::string, double, std::less<>>& view_sims,
                     const std::map<std::string, double, std::less<>>& weights);

/// min(1, log2(1 + out_degree) / 8) + the largest boost among outgoing
/// labels, clamped to [0, 1].
double phi(const GraphStore& graph, Timestamp id, const RankingConfig& cfg,
           std::optional<Timestamp> as_of = std::nullopt);
/// Throws Error(kNotFound) for an unknown record.
double phi(const NamespaceStore& store, Timestamp id, const RankingConfig& cfg);

/// BM25 (k1 = 1.2, b = 0.75) of `query` against each candidate's content.
/// Only candidates with a positive score are returned, best first.
std::vector<Timestamp> lexical_ranking(const StoreSnapshot& snapshot,
                                       const std::vector<Timestamp>& candidates,
                                       const std::string& query);

bool meta_matches(const Metadata& meta, const MetaPredicate& predicate);

}  // namespace memdb
