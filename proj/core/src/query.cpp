#include "memdb/query.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "memdb/vector_index.hpp"

namespace memdb {

void RankingConfig::validate() const {
  if (!(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0)) {
    throw Error(ErrorCode::kInvalidSpec, "alpha, beta and gamma must be >= 0");
  }
  if (!(alpha + beta + gamma > 0.0)) {
    throw Error(ErrorCode::kInvalidSpec, "alpha + beta + gamma must be > 0");
  }
  if (rank_tau && !(*rank_tau > 0.0)) throw Error(ErrorCode::kInvalidSpec, "rank_tau must be > 0");
  for (const auto& [label, boost] : phi_relation_boost) {
    if (!std::isfinite(boost)) throw Error(ErrorCode::kInvalidSpec, "boost for '" + label + "' is not finite");
  }
}

std::vector<FusedItem> fuse_rrf(const std::vector<std::vector<Timestamp>>& lists, std::size_t k_rrf) {
  if (k_rrf == 0) throw Error(ErrorCode::kInvalidSpec, "k_rrf must be >= 1");
  std::map<Timestamp, double> scores;
  for (const auto& list : lists) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      scores[list[i]] += 1.0 / static_cast<double>(k_rrf + i + 1);
    }
  }
  std::vector<FusedItem> out;
  out.reserve(scores.size());
  for (const auto& [id, score] : scores) out.push_back(FusedItem{id, score});
  std::stable_sort(out.begin(), out.end(), [](const FusedItem& a, const FusedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return out;
}

double fuse_weighted(const std::map<std::string, double, std::less<>>& view_sims,
                     const std::map<std::string, double, std::less<>>& weights) {
  if (view_sims.empty()) throw Error(ErrorCode::kNoViews, "no view similarities to fuse");
  double num = 0.0;
  double den = 0.0;
  for (const auto& [view, sim] : view_sims) {
    auto it = weights.find(view);
    if (it == weights.end()) throw Error(ErrorCode::kInvalidSpec, "no weight for view '" + view + "'");
    if (!(it->second >= 0.0)) throw Error(ErrorCode::kInvalidSpec, "negative weight for '" + view + "'");
    num += it->second * sim;
    den += it->second;
  }
  if (!(den > 0.0)) throw Error(ErrorCode::kInvalidSpec, "fusion weights sum to zero");
  return num / den;
}

double phi(const GraphStore& graph, Timestamp id, const RankingConfig& cfg,
           std::optional<Timestamp> as_of) {
  const auto edges = graph.edges_out(id, std::nullopt, as_of);
  const double density =
      std::min(1.0, std::log2(1.0 + static_cast<double>(edges.size())) / 8.0);
  std::optional<double> boost;
  for (const auto& e : edges) {
    auto it = cfg.phi_relation_boost.find(e.relationship);
    if (it == cfg.phi_relation_boost.end()) continue;
    boost = boost ? std::max(*boost, it->second) : it->second;
  }
  return std::clamp(density + boost.value_or(0.0), 0.0, 1.0);
}

double phi(const NamespaceStore& store, Timestamp id, const RankingConfig& cfg) {
  const auto snap = store.snapshot();
  if (!snap.contains(id)) throw Error(ErrorCode::kNotFound, "no record " + std::to_string(id.micros));
  return phi(snap.graph(), id, cfg);
}

bool meta_matches(const Metadata& meta, const MetaPredicate& predicate) {
  const nlohmann::json* node = &meta;
  std::string_view key = predicate.key;
  const auto dot = key.find('.');
  if (dot != std::string_view::npos) {
    auto it = node->find(std::string(key.substr(0, dot)));
    if (it == node->end() || !it->is_object()) return false;
    node = &*it;
    key = key.substr(dot + 1);
  }
  auto it = node->find(std::string(key));
  if (it == node->end()) return false;
  return !predicate.equals || *it == *predicate.equals;
}

std::vector<Timestamp> lexical_ranking(const StoreSnapshot& snapshot,
                                       const std::vector<Timestamp>& candidates,
                                       const std::string& query) {
  constexpr double kK1 = 1.2;
  constexpr double kB = 0.75;
  auto q_tokens = tokenize(query);
  std::sort(q_tokens.begin(), q_tokens.end());
  q_tokens.erase(std::unique(q_tokens.begin(), q_tokens.end()), q_tokens.end());
  if (q_tokens.empty() || candidates.empty()) return {};

  std::vector<std::unordered_map<std::string, int>> tf(candidates.size());
  std::vector<double> length(candidates.size(), 0.0);
  std::unordered_map<std::string, int> df;
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto* h = snapshot.header(candidates[i]);
    if (h == nullptr || !h->content) continue;
    const auto tokens = tokenize(*h->content);
    length[i] = static_cast<double>(tokens.size());
    total += length[i];
    for (const auto& t : tokens) ++tf[i][t];
    for (const auto& [t, n] : tf[i]) ++df[t];
  }
  const double n_docs = static_cast<double>(candidates.size());
  const double avg = total > 0.0 ? total / n_docs : 1.0;

  std::vector<Neighbor> scored;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double score = 0.0;
    for (const auto& t : q_tokens) {
      auto it = tf[i].find(t);
      if (it == tf[i].end()) continue;
      const double d = df[t];
      const double idf = std::log(1.0 + (n_docs - d + 0.5) / (d + 0.5));
      const double f = it->second;
      score += idf * f * (kK1 + 1.0) / (f + kK1 * (1.0 - kB + kB * length[i] / avg));
    }
    if (score > 0.0) scored.push_back(Neighbor{candidates[i], score});
  }
  std::sort(scored.begin(), scored.end(), ranks_before);
  std::vector<Timestamp> out;
  out.reserve(scored.size());
  for (const auto& n : scored) out.push_back(n.id);
  return out;
}

namespace {

struct Candidate {
  Timestamp id;
  double sim = 0.0;
  Provenance provenance = Provenance::kDirect;
  EdgeId via_edge = 0;
  std::size_t hop = 0;
  Timestamp from;
};

Candidate direct_hit(Timestamp id, double sim) {
  Candidate c;
  c.id = id;
  c.sim = sim;
  return c;
}

}  // namespace

void validate_query(const QuerySpec& spec) {
  if (spec.t_min > spec.t_max) throw Error(ErrorCode::kInvalidWindow, "window start after window end");
  if (spec.k == 0) throw Error(ErrorCode::kInvalidK, "k must be >= 1");
  if (!spec.query_vector && !spec.query_text) {
    throw Error(ErrorCode::kInvalidSpec, "query needs a vector or text");
  }
  spec.ranking.validate();
  if (spec.expansion) {
    const auto& x = *spec.expansion;
    if (!(x.threshold > 0.0 && x.threshold <= 1.0)) {
      throw Error(ErrorCode::kInvalidSpec, "expansion threshold must be in (0, 1]");
    }
    if (x.max_hops == 0) throw Error(ErrorCode::kInvalidSpec, "max_hops must be >= 1");
    try {
      x.coherence.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::kInvalidSpec, e.what());
    }
  }
  if (spec.fusion.kind == FusionKind::kWeighted) {
    if (spec.fusion.weights.empty()) throw Error(ErrorCode::kNoViews, "weighted fusion without views");
    double sum = 0.0;
    for (const auto& [view, w] : spec.fusion.weights) {
      if (view != kHighView && view != kLowView) {
        throw Error(ErrorCode::kInvalidSpec, "cannot fuse view '" + view + "'");
      }
      if (!(w >= 0.0)) throw Error(ErrorCode::kInvalidSpec, "negative weight for '" + view + "'");
      sum += w;
    }
    if (!(sum > 0.0)) throw Error(ErrorCode::kInvalidSpec, "fusion weights sum to zero");
  }
  if (spec.fusion.kind == FusionKind::kRrf && spec.fusion.k_rrf == 0) {
    throw Error(ErrorCode::kInvalidSpec, "k_rrf must be >= 1");
  }
}

namespace {

std::vector<float> query_vector(const QuerySpec& spec, const Embedder* embedder, std::size_t dim) {
  std::vector<float> q;
  if (spec.query_vector) {
    q = *spec.query_vector;
  } else {
    if (embedder == nullptr) throw Error(ErrorCode::kEmbedderMissing, "no embedder for query text");
    q = embedder->embed(*spec.query_text);
  }
  if (q.size() != dim) {
    throw Error(ErrorCode::kDimensionMismatch, "query has dimension " + std::to_string(q.size()) +
                                                   ", namespace uses " + std::to_string(dim));
  }
  try {
    return normalize(q);
  } catch (const Error&) {
    throw Error(ErrorCode::kInvalidSpec, "query vector is zero");
  }
}

}  // namespace

std::vector<RankedHit> execute(const NamespaceStore& store, const QuerySpec& spec,
                               const Embedder* embedder) {
  validate_query(spec);
  const auto snap = store.snapshot();
  const auto* high = snap.view(kHighView);
  if (high == nullptr || high->size() == 0) return {};
  const auto q = query_vector(spec, embedder, high->dim());
  const auto* low = snap.view(kLowView);
  std::vector<float> q_low;
  if (low != nullptr && low->size() > 0) {
    try {
      q_low = matryoshka_truncate(q, low->dim());
    } catch (const Error& e) {
      // a query with an all-zero prefix has similarity 0 to every low view
      if (e.code() != ErrorCode::kZeroPrefix) throw;
      q_low.assign(low->dim(), 0.0F);
    }
  }

  // stage 1: window, kind and meta filters
  auto candidates = snap.window_ids(spec.t_min, spec.t_max,
                                    spec.kind_filter ? &spec.kind_filter->label : nullptr);
  if (!spec.meta_filter.empty()) {
    std::erase_if(candidates, [&](Timestamp t) {
      const auto& meta = snap.header(t)->meta;
      return !std::all_of(spec.meta_filter.begin(), spec.meta_filter.end(),
                          [&](const MetaPredicate& p) { return meta_matches(meta, p); });
    });
  }
  if (candidates.empty()) return {};

  // similarity of one record to the query under the chosen fusion
  const auto sim_of = [&](Timestamp t) {
    const double s_high = similarity(q, high->get(t));
    if (spec.fusion.kind != FusionKind::kWeighted) return s_high;
    std::map<std::string, double, std::less<>> sims;
    std::map<std::string, double, std::less<>> weights;
    for (const auto& [view, w] : spec.fusion.weights) {
      if (view == kHighView) {
        sims.emplace(view, s_high);
      } else if (low != nullptr && low->contains(t)) {
        sims.emplace(view, similarity(q_low, low->get(t)));
      } else {
        continue;
      }
      weights.emplace(view, w);
    }
    double den = 0.0;
    for (const auto& [view, w] : weights) den += w;
    return den > 0.0 ? fuse_weighted(sims, weights) : 0.0;
  };

  // stage 2: semantic candidates
  const std::size_t pool = std::max(spec.k, spec.rerank_depth == 0 ? 4 * spec.k : spec.rerank_depth);
  std::vector<Candidate> direct;
  switch (spec.fusion.kind) {
    case FusionKind::kIdentity: {
      std::vector<Neighbor> found;
      if (spec.mode == SearchMode::kCoarse && low != nullptr && low->size() > 0) {
        const std::size_t k_coarse = std::max(pool, spec.k_coarse == 0 ? 10 * pool : spec.k_coarse);
        found = coarse_then_refine(*low, *high, q, pool, k_coarse, &candidates);
      } else if (spec.mode == SearchMode::kIvf) {
        found = store.knn_ivf(snap, q, pool, spec.n_probe, &candidates);
      } else {
        found = knn_flat(*high, q, pool, &candidates);
      }
      for (const auto& n : found) direct.push_back(direct_hit(n.id, n.similarity));
      break;
    }
    case FusionKind::kWeighted: {
      std::vector<Neighbor> all;
      all.reserve(candidates.size());
      for (const auto t : candidates) all.push_back(Neighbor{t, sim_of(t)});
      std::sort(all.begin(), all.end(), ranks_before);
      if (all.size() > pool) all.resize(pool);
      for (const auto& n : all) direct.push_back(direct_hit(n.id, n.similarity));
      break;
    }
    case FusionKind::kRrf: {
      std::vector<std::vector<Timestamp>> lists;
      std::unordered_map<Timestamp, double> high_sim;
      {
        const auto ranked = knn_flat(*high, q, candidates.size(), &candidates);
        std::vector<Timestamp> ids;
        for (const auto& n : ranked) {
          ids.push_back(n.id);
          high_sim.emplace(n.id, n.similarity);
        }
        lists.push_back(std::move(ids));
      }
      if (!q_low.empty()) {
        const auto ranked = knn_flat(*low, q_low, candidates.size(), &candidates);
        std::vector<Timestamp> ids;
        for (const auto& n : ranked) ids.push_back(n.id);
        lists.push_back(std::move(ids));
      }
      if (spec.fusion.lexical && spec.query_text) {
        auto lex = lexical_ranking(snap, candidates, *spec.query_text);
        if (!lex.empty()) lists.push_back(std::move(lex));
      }
      auto fused = fuse_rrf(lists, spec.fusion.k_rrf);
      if (fused.size() > pool) fused.resize(pool);
      for (const auto& f : fused) direct.push_back(direct_hit(f.id, high_sim.at(f.id)));
      break;
    }
  }

  // stage 3: graph expansion within the coherence radius
  std::vector<Candidate> hits = direct;
  if (spec.expansion && !direct.empty()) {
    const auto& x = *spec.expansion;
    CoherenceConfig cfg = x.coherence;
    if (cfg.mode == DistanceMode::kIdealized && !cfg.lambda_t) {
      cfg.lambda_t = 1.0 / static_cast<double>(std::max<std::int64_t>(1, spec.t_max.micros - spec.t_min.micros));
    }
    std::unordered_set<Timestamp> admitted;
    for (const auto& c : direct) admitted.insert(c.id);
    std::unordered_map<Timestamp, MemoryRecord> cache;
    const auto record = [&](Timestamp t) -> const MemoryRecord& {
      auto it = cache.find(t);
      if (it == cache.end()) it = cache.emplace(t, *snap.materialize(t, true)).first;
      return it->second;
    };
    std::vector<Timestamp> frontier;
    for (std::size_t i = 0; i < std::min(spec.k, direct.size()); ++i) frontier.push_back(direct[i].id);
    for (std::size_t hop = 1; hop <= x.max_hops && !frontier.empty(); ++hop) {
      std::vector<Timestamp> next;
      for (const auto src : frontier) {
        for (const auto& e : snap.graph().edges_out(src, std::nullopt, spec.as_of)) {
          if (spec.relational_filter && !spec.relational_filter->contains(e.relationship)) continue;
          if (!e.destination_namespace.empty()) continue;
          const auto dst = e.destination;
          if (admitted.contains(dst) || !snap.contains(dst)) continue;
          if (pair_coherence(record(src), record(dst), cfg) < x.threshold) continue;
          admitted.insert(dst);
          next.push_back(dst);
          hits.push_back(Candidate{dst, sim_of(dst), Provenance::kExpanded, e.edge_id, hop, src});
        }
      }
      frontier = std::move(next);
    }
  }

  // stage 4: combined score
  const auto& rc = spec.ranking;
  const double tau = rc.rank_tau.value_or(
      std::max(1.0, static_cast<double>(spec.t_max.micros - spec.t_min.micros) / 4.0));
  std::vector<RankedHit> out;
  out.reserve(hits.size());
  for (const auto& c : hits) {
    RankedHit h;
    h.id_time = c.id;
    h.sim = c.sim;
    const double dt = std::abs(static_cast<double>(spec.t_max.micros - c.id.micros));
    h.temporal_decay = std::exp(-dt / tau);
    h.phi = phi(snap.graph(), c.id, rc, spec.as_of);
    h.score = rc.alpha * h.sim + rc.beta * h.temporal_decay + rc.gamma * h.phi;
    h.provenance = c.provenance;
    h.via_edge = c.via_edge;
    h.hop = c.hop;
    h.expanded_from = c.from;
    out.push_back(h);
  }
  std::sort(out.begin(), out.end(), [](const RankedHit& a, const RankedHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id_time < b.id_time;
  });
  if (out.size() > spec.k) out.resize(spec.k);
  return out;
}

}  // namespace memdb
