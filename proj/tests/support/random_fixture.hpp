#pragma once

// Randomized namespaces paired with a plain-data mirror for reference checks.

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "memdb/embedder.hpp"
#include "memdb/namespace_store.hpp"
#include "memdb/query.hpp"
#include "reference_pipeline.hpp"
#include "test_support.hpp"

namespace memdb::testing {

inline const std::vector<std::string>& fixture_words() {
  static const std::vector<std::string> words{
      "alpha", "river", "stone", "cloud", "orbit", "maple", "quartz", "signal", "harbor", "ember",
      "lattice", "meadow", "cipher", "tundra", "violet", "canyon", "falcon", "glacier", "nectar",
      "prism", "summit", "thicket", "willow", "zephyr", "beacon", "delta", "fjord", "garnet",
      "island", "juniper"};
  return words;
}

inline std::string random_text(std::mt19937_64& rng, std::size_t min_words = 3, std::size_t max_words = 8) {
  const auto& w = fixture_words();
  const std::size_t n = min_words + rng() % (max_words - min_words + 1);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += w[rng() % w.size()];
  }
  return out;
}

struct FixtureParams {
  std::size_t records = 300;
  std::size_t edges = 600;
  std::size_t dim = 64;
  std::size_t low_dim = 16;
};

inline const std::vector<std::string>& fixture_kinds() {
  static const std::vector<std::string> k{"message", "observation", "summary", "state"};
  return k;
}

inline const std::vector<std::string>& fixture_relations() {
  static const std::vector<std::string> r{"reply", "related-to", "summary-of", "causes"};
  return r;
}

/// Builds a namespace with interleaved records, edges and one prune pass,
/// and mirrors it into a RefStore.
inline std::unique_ptr<NamespaceStore> build_random_store(std::mt19937_64& rng,
                                                          const std::filesystem::path& dir,
                                                          const Embedder& embedder,
                                                          const FixtureParams& params, RefStore& ref) {
  StoreOptions options = small_store_options();
  options.low_dim = params.low_dim;
  StepClock clock(1'000'000, 1);
  auto store = NamespaceStore::open(dir, Namespace("fixture"), options, clock);
  std::int64_t now = 1'000'000;
  std::vector<Timestamp> ids;
  std::size_t made_records = 0, made_edges = 0;
  while (made_records < params.records || made_edges < params.edges) {
    now += 1 + static_cast<std::int64_t>(rng() % 5000);
    clock.set(now);
    const std::size_t left_records = params.records - made_records;
    const std::size_t left_edges = params.edges - made_edges;
    const bool want_edge = ids.size() >= 2 && left_edges > 0 &&
                           (left_records == 0 || rng() % (left_records + left_edges) < left_edges);
    if (want_edge) {
      EdgeRequest req;
      req.source = ids[rng() % ids.size()];
      req.destination = ids[rng() % ids.size()];
      req.relationship = fixture_relations()[rng() % fixture_relations().size()];
      std::uniform_real_distribution<double> u(0.0, 1.0);
      req.weight = Weight::make(u(rng) * 2.0 - 1.0, u(rng));
      store->add_edge(req);
      ++made_edges;
      continue;
    }
    std::vector<float> v;
    std::string text;
    for (;;) {
      text = random_text(rng);
      v = embedder.embed(text);
      const bool zero_prefix = std::all_of(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(params.low_dim),
                                           [](float x) { return x == 0.0F; });
      if (!zero_prefix) break;
    }
    nlohmann::json meta = nlohmann::json::object();
    if (rng() % 2) meta["topic"] = fixture_words()[rng() % 4];
    if (rng() % 3 == 0) meta["source"] = {{"lang", rng() % 2 ? "en" : "de"}};
    if (rng() % 4 == 0) meta["pinned"] = true;
    auto rec = make_record(v, fixture_kinds()[rng() % fixture_kinds().size()], text, meta);
    ids.push_back(store->append(std::move(rec)));
    ++made_records;
  }
  // half-life and floor chosen so that a fraction of edges gets pruned
  clock.set(now + 1000);
  store->decay_and_prune(Timestamp(now + 1000), 500'000, 0.3);

  ref = RefStore{};
  const auto snap_ids = store->scan_window(Timestamp(0), Timestamp(INT64_MAX));
  for (const auto& r : snap_ids) {
    RefRecord rr;
    rr.id = r.id_time.micros;
    rr.kind = r.kind.label;
    rr.meta = r.meta;
    rr.high = *r.embeddings.high();
    rr.low = ref_unit_prefix(rr.high, params.low_dim);
    ref.records.emplace(rr.id, std::move(rr));
  }
  const auto edge_count = store->stats().edges;
  for (EdgeId id = 1; id <= edge_count; ++id) {
    const auto st = store->edge(id);
    if (!st) throw std::runtime_error("edge id gap in fixture");
    const auto& e = st->edge;
    RefEdge re{e.edge_id, e.source.micros, e.destination.micros, e.relationship, e.created_at.micros, {}};
    if (st->pruned_at) re.pruned = st->pruned_at->micros;
    ref.edges.push_back(re);
  }
  return store;
}

inline QuerySpec random_spec(std::mt19937_64& rng, const RefStore& ref, const Embedder& embedder) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  QuerySpec spec;
  const auto lo = ref.records.begin()->first;
  const auto hi = ref.records.rbegin()->first;
  if (rng() % 4 == 0) {
    spec.t_min = Timestamp(0);
    spec.t_max = Timestamp(hi + 10'000);
  } else {
    auto a = lo + static_cast<std::int64_t>(u(rng) * double(hi - lo));
    auto b = lo + static_cast<std::int64_t>(u(rng) * double(hi - lo));
    if (a > b) std::swap(a, b);
    spec.t_min = Timestamp(a);
    spec.t_max = Timestamp(b + static_cast<std::int64_t>(rng() % 100'000));
  }
  if (rng() % 2) {
    spec.query_vector = embedder.embed(random_text(rng, 1, 4));
  } else {
    spec.query_vector = random_unit(rng, embedder.dimension());
  }
  if (rng() % 4 == 0) spec.kind_filter = Kind{fixture_kinds()[rng() % fixture_kinds().size()]};
  if (rng() % 5 == 0) {
    switch (rng() % 3) {
      case 0: spec.meta_filter.push_back({"topic", nlohmann::json(fixture_words()[rng() % 4])}); break;
      case 1: spec.meta_filter.push_back({"source.lang", nlohmann::json("en")}); break;
      default: spec.meta_filter.push_back({"pinned", std::nullopt}); break;
    }
  }
  spec.k = 1 + rng() % 20;
  if (rng() % 3 == 0) spec.rerank_depth = spec.k + rng() % 60;
  if (rng() % 2) {
    ExpansionSpec x;
    x.threshold = 0.15 + 0.6 * u(rng);
    x.max_hops = 1 + rng() % 3;
    if (rng() % 3 == 0) {
      x.coherence.mode = DistanceMode::kIdealized;
      if (rng() % 2) x.coherence.lambda_t = 1e-6 * u(rng);
      x.coherence.lambda_s = 0.5 + u(rng);
    }
    spec.expansion = x;
    if (rng() % 4 == 0) {
      spec.relational_filter = std::set<std::string>{fixture_relations()[rng() % 4], fixture_relations()[rng() % 4]};
    }
  }
  spec.ranking.alpha = u(rng);
  spec.ranking.beta = u(rng);
  spec.ranking.gamma = u(rng) + 0.01;
  if (rng() % 2) spec.ranking.rank_tau = 1.0 + u(rng) * 1e6;
  if (rng() % 3 == 0) spec.ranking.phi_relation_boost[fixture_relations()[rng() % 4]] = u(rng) - 0.3;
  switch (rng() % 4) {
    case 0:
      spec.fusion.kind = FusionKind::kWeighted;
      spec.fusion.weights = {{"high", u(rng) + 0.1}, {"low", u(rng)}};
      break;
    case 1:
      spec.fusion.kind = FusionKind::kRrf;
      spec.fusion.k_rrf = 1 + rng() % 100;
      break;
    default:
      break;
  }
  if (rng() % 3 == 0) {
    const auto& e = ref.edges[rng() % ref.edges.size()];
    spec.as_of = Timestamp(e.created + static_cast<std::int64_t>(rng() % 3) - 1);
  }
  return spec;
}

}  // namespace memdb::testing
