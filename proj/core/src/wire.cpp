#include "memdb/wire.hpp"

#include <unordered_map>

namespace memdb::wire {

namespace {

[[noreturn]] void bad(const std::string& message) { throw Error(ErrorCode::kBadRequest, message); }

// Runs `fn`, turning JSON access errors into BadRequest.
template <typename F>
auto guarded(F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const json::exception& e) {
    bad(e.what());
  }
}

const json& object(const json& j, std::string_view what) {
  if (!j.is_object()) bad(std::string(what) + ": expected an object");
  return j;
}

const json* field(const json& j, std::string_view key) {
  auto it = j.find(key);
  return it == j.end() || it->is_null() ? nullptr : &*it;
}

const json& require(const json& j, std::string_view key) {
  const auto* f = field(j, key);
  if (f == nullptr) bad("missing field '" + std::string(key) + "'");
  return *f;
}

std::int64_t as_int(const json& j, std::string_view key) {
  if (!j.is_number_integer()) bad("'" + std::string(key) + "' must be an integer");
  return j.get<std::int64_t>();
}

std::uint64_t as_uint(const json& j, std::string_view key) {
  const auto v = as_int(j, key);
  if (v < 0) bad("'" + std::string(key) + "' must be >= 0");
  return static_cast<std::uint64_t>(v);
}

double as_double(const json& j, std::string_view key) {
  if (!j.is_number()) bad("'" + std::string(key) + "' must be a number");
  return j.get<double>();
}

std::string as_string(const json& j, std::string_view key) {
  if (!j.is_string()) bad("'" + std::string(key) + "' must be a string");
  return j.get<std::string>();
}

Timestamp ts(const json& j, std::string_view key) { return Timestamp(as_int(require(j, key), key)); }

std::optional<Timestamp> opt_ts(const json& j, std::string_view key) {
  const auto* f = field(j, key);
  if (f == nullptr) return std::nullopt;
  return Timestamp(as_int(*f, key));
}

std::vector<float> floats(const json& j, std::string_view key) {
  if (!j.is_array()) bad("'" + std::string(key) + "' must be an array of numbers");
  std::vector<float> out;
  out.reserve(j.size());
  for (const auto& x : j) out.push_back(static_cast<float>(as_double(x, key)));
  return out;
}

std::map<std::string, double, std::less<>> weights(const json& j, std::string_view key) {
  if (!j.is_object()) bad("'" + std::string(key) + "' must be an object");
  std::map<std::string, double, std::less<>> out;
  for (const auto& [k, v] : j.items()) out.emplace(k, as_double(v, key));
  return out;
}

std::string_view mode_name(DistanceMode m) { return m == DistanceMode::kPractical ? "practical" : "idealized"; }

std::optional<Kind> opt_kind(const json& j) {
  const auto* f = field(j, "kind");
  if (f == nullptr) return std::nullopt;
  return Kind{as_string(*f, "kind")};
}

}  // namespace

json to_json(const MemoryRecord& r, bool with_embeddings) {
  json j{{"id_time", r.id_time.micros}, {"kind", r.kind.label}, {"meta", r.meta}};
  j["content"] = r.content ? json(*r.content) : json(nullptr);
  if (with_embeddings) {
    json e = json::object();
    for (const auto& [name, v] : r.embeddings.views) e[name] = v;
    j["embeddings"] = std::move(e);
  }
  return j;
}

MemoryRecord record_from_json(const json& j) {
  return guarded([&] {
    object(j, "record");
    MemoryRecord r;
    if (const auto t = opt_ts(j, "id_time")) r.id_time = *t;
    r.kind.label = as_string(require(j, "kind"), "kind");
    if (const auto* c = field(j, "content")) r.content = as_string(*c, "content");
    if (const auto* e = field(j, "embeddings")) {
      object(*e, "embeddings");
      for (const auto& [name, v] : e->items()) r.embeddings.views.emplace(name, floats(v, "embeddings." + name));
    }
    if (const auto* m = field(j, "meta")) r.meta = *m;
    return r;
  });
}

json to_json(const Edge& e) {
  json j{{"edge_id", e.edge_id},
         {"source", e.source.micros},
         {"destination", e.destination.micros},
         {"relationship", e.relationship},
         {"strength", e.weight.strength()},
         {"confidence", e.weight.confidence()},
         {"meta", e.meta},
         {"created_at", e.created_at.micros}};
  j["destination_namespace"] = e.destination_namespace.empty() ? json(nullptr) : json(e.destination_namespace);
  return j;
}

json to_json(const EdgeState& s) {
  json j = to_json(s.edge);
  j["pruned_at"] = s.pruned_at ? json(s.pruned_at->micros) : json(nullptr);
  return j;
}

EdgeRequest edge_request_from_json(const json& j) {
  return guarded([&] {
    object(j, "edge");
    EdgeRequest r;
    r.source = ts(j, "source");
    r.destination = ts(j, "destination");
    if (const auto* ns = field(j, "destination_namespace")) r.destination_namespace = as_string(*ns, "destination_namespace");
    r.relationship = as_string(require(j, "relationship"), "relationship");
    const auto* s = field(j, "strength");
    const auto* c = field(j, "confidence");
    r.weight = Weight::make(s ? as_double(*s, "strength") : 1.0, c ? as_double(*c, "confidence") : 1.0);
    if (const auto* m = field(j, "meta")) r.meta = *m;
    return r;
  });
}

CoherenceConfig coherence_config_from_json(const json& j) {
  return guarded([&] {
    object(j, "coherence");
    CoherenceConfig c;
    if (const auto* m = field(j, "mode")) {
      const auto mode = as_string(*m, "mode");
      if (mode == "practical") {
        c.mode = DistanceMode::kPractical;
      } else if (mode == "idealized") {
        c.mode = DistanceMode::kIdealized;
      } else {
        bad("unknown coherence mode '" + mode + "'");
      }
    }
    if (const auto* f = field(j, "lambda_t")) c.lambda_t = as_double(*f, "lambda_t");
    if (const auto* f = field(j, "lambda_s")) c.lambda_s = as_double(*f, "lambda_s");
    if (const auto* f = field(j, "fusion_weights")) c.fusion.weights = weights(*f, "fusion_weights");
    return c;
  });
}

json to_json(const CoherenceSample& s) {
  return json{{"window_lo", s.window_lo.micros},
              {"window_hi", s.window_hi.micros},
              {"edge_count", s.edge_count},
              {"c_local", s.c_local ? json(*s.c_local) : json(nullptr)},
              {"computed_at", s.computed_at.micros},
              {"mode", mode_name(s.mode)}};
}

json to_json(const PlanePoint& p) {
  return json{{"edge_id", p.edge_id}, {"delta_t", p.delta_t}, {"s", p.s}};
}

QuerySpec query_from_json(const json& j) {
  return guarded([&] {
    object(j, "query");
    QuerySpec q;
    q.t_min = ts(j, "t_min");
    q.t_max = ts(j, "t_max");
    if (const auto* f = field(j, "vector")) q.query_vector = floats(*f, "vector");
    if (const auto* f = field(j, "text")) q.query_text = as_string(*f, "text");
    q.kind_filter = opt_kind(j);
    if (const auto* f = field(j, "meta_filter")) {
      if (f->is_object()) {
        for (const auto& [k, v] : f->items()) q.meta_filter.push_back(MetaPredicate{k, std::optional<json>(std::in_place, v)});
      } else if (f->is_array()) {
        for (const auto& p : *f) {
          object(p, "meta_filter[]");
          MetaPredicate pred{as_string(require(p, "key"), "key"), std::nullopt};
          if (p.contains("equals")) pred.equals.emplace(p.at("equals"));
          q.meta_filter.push_back(std::move(pred));
        }
      } else {
        bad("'meta_filter' must be an object or an array");
      }
    }
    if (const auto* f = field(j, "relational_filter")) {
      if (!f->is_array()) bad("'relational_filter' must be an array of strings");
      std::set<std::string> labels;
      for (const auto& l : *f) labels.insert(as_string(l, "relational_filter"));
      q.relational_filter = std::move(labels);
    }
    if (const auto* f = field(j, "k")) q.k = as_uint(*f, "k");
    if (const auto* f = field(j, "expansion")) {
      object(*f, "expansion");
      ExpansionSpec x;
      if (const auto* g = field(*f, "threshold")) x.threshold = as_double(*g, "threshold");
      if (const auto* g = field(*f, "max_hops")) x.max_hops = as_uint(*g, "max_hops");
      if (const auto* g = field(*f, "coherence")) x.coherence = coherence_config_from_json(*g);
      q.expansion = std::move(x);
    }
    if (const auto* f = field(j, "ranking")) {
      object(*f, "ranking");
      if (const auto* g = field(*f, "alpha")) q.ranking.alpha = as_double(*g, "alpha");
      if (const auto* g = field(*f, "beta")) q.ranking.beta = as_double(*g, "beta");
      if (const auto* g = field(*f, "gamma")) q.ranking.gamma = as_double(*g, "gamma");
      if (const auto* g = field(*f, "tau")) q.ranking.rank_tau = as_double(*g, "tau");
      if (const auto* g = field(*f, "phi_relation_boost")) {
        q.ranking.phi_relation_boost = weights(*g, "phi_relation_boost");
      }
    }
    if (const auto* f = field(j, "fusion")) {
      object(*f, "fusion");
      if (const auto* g = field(*f, "kind")) {
        const auto kind = as_string(*g, "fusion.kind");
        if (kind == "identity") {
          q.fusion.kind = FusionKind::kIdentity;
        } else if (kind == "weighted") {
          q.fusion.kind = FusionKind::kWeighted;
        } else if (kind == "rrf") {
          q.fusion.kind = FusionKind::kRrf;
        } else {
          bad("unknown fusion kind '" + kind + "'");
        }
      }
      if (const auto* g = field(*f, "weights")) q.fusion.weights = weights(*g, "fusion.weights");
      if (const auto* g = field(*f, "k_rrf")) q.fusion.k_rrf = as_uint(*g, "k_rrf");
      if (const auto* g = field(*f, "lexical")) q.fusion.lexical = g->get<bool>();
    }
    if (const auto* f = field(j, "mode")) {
      const auto mode = as_string(*f, "mode");
      if (mode == "exact") {
        q.mode = SearchMode::kExact;
      } else if (mode == "coarse") {
        q.mode = SearchMode::kCoarse;
      } else if (mode == "ivf") {
        q.mode = SearchMode::kIvf;
      } else {
        bad("unknown search mode '" + mode + "'");
      }
    }
    if (const auto* f = field(j, "rerank_depth")) q.rerank_depth = as_uint(*f, "rerank_depth");
    if (const auto* f = field(j, "k_coarse")) q.k_coarse = as_uint(*f, "k_coarse");
    if (const auto* f = field(j, "n_probe")) q.n_probe = as_uint(*f, "n_probe");
    q.as_of = opt_ts(j, "as_of");
    return q;
  });
}

json to_json(const RankedHit& h) {
  json j{{"id_time", h.id_time.micros},
         {"score", h.score},
         {"sim", h.sim},
         {"temporal_decay", h.temporal_decay},
         {"phi", h.phi},
         {"provenance", h.provenance == Provenance::kDirect ? "direct" : "expanded"}};
  if (h.provenance == Provenance::kExpanded) {
    j["via_edge"] = h.via_edge;
    j["hop"] = h.hop;
    j["expanded_from"] = h.expanded_from.micros;
  }
  return j;
}

json to_json(const StoreStats& s) {
  json dims = json::object();
  for (const auto& [name, d] : s.dims) dims[name] = d;
  return json{{"namespace", s.name},
              {"records", s.records},
              {"edges", s.edges},
              {"pruned_edges", s.pruned_edges},
              {"segments", s.segments},
              {"sealed_segments", s.sealed_segments},
              {"log_bytes", s.log_bytes},
              {"meta_patches", s.meta_patches},
              {"missing_low_views", s.missing_low_views},
              {"samples", s.samples},
              {"maintenance_cycles", s.maintenance_cycles},
              {"last_minted", s.last_minted.micros},
              {"dims", dims},
              {"lifetime_coherence", s.lifetime_coherence ? json(*s.lifetime_coherence) : json(nullptr)},
              {"last_sample", s.last_sample ? to_json(*s.last_sample) : json(nullptr)},
              {"last_report", s.last_report ? memdb::to_json(*s.last_report) : json(nullptr)}};
}

MaintenancePlan plan_from_json(const json& j, MaintenancePlan base) {
  return guarded([&] {
    object(j, "maintenance");
    MaintenancePlan p = std::move(base);
    if (const auto* f = field(j, "tasks")) {
      if (!f->is_array()) bad("'tasks' must be an array");
      p.tasks.clear();
      for (const auto& t : *f) p.tasks.insert(task_from_string(as_string(t, "tasks")));
    }
    if (const auto* f = field(j, "batch_size")) p.batch_size = as_uint(*f, "batch_size");
    if (const auto* f = field(j, "interval_ms")) p.interval = std::chrono::milliseconds(as_int(*f, "interval_ms"));
    if (const auto* f = field(j, "half_life_micros")) p.half_life_micros = as_int(*f, "half_life_micros");
    if (const auto* f = field(j, "floor")) p.prune_floor = as_double(*f, "floor");
    if (const auto* f = field(j, "coherence_window_micros")) {
      p.coherence_window_micros = as_int(*f, "coherence_window_micros");
    }
    if (const auto* f = field(j, "coherence")) p.coherence = coherence_config_from_json(*f);
    return p;
  });
}

json ok_response(const json& request_id, json payload) {
  return json{{"request_id", request_id}, {"status", "ok"}, {"payload", std::move(payload)}};
}

json error_response(const json& request_id, std::string_view code, std::string_view message) {
  return json{{"request_id", request_id},
              {"status", "error"},
              {"error", {{"code", code}, {"message", message}}}};
}

// ---------------------------------------------------------------------------

Dispatcher::Dispatcher(Engine& engine, MaintenancePlan plan) : engine_(engine), plan_(std::move(plan)) {}

std::string Dispatcher::handle_line(std::string_view line) {
  json request;
  try {
    request = json::parse(line);
  } catch (const json::exception& e) {
    return error_response(nullptr, to_string(ErrorCode::kBadRequest), e.what()).dump();
  }
  return handle(request).dump(-1, ' ', false, json::error_handler_t::replace);
}

json Dispatcher::handle(const json& request) {
  json request_id = nullptr;
  try {
    if (!request.is_object()) bad("request must be a JSON object");
    if (auto it = request.find("request_id"); it != request.end()) request_id = *it;
    const auto* op = field(request, "op");
    if (op == nullptr || !op->is_string()) bad("missing string field 'op'");
    std::string ns = "default";
    if (const auto* n = field(request, "namespace")) ns = as_string(*n, "namespace");
    const auto* payload = field(request, "payload");
    static const json kEmpty = json::object();
    return ok_response(request_id, dispatch(op->get<std::string>(), ns, payload ? *payload : kEmpty));
  } catch (const Error& e) {
    return error_response(request_id, to_string(e.code()), e.what());
  } catch (const json::exception& e) {
    return error_response(request_id, to_string(ErrorCode::kBadRequest), e.what());
  } catch (const std::exception& e) {
    return error_response(request_id, "Internal", e.what());
  }
}

MemoryRecord Dispatcher::embed_if_needed(NamespaceStore& store, MemoryRecord record) {
  if (record.embeddings.high() == nullptr && record.content) {
    const auto embedder = engine_.embedder_for(store);
    if (embedder == nullptr) throw Error(ErrorCode::kEmbedderMissing, "no embedder configured");
    record.embeddings.views.emplace(std::string(kHighView), embedder->embed(*record.content));
  }
  return record;
}

json Dispatcher::dispatch(const std::string& op, const std::string& ns, const json& p) {
  object(p, "payload");
  const auto existing = [&]() -> NamespaceStore& {
    auto* s = engine_.find(ns);
    if (s == nullptr) {
      Namespace checked(ns);
      throw Error(ErrorCode::kNotFound, "no namespace '" + ns + "'");
    }
    return *s;
  };
  const auto with_embeddings = [&] {
    const auto* f = field(p, "embeddings");
    return f != nullptr && f->get<bool>();
  };

  if (op == "ping") return json::object();
  if (op == "namespaces") return json{{"namespaces", engine_.namespaces()}};
  if (op == "append") {
    auto& s = engine_.store(ns);
    const auto& r = field(p, "record") ? *field(p, "record") : p;
    return json{{"id_time", s.append(embed_if_needed(s, record_from_json(r))).micros}};
  }
  if (op == "batch") {
    auto& s = engine_.store(ns);
    const auto& list = require(p, "records");
    if (!list.is_array()) bad("'records' must be an array");
    std::vector<MemoryRecord> records;
    for (const auto& r : list) records.push_back(embed_if_needed(s, record_from_json(r)));
    json ids = json::array();
    for (const auto t : s.append_batch(std::move(records))) ids.push_back(t.micros);
    return json{{"id_times", ids}};
  }
  if (op == "edge") {
    auto& s = existing();
    if (const auto* list = field(p, "edges")) {
      if (!list->is_array()) bad("'edges' must be an array");
      std::vector<EdgeRequest> reqs;
      for (const auto& e : *list) reqs.push_back(edge_request_from_json(e));
      json out = json::array();
      for (const auto& e : s.add_edges(std::move(reqs))) out.push_back(to_json(e));
      return json{{"edges", out}};
    }
    return json{{"edge", to_json(s.add_edge(edge_request_from_json(p)))}};
  }
  if (op == "query") {
    json hits = json::array();
    for (const auto& h : engine_.query(ns, query_from_json(p))) hits.push_back(to_json(h));
    return json{{"hits", hits}};
  }
  if (op == "coherence") {
    const Timestamp lo = ts(p, "t_min");
    const Timestamp hi = ts(p, "t_max");
    const auto cfg = coherence_config_from_json(p);
    const auto* persist = field(p, "persist");
    auto resolver = engine_.resolver();
    auto& s = existing();
    const auto sample = persist != nullptr && persist->get<bool>() ? s.sample_coherence(lo, hi, cfg, &resolver)
                                                                   : s.local_coherence(lo, hi, cfg, &resolver);
    return json{{"sample", to_json(sample)}};
  }
  if (op == "stats") {
    if (auto* s = engine_.find(ns)) return to_json(s->stats());
    StoreStats empty;
    empty.name = Namespace(ns).str();
    return to_json(empty);
  }
  if (op == "get") {
    const auto rec = existing().get(ts(p, "id_time"));
    if (!rec) throw Error(ErrorCode::kNotFound, "no record " + std::to_string(ts(p, "id_time").micros));
    return json{{"record", to_json(*rec, with_embeddings())}};
  }
  if (op == "update_meta") {
    return json{{"meta", existing().update_meta(ts(p, "id_time"), require(p, "patch"))}};
  }
  if (op == "scan") {
    json out = json::array();
    const bool embed = with_embeddings();
    for (const auto& r : existing().scan_window(ts(p, "t_min"), ts(p, "t_max"), opt_kind(p))) {
      out.push_back(to_json(r, embed));
    }
    return json{{"records", out}};
  }
  if (op == "edges_out" || op == "edges_in") {
    auto& s = existing();
    const auto as_of = opt_ts(p, "as_of");
    std::vector<Edge> edges;
    if (op == "edges_out") {
      std::optional<std::string> rel;
      if (const auto* f = field(p, "relationship")) rel = as_string(*f, "relationship");
      edges = s.edges_out(ts(p, "source"), rel ? std::optional<std::string_view>(*rel) : std::nullopt, as_of);
    } else {
      edges = s.edges_in(ts(p, "destination"), as_of);
    }
    json out = json::array();
    for (const auto& e : edges) out.push_back(to_json(e));
    return json{{"edges", out}};
  }
  if (op == "plane") {
    auto resolver = engine_.resolver();
    json out = json::array();
    for (const auto& pt : existing().project_local_plane(ts(p, "vertex"), &resolver)) out.push_back(to_json(pt));
    return json{{"points", out}};
  }
  if (op == "prune") {
    auto& s = existing();
    const Timestamp now = opt_ts(p, "now").value_or(Timestamp(s.now()));
    const auto half_life = as_int(require(p, "half_life_micros"), "half_life_micros");
    const auto floor = as_double(require(p, "floor"), "floor");
    const auto* limit = field(p, "limit");
    return json{{"pruned", s.decay_and_prune(now, half_life, floor, limit ? as_uint(*limit, "limit") : SIZE_MAX)}};
  }
  if (op == "compact") {
    auto& s = existing();
    std::vector<std::uint64_t> ids;
    if (const auto* f = field(p, "segment_id")) {
      ids.push_back(as_uint(*f, "segment_id"));
    } else {
      ids = s.compactable_segments();
    }
    std::uint64_t reclaimed = 0;
    for (const auto id : ids) reclaimed += s.compact(id);
    return json{{"segments", ids}, {"bytes_reclaimed", reclaimed}};
  }
  if (op == "maintenance") {
    auto resolver = engine_.resolver();
    return json{{"report", memdb::to_json(run_cycle(existing(), plan_from_json(p, plan_), &resolver))}};
  }
  bad("unknown op '" + op + "'");
}

}  // namespace memdb::wire
