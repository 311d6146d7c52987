#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "memdb/coherence.hpp"
#include "memdb/engine.hpp"
#include "memdb/maintenance.hpp"
#include "memdb/query.hpp"

// JSON forms of the engine types and the request dispatcher shared by the
// TCP service and the CLI. Field-by-field reference: docs/protocol.md.
namespace memdb::wire {

using nlohmann::json;

json to_json(const MemoryRecord& record, bool with_embeddings);
/// Throws Error(kBadRequest) on a structural problem. Semantic checks are
/// left to the store.
MemoryRecord record_from_json(const json& j);

json to_json(const Edge& edge);
json to_json(const EdgeState& state);
EdgeRequest edge_request_from_json(const json& j);

CoherenceConfig coherence_config_from_json(const json& j);
json to_json(const CoherenceSample& sample);
json to_json(const PlanePoint& point);

QuerySpec query_from_json(const json& j);
json to_json(const RankedHit& hit);

json to_json(const StoreStats& stats);
MaintenancePlan plan_from_json(const json& j, MaintenancePlan base = {});

json ok_response(const json& request_id, json payload);
json error_response(const json& request_id, std::string_view code, std::string_view message);

/// Maps requests {op, request_id, namespace, payload} onto an engine.
class Dispatcher {
 public:
  Dispatcher(Engine& engine, MaintenancePlan plan = {});

  /// Never throws; failures become error responses.
  json handle(const json& request);
  /// Parses one request line. Unparseable input yields BadRequest.
  std::string handle_line(std::string_view line);

 private:
  json dispatch(const std::string& op, const std::string& ns, const json& payload);
  MemoryRecord embed_if_needed(NamespaceStore& store, MemoryRecord record);

  Engine& engine_;
  MaintenancePlan plan_;
};

}  // namespace memdb::wire
