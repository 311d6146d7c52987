#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "memdb/engine.hpp"
#include "memdb/maintenance.hpp"
#include "memdb/server.hpp"

namespace memdb {

struct ServiceConfig {
  EngineOptions engine;
  ServerOptions server;
  MaintenancePlan maintenance;
  bool maintenance_enabled = true;
};

/// Keys: data_dir, listen {host, port, threads, max_line_bytes},
/// store {segment_max_bytes, segment_max_span_micros, durability, low_dim},
/// maintenance {enabled, tasks, batch_size, interval_ms, ...},
/// embedders {default, namespaces}. Unknown keys are ignored.
/// Throws Error(kValidation).
ServiceConfig config_from_json(const nlohmann::json& j);
/// Reads a JSON config file. Throws Error(kIo) or Error(kValidation).
ServiceConfig load_config(const std::filesystem::path& path);
/// MEMDB_DATA_DIR replaces data_dir when set and non-empty.
void apply_env_overrides(ServiceConfig& config);

}  // namespace memdb
