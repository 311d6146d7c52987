#include "memdb/config.hpp"

#include <cstdlib>
#include <fstream>

namespace memdb {

namespace {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it != j.end() && !it->is_null()) out = it->get<T>();
}

}  // namespace

ServiceConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kValidation, "config must be a JSON object");
  ServiceConfig c;
  try {
    std::string data_dir = "memdb-data";
    read(j, "data_dir", data_dir);
    c.engine.data_dir = data_dir;
    if (auto it = j.find("listen"); it != j.end()) {
      read(*it, "host", c.server.host);
      read(*it, "port", c.server.port);
      read(*it, "threads", c.server.threads);
      read(*it, "max_line_bytes", c.server.max_line_bytes);
    }
    if (auto it = j.find("store"); it != j.end()) {
      auto& log = c.engine.store.log;
      read(*it, "segment_max_bytes", log.segment_max_bytes);
      read(*it, "segment_max_span_micros", log.segment_max_span_micros);
      read(*it, "sparse_index_stride", log.sparse_index_stride);
      read(*it, "verify_writes", log.verify_writes);
      read(*it, "low_dim", c.engine.store.low_dim);
      std::string durability = "fsync";
      read(*it, "durability", durability);
      if (durability == "fsync") {
        log.durability = Durability::kFsync;
      } else if (durability == "buffered") {
        log.durability = Durability::kBuffered;
      } else {
        throw Error(ErrorCode::kValidation, "durability must be 'fsync' or 'buffered'");
      }
    }
    if (auto it = j.find("maintenance"); it != j.end()) {
      read(*it, "enabled", c.maintenance_enabled);
      c.maintenance = wire::plan_from_json(*it);
    }
    if (auto it = j.find("embedders"); it != j.end()) {
      read(*it, "default", c.engine.default_embedder);
      if (auto ns = it->find("namespaces"); ns != it->end()) {
        for (const auto& [name, embedder] : ns->items()) c.engine.namespace_embedders[name] = embedder.get<std::string>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation, std::string("config: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::kValidation, std::string("config: ") + e.what());
  }
  c.maintenance.validate();
  return c;
}

ServiceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_env_overrides(ServiceConfig& config) {
  const char* dir = std::getenv("MEMDB_DATA_DIR");
  if (dir != nullptr && *dir != '\0') config.engine.data_dir = dir;
}

}  // namespace memdb
