#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "memdb/embedder.hpp"
#include "memdb/namespace_store.hpp"
#include "memdb/query.hpp"

namespace memdb {

struct EngineOptions {
  std::filesystem::path data_dir;
  StoreOptions store;
  Clock clock = system_clock_micros;
  /// Take an exclusive flock on data_dir/LOCK.
  bool lock_data_dir = true;
  std::string default_embedder = "hash";
  /// Namespace name -> embedder name.
  std::map<std::string, std::string, std::less<>> namespace_embedders;
};

/// All namespaces under one data directory. Stores are opened on first use
/// and live until the engine is destroyed.
class Engine {
 public:
  /// Throws Error(kDataDirLocked) when another engine holds the directory.
  explicit Engine(EngineOptions options);
  ~Engine();

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Opens or creates the namespace. Throws Error(kInvalidNamespace).
  NamespaceStore& store(const std::string& name);
  /// Existing namespaces only (on disk or already open), else nullptr.
  NamespaceStore* find(const std::string& name);
  std::vector<std::string> namespaces() const;

  EmbedderRegistry& embedders() noexcept { return embedders_; }
  /// Embedder configured for the namespace, sized to its high view.
  std::shared_ptr<const Embedder> embedder_for(const NamespaceStore& store) const;

  /// Looks records up in other namespaces; never creates one.
  ForeignResolver resolver();

  std::vector<RankedHit> query(const std::string& ns, const QuerySpec& spec);

  /// Flushes every open store.
  void sync();

  const EngineOptions& options() const noexcept { return options_; }

 private:
  std::filesystem::path namespace_dir(const std::string& name) const;

  EngineOptions options_;
  int lock_fd_ = -1;
  EmbedderRegistry embedders_;
  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<NamespaceStore>, std::less<>> stores_;
};

}  // namespace memdb
