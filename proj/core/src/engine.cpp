#include "memdb/engine.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

namespace fs = std::filesystem;

namespace memdb {

Engine::Engine(EngineOptions options) : options_(std::move(options)) {
  std::error_code ec;
  fs::create_directories(options_.data_dir / "ns", ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + options_.data_dir.string() + ": " + ec.message());
  if (options_.lock_data_dir) {
    const auto path = options_.data_dir / "LOCK";
    lock_fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (lock_fd_ < 0) throw Error(ErrorCode::kIo, "open " + path.string() + ": " + std::strerror(errno));
    if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
      const int err = errno;
      ::close(lock_fd_);
      lock_fd_ = -1;
      if (err == EWOULDBLOCK) {
        throw Error(ErrorCode::kDataDirLocked, options_.data_dir.string() + " is in use");
      }
      throw Error(ErrorCode::kIo, "flock " + path.string() + ": " + std::strerror(err));
    }
  }
  if (!options_.clock) options_.clock = system_clock_micros;
}

Engine::~Engine() {
  {
    std::lock_guard lock(mutex_);
    stores_.clear();
  }
  if (lock_fd_ >= 0) {
    ::flock(lock_fd_, LOCK_UN);
    ::close(lock_fd_);
  }
}

fs::path Engine::namespace_dir(const std::string& name) const { return options_.data_dir / "ns" / name; }

NamespaceStore& Engine::store(const std::string& name) {
  Namespace ns(name);
  std::lock_guard lock(mutex_);
  auto it = stores_.find(name);
  if (it == stores_.end()) {
    auto opened = NamespaceStore::open(namespace_dir(name), ns, options_.store, options_.clock);
    it = stores_.emplace(name, std::move(opened)).first;
  }
  return *it->second;
}

NamespaceStore* Engine::find(const std::string& name) {
  if (!Namespace::is_valid(name)) return nullptr;
  {
    std::lock_guard lock(mutex_);
    auto it = stores_.find(name);
    if (it != stores_.end()) return it->second.get();
  }
  std::error_code ec;
  if (!fs::is_directory(namespace_dir(name), ec)) return nullptr;
  return &store(name);
}

std::vector<std::string> Engine::namespaces() const {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(options_.data_dir / "ns", ec)) {
    if (entry.is_directory() && Namespace::is_valid(entry.path().filename().string())) {
      out.push_back(entry.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::shared_ptr<const Embedder> Engine::embedder_for(const NamespaceStore& store) const {
  auto it = options_.namespace_embedders.find(store.name().str());
  const std::string& name = it == options_.namespace_embedders.end() ? options_.default_embedder : it->second;
  const auto stats_dims = store.snapshot().dims();
  auto dim = stats_dims.find(kHighView);
  return embedders_.find(name, dim == stats_dims.end() ? kDefaultHighDim : dim->second);
}

ForeignResolver Engine::resolver() {
  return [this](const std::string& ns, Timestamp t) -> std::optional<MemoryRecord> {
    auto* other = find(ns);
    if (other == nullptr) return std::nullopt;
    return other->get(t);
  };
}

std::vector<RankedHit> Engine::query(const std::string& ns, const QuerySpec& spec) {
  if (!Namespace::is_valid(ns)) throw Error(ErrorCode::kInvalidNamespace, "invalid namespace name '" + ns + "'");
  validate_query(spec);
  auto* s = find(ns);
  if (s == nullptr) return {};
  const auto embedder = spec.query_vector ? nullptr : embedder_for(*s);
  return execute(*s, spec, embedder.get());
}

void Engine::sync() {
  std::lock_guard lock(mutex_);
  for (auto& [name, s] : stores_) s->sync();
}

}  // namespace memdb
