#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "memdb/namespace_store.hpp"
#include "memdb/types.hpp"
#include "memdb/vector_index.hpp"

namespace memdb::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("memdb-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Clock that returns `start`, `start + step`, ... on successive calls.
class StepClock {
 public:
  explicit StepClock(std::int64_t start = 1'000'000, std::int64_t step = 1'000)
      : next_(std::make_shared<std::int64_t>(start)), step_(step) {}

  std::int64_t operator()() const {
    const auto v = *next_;
    *next_ += step_;
    return v;
  }
  void set(std::int64_t t) const { *next_ = t; }

 private:
  std::shared_ptr<std::int64_t> next_;
  std::int64_t step_;
};

inline std::vector<float> random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> n;
  std::vector<float> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = static_cast<float>(n(rng));
      norm += static_cast<double>(x) * x;
    }
  } while (norm == 0.0);
  return normalize(v);
}

inline std::vector<float> basis(std::size_t dim, std::size_t axis, float sign = 1.0F) {
  std::vector<float> v(dim, 0.0F);
  v[axis] = sign;
  return v;
}

inline MemoryRecord make_record(std::vector<float> high, std::string kind = "message",
                                std::optional<std::string> content = std::nullopt,
                                Metadata meta = Metadata::object()) {
  MemoryRecord r;
  r.kind.label = std::move(kind);
  r.content = std::move(content);
  r.embeddings.views.emplace(std::string(kHighView), std::move(high));
  r.meta = std::move(meta);
  return r;
}

inline std::vector<std::byte> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::vector<char> chars((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(chars.size());
  std::memcpy(out.data(), chars.data(), chars.size());
  return out;
}

inline void write_file(const std::filesystem::path& p, std::span<const std::byte> bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline StoreOptions small_store_options() {
  StoreOptions o;
  o.log.durability = Durability::kBuffered;
  o.low_dim = 4;
  return o;
}

}  // namespace memdb::testing
