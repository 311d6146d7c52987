#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace memdb {

/// Text to unit vector. Implementations must be deterministic for a fixed
/// name and input.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<float> embed(std::string_view text) const = 0;
  virtual const std::string& name() const noexcept = 0;
  virtual std::size_t dimension() const noexcept = 0;
};

/// Lowercased alphanumeric tokens (UTF-8 bytes >= 0x80 count as letters).
std::vector<std::string> tokenize(std::string_view text);

/// Feature hashing: every token adds +-1 to two seeded buckets, then the sum
/// is normalized. Texts that share tokens land close together.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dimension, std::uint64_t seed = 0x6d656d6462ULL);

  std::vector<float> embed(std::string_view text) const override;
  const std::string& name() const noexcept override { return name_; }
  std::size_t dimension() const noexcept override { return dim_; }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::string name_;
};

/// Named embedders. "hash" resolves to a HashEmbedder of any requested
/// dimension; other names must be registered.
class EmbedderRegistry {
 public:
  void add(std::shared_ptr<const Embedder> embedder);
  /// nullptr when unknown. `dimension` selects the hash embedder's width.
  std::shared_ptr<const Embedder> find(std::string_view name, std::size_t dimension) const;
  std::vector<std::string> names() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const Embedder>, std::less<>> embedders_;
  mutable std::map<std::size_t, std::shared_ptr<const Embedder>> hash_;
};

}  // namespace memdb
