#include "memdb/embedder.hpp"

#include <cctype>

#include "memdb/error.hpp"
#include "memdb/vector_index.hpp"

namespace memdb {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (c >= 0x80 || std::isalnum(c) != 0) {
      cur.push_back(static_cast<char>(c >= 0x80 ? c : std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

HashEmbedder::HashEmbedder(std::size_t dimension, std::uint64_t seed)
    : dim_(dimension), seed_(seed), name_("hash") {
  if (dimension == 0) throw Error(ErrorCode::kValidation, "embedder dimension must be >= 1");
}

std::vector<float> HashEmbedder::embed(std::string_view text) const {
  auto tokens = tokenize(text);
  std::vector<double> acc(dim_, 0.0);
  const auto scatter = [&](std::string_view token) {
    const auto h = fnv1a(token, seed_);
    for (int probe = 0; probe < 2; ++probe) {
      const auto m = mix(h + static_cast<std::uint64_t>(probe) * 0x9e3779b97f4a7c15ULL);
      acc[m % dim_] += (m >> 63) != 0 ? -1.0 : 1.0;
    }
  };
  for (const auto& t : tokens) scatter(t);
  bool zero = true;
  for (double v : acc) zero = zero && v == 0.0;
  // no tokens, or every token cancelled out: one bucket picked by the raw text
  if (zero) acc[fnv1a(text, seed_ + 1) % dim_] = 1.0;
  std::vector<float> out(acc.begin(), acc.end());
  return normalize(out);
}

void EmbedderRegistry::add(std::shared_ptr<const Embedder> embedder) {
  std::lock_guard lock(mutex_);
  embedders_[embedder->name()] = std::move(embedder);
}

std::shared_ptr<const Embedder> EmbedderRegistry::find(std::string_view name,
                                                       std::size_t dimension) const {
  std::lock_guard lock(mutex_);
  if (auto it = embedders_.find(name); it != embedders_.end()) return it->second;
  if (name != "hash" || dimension == 0) return nullptr;
  auto& slot = hash_[dimension];
  if (!slot) slot = std::make_shared<HashEmbedder>(dimension);
  return slot;
}

std::vector<std::string> EmbedderRegistry::names() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out{"hash"};
  for (const auto& [name, e] : embedders_) {
    if (name != "hash") out.push_back(name);
  }
  return out;
}

}  // namespace memdb
