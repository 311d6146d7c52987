#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "memdb/error.hpp"

namespace memdb {

/// Microseconds since the Unix epoch. Unique per namespace once minted.
struct Timestamp {
  std::int64_t micros = 0;

  constexpr Timestamp() = default;
  constexpr explicit Timestamp(std::int64_t us) : micros(us) {}

  friend constexpr auto operator<=>(Timestamp, Timestamp) = default;
};

inline constexpr std::string_view kHighView = "high";
inline constexpr std::string_view kLowView = "low";
inline constexpr std::size_t kDefaultHighDim = 768;
inline constexpr std::size_t kDefaultLowDim = 64;
inline constexpr double kUnitNormTolerance = 1e-6;

/// Validated namespace name: [a-z0-9_-]{1,128}.
class Namespace {
 public:
  explicit Namespace(std::string name);

  static bool is_valid(std::string_view name) noexcept;

  const std::string& str() const noexcept { return name_; }

  friend bool operator==(const Namespace&, const Namespace&) = default;
  friend auto operator<=>(const Namespace&, const Namespace&) = default;

 private:
  std::string name_;
};

/// Open-vocabulary record kind ("message", "observation", "summary", ...).
struct Kind {
  std::string label;

  static constexpr std::size_t kMaxBytes = 64;

  friend bool operator==(const Kind&, const Kind&) = default;
};

/// Metadata is a JSON object limited to scalars, strings, flat lists and one
/// level of nested objects.
using Metadata = nlohmann::json;

/// Named embedding views of one record. "high" is required.
struct EmbeddingSet {
  std::map<std::string, std::vector<float>, std::less<>> views;

  const std::vector<float>* find(std::string_view name) const {
    auto it = views.find(name);
    return it == views.end() ? nullptr : &it->second;
  }
  const std::vector<float>* high() const { return find(kHighView); }
  const std::vector<float>* low() const { return find(kLowView); }

  friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;
};

struct MemoryRecord {
  Timestamp id_time;
  Kind kind;
  std::optional<std::string> content;
  EmbeddingSet embeddings;
  Metadata meta = Metadata::object();

  friend bool operator==(const MemoryRecord&, const MemoryRecord&) = default;
};

/// Edge weight. strength in [-1.1, 1.1], confidence in [0, 1]. Stored as
/// binary32 on disk, so the in-memory value is kept as float as well.
class Weight {
 public:
  static constexpr double kMinStrength = -1.1;
  static constexpr double kMaxStrength = 1.1;

  Weight() = default;

  /// Throws Error(kValidation) when either component is out of range.
  static Weight make(double strength, double confidence);
  /// For values read back from the log; no range check.
  static Weight from_stored(float strength, float confidence) noexcept;

  float strength() const noexcept { return strength_; }
  float confidence() const noexcept { return confidence_; }

  friend bool operator==(const Weight&, const Weight&) = default;

 private:
  float strength_ = 1.0F;
  float confidence_ = 1.0F;
};

using EdgeId = std::uint64_t;

struct Edge {
  EdgeId edge_id = 0;
  Timestamp source;
  Timestamp destination;
  /// Empty when the destination lives in the source's namespace. Otherwise an
  /// opaque cross-namespace reference resolved at query time.
  std::string destination_namespace;
  std::string relationship;
  Weight weight;
  Metadata meta = Metadata::object();
  Timestamp created_at;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct Violation {
  ErrorCode code;
  std::string message;
};

/// max(wall_clock, last + 1). Throws Error(kValidation) if wall_clock <= 0.
Timestamp mint_timestamp(std::int64_t wall_clock_micros, Timestamp last_minted);

/// First violated rule, or nullopt when the record is acceptable. `dims` holds
/// the dimensions already fixed for this namespace (view name -> dimension).
std::optional<Violation> validate_record(
    const MemoryRecord& record,
    const std::map<std::string, std::size_t, std::less<>>& dims,
    bool require_unit_norm = true);

std::optional<Violation> validate_meta(const Metadata& meta);

bool is_valid_utf8(std::string_view text) noexcept;

/// Euclidean norm accumulated in double.
double l2_norm(std::span<const float> v) noexcept;

}  // namespace memdb

template <>
struct std::hash<memdb::Timestamp> {
  std::size_t operator()(memdb::Timestamp t) const noexcept {
    return std::hash<std::int64_t>{}(t.micros);
  }
};
