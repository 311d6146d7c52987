#include "memdb/types.hpp"

#include <cmath>
#include <string>

namespace memdb {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kOk: return "Ok";
    case ErrorCode::kValidation: return "ValidationError";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNotUnitNorm: return "NotUnitNorm";
    case ErrorCode::kEmptyKind: return "EmptyKind";
    case ErrorCode::kMissingHighView: return "MissingHighView";
    case ErrorCode::kInvalidNamespace: return "InvalidNamespace";
    case ErrorCode::kInvalidMeta: return "InvalidMeta";
    case ErrorCode::kInvalidUtf8: return "InvalidUtf8";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kZeroPrefix: return "ZeroPrefix";
    case ErrorCode::kInvalidK: return "InvalidK";
    case ErrorCode::kUntrained: return "Untrained";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kStorageFull: return "StorageFull";
    case ErrorCode::kChecksumFailure: return "ChecksumFailure";
    case ErrorCode::kCorruptInterior: return "CorruptInterior";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kInvalidWindow: return "InvalidWindow";
    case ErrorCode::kSegmentActive: return "SegmentActive";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kSourceNotFound: return "SourceNotFound";
    case ErrorCode::kEndpointMissing: return "EndpointMissing";
    case ErrorCode::kVertexNotFound: return "VertexNotFound";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kEmbedderMissing: return "EmbedderMissing";
    case ErrorCode::kNoViews: return "NoViews";
    case ErrorCode::kBadRequest: return "BadRequest";
    case ErrorCode::kAddressInUse: return "AddressInUse";
    case ErrorCode::kDataDirLocked: return "DataDirLocked";
  }
  return "Unknown";
}

Namespace::Namespace(std::string name) : name_(std::move(name)) {
  if (!is_valid(name_)) {
    throw Error(ErrorCode::kInvalidNamespace, "invalid namespace name '" + name_ + "'");
  }
}

bool Namespace::is_valid(std::string_view name) noexcept {
  if (name.empty() || name.size() > 128) return false;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

Weight Weight::make(double strength, double confidence) {
  if (!(strength >= kMinStrength && strength <= kMaxStrength)) {
    throw Error(ErrorCode::kValidation,
                "strength " + std::to_string(strength) + " outside [-1.1, 1.1]");
  }
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw Error(ErrorCode::kValidation,
                "confidence " + std::to_string(confidence) + " outside [0, 1]");
  }
  return from_stored(static_cast<float>(strength), static_cast<float>(confidence));
}

Weight Weight::from_stored(float strength, float confidence) noexcept {
  Weight w;
  w.strength_ = strength;
  w.confidence_ = confidence;
  return w;
}

Timestamp mint_timestamp(std::int64_t wall_clock_micros, Timestamp last_minted) {
  if (wall_clock_micros <= 0) {
    throw Error(ErrorCode::kValidation, "wall clock must be positive");
  }
  return Timestamp{std::max(wall_clock_micros, last_minted.micros + 1)};
}

double l2_norm(std::span<const float> v) noexcept {
  double sum = 0.0;
  for (float x : v) sum += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(sum);
}

bool is_valid_utf8(std::string_view text) noexcept {
  const auto* p = reinterpret_cast<const unsigned char*>(text.data());
  const auto* end = p + text.size();
  while (p < end) {
    const unsigned char c = *p;
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++p;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (static_cast<std::size_t>(end - p) < len) return false;
    for (std::size_t i = 1; i < len; ++i) {
      if ((p[i] & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (p[i] & 0x3F);
    }
    // overlong forms, surrogates, out of range
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      return false;
    }
    p += len;
  }
  return true;
}

namespace {

bool is_scalar(const Metadata& v) {
  return v.is_null() || v.is_boolean() || v.is_number() || v.is_string();
}

bool is_flat_list(const Metadata& v) {
  if (!v.is_array()) return false;
  for (const auto& e : v) {
    if (!is_scalar(e)) return false;
  }
  return true;
}

bool strings_are_utf8(const Metadata& v) {
  if (v.is_string()) return is_valid_utf8(v.get_ref<const std::string&>());
  if (v.is_array()) {
    for (const auto& e : v) {
      if (!strings_are_utf8(e)) return false;
    }
  }
  if (v.is_object()) {
    for (const auto& [k, e] : v.items()) {
      if (!is_valid_utf8(k) || !strings_are_utf8(e)) return false;
    }
  }
  return true;
}

}  // namespace

std::optional<Violation> validate_meta(const Metadata& meta) {
  if (!meta.is_object()) {
    return Violation{ErrorCode::kInvalidMeta, "metadata must be an object"};
  }
  for (const auto& [key, value] : meta.items()) {
    if (key.empty()) return Violation{ErrorCode::kInvalidMeta, "empty metadata key"};
    if (is_scalar(value) || is_flat_list(value)) continue;
    if (value.is_object()) {
      for (const auto& [inner_key, inner] : value.items()) {
        if (inner_key.empty() || !(is_scalar(inner) || is_flat_list(inner))) {
          return Violation{ErrorCode::kInvalidMeta,
                           "metadata '" + key + "' nests deeper than one level"};
        }
      }
      continue;
    }
    return Violation{ErrorCode::kInvalidMeta, "metadata '" + key + "' holds a nested list"};
  }
  if (!strings_are_utf8(meta)) {
    return Violation{ErrorCode::kInvalidUtf8, "metadata is not valid UTF-8"};
  }
  return std::nullopt;
}

std::optional<Violation> validate_record(
    const MemoryRecord& record,
    const std::map<std::string, std::size_t, std::less<>>& dims,
    bool require_unit_norm) {
  if (record.kind.label.empty()) return Violation{ErrorCode::kEmptyKind, "kind is empty"};
  if (record.kind.label.size() > Kind::kMaxBytes) {
    return Violation{ErrorCode::kValidation, "kind longer than 64 bytes"};
  }
  if (!is_valid_utf8(record.kind.label)) {
    return Violation{ErrorCode::kInvalidUtf8, "kind is not valid UTF-8"};
  }
  if (record.content && !is_valid_utf8(*record.content)) {
    return Violation{ErrorCode::kInvalidUtf8, "content is not valid UTF-8"};
  }
  const auto* high = record.embeddings.high();
  if (high == nullptr) return Violation{ErrorCode::kMissingHighView, "no \"high\" view"};

  for (const auto& [name, vec] : record.embeddings.views) {
    if (name.empty()) return Violation{ErrorCode::kValidation, "empty view name"};
    if (vec.empty()) {
      return Violation{ErrorCode::kDimensionMismatch, "view '" + name + "' is empty"};
    }
    if (auto it = dims.find(name); it != dims.end() && it->second != vec.size()) {
      return Violation{ErrorCode::kDimensionMismatch,
                       "view '" + name + "' has dimension " + std::to_string(vec.size()) +
                           ", namespace uses " + std::to_string(it->second)};
    }
    if (name == kLowView && vec.size() > high->size()) {
      return Violation{ErrorCode::kDimensionMismatch, "low view wider than high view"};
    }
    for (float x : vec) {
      if (!std::isfinite(x)) {
        return Violation{ErrorCode::kValidation, "view '" + name + "' has a non-finite value"};
      }
    }
    if (require_unit_norm) {
      const double norm = l2_norm(vec);
      if (std::abs(norm - 1.0) > kUnitNormTolerance) {
        return Violation{ErrorCode::kNotUnitNorm,
                         "view '" + name + "' has norm " + std::to_string(norm)};
      }
    }
  }
  if (auto v = validate_meta(record.meta)) return v;
  return std::nullopt;
}

}  // namespace memdb
