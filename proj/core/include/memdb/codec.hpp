#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memdb/error.hpp"

namespace memdb {

/// CRC-32C (Castagnoli).
std::uint32_t crc32c(std::span<const std::byte> data) noexcept;

/// Little-endian binary encoder. All on-disk integers go through this.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<std::byte>(v)); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void i64(std::int64_t v) { put_le(static_cast<std::uint64_t>(v)); }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_le(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_le(bits);
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(std::as_bytes(std::span(s.data(), s.size())));
  }
  void floats(std::span<const float> v) {
    u32(static_cast<std::uint32_t>(v.size()));
    for (float x : v) f32(x);
  }
  void bytes(std::span<const std::byte> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

  void patch_u32(std::size_t offset, std::uint32_t v) {
    for (std::size_t i = 0; i < 4; ++i) {
      buf_[offset + i] = static_cast<std::byte>((v >> (8 * i)) & 0xFFU);
    }
  }

  std::size_t size() const noexcept { return buf_.size(); }
  const std::vector<std::byte>& buffer() const noexcept { return buf_; }
  std::vector<std::byte> take() noexcept { return std::move(buf_); }

 private:
  template <typename T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFU));
    }
  }

  std::vector<std::byte> buf_;
};

/// Bounds-checked little-endian decoder; throws Error(kChecksumFailure) on
/// overrun, since a short payload behind a valid CRC means a format bug.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  std::int64_t i64() { return static_cast<std::int64_t>(get_le<std::uint64_t>()); }
  float f32() {
    const auto bits = get_le<std::uint32_t>();
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  double f64() {
    const auto bits = get_le<std::uint64_t>();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = u32();
    auto b = take(n);
    return std::string(reinterpret_cast<const char*>(b.data()), b.size());
  }
  std::vector<float> floats() {
    const auto n = u32();
    if (static_cast<std::size_t>(n) * 4 > remaining()) overrun();
    std::vector<float> v(n);
    for (auto& x : v) x = f32();
    return v;
  }
  std::span<const std::byte> take(std::size_t n) {
    if (n > remaining()) overrun();
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  bool done() const noexcept { return pos_ == data_.size(); }

 private:
  [[noreturn]] static void overrun() {
    throw Error(ErrorCode::kChecksumFailure, "truncated payload");
  }

  template <typename T>
  T get_le() {
    auto b = take(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(std::to_integer<std::uint8_t>(b[i])) << (8 * i);
    }
    return v;
  }

  std::span<const std::byte> data_;
  std::size_t pos_ = 0;
};

}  // namespace memdb
