#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace memdb::detail {

/// Owning POSIX file descriptor.
class FileHandle {
 public:
  FileHandle() = default;
  explicit FileHandle(int fd) : fd_(fd) {}
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;
  FileHandle(FileHandle&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  FileHandle& operator=(FileHandle&& other) noexcept;
  ~FileHandle();

  int get() const noexcept { return fd_; }
  int release() noexcept { return std::exchange(fd_, -1); }
  explicit operator bool() const noexcept { return fd_ >= 0; }

 private:
  int fd_ = -1;
};

std::vector<std::byte> read_file(const std::filesystem::path& path);

/// pwrite loop; throws StorageFull on ENOSPC and Io otherwise.
void write_all(int fd, std::span<const std::byte> data, std::uint64_t offset,
               const std::filesystem::path& path);

void read_exact(int fd, std::span<std::byte> out, std::uint64_t offset,
                const std::filesystem::path& path);

/// tmp file + fsync + rename + directory fsync.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> data);

void fsync_dir(const std::filesystem::path& dir);

[[noreturn]] void throw_io(const std::string& what, const std::filesystem::path& path);

}  // namespace memdb::detail
