#include "file_util.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <utility>

#include "memdb/error.hpp"

namespace memdb::detail {

FileHandle& FileHandle::operator=(FileHandle&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

FileHandle::~FileHandle() {
  if (fd_ >= 0) ::close(fd_);
}

void throw_io(const std::string& what, const std::filesystem::path& path) {
  const int err = errno;
  const auto code = err == ENOSPC ? ErrorCode::kStorageFull : ErrorCode::kIo;
  throw Error(code, what + " " + path.string() + ": " + std::strerror(err));
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  FileHandle fd(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
  if (!fd) throw_io("open", path);
  struct stat st {};
  if (::fstat(fd.get(), &st) != 0) throw_io("stat", path);
  std::vector<std::byte> data(static_cast<std::size_t>(st.st_size));
  read_exact(fd.get(), data, 0, path);
  return data;
}

void write_all(int fd, std::span<const std::byte> data, std::uint64_t offset,
               const std::filesystem::path& path) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::pwrite(fd, data.data() + done, data.size() - done,
                               static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_io("write", path);
    }
    done += static_cast<std::size_t>(n);
  }
}

void read_exact(int fd, std::span<std::byte> out, std::uint64_t offset,
                const std::filesystem::path& path) {
  std::size_t done = 0;
  while (done < out.size()) {
    const ssize_t n =
        ::pread(fd, out.data() + done, out.size() - done, static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_io("read", path);
    }
    if (n == 0) throw Error(ErrorCode::kIo, "unexpected end of file " + path.string());
    done += static_cast<std::size_t>(n);
  }
}

void fsync_dir(const std::filesystem::path& dir) {
  FileHandle fd(::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC));
  if (!fd) throw_io("open dir", dir);
  ::fsync(fd.get());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    FileHandle fd(::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
    if (!fd) throw_io("create", tmp);
    write_all(fd.get(), data, 0, tmp);
    if (::fsync(fd.get()) != 0) throw_io("fsync", tmp);
  }
  if (::rename(tmp.c_str(), path.c_str()) != 0) throw_io("rename", tmp);
  fsync_dir(path.parent_path());
}

}  // namespace memdb::detail
