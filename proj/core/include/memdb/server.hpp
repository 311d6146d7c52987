#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "memdb/wire.hpp"

namespace memdb {

struct ServerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 7474;  // 0: pick a free port
  std::size_t threads = 2;
  /// Longer request lines get a BadRequest and the connection is closed.
  std::size_t max_line_bytes = 64U << 20;
};

/// Newline-delimited JSON over TCP. One request per line, responses in
/// request order per connection.
class Server {
 public:
  Server(Engine& engine, ServerOptions options, MaintenancePlan plan = {});
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts serving. Throws Error(kAddressInUse).
  void start();
  /// Closes the listener and every connection, then flushes the engine.
  void stop();
  /// Blocks until stop() is called or SIGINT/SIGTERM arrives.
  void wait_for_signal();

  std::uint16_t port() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocking client for the same protocol.
class Client {
 public:
  /// Throws Error(kIo) when the service is unreachable.
  Client(const std::string& host, std::uint16_t port,
         std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~Client();

  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  /// Sends one raw line (a newline is appended) and returns the response line.
  std::string send_line(const std::string& line);
  nlohmann::json call(const nlohmann::json& request);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace memdb
