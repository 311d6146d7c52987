#include "memdb/server.hpp"

#include <atomic>
#include <condition_variable>
#include <csignal>
#include <mutex>
#include <thread>
#include <vector>

#include <boost/asio.hpp>

namespace memdb {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;

namespace {

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, wire::Dispatcher& dispatcher, std::size_t max_line)
      : socket_(std::move(socket)), buffer_(max_line), dispatcher_(dispatcher) {}

  void start() { read(); }

 private:
  void read() {
    asio::async_read_until(socket_, buffer_, '\n',
                           [self = shared_from_this()](boost::system::error_code ec, std::size_t n) {
                             self->on_line(ec, n);
                           });
  }

  void on_line(boost::system::error_code ec, std::size_t n) {
    if (ec == asio::error::not_found) {
      // line exceeds the buffer limit; there is no way to resynchronize
      reply(wire::error_response(nullptr, to_string(ErrorCode::kBadRequest), "request line too long").dump(),
            false);
      return;
    }
    if (ec) return;
    const auto begin = asio::buffers_begin(buffer_.data());
    std::string line(begin, begin + static_cast<std::ptrdiff_t>(n) - 1);
    buffer_.consume(n);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      read();
      return;
    }
    reply(dispatcher_.handle_line(line), true);
  }

  void reply(std::string response, bool keep_open) {
    out_ = std::move(response);
    out_.push_back('\n');
    asio::async_write(socket_, asio::buffer(out_),
                      [self = shared_from_this(), keep_open](boost::system::error_code ec, std::size_t) {
                        if (ec) return;
                        if (keep_open) {
                          self->read();
                        } else {
                          boost::system::error_code ignored;
                          self->socket_.shutdown(tcp::socket::shutdown_both, ignored);
                        }
                      });
  }

  tcp::socket socket_;
  asio::streambuf buffer_;
  wire::Dispatcher& dispatcher_;
  std::string out_;
};

}  // namespace

struct Server::Impl {
  Impl(Engine& e, ServerOptions o, MaintenancePlan plan)
      : engine(e), options(std::move(o)), dispatcher(e, std::move(plan)), acceptor(io) {}

  void accept() {
    acceptor.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if (ec == asio::error::operation_aborted || !acceptor.is_open()) return;
      if (!ec) std::make_shared<Session>(std::move(socket), dispatcher, options.max_line_bytes)->start();
      accept();
    });
  }

  Engine& engine;
  ServerOptions options;
  wire::Dispatcher dispatcher;
  asio::io_context io;
  tcp::acceptor acceptor;
  std::optional<asio::executor_work_guard<asio::io_context::executor_type>> work;
  std::vector<std::thread> threads;
  std::uint16_t port = 0;

  std::mutex mutex;
  std::condition_variable stopped_cv;
  bool running = false;
};

Server::Server(Engine& engine, ServerOptions options, MaintenancePlan plan)
    : impl_(std::make_unique<Impl>(engine, std::move(options), std::move(plan))) {}

Server::~Server() { stop(); }

void Server::start() {
  auto& m = *impl_;
  boost::system::error_code ec;
  const auto address = asio::ip::make_address(m.options.host, ec);
  if (ec) throw Error(ErrorCode::kValidation, "invalid listen address '" + m.options.host + "'");
  const tcp::endpoint endpoint(address, m.options.port);
  m.acceptor.open(endpoint.protocol());
  m.acceptor.set_option(tcp::acceptor::reuse_address(true));
  m.acceptor.bind(endpoint, ec);
  if (ec) {
    m.acceptor.close();
    if (ec == asio::error::address_in_use) {
      throw Error(ErrorCode::kAddressInUse, endpoint.address().to_string() + ":" + std::to_string(endpoint.port()) +
                                                " is in use");
    }
    throw Error(ErrorCode::kIo, "bind: " + ec.message());
  }
  m.acceptor.listen();
  m.port = m.acceptor.local_endpoint().port();
  m.work.emplace(m.io.get_executor());
  m.accept();
  {
    std::lock_guard lock(m.mutex);
    m.running = true;
  }
  for (std::size_t i = 0; i < std::max<std::size_t>(1, m.options.threads); ++i) {
    m.threads.emplace_back([&m] { m.io.run(); });
  }
}

void Server::stop() {
  auto& m = *impl_;
  {
    std::lock_guard lock(m.mutex);
    if (!m.running) return;
    m.running = false;
  }
  asio::post(m.io, [&m] {
    boost::system::error_code ignored;
    m.acceptor.close(ignored);
  });
  m.work.reset();
  m.io.stop();
  for (auto& t : m.threads) t.join();
  m.threads.clear();
  m.engine.sync();
  m.stopped_cv.notify_all();
}

void Server::wait_for_signal() {
  auto& m = *impl_;
  asio::io_context signals_io;
  asio::signal_set signals(signals_io, SIGINT, SIGTERM);
  std::atomic<bool> signalled = false;
  signals.async_wait([&](boost::system::error_code ec, int) {
    if (!ec) signalled = true;
  });
  while (!signalled) {
    {
      std::lock_guard lock(m.mutex);
      if (!m.running) break;
    }
    signals_io.run_for(std::chrono::milliseconds(100));
  }
  stop();
}

std::uint16_t Server::port() const noexcept { return impl_->port; }

// ---------------------------------------------------------------------------

struct Client::Impl {
  asio::io_context io;
  tcp::socket socket{io};
  asio::streambuf buffer;
  std::chrono::milliseconds timeout;

  // Runs one async operation to completion or times out.
  template <typename Start>
  void run(Start&& start, const char* what) {
    io.restart();
    bool done = false;
    boost::system::error_code result;
    start([&](boost::system::error_code ec, auto&&...) {
      done = true;
      result = ec;
    });
    io.run_for(timeout);
    if (!done) {
      boost::system::error_code ignored;
      socket.close(ignored);
      io.run();
      throw Error(ErrorCode::kIo, std::string(what) + ": timed out");
    }
    if (result) throw Error(ErrorCode::kIo, std::string(what) + ": " + result.message());
  }
};

Client::Client(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>()) {
  impl_->timeout = timeout;
  tcp::resolver resolver(impl_->io);
  boost::system::error_code ec;
  const auto endpoints = resolver.resolve(host, std::to_string(port), ec);
  if (ec) throw Error(ErrorCode::kIo, "resolve " + host + ": " + ec.message());
  impl_->run([&](auto handler) { asio::async_connect(impl_->socket, endpoints, handler); }, "connect");
}

Client::~Client() = default;

std::string Client::send_line(const std::string& line) {
  auto& m = *impl_;
  const std::string framed = line + "\n";
  m.run([&](auto handler) { asio::async_write(m.socket, asio::buffer(framed), handler); }, "write");
  std::size_t n = 0;
  m.run(
      [&](auto handler) {
        asio::async_read_until(m.socket, m.buffer, '\n', [&n, handler](boost::system::error_code ec, std::size_t k) {
          n = k;
          handler(ec);
        });
      },
      "read");
  const auto begin = asio::buffers_begin(m.buffer.data());
  std::string response(begin, begin + static_cast<std::ptrdiff_t>(n) - 1);
  m.buffer.consume(n);
  return response;
}

nlohmann::json Client::call(const nlohmann::json& request) {
  return nlohmann::json::parse(send_line(request.dump()));
}

}  // namespace memdb
