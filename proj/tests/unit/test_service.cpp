#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "memdb/config.hpp"
#include "memdb/engine.hpp"
#include "memdb/error.hpp"
#include "memdb/server.hpp"
#include "memdb/wire.hpp"
#include "test_support.hpp"

using namespace memdb;
using namespace memdb::testing;
using nlohmann::json;

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

EngineOptions engine_options(const std::filesystem::path& dir, Clock clock = StepClock(1'000'000, 1000)) {
  EngineOptions o;
  o.data_dir = dir;
  o.store = small_store_options();
  o.clock = std::move(clock);
  return o;
}

std::vector<std::string> run_golden_session(const std::filesystem::path& dir) {
  Engine engine(engine_options(dir));
  wire::Dispatcher dispatcher(engine);
  std::vector<std::string> out;
  for (const auto& line : read_lines(std::filesystem::path(MEMDB_GOLDEN_DIR) / "requests.jsonl")) {
    const auto response = json::parse(dispatcher.handle_line(line));
    out.push_back(json{{"request", json::parse(line)}, {"response", response}}.dump());
  }
  return out;
}

#ifdef MEMDB_CLI_PATH
struct CliResult {
  int exit_code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(MEMDB_CLI_PATH) + " " + args + " 2>/dev/null";
  CliResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}
#endif

}  // namespace

TEST_SUITE("memdb-service") {
  TEST_CASE("golden session") {
    TempDir dir("golden");
    const auto got = run_golden_session(dir.path());
    const auto golden_path = std::filesystem::path(MEMDB_GOLDEN_DIR) / "session.jsonl";
    const char* regen = std::getenv("MEMDB_REGEN_GOLDEN");
    if (regen != nullptr && std::string(regen) == "1") {
      std::ofstream out(golden_path, std::ios::trunc);
      for (const auto& line : got) out << line << "\n";
      MESSAGE("regenerated " << golden_path.string());
      return;
    }
    const auto want = read_lines(golden_path);
    REQUIRE(want.size() == got.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      INFO("line " << i + 1);
      CHECK(got[i] == want[i]);
    }
  }

  TEST_CASE("golden lines round-trip byte for byte") {
    const auto lines = read_lines(std::filesystem::path(MEMDB_GOLDEN_DIR) / "session.jsonl");
    REQUIRE_FALSE(lines.empty());
    for (const auto& line : lines) CHECK(json::parse(line).dump() == line);
    for (const auto& line : read_lines(std::filesystem::path(MEMDB_GOLDEN_DIR) / "requests.jsonl")) {
      const auto j = json::parse(line);
      CHECK(json::parse(j.dump()) == j);
    }
  }

  TEST_CASE("error responses carry code and echo request_id") {
    TempDir dir("errors");
    Engine engine(engine_options(dir.path()));
    wire::Dispatcher d(engine);
    auto r = json::parse(d.handle_line("{not json"));
    CHECK(r["status"] == "error");
    CHECK(r["error"]["code"] == "BadRequest");
    CHECK(r["request_id"].is_null());
    r = d.handle(json{{"op", "frobnicate"}, {"request_id", 17}});
    CHECK(r["request_id"] == 17);
    CHECK(r["status"] == "error");
    r = d.handle(json{{"op", "ping"}, {"request_id", json{{"nested", true}}}});
    CHECK(r["request_id"] == json{{"nested", true}});
    CHECK(r["status"] == "ok");
    r = d.handle(json{{"op", "append"},
                      {"namespace", "n"},
                      {"payload", {{"record", {{"kind", "message"}, {"embeddings", {{"high", {0, 0, 0}}}}}}}}});
    CHECK(r["error"]["code"] == "NotUnitNorm");

    // fuzzed input never escapes as an exception
    std::mt19937_64 rng(11);
    const std::string base = R"({"op":"query","namespace":"n","payload":{"t_min":0,"t_max":10,"vector":[1,0]}})";
    for (int i = 0; i < 500; ++i) {
      std::string line = base;
      for (int m = 0; m < 3; ++m) line[rng() % line.size()] = static_cast<char>(32 + rng() % 95);
      const auto resp = json::parse(d.handle_line(line));
      CHECK((resp["status"] == "ok" || resp["status"] == "error"));
    }
  }

  TEST_CASE("server answers like the in-process dispatcher") {
    TempDir wire_dir("srv");
    TempDir local_dir("local");
    Engine remote_engine(engine_options(wire_dir.path()));
    Engine local_engine(engine_options(local_dir.path()));
    wire::Dispatcher local(local_engine);
    ServerOptions so;
    so.port = 0;
    Server server(remote_engine, so);
    server.start();
    REQUIRE(server.port() != 0);
    Client client("127.0.0.1", server.port());

    std::mt19937_64 rng(21);
    std::vector<json> requests;
    for (int i = 0; i < 30; ++i) {
      const auto v = random_unit(rng, 8);
      requests.push_back({{"op", "append"},
                          {"request_id", i},
                          {"namespace", "wire"},
                          {"payload", {{"record", {{"kind", "message"}, {"embeddings", {{"high", v}}}}}}}});
    }
    for (int i = 0; i < 10; ++i) {
      requests.push_back({{"op", "edge"},
                          {"request_id", "e" + std::to_string(i)},
                          {"namespace", "wire"},
                          {"payload",
                           {{"source", 1'000'000 + 1000 * i},
                            {"destination", 1'000'000 + 1000 * (i + 1)},
                            {"relationship", "reply"}}}});
    }
    requests.push_back({{"op", "query"},
                        {"request_id", "q"},
                        {"namespace", "wire"},
                        {"payload",
                         {{"t_min", 0},
                          {"t_max", 2'000'000},
                          {"vector", random_unit(rng, 8)},
                          {"k", 7},
                          {"expansion", {{"threshold", 0.2}, {"max_hops", 2}}}}}});
    requests.push_back({{"op", "stats"}, {"request_id", "s"}, {"namespace", "wire"}});
    for (const auto& req : requests) {
      auto got = client.call(req);
      auto want = local.handle(req);
      if (req["op"] == "stats") {
        got["payload"].erase("log_bytes");
        want["payload"].erase("log_bytes");
      }
      CHECK(got == want);
    }
    // malformed line: error response, connection stays usable
    const auto bad = json::parse(client.send_line("{\"op\":"));
    CHECK(bad["error"]["code"] == "BadRequest");
    CHECK(client.call({{"op", "ping"}, {"request_id", "after"}})["status"] == "ok");
    server.stop();
  }

  TEST_CASE("concurrent clients on separate namespaces") {
    TempDir dir("conc");
    {
      EngineOptions o = engine_options(dir.path(), system_clock_micros);
      Engine engine(o);
      ServerOptions so;
      so.port = 0;
      so.threads = 4;
      Server server(engine, so);
      server.start();
      const auto port = server.port();
      std::vector<std::thread> threads;
      std::atomic<int> failures{0};
      for (int t = 0; t < 4; ++t) {
        threads.emplace_back([t, port, &failures] {
          Client c("127.0.0.1", port);
          std::mt19937_64 rng(100 + t);
          for (int i = 0; i < 50; ++i) {
            const json req{{"op", "append"},
                           {"request_id", i},
                           {"namespace", "ns" + std::to_string(t)},
                           {"payload", {{"record", {{"kind", "message"}, {"embeddings", {{"high", random_unit(rng, 8)}}}}}}}};
            const auto r = c.call(req);
            if (r["status"] != "ok" || r["request_id"] != i) ++failures;
          }
        });
      }
      for (auto& th : threads) th.join();
      CHECK(failures == 0);
      server.stop();
    }
    Engine reopened(engine_options(dir.path()));
    for (int t = 0; t < 4; ++t) {
      auto* s = reopened.find("ns" + std::to_string(t));
      REQUIRE(s != nullptr);
      CHECK(s->stats().records == 50);
    }
  }

  TEST_CASE("address in use and locked data dir") {
    TempDir dir("busy");
    TempDir other("busy2");
    Engine engine(engine_options(dir.path()));
    ServerOptions so;
    so.port = 0;
    Server first(engine, so);
    first.start();
    ServerOptions taken = so;
    taken.port = first.port();
    Server second(engine, taken);
    try {
      second.start();
      FAIL("second bind succeeded");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kAddressInUse);
    }
    first.stop();
    try {
      Engine again(engine_options(dir.path()));
      FAIL("second engine opened a locked directory");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kDataDirLocked);
    }
    CHECK_NOTHROW(Engine(engine_options(other.path())));
  }

  TEST_CASE("client reports an unreachable service") {
    std::uint16_t port = 0;
    {
      TempDir dir("gone");
      Engine engine(engine_options(dir.path()));
      ServerOptions so;
      so.port = 0;
      Server s(engine, so);
      s.start();
      port = s.port();
      s.stop();
    }
    try {
      Client c("127.0.0.1", port, std::chrono::milliseconds(500));
      c.call({{"op", "ping"}});
      FAIL("call succeeded");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kIo);
    }
  }

  TEST_CASE("config parsing and environment override") {
    const auto cfg = config_from_json(json{{"data_dir", "/tmp/x"},
                                           {"listen", {{"host", "0.0.0.0"}, {"port", 9000}, {"threads", 3}}},
                                           {"store", {{"low_dim", 8}, {"durability", "buffered"}}},
                                           {"maintenance", {{"enabled", false}, {"batch_size", 32}}},
                                           {"embedders", {{"default", "hash"}, {"namespaces", {{"a", "hash"}}}}},
                                           {"unknown", 1}});
    CHECK(cfg.engine.data_dir == "/tmp/x");
    CHECK(cfg.server.host == "0.0.0.0");
    CHECK(cfg.server.port == 9000);
    CHECK(cfg.server.threads == 3);
    CHECK(cfg.engine.store.low_dim == 8);
    CHECK(cfg.engine.store.log.durability == Durability::kBuffered);
    CHECK_FALSE(cfg.maintenance_enabled);
    CHECK(cfg.maintenance.batch_size == 32);
    CHECK(cfg.engine.namespace_embedders.at("a") == "hash");

    CHECK_THROWS_AS(config_from_json(json{{"listen", {{"port", "high"}}}}), Error);
    CHECK_THROWS_AS(config_from_json(json{{"store", {{"durability", "sometimes"}}}}), Error);
    CHECK_THROWS_AS(config_from_json(json::array()), Error);

    TempDir dir("cfg");
    std::ofstream(dir / "c.json") << R"({"data_dir": "/from/file"})";
    auto loaded = load_config(dir / "c.json");
    CHECK(loaded.engine.data_dir == "/from/file");
    ::setenv("MEMDB_DATA_DIR", "/from/env", 1);
    apply_env_overrides(loaded);
    ::unsetenv("MEMDB_DATA_DIR");
    CHECK(loaded.engine.data_dir == "/from/env");
    ::setenv("MEMDB_DATA_DIR", "", 1);
    apply_env_overrides(loaded);
    ::unsetenv("MEMDB_DATA_DIR");
    CHECK(loaded.engine.data_dir == "/from/env");
    std::ofstream(dir / "bad.json") << "{ nope";
    CHECK_THROWS_AS(load_config(dir / "bad.json"), Error);
    try {
      load_config(dir / "missing.json");
      FAIL("missing file accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kIo);
    }
  }

#ifdef MEMDB_CLI_PATH
  TEST_CASE("cli exit codes and output") {
    TempDir dir("cli");
    const std::string base = "--data-dir " + dir.path().string() + " ";
    CHECK(run_cli("").exit_code == 2);
    CHECK(run_cli("no-such-command").exit_code == 2);
    CHECK(run_cli(base + "query --from 10").exit_code == 2);
    CHECK(run_cli(base + "append --vector 1,x").exit_code == 2);

    const auto stats = run_cli(base + "--json stats");
    REQUIRE(stats.exit_code == 0);
    const auto s = json::parse(stats.out);
    CHECK(s["records"] == 0);
    CHECK(s["edges"] == 0);

    // operational failure: an inverted window
    CHECK(run_cli(base + "query --from 10 --to 5 --vector 1,0,0,0").exit_code == 1);

    {
      Engine engine(engine_options(dir.path(), system_clock_micros));
      wire::Dispatcher d(engine);
      std::mt19937_64 rng(31);
      json records = json::array();
      for (int i = 0; i < 40; ++i) {
        std::string text;
        for (int w = 0; w < 4; ++w) text += std::string(w ? " " : "") + "word" + std::to_string(rng() % 12);
        records.push_back({{"kind", "message"}, {"content", text}, {"id_time", 5'000'000 + 1000 * i}});
      }
      const auto r = d.handle({{"op", "batch"}, {"namespace", "default"}, {"payload", {{"records", records}}}});
      REQUIRE(r["status"] == "ok");
    }
    const auto q = run_cli(base + "--json query --from 0 --to 9000000 --text \"word1 word2\" -k 5");
    REQUIRE(q.exit_code == 0);
    const auto hits = json::parse(q.out)["hits"];
    REQUIRE(hits.size() == 5);
    for (std::size_t i = 1; i < hits.size(); ++i) CHECK(hits[i - 1]["score"] >= hits[i]["score"]);

    const auto table = run_cli(base + "query --from 0 --to 9000000 --text word3 -k 3");
    CHECK(table.exit_code == 0);
    CHECK(table.out.find("rank") != std::string::npos);

    const auto appended = run_cli(base + "--json append --text \"word5 word7\" --kind note");
    REQUIRE(appended.exit_code == 0);
    CHECK(json::parse(appended.out).contains("id_time"));
    CHECK(json::parse(run_cli(base + "--json stats").out)["records"] == 41);
  }
#endif
}
