// memdb command-line front end. Every subcommand except `serve` and `bench`
// builds one protocol request and runs it either in-process against a data
// directory or against a running service (--remote host:port).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <unistd.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "memdb/bench.hpp"
#include "memdb/config.hpp"
#include "memdb/server.hpp"
#include "memdb/wire.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Globals {
  std::string config_path;
  std::string data_dir;
  std::string ns = "default";
  std::string remote;
  bool json_output = false;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

memdb::ServiceConfig make_config(const Globals& g) {
  memdb::ServiceConfig cfg = g.config_path.empty() ? memdb::config_from_json(json::object())
                                                   : memdb::load_config(g.config_path);
  memdb::apply_env_overrides(cfg);
  if (!g.data_dir.empty()) cfg.engine.data_dir = g.data_dir;
  return cfg;
}

json parse_json_arg(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    throw UsageError(std::string(what) + " is not valid JSON");
  }
}

// "0.1,0.2" or "[0.1, 0.2]"
json parse_vector(const std::string& text) {
  if (!text.empty() && text.front() == '[') return parse_json_arg(text, "--vector");
  json out = json::array();
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
    } catch (const std::exception&) {
      throw UsageError("--vector: '" + item + "' is not a number");
    }
  }
  return out;
}

json read_json_lines(const std::string& path) {
  std::ifstream file;
  std::istream* in = &std::cin;
  if (path != "-") {
    file.open(path);
    if (!file) throw memdb::Error(memdb::ErrorCode::kIo, "cannot read " + path);
    in = &file;
  }
  std::stringstream all;
  all << in->rdbuf();
  const auto text = all.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') return parse_json_arg(text, path.c_str());
  json out = json::array();
  std::stringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_json_arg(line, path.c_str()));
  }
  return out;
}

// Sends one request and returns the response payload, or prints the error.
std::optional<json> call(const Globals& g, const std::string& op, json payload) {
  const json request{{"op", op}, {"request_id", "cli"}, {"namespace", g.ns}, {"payload", std::move(payload)}};
  json response;
  if (!g.remote.empty()) {
    const auto colon = g.remote.rfind(':');
    if (colon == std::string::npos) throw UsageError("--remote expects host:port");
    int port = 0;
    try {
      port = std::stoi(g.remote.substr(colon + 1));
    } catch (const std::exception&) {
      throw UsageError("--remote expects host:port");
    }
    memdb::Client client(g.remote.substr(0, colon), static_cast<std::uint16_t>(port));
    response = client.call(request);
  } else {
    auto cfg = make_config(g);
    memdb::Engine engine(cfg.engine);
    memdb::wire::Dispatcher dispatcher(engine, cfg.maintenance);
    response = dispatcher.handle(request);
  }
  if (response.value("status", "") != "ok") {
    const auto& err = response["error"];
    std::cerr << "error: " << err.value("code", "Unknown") << ": " << err.value("message", "") << "\n";
    return std::nullopt;
  }
  return response["payload"];
}

void print_hits(const json& hits) {
  std::printf("%-4s %-18s %-12s %-12s %-12s %-10s %s\n", "rank", "id_time", "score", "sim", "temporal", "phi",
              "provenance");
  int rank = 1;
  for (const auto& h : hits) {
    std::string prov = h.at("provenance").get<std::string>();
    if (prov == "expanded") {
      prov += " via edge " + std::to_string(h.at("via_edge").get<std::uint64_t>()) + " hop " +
              std::to_string(h.at("hop").get<int>());
    }
    std::printf("%-4d %-18lld %-12.6f %-12.6f %-12.6f %-10.6f %s\n", rank++,
                static_cast<long long>(h.at("id_time").get<std::int64_t>()), h.at("score").get<double>(),
                h.at("sim").get<double>(), h.at("temporal_decay").get<double>(), h.at("phi").get<double>(),
                prov.c_str());
  }
}

int run_serve(const Globals& g, const std::string& host, int port) {
  auto cfg = make_config(g);
  if (!host.empty()) cfg.server.host = host;
  if (port >= 0) cfg.server.port = static_cast<std::uint16_t>(port);
  memdb::Engine engine(cfg.engine);
  std::optional<memdb::MaintenanceScheduler> scheduler;
  if (cfg.maintenance_enabled) {
    scheduler.emplace(engine, cfg.maintenance);
    scheduler->start();
  }
  memdb::Server server(engine, cfg.server, cfg.maintenance);
  server.start();
  std::cout << "listening on " << cfg.server.host << ":" << server.port() << std::endl;
  server.wait_for_signal();
  if (scheduler) scheduler->stop();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memdb: temporal-semantic memory store"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_path, "JSON config file");
  app.add_option("-d,--data-dir", g.data_dir, "Data directory (overrides config and MEMDB_DATA_DIR)");
  app.add_option("-n,--namespace", g.ns, "Namespace")->capture_default_str();
  app.add_option("--remote", g.remote, "Send requests to a running service at host:port");
  app.add_flag("--json", g.json_output, "Print raw JSON payloads");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the network service");
  std::string host;
  int port = -1;
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks a free port)");

  // append
  auto* append = app.add_subcommand("append", "Append one record");
  std::string kind = "message", content, vector, meta, record_json;
  std::int64_t id_time = 0;
  append->add_option("--kind", kind, "Record kind")->capture_default_str();
  append->add_option("--content,--text", content, "Text content (embedded when no vector is given)");
  append->add_option("--vector", vector, "High view as comma list or JSON array");
  append->add_option("--meta", meta, "Meta JSON object");
  append->add_option("--id-time", id_time, "Wall-clock reading in microseconds");
  append->add_option("--record", record_json, "Full record as JSON");

  // batch
  auto* batch = app.add_subcommand("batch", "Append records atomically from JSON lines or a JSON array");
  std::string batch_file;
  batch->add_option("file", batch_file, "Input file, - for stdin")->required();

  // edge
  auto* edge = app.add_subcommand("edge", "Add an edge");
  std::int64_t source = 0, destination = 0;
  std::string relationship, dest_ns, edge_meta;
  double strength = 1.0, confidence = 1.0;
  edge->add_option("--source", source, "Source id_time")->required();
  edge->add_option("--destination", destination, "Destination id_time")->required();
  edge->add_option("--relationship,--rel", relationship, "Relationship label")->required();
  edge->add_option("--strength", strength, "Strength in [-1.1, 1.1]")->capture_default_str();
  edge->add_option("--confidence", confidence, "Confidence in [0, 1]")->capture_default_str();
  edge->add_option("--dest-namespace", dest_ns, "Destination namespace");
  edge->add_option("--meta", edge_meta, "Meta JSON object");

  // query
  auto* query = app.add_subcommand("query", "Hybrid query");
  std::int64_t t_from = 0, t_to = 0;
  std::string q_text, q_vector, q_kind, q_mode = "exact", q_fusion = "identity", q_spec;
  std::size_t k = 10;
  double expand = 0.0;
  std::size_t hops = 1;
  std::int64_t as_of = 0;
  query->add_option("--from", t_from, "Window start (microseconds)")->required();
  query->add_option("--to", t_to, "Window end (microseconds)")->required();
  query->add_option("--text", q_text, "Query text");
  query->add_option("--vector", q_vector, "Query vector");
  query->add_option("-k", k, "Hits to return")->capture_default_str();
  query->add_option("--kind", q_kind, "Kind filter");
  query->add_option("--mode", q_mode, "exact, coarse or ivf")->capture_default_str();
  query->add_option("--fusion", q_fusion, "identity, weighted or rrf")->capture_default_str();
  query->add_option("--expand", expand, "Expansion coherence threshold in (0, 1]");
  query->add_option("--hops", hops, "Expansion depth")->capture_default_str();
  query->add_option("--as-of", as_of, "Graph state at this time");
  query->add_option("--spec", q_spec, "Extra spec fields as JSON (merged last)");

  // coherence
  auto* coherence = app.add_subcommand("coherence", "Local coherence over a window");
  std::int64_t c_from = 0, c_to = 0;
  std::string c_mode = "practical";
  double lambda_t = -1.0, lambda_s = 1.0;
  bool persist = false;
  coherence->add_option("--from", c_from, "Window start")->required();
  coherence->add_option("--to", c_to, "Window end")->required();
  coherence->add_option("--mode", c_mode, "practical or idealized")->capture_default_str();
  coherence->add_option("--lambda-t", lambda_t, "Time scale (default: 1 / window span)");
  coherence->add_option("--lambda-s", lambda_s, "Semantic scale")->capture_default_str();
  coherence->add_flag("--persist", persist, "Store the sample");

  auto* stats = app.add_subcommand("stats", "Namespace statistics");

  // bench
  auto* bench = app.add_subcommand("bench", "Insert and query micro-benchmarks");
  memdb::BenchOptions bench_options;
  std::string bench_dir;
  bool buffered = false;
  bench->add_option("--records", bench_options.records, "Records loaded before timing")->capture_default_str();
  bench->add_option("--dim", bench_options.dim, "Vector dimension")->capture_default_str();
  bench->add_option("--single", bench_options.single_inserts, "Timed single inserts")->capture_default_str();
  bench->add_option("--batches", bench_options.batches, "Timed batches")->capture_default_str();
  bench->add_option("--batch-size", bench_options.batch_size, "Records per batch")->capture_default_str();
  bench->add_option("--queries", bench_options.queries, "Timed queries")->capture_default_str();
  bench->add_option("--dir", bench_dir, "Scratch directory (default: a fresh temp dir)");
  bench->add_flag("--buffered", buffered, "Skip fsync per commit group");

  // compact
  auto* compact = app.add_subcommand("compact", "Compact sealed segments");
  std::int64_t segment = -1;
  compact->add_option("--segment", segment, "Segment id (default: every compactable segment)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    std::optional<json> payload;
    if (serve->parsed()) return run_serve(g, host, port);
    if (bench->parsed()) {
      bench_options.durability = buffered ? memdb::Durability::kBuffered : memdb::Durability::kFsync;
      const bool temp = bench_dir.empty();
      bench_options.dir = temp ? fs::temp_directory_path() / ("memdb-bench-" + std::to_string(::getpid())) : fs::path(bench_dir);
      fs::remove_all(bench_options.dir);
      const auto result = memdb::run_bench(bench_options);
      if (temp) fs::remove_all(bench_options.dir);
      std::cout << memdb::format_bench_table(result);
      std::printf("single insert p99 %.3f ms, preload %.1f s\n", result.insert_p99_ms, result.preload_seconds);
      return kExitOk;
    }
    if (append->parsed()) {
      json r = record_json.empty() ? json::object() : parse_json_arg(record_json, "--record");
      if (record_json.empty()) {
        r["kind"] = kind;
        if (!content.empty()) r["content"] = content;
        if (!vector.empty()) r["embeddings"] = {{"high", parse_vector(vector)}};
        if (!meta.empty()) r["meta"] = parse_json_arg(meta, "--meta");
        if (id_time > 0) r["id_time"] = id_time;
      }
      payload = call(g, "append", json{{"record", r}});
    } else if (batch->parsed()) {
      payload = call(g, "batch", json{{"records", read_json_lines(batch_file)}});
    } else if (edge->parsed()) {
      json e{{"source", source}, {"destination", destination}, {"relationship", relationship},
             {"strength", strength}, {"confidence", confidence}};
      if (!dest_ns.empty()) e["destination_namespace"] = dest_ns;
      if (!edge_meta.empty()) e["meta"] = parse_json_arg(edge_meta, "--meta");
      payload = call(g, "edge", e);
    } else if (query->parsed()) {
      json spec{{"t_min", t_from}, {"t_max", t_to}, {"k", k}, {"mode", q_mode}, {"fusion", {{"kind", q_fusion}}}};
      if (!q_text.empty()) spec["text"] = q_text;
      if (!q_vector.empty()) spec["vector"] = parse_vector(q_vector);
      if (!q_kind.empty()) spec["kind"] = q_kind;
      if (expand > 0.0) spec["expansion"] = {{"threshold", expand}, {"max_hops", hops}};
      if (query->count("--as-of") > 0) spec["as_of"] = as_of;
      if (!q_spec.empty()) spec.merge_patch(parse_json_arg(q_spec, "--spec"));
      payload = call(g, "query", spec);
      if (payload && !g.json_output) {
        print_hits(payload->at("hits"));
        return kExitOk;
      }
    } else if (coherence->parsed()) {
      json c{{"t_min", c_from}, {"t_max", c_to}, {"mode", c_mode}, {"lambda_s", lambda_s}, {"persist", persist}};
      if (lambda_t >= 0.0) c["lambda_t"] = lambda_t;
      payload = call(g, "coherence", c);
    } else if (stats->parsed()) {
      payload = call(g, "stats", json::object());
    } else if (compact->parsed()) {
      json c = json::object();
      if (segment >= 0) c["segment_id"] = segment;
      payload = call(g, "compact", c);
    }
    if (!payload) return kExitFailure;
    std::cout << (g.json_output ? payload->dump() : payload->dump(2)) << "\n";
    return kExitOk;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const memdb::Error& e) {
    std::cerr << "error: " << memdb::to_string(e.code()) << ": " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
