#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "memdb/segment_log.hpp"

namespace memdb {

struct BenchOptions {
  std::filesystem::path dir;
  /// Records in the store before timing starts.
  std::size_t records = 100'000;
  std::size_t dim = kDefaultHighDim;
  std::size_t single_inserts = 500;
  std::size_t batches = 50;
  std::size_t batch_size = 100;
  std::size_t queries = 50;
  std::size_t k = 10;
  std::uint64_t seed = 42;
  Durability durability = Durability::kFsync;
};

struct BenchRow {
  std::string operation;
  std::size_t dataset_size = 0;
  std::optional<double> latency_ms;
  std::optional<double> throughput;
  std::optional<double> reference_latency_ms;
  std::optional<double> reference_throughput;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  double insert_p50_ms = 0.0;
  double insert_p99_ms = 0.0;
  double batch_throughput = 0.0;
  double query_p50_ms = 0.0;
  double preload_seconds = 0.0;
};

/// Fills a fresh store under `dir` with random unit vectors, then times
/// single inserts, batch inserts and exact queries.
BenchResult run_bench(const BenchOptions& options);

/// Operation / dataset size / latency / throughput table with reference columns.
std::string format_bench_table(const BenchResult& result);

}  // namespace memdb
