#include "memdb/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>

#include "memdb/namespace_store.hpp"
#include "memdb/query.hpp"

namespace memdb {

namespace {

using Steady = std::chrono::steady_clock;

double ms_since(Steady::time_point t0) {
  return std::chrono::duration<double, std::milli>(Steady::now() - t0).count();
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  const auto idx = static_cast<std::size_t>(p * static_cast<double>(v.size() - 1));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx), v.end());
  return v[idx];
}

class VectorSource {
 public:
  VectorSource(std::size_t dim, std::uint64_t seed) : dim_(dim), rng_(seed) {}

  std::vector<float> next() {
    std::vector<float> v(dim_);
    for (auto& x : v) x = static_cast<float>(normal_(rng_));
    return normalize(v);
  }

  MemoryRecord record(std::size_t i) {
    MemoryRecord r;
    r.kind.label = "observation";
    r.content = "bench record " + std::to_string(i);
    r.embeddings.views.emplace(std::string(kHighView), next());
    return r;
  }

 private:
  std::size_t dim_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
};

}  // namespace

BenchResult run_bench(const BenchOptions& o) {
  StoreOptions store_options;
  store_options.log.durability = o.durability;
  auto store = NamespaceStore::open(o.dir, Namespace("bench"), store_options, system_clock_micros);
  VectorSource source(o.dim, o.seed);
  BenchResult result;

  const auto t_load = Steady::now();
  constexpr std::size_t kLoadBatch = 1000;
  for (std::size_t done = 0; done < o.records;) {
    const std::size_t n = std::min(kLoadBatch, o.records - done);
    std::vector<MemoryRecord> batch;
    batch.reserve(n);
    for (std::size_t i = 0; i < n; ++i) batch.push_back(source.record(done + i));
    store->append_batch(std::move(batch));
    done += n;
  }
  result.preload_seconds = ms_since(t_load) / 1000.0;

  std::vector<double> insert_ms;
  insert_ms.reserve(o.single_inserts);
  for (std::size_t i = 0; i < o.single_inserts; ++i) {
    auto r = source.record(o.records + i);
    const auto t0 = Steady::now();
    store->append(std::move(r));
    insert_ms.push_back(ms_since(t0));
  }
  result.insert_p50_ms = percentile(insert_ms, 0.5);
  result.insert_p99_ms = percentile(insert_ms, 0.99);

  double batch_ms = 0.0;
  for (std::size_t b = 0; b < o.batches; ++b) {
    std::vector<MemoryRecord> batch;
    batch.reserve(o.batch_size);
    for (std::size_t i = 0; i < o.batch_size; ++i) batch.push_back(source.record(i));
    const auto t0 = Steady::now();
    store->append_batch(std::move(batch));
    batch_ms += ms_since(t0);
  }
  const double batched = static_cast<double>(o.batches * o.batch_size);
  result.batch_throughput = batch_ms > 0.0 ? batched / (batch_ms / 1000.0) : 0.0;

  std::vector<double> query_ms;
  for (std::size_t i = 0; i < o.queries; ++i) {
    QuerySpec spec;
    spec.t_min = Timestamp(0);
    spec.t_max = store->last_minted();
    spec.query_vector = source.next();
    spec.k = o.k;
    const auto t0 = Steady::now();
    execute(*store, spec);
    query_ms.push_back(ms_since(t0));
  }
  result.query_p50_ms = percentile(query_ms, 0.5);

  const std::size_t n = o.records;
  result.rows.push_back(BenchRow{"Single insert", n, result.insert_p50_ms, std::nullopt, 2.1, std::nullopt});
  result.rows.push_back(BenchRow{"Batch insert (" + std::to_string(o.batch_size) + " records)", n, std::nullopt,
                                 result.batch_throughput, std::nullopt, 9000.0});
  result.rows.push_back(BenchRow{"Exact query (k=" + std::to_string(o.k) + ")", n, result.query_p50_ms,
                                 std::nullopt, std::nullopt, std::nullopt});
  return result;
}

std::string format_bench_table(const BenchResult& result) {
  const auto cell = [](const std::optional<double>& v, const char* fmt) {
    if (!v) return std::string("-");
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, *v);
    return std::string(buf);
  };
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %12s %13s %20s %16s %20s\n", "Operation", "Dataset size",
                "Latency (ms)", "Throughput (recs/s)", "Ref. latency", "Ref. throughput");
  out += line;
  for (const auto& r : result.rows) {
    std::snprintf(line, sizeof line, "%-28s %12zu %13s %20s %16s %20s\n", r.operation.c_str(), r.dataset_size,
                  cell(r.latency_ms, "%.3f").c_str(), cell(r.throughput, "%.0f").c_str(),
                  cell(r.reference_latency_ms, "%.1f").c_str(), cell(r.reference_throughput, "%.0f").c_str());
    out += line;
  }
  return out;
}

}  // namespace memdb
