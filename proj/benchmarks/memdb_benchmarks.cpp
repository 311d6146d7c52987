#include <benchmark/benchmark.h>
#include <unistd.h>

#include <filesystem>
#include <random>

#include "memdb/codec.hpp"
#include "memdb/coherence.hpp"
#include "memdb/namespace_store.hpp"
#include "memdb/query.hpp"
#include "memdb/vector_index.hpp"

using namespace memdb;
namespace fs = std::filesystem;

namespace {

std::vector<float> random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<float> n;
  std::vector<float> v(dim);
  for (auto& x : v) x = n(rng);
  return normalize(v);
}

MemoryRecord record(std::vector<float> high) {
  MemoryRecord r;
  r.kind.label = "message";
  r.embeddings.views.emplace(std::string(kHighView), std::move(high));
  r.meta = Metadata::object();
  return r;
}

struct ScratchDir {
  ScratchDir() : path(fs::temp_directory_path() / ("memdb-ubench-" + std::to_string(::getpid()))) {
    fs::remove_all(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
  fs::path path;
};

StoreOptions buffered() {
  StoreOptions o;
  o.log.durability = Durability::kBuffered;
  return o;
}

void BM_similarity(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto dim = static_cast<std::size_t>(state.range(0));
  const auto a = random_unit(rng, dim), b = random_unit(rng, dim);
  for (auto _ : state) benchmark::DoNotOptimize(similarity(a, b));
}
BENCHMARK(BM_similarity)->Arg(64)->Arg(768);

void BM_crc32c(benchmark::State& state) {
  std::vector<std::byte> buf(static_cast<std::size_t>(state.range(0)), std::byte{0x5a});
  for (auto _ : state) benchmark::DoNotOptimize(crc32c(buf));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_crc32c)->Arg(4096)->Arg(1 << 20);

void BM_knn_flat(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const std::size_t dim = 768;
  VectorView view("high", dim);
  for (std::int64_t i = 0; i < state.range(0); ++i) view.upsert(Timestamp(i + 1), random_unit(rng, dim));
  const auto q = random_unit(rng, dim);
  for (auto _ : state) benchmark::DoNotOptimize(knn_flat(view, q, 10));
}
BENCHMARK(BM_knn_flat)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_knn_ivf(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const std::size_t dim = 128;
  VectorView view("high", dim);
  for (std::int64_t i = 0; i < 20000; ++i) view.upsert(Timestamp(i + 1), random_unit(rng, dim));
  const auto index = train_ivf(view, IvfParams{});
  const auto q = random_unit(rng, dim);
  for (auto _ : state) benchmark::DoNotOptimize(knn_ivf(index, view, q, 10, static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_knn_ivf)->Arg(4)->Arg(16)->Unit(benchmark::kMicrosecond);

void BM_append(benchmark::State& state) {
  ScratchDir dir;
  std::mt19937_64 rng(4);
  auto store = NamespaceStore::open(dir.path, Namespace("bench"), buffered(), system_clock_micros);
  for (auto _ : state) {
    state.PauseTiming();
    auto r = record(random_unit(rng, 768));
    state.ResumeTiming();
    benchmark::DoNotOptimize(store->append(std::move(r)));
  }
}
BENCHMARK(BM_append)->Unit(benchmark::kMicrosecond);

void BM_append_batch(benchmark::State& state) {
  ScratchDir dir;
  std::mt19937_64 rng(5);
  auto store = NamespaceStore::open(dir.path, Namespace("bench"), buffered(), system_clock_micros);
  for (auto _ : state) {
    state.PauseTiming();
    std::vector<MemoryRecord> batch;
    for (int i = 0; i < 100; ++i) batch.push_back(record(random_unit(rng, 768)));
    state.ResumeTiming();
    benchmark::DoNotOptimize(store->append_batch(std::move(batch)));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 100);
}
BENCHMARK(BM_append_batch)->Unit(benchmark::kMillisecond);

void BM_query(benchmark::State& state) {
  ScratchDir dir;
  std::mt19937_64 rng(6);
  auto store = NamespaceStore::open(dir.path, Namespace("bench"), buffered(), system_clock_micros);
  std::vector<MemoryRecord> batch;
  for (int i = 0; i < 5000; ++i) batch.push_back(record(random_unit(rng, 256)));
  const auto ids = store->append_batch(std::move(batch));
  for (int i = 0; i < 5000; ++i) {
    store->add_edge(EdgeRequest{ids[rng() % ids.size()], ids[rng() % ids.size()], "", "related-to", Weight(),
                                Metadata::object()});
  }
  QuerySpec spec;
  spec.t_min = ids.front();
  spec.t_max = ids.back();
  spec.query_vector = random_unit(rng, 256);
  spec.k = 10;
  if (state.range(0)) spec.expansion = ExpansionSpec{0.2, 2, {}};
  for (auto _ : state) benchmark::DoNotOptimize(execute(*store, spec));
}
BENCHMARK(BM_query)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
