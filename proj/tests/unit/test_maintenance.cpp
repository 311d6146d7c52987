#include <doctest.h>

#include <random>
#include <thread>

#include "memdb/engine.hpp"
#include "memdb/maintenance.hpp"
#include "memdb/query.hpp"
#include "random_fixture.hpp"
#include "test_support.hpp"

using namespace memdb;
using namespace memdb::testing;
namespace fs = std::filesystem;

namespace {

MaintenancePlan only(std::initializer_list<MaintenanceTask> tasks, std::size_t batch = 256) {
  MaintenancePlan p;
  p.tasks = tasks;
  p.batch_size = batch;
  p.step = 3;
  return p;
}

std::vector<MemoryRecord> scan_all(const NamespaceStore& s) {
  return s.scan_window(Timestamp(0), Timestamp(INT64_MAX));
}

}  // namespace

TEST_SUITE("maintenance") {
  TEST_CASE("task names and plan validation") {
    for (auto t : {MaintenanceTask::kRegenLowViews, MaintenanceTask::kRenormalize, MaintenanceTask::kPruneEdges,
                   MaintenanceTask::kSampleCoherence, MaintenanceTask::kCompact}) {
      CHECK(task_from_string(to_string(t)) == t);
    }
    CHECK_THROWS_AS(task_from_string("vacuum"), Error);
    MaintenancePlan p;
    CHECK_NOTHROW(p.validate());
    p.batch_size = 0;
    CHECK_THROWS_AS(p.validate(), Error);
  }

  TEST_CASE("low view regeneration in batches") {
    TempDir dir("regen");
    auto store = NamespaceStore::open(dir.path(), Namespace("m"), small_store_options(), StepClock());
    std::mt19937_64 rng(1);
    for (int i = 0; i < 10; ++i) store->append(make_record(random_unit(rng, 8)));
    CHECK(store->missing_low_views() == 10);
    const auto plan = only({MaintenanceTask::kRegenLowViews}, 4);
    std::vector<std::uint64_t> counts;
    for (int i = 0; i < 4; ++i) counts.push_back(run_cycle(*store, plan).low_views_regenerated);
    CHECK(counts == std::vector<std::uint64_t>{4, 4, 2, 0});
    CHECK(store->missing_low_views() == 0);
    const auto reports = store->reports();
    REQUIRE(reports.size() == 4);
    CHECK(reports[0].cycle_id == 1);
    CHECK(reports[3].cycle_id == 4);

    // persisted views survive a reopen and match the derivation
    const auto before = scan_all(*store);
    store.reset();
    auto again = NamespaceStore::open(dir.path(), Namespace("m"), small_store_options(), StepClock());
    CHECK(again->missing_low_views() == 0);
    CHECK(again->reports().size() == 4);
    for (const auto& r : before) {
      const auto got = again->get(r.id_time);
      REQUIRE(got.has_value());
      const auto* low = got->embeddings.find("low");
      REQUIRE(low != nullptr);
      CHECK(*low == matryoshka_truncate(*r.embeddings.high(), 4));
    }
  }

  TEST_CASE("renormalization of imported vectors") {
    TempDir dir("renorm");
    auto store = NamespaceStore::open(dir.path(), Namespace("m"), small_store_options(), StepClock());
    std::mt19937_64 rng(2);
    for (int i = 0; i < 5; ++i) {
      auto v = random_unit(rng, 8);
      for (auto& x : v) x *= 1.5F;
      store->import_unchecked(make_record(v));
    }
    store->append(make_record(random_unit(rng, 8)));
    CHECK(store->unnormalized_records() == 5);
    const auto r = run_cycle(*store, only({MaintenanceTask::kRenormalize}, 3));
    CHECK(r.vectors_renormalized == 3);
    run_cycle(*store, only({MaintenanceTask::kRenormalize}, 3));
    CHECK(store->unnormalized_records() == 0);
    for (const auto& rec : scan_all(*store)) CHECK(std::abs(l2_norm(*rec.embeddings.high()) - 1.0) <= 1e-6);
  }

  TEST_CASE("coherence sampling with and without edges") {
    TempDir dir("sample");
    StepClock clock(1'000'000, 1000);
    auto store = NamespaceStore::open(dir.path(), Namespace("m"), small_store_options(), clock);
    const auto a = store->append(make_record(basis(4, 0)));
    const auto b = store->append(make_record(basis(4, 0)));
    auto r = run_cycle(*store, only({MaintenanceTask::kSampleCoherence}));
    CHECK(r.samples_written == 1);
    REQUIRE(store->samples().size() == 1);
    CHECK(store->samples()[0].edge_count == 0);
    CHECK_FALSE(store->samples()[0].c_local.has_value());
    store->add_edge(EdgeRequest{a, b, "", "r", Weight(), Metadata::object()});
    run_cycle(*store, only({MaintenanceTask::kSampleCoherence}));
    REQUIRE(store->samples().size() == 2);
    CHECK(store->samples()[1].edge_count == 1);
    CHECK(*store->samples()[1].c_local == 1.0);
    CHECK(store->stats().lifetime_coherence == 1.0);
  }

  TEST_CASE("prune task delegates to decay") {
    TempDir dir("mprune");
    StepClock clock(1'000'000, 1000);
    auto store = NamespaceStore::open(dir.path(), Namespace("m"), small_store_options(), clock);
    const auto a = store->append(make_record(basis(4, 0)));
    for (int i = 0; i < 5; ++i) store->add_edge(EdgeRequest{a, a, "", "r", Weight::make(0.1, 0.1), Metadata::object()});
    auto plan = only({MaintenanceTask::kPruneEdges}, 2);
    plan.half_life_micros = 1000;
    plan.prune_floor = 0.05;
    clock.set(100'000'000);
    CHECK(run_cycle(*store, plan).edges_pruned == 2);
    CHECK(run_cycle(*store, plan).edges_pruned == 2);
    CHECK(run_cycle(*store, plan).edges_pruned == 1);
    CHECK(store->edges_out(a).empty());
    CHECK(store->edges_out(a, std::nullopt, Timestamp(1'000'000 + 10'000)).size() == 5);
  }

  TEST_CASE("compaction folds patches and preserves scans") {
    TempDir dir("compact");
    StepClock clock(1'000'000, 100);
    auto store = NamespaceStore::open(dir.path(), Namespace("m"), small_store_options(), clock);
    std::mt19937_64 rng(3);
    std::vector<Timestamp> ids;
    for (int i = 0; i < 40; ++i) ids.push_back(store->append(make_record(random_unit(rng, 8), "message", "r")));
    for (int i = 0; i < 5; ++i) store->update_meta(ids[7], {{"n", i}, {"k" + std::to_string(i), true}});
    for (int i = 0; i < 20; ++i) store->update_meta(ids[rng() % ids.size()], {{"x", i}});
    run_cycle(*store, only({MaintenanceTask::kRegenLowViews}));
    store->seal_active();
    const auto sealed = store->segments().front().segment_id;
    const auto before = scan_all(*store);
    const auto before_bytes = store->snapshot_bytes();
    REQUIRE_FALSE(store->compactable_segments().empty());

    CHECK(store->compact(sealed) > 0);
    CHECK(scan_all(*store) == before);
    CHECK(store->get(ids[7])->meta ==
          nlohmann::json{{"n", 4}, {"k0", true}, {"k1", true}, {"k2", true}, {"k3", true}, {"k4", true}});
    for (int w = 0; w < 100; ++w) {
      auto lo = ids[rng() % ids.size()];
      auto hi = ids[rng() % ids.size()];
      if (hi < lo) std::swap(lo, hi);
      std::vector<MemoryRecord> want;
      for (const auto& r : before) {
        if (r.id_time >= lo && r.id_time <= hi) want.push_back(r);
      }
      CHECK(store->scan_window(lo, hi) == want);
    }
    CHECK(store->compactable_segments().empty());
    try {
      store->compact(store->segments().back().segment_id);
      FAIL("active segment compacted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kSegmentActive);
    }
    CHECK_THROWS_AS(store->compact(999), Error);

    store.reset();
    auto again = NamespaceStore::open(dir.path(), Namespace("m"), small_store_options(), clock);
    CHECK(scan_all(*again) == before);
    (void)before_bytes;
  }

  TEST_CASE("compaction of a clean segment changes nothing") {
    TempDir dir("compact0");
    auto store = NamespaceStore::open(dir.path(), Namespace("m"), small_store_options(), StepClock());
    std::mt19937_64 rng(4);
    for (int i = 0; i < 10; ++i) store->append(make_record(random_unit(rng, 8)));
    store->seal_active();
    const auto before = scan_all(*store);
    CHECK(store->compact(store->segments().front().segment_id) == 0);
    CHECK(scan_all(*store) == before);
  }

  TEST_CASE("leftover compaction temp file is ignored on recovery") {
    TempDir dir("compacttmp");
    std::vector<MemoryRecord> before;
    {
      auto store = NamespaceStore::open(dir.path(), Namespace("m"), small_store_options(), StepClock());
      std::mt19937_64 rng(5);
      const auto t = store->append(make_record(random_unit(rng, 8)));
      store->update_meta(t, {{"a", 1}});
      store->update_meta(t, {{"a", 2}});
      store->seal_active();
      before = scan_all(*store);
    }
    // a half-written rewrite of segment 1
    const auto seg = dir.path() / "seg-00000001.log";
    auto bytes = read_file(seg);
    bytes.resize(bytes.size() / 2);
    write_file(fs::path(seg.string() + ".tmp"), bytes);
    auto store = NamespaceStore::open(dir.path(), Namespace("m"), small_store_options(), StepClock());
    CHECK(scan_all(*store) == before);
    CHECK_FALSE(fs::exists(fs::path(seg.string() + ".tmp")));
  }

  TEST_CASE("a full cycle keeps historical query results") {
    HashEmbedder embedder(64);
    std::mt19937_64 rng(6);
    TempDir dir("cycleq");
    RefStore ref;
    auto store = build_random_store(rng, dir.path(), embedder, FixtureParams{}, ref);
    const Timestamp as_of(store->last_minted().micros + 2000);
    std::vector<QuerySpec> specs;
    std::vector<std::vector<RankedHit>> before;
    for (int i = 0; i < 30; ++i) {
      auto spec = random_spec(rng, ref, embedder);
      spec.as_of = as_of;
      before.push_back(execute(*store, spec));
      specs.push_back(spec);
    }
    auto plan = MaintenancePlan{};
    plan.half_life_micros = 10'000;
    plan.prune_floor = 0.99;
    store->seal_active();
    const auto report = run_cycle(*store, plan);
    CHECK(report.errors.empty());
    CHECK(report.edges_pruned > 0);
    for (std::size_t i = 0; i < specs.size(); ++i) CHECK(execute(*store, specs[i]) == before[i]);
  }

  TEST_CASE("task failures are reported and later tasks still run") {
    TempDir dir("fail");
    auto store = NamespaceStore::open(dir.path(), Namespace("m"), small_store_options(), StepClock());
    std::mt19937_64 rng(7);
    const auto a = store->append(make_record(random_unit(rng, 8)));
    store->add_edge(EdgeRequest{a, a, "", "self", Weight(), Metadata::object()});
    // fusing over a view no record carries fails only when the task runs
    auto plan = only({MaintenanceTask::kSampleCoherence, MaintenanceTask::kRegenLowViews});
    plan.coherence.fusion.weights = {{"audio", 1.0}};
    const auto r = run_cycle(*store, plan);
    REQUIRE(r.errors.size() == 1);
    CHECK(r.errors[0]["task"] == "sample_coherence");
    CHECK(r.errors[0]["code"] == "DimensionMismatch");
    CHECK(r.low_views_regenerated == 1);
    CHECK(store->reports().back() == r);
  }

  TEST_CASE("scheduler runs cycles across namespaces") {
    TempDir dir("sched");
    EngineOptions opts;
    opts.data_dir = dir.path();
    opts.store = small_store_options();
    Engine engine(opts);
    std::mt19937_64 rng(8);
    engine.store("a").append(make_record(random_unit(rng, 8)));
    engine.store("b").append(make_record(random_unit(rng, 8)));
    std::mutex m;
    std::set<std::string> seen;
    auto plan = MaintenancePlan{};
    plan.interval = std::chrono::milliseconds(10);
    MaintenanceScheduler sched(engine, plan, [&](const std::string& ns, const MaintenanceReport&) {
      std::lock_guard lock(m);
      seen.insert(ns);
    });
    sched.run_once();
    CHECK(seen == std::set<std::string>{"a", "b"});
    sched.start();
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    sched.stop();
    CHECK(engine.store("a").reports().size() >= 2);
    // appends proceed while a scheduler is running
    sched.start();
    for (int i = 0; i < 50; ++i) engine.store("a").append(make_record(random_unit(rng, 8)));
    sched.stop();
    CHECK(engine.store("a").stats().records == 51);
  }
}
