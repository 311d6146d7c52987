#include <doctest.h>

#include <random>

#include "memdb/graph_store.hpp"
#include "memdb/namespace_store.hpp"
#include "test_support.hpp"

using namespace memdb;
using namespace memdb::testing;

namespace {

constexpr std::int64_t kHour = 3'600'000'000LL;

Edge make_edge(EdgeId id, std::int64_t src, std::int64_t dst, std::string rel, std::int64_t created,
               Weight w = Weight()) {
  Edge e;
  e.edge_id = id;
  e.source = Timestamp(src);
  e.destination = Timestamp(dst);
  e.relationship = std::move(rel);
  e.weight = w;
  e.created_at = Timestamp(created);
  return e;
}

EdgeRequest request(Timestamp a, Timestamp b, std::string rel, Weight w = Weight()) {
  return EdgeRequest{a, b, "", std::move(rel), w, Metadata::object()};
}

}  // namespace

TEST_SUITE("graph-store") {
  TEST_CASE("parallel edges form a multigraph") {
    TempDir dir("multi");
    auto store = NamespaceStore::open(dir.path(), Namespace("g"), small_store_options(), StepClock());
    std::mt19937_64 rng(1);
    const auto a = store->append(make_record(random_unit(rng, 8)));
    const auto b = store->append(make_record(random_unit(rng, 8)));
    const auto e1 = store->add_edge(request(a, b, "related-to"));
    const auto e2 = store->add_edge(request(a, b, "related-to"));
    CHECK(e1.edge_id != e2.edge_id);
    CHECK(store->edges_out(a).size() == 2);
    CHECK(store->edges_in(b).size() == 2);
    const auto reply = store->add_edge(request(a, b, "reply"));
    const auto replies = store->edges_out(a, "reply");
    REQUIRE(replies.size() == 1);
    CHECK(replies[0].edge_id == reply.edge_id);
    for (int i = 0; i < 5; ++i) store->add_edge(request(b, a, "back"));
    CHECK(store->edges_out(b).size() == 5);
    CHECK(store->edges_out(Timestamp(12345)).empty());
  }

  TEST_CASE("add_edge validation") {
    TempDir dir("edgeval");
    auto store = NamespaceStore::open(dir.path(), Namespace("g"), small_store_options(), StepClock());
    std::mt19937_64 rng(2);
    const auto a = store->append(make_record(random_unit(rng, 8)));
    CHECK_THROWS_AS(store->add_edge(request(a, a, "x", Weight::make(2.0, 1.0))), Error);
    try {
      store->add_edge(request(Timestamp(1), a, "x"));
      FAIL("missing source accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kSourceNotFound);
    }
    try {
      store->add_edge(request(a, a, ""));
      FAIL("empty relationship accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kValidation);
    }
    // edges survive reopen with ids intact
    const auto e = store->add_edge(request(a, a, "self"));
    store.reset();
    auto again = NamespaceStore::open(dir.path(), Namespace("g"), small_store_options(), StepClock());
    const auto out = again->edges_out(a);
    REQUIRE(out.size() == 1);
    CHECK(out[0] == e);
  }

  TEST_CASE("as_of reconstruction equals a brute-force filter") {
    std::mt19937_64 rng(3);
    GraphStore g;
    std::vector<Edge> all;
    for (EdgeId id = 1; id <= 50; ++id) {
      auto e = make_edge(id, 1 + static_cast<std::int64_t>(rng() % 4), 10, rng() % 2 ? "a" : "b",
                         100 + static_cast<std::int64_t>(rng() % 1000));
      all.push_back(e);
      g.apply_edge(e);
    }
    CHECK(g.edges_out(Timestamp(1), std::nullopt, Timestamp(50)).empty());
    for (int trial = 0; trial < 200; ++trial) {
      const Timestamp as_of(static_cast<std::int64_t>(rng() % 1200));
      const Timestamp src(1 + static_cast<std::int64_t>(rng() % 4));
      std::vector<Edge> want;
      for (const auto& e : all) {
        if (e.source == src && e.created_at <= as_of) want.push_back(e);
      }
      CHECK(g.edges_out(src, std::nullopt, as_of) == want);
    }
    // monotone in as_of
    for (std::int64_t t = 0; t < 1200; t += 50) {
      const auto early = g.edges_in(Timestamp(10), Timestamp(t));
      const auto late = g.edges_in(Timestamp(10), Timestamp(t + 50));
      CHECK(early.size() <= late.size());
      for (const auto& e : early) CHECK(std::find(late.begin(), late.end(), e) != late.end());
    }
  }

  TEST_CASE("pruning is logical") {
    GraphStore g;
    g.apply_edge(make_edge(1, 1, 2, "r", 100));
    g.apply_edge(make_edge(2, 1, 3, "r", 200));
    CHECK(g.apply_prune(1, Timestamp(500)));
    CHECK_FALSE(g.apply_prune(1, Timestamp(600)));
    CHECK_FALSE(g.apply_prune(99, Timestamp(600)));
    CHECK(g.edges_out(Timestamp(1)).size() == 1);
    CHECK(g.edges_out(Timestamp(1), std::nullopt, Timestamp(400)).size() == 2);
    CHECK(g.edges_out(Timestamp(1), std::nullopt, Timestamp(500)).size() == 1);
    CHECK(g.pruned_count() == 1);
  }

  TEST_CASE("displacement") {
    MemoryRecord a = make_record(basis(4, 0));
    a.id_time = Timestamp(100);
    MemoryRecord same = make_record(basis(4, 0));
    same.id_time = Timestamp(105);
    MemoryRecord ortho = make_record(basis(4, 1));
    ortho.id_time = Timestamp(90);
    MemoryRecord anti = make_record(basis(4, 0, -1.0F));
    anti.id_time = Timestamp(200);
    const auto e = make_edge(1, 100, 105, "r", 1);
    CHECK(displacement(e, &a, &same) == Displacement{5, 0.0});
    const auto d_ortho = displacement(make_edge(1, 100, 90, "r", 1), &a, &ortho);
    CHECK(d_ortho.delta_t == -10);
    CHECK(d_ortho.s == doctest::Approx(1.0));
    CHECK(displacement(make_edge(1, 100, 200, "r", 1), &a, &anti).s == doctest::Approx(2.0));
    try {
      displacement(e, &a, nullptr);
      FAIL("missing endpoint accepted");
    } catch (const Error& err) {
      CHECK(err.code() == ErrorCode::kEndpointMissing);
    }
    std::mt19937_64 rng(4);
    for (int i = 0; i < 500; ++i) {
      auto u = make_record(random_unit(rng, 16));
      auto v = make_record(random_unit(rng, 16));
      const auto s = displacement(e, &u, &v).s;
      CHECK(s >= 0.0);
      CHECK(s <= 2.0);
    }
  }

  TEST_CASE("decayed weight and prune candidates") {
    const std::int64_t half_life = 30 * 24 * kHour;
    const auto one = make_edge(1, 1, 2, "r", 0, Weight::make(1.0, 1.0));
    const auto w1 = decayed_weight(one, Timestamp(half_life), half_life);
    CHECK(w1.strength == doctest::Approx(0.5));
    const auto fresh = decayed_weight(one, Timestamp(0), half_life);
    CHECK(fresh.strength == 1.0);
    const auto old = make_edge(2, 1, 2, "r", 0, Weight::make(1.0, 0.05));
    const auto w10 = decayed_weight(old, Timestamp(10 * half_life), half_life);
    CHECK(w10.strength == doctest::Approx(0.0009765625).epsilon(1e-12));

    GraphStore g;
    g.apply_edge(one);
    g.apply_edge(old);
    g.apply_edge(make_edge(3, 1, 2, "r", 9 * half_life, Weight::make(-1.0, 1.0)));
    CHECK(g.prune_candidates(Timestamp(9 * half_life + half_life), half_life, 0.1, SIZE_MAX).size() == 2);
    CHECK(g.prune_candidates(Timestamp(half_life), half_life, 0.1, SIZE_MAX).empty());
    CHECK(g.prune_candidates(Timestamp(0), half_life, 0.02, SIZE_MAX).empty());
    const auto c = g.prune_candidates(Timestamp(10 * half_life), half_life, 0.01, SIZE_MAX);
    // edge 3 is one half-life old and keeps 0.5 of its weight
    CHECK(c == std::vector<EdgeId>{1, 2});
  }

  TEST_CASE("decay_and_prune is durable and replayable") {
    TempDir dir("prune");
    StepClock clock(1'000'000, 1000);
    Timestamp a;
    Edge e;
    {
      auto store = NamespaceStore::open(dir.path(), Namespace("g"), small_store_options(), clock);
      std::mt19937_64 rng(5);
      a = store->append(make_record(random_unit(rng, 8)));
      e = store->add_edge(request(a, a, "r", Weight::make(1.0, 0.05)));
      clock.set(e.created_at.micros + 9 * kHour);
      store->add_edge(request(a, a, "keep", Weight::make(1.0, 1.0)));
      const Timestamp now(e.created_at.micros + 10 * kHour);
      CHECK(store->decay_and_prune(now, kHour, 0.01) == 1);
      CHECK(store->decay_and_prune(now, kHour, 0.01) == 0);
      CHECK(store->edges_out(a).size() == 1);
    }
    auto store = NamespaceStore::open(dir.path(), Namespace("g"), small_store_options(), clock);
    CHECK(store->edges_out(a).size() == 1);
    CHECK(store->edges_out(a, std::nullopt, e.created_at).size() >= 1);
    const auto st = store->edge(e.edge_id);
    REQUIRE(st.has_value());
    CHECK(st->pruned_at.has_value());
    CHECK(store->stats().pruned_edges == 1);
  }
}
