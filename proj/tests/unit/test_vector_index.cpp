#include <doctest.h>

#include <algorithm>
#include <random>

#include "memdb/vector_index.hpp"
#include "test_support.hpp"

using namespace memdb;
using namespace memdb::testing;

namespace {

VectorView random_view(std::mt19937_64& rng, std::size_t n, std::size_t dim, std::int64_t first = 1) {
  VectorView view("high", dim);
  for (std::size_t i = 0; i < n; ++i) {
    view.upsert(Timestamp(first + static_cast<std::int64_t>(i)), random_unit(rng, dim));
  }
  return view;
}

// Independent reference: full sort by (sim desc, id asc) with a float-free dot.
std::vector<Neighbor> sorted_oracle(const VectorView& view, std::span<const float> q, std::size_t k,
                                    const CandidateList* candidates = nullptr) {
  std::vector<Neighbor> all;
  for (std::size_t i = 0; i < view.size(); ++i) {
    const auto id = view.ids()[i];
    if (candidates && !std::binary_search(candidates->begin(), candidates->end(), id)) continue;
    long double s = 0;
    const auto row = view.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) s += static_cast<long double>(row[j]) * q[j];
    all.push_back({id, static_cast<double>(s)});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.id < b.id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

}  // namespace

TEST_SUITE("vector-index") {
  TEST_CASE("normalize") {
    const std::vector<float> v{3.0F, 4.0F};
    const auto n = normalize(v);
    CHECK(n[0] == doctest::Approx(0.6).epsilon(1e-7));
    CHECK(n[1] == doctest::Approx(0.8).epsilon(1e-7));
    try {
      normalize(std::vector<float>{0.0F, 0.0F});
      FAIL("zero vector normalized");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kZeroVector);
    }
  }

  TEST_CASE("matryoshka truncation") {
    const std::vector<float> v{0.5F, 0.5F, 0.5F, 0.5F};
    const auto t = matryoshka_truncate(v, 2);
    REQUIRE(t.size() == 2);
    CHECK(t[0] == doctest::Approx(0.70710678).epsilon(1e-6));
    CHECK(t[1] == doctest::Approx(0.70710678).epsilon(1e-6));
    try {
      matryoshka_truncate(std::vector<float>{0.0F, 0.0F, 1.0F}, 2);
      FAIL("zero prefix accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kZeroPrefix);
    }
  }

  TEST_CASE("similarity and distance identity") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) {
      const auto u = random_unit(rng, 32);
      const auto v = random_unit(rng, 32);
      double d2 = 0;
      for (std::size_t j = 0; j < 32; ++j) d2 += (double(u[j]) - v[j]) * (double(u[j]) - v[j]);
      CHECK(std::abs(d2 + 2 * similarity(u, v) - 2.0) <= 1e-5);
    }
    CHECK_THROWS_AS(similarity(std::vector<float>(3, 0.1F), std::vector<float>(4, 0.1F)), Error);
  }

  TEST_CASE("flat search equals a sort oracle") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      const auto view = random_view(rng, 300, 16);
      const auto q = random_unit(rng, 16);
      for (std::size_t k : {1UL, 5UL, 17UL, 300UL, 500UL}) {
        const auto got = knn_flat(view, q, k);
        const auto want = sorted_oracle(view, q, k);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
          CHECK(got[i].id == want[i].id);
          CHECK(std::abs(got[i].similarity - want[i].similarity) <= 1e-9);
        }
      }
      CandidateList cands;
      for (const auto id : view.ids()) {
        if (rng() % 3 == 0) cands.push_back(id);
      }
      std::sort(cands.begin(), cands.end());
      const auto got = knn_flat(view, q, 10, &cands);
      const auto want = sorted_oracle(view, q, 10, &cands);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].id == want[i].id);
    }
  }

  TEST_CASE("ties break by ascending timestamp") {
    VectorView view("high", 2);
    view.upsert(Timestamp(30), basis(2, 0));
    view.upsert(Timestamp(10), basis(2, 0));
    view.upsert(Timestamp(20), basis(2, 0));
    const auto hits = knn_flat(view, basis(2, 0), 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].id == Timestamp(10));
    CHECK(hits[1].id == Timestamp(20));
    CHECK(hits[2].id == Timestamp(30));
  }

  TEST_CASE("argument errors") {
    std::mt19937_64 rng(3);
    const auto view = random_view(rng, 10, 8);
    try {
      knn_flat(view, random_unit(rng, 8), 0);
      FAIL("k = 0 accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInvalidK);
    }
    try {
      knn_flat(view, random_unit(rng, 4), 3);
      FAIL("wrong dimension accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kDimensionMismatch);
    }
    try {
      knn_ivf(IvfIndex{}, view, random_unit(rng, 8), 3, 1);
      FAIL("untrained index searched");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kUntrained);
    }
  }

  TEST_CASE("IVF with every list probed equals flat search") {
    std::mt19937_64 rng(4);
    const auto view = random_view(rng, 2000, 16);
    IvfParams params;
    params.n_lists = 16;
    const auto index = train_ivf(view, params);
    REQUIRE(index.trained());
    std::size_t posted = 0;
    for (const auto& p : index.postings) posted += p.size();
    CHECK(posted == view.size());
    for (int i = 0; i < 20; ++i) {
      const auto q = random_unit(rng, 16);
      CHECK(knn_ivf(index, view, q, 10, 16) == knn_flat(view, q, 10));
    }
  }

  TEST_CASE("IVF training is deterministic and serializes losslessly") {
    std::mt19937_64 rng(5);
    const auto view = random_view(rng, 500, 8);
    IvfParams params;
    params.n_lists = 8;
    const auto a = train_ivf(view, params);
    const auto b = train_ivf(view, params);
    CHECK(a.centroids == b.centroids);
    CHECK(a.postings == b.postings);
    const auto bytes = a.serialize();
    const auto c = IvfIndex::deserialize(bytes);
    CHECK(c.centroids == a.centroids);
    CHECK(c.postings == a.postings);
    auto damaged = bytes;
    damaged[damaged.size() / 2] ^= std::byte{0x10};
    CHECK_THROWS_AS(IvfIndex::deserialize(damaged), Error);
  }

  TEST_CASE("default list count") {
    CHECK(default_n_lists(10) == 16);
    CHECK(default_n_lists(10'000) == 100);
    CHECK(default_n_lists(10'001) == 101);
    CHECK(default_n_lists(100'000'000) == 4096);
  }

  TEST_CASE("coarse then refine") {
    std::mt19937_64 rng(6);
    VectorView high("high", 32);
    VectorView low("low", 8);
    for (std::int64_t i = 1; i <= 400; ++i) {
      const auto v = random_unit(rng, 32);
      high.upsert(Timestamp(i), v);
      low.upsert(Timestamp(i), matryoshka_truncate(v, 8));
    }
    const auto q = random_unit(rng, 32);
    // k_coarse covering the whole view reduces to an exact search
    CHECK(coarse_then_refine(low, high, q, 10, 400) == knn_flat(high, q, 10));
    const auto partial = coarse_then_refine(low, high, q, 5, 50);
    REQUIRE(partial.size() == 5);
    // results are ranked by the high view among the coarse survivors
    const auto coarse = knn_flat(low, matryoshka_truncate(q, 8), 50);
    CandidateList survivors;
    for (const auto& n : coarse) survivors.push_back(n.id);
    std::sort(survivors.begin(), survivors.end());
    CHECK(partial == knn_flat(high, q, 5, &survivors));
  }

  TEST_CASE("coarse stage recall on clustered data") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> noise(0.0, 0.05);
    const std::size_t dim = 128;
    const std::size_t d_low = 32;
    // variance concentrated in the leading components, as in nested embeddings
    std::vector<std::vector<float>> centers;
    for (int c = 0; c < 20; ++c) {
      auto v = random_unit(rng, dim);
      for (std::size_t j = 0; j < dim; ++j) v[j] /= static_cast<float>(1.0 + j / 8.0);
      centers.push_back(normalize(v));
    }
    VectorView high("high", dim);
    VectorView low("low", d_low);
    for (std::int64_t i = 1; i <= 2000; ++i) {
      auto v = centers[rng() % centers.size()];
      for (auto& x : v) x += static_cast<float>(noise(rng));
      v = normalize(v);
      high.upsert(Timestamp(i), v);
      low.upsert(Timestamp(i), matryoshka_truncate(v, d_low));
    }
    double hits = 0;
    const int queries = 50;
    for (int i = 0; i < queries; ++i) {
      auto q = centers[rng() % centers.size()];
      for (auto& x : q) x += static_cast<float>(noise(rng));
      q = normalize(q);
      const auto truth = knn_flat(high, q, 10);
      const auto got = coarse_then_refine(low, high, q, 10, 100);
      for (const auto& t : truth) {
        hits += std::any_of(got.begin(), got.end(), [&](const Neighbor& n) { return n.id == t.id; });
      }
    }
    CHECK(hits / (queries * 10.0) >= 0.95);
  }

  TEST_CASE("exact match is found by both stages") {
    std::mt19937_64 rng(8);
    VectorView high("high", 32);
    VectorView low("low", 8);
    std::vector<float> target;
    for (std::int64_t i = 1; i <= 100; ++i) {
      const auto v = random_unit(rng, 32);
      if (i == 42) target = v;
      high.upsert(Timestamp(i), v);
      low.upsert(Timestamp(i), matryoshka_truncate(v, 8));
    }
    const auto got = coarse_then_refine(low, high, target, 1, 10);
    REQUIRE(got.size() == 1);
    CHECK(got[0].id == Timestamp(42));
  }

  TEST_CASE("normalization properties and insertion-order independence") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n;
    for (int i = 0; i < 200; ++i) {
      std::vector<float> v(24);
      for (auto& x : v) x = static_cast<float>(n(rng));
      const auto a = normalize(v);
      const auto b = normalize(a);
      for (std::size_t j = 0; j < v.size(); ++j) CHECK(std::abs(a[j] - b[j]) <= 1e-6);
      for (std::size_t d : {1UL, 4UL, 12UL, 24UL}) {
        if (a[0] == 0.0F) continue;
        CHECK(std::abs(l2_norm(matryoshka_truncate(a, d)) - 1.0) <= 1e-6);
      }
      const auto u = random_unit(rng, 24);
      double dot = 0, nu = 0, na = 0;
      for (std::size_t j = 0; j < 24; ++j) {
        dot += double(u[j]) * a[j];
        nu += double(u[j]) * u[j];
        na += double(a[j]) * a[j];
      }
      CHECK(std::abs(similarity(u, a) - dot / std::sqrt(nu * na)) <= 1e-6);
    }
    std::vector<std::pair<Timestamp, std::vector<float>>> rows;
    for (std::int64_t i = 1; i <= 200; ++i) rows.emplace_back(Timestamp(i), random_unit(rng, 4));
    rows.emplace_back(Timestamp(500), rows[3].second);  // exact duplicate vector
    const auto q = random_unit(rng, 4);
    std::vector<Neighbor> first;
    for (int perm = 0; perm < 5; ++perm) {
      std::shuffle(rows.begin(), rows.end(), rng);
      VectorView view("high", 4);
      for (const auto& [id, v] : rows) view.upsert(id, v);
      const auto out = knn_flat(view, q, 50);
      if (perm == 0) first = out;
      CHECK(out == first);
    }
  }
}
