#include "memdb/vector_index.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "memdb/codec.hpp"

namespace memdb {

std::vector<float> normalize(std::span<const float> v) {
  const double norm = l2_norm(v);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::kZeroVector, "cannot normalize a zero vector");
  }
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(v[i]) / norm);
  }
  return out;
}

double similarity(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "similarity of vectors with dimensions " +
                                                   std::to_string(u.size()) + " and " +
                                                   std::to_string(v.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    sum += static_cast<double>(u[i]) * static_cast<double>(v[i]);
  }
  return sum;
}

std::vector<float> matryoshka_truncate(std::span<const float> v_high, std::size_t d_low) {
  if (d_low == 0 || d_low > v_high.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "truncation to " + std::to_string(d_low) + " of a " +
                    std::to_string(v_high.size()) + "-dim vector");
  }
  const auto prefix = v_high.first(d_low);
  if (std::all_of(prefix.begin(), prefix.end(), [](float x) { return x == 0.0F; })) {
    throw Error(ErrorCode::kZeroPrefix, "leading components are all zero");
  }
  return normalize(prefix);
}

void VectorView::upsert(Timestamp id, std::span<const float> v) {
  if (v.size() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch, "view '" + name_ + "' expects dimension " +
                                                   std::to_string(dim_));
  }
  if (auto it = slot_.find(id); it != slot_.end()) {
    std::copy(v.begin(), v.end(), data_.begin() + static_cast<std::ptrdiff_t>(it->second * dim_));
    return;
  }
  slot_.emplace(id, ids_.size());
  ids_.push_back(id);
  data_.insert(data_.end(), v.begin(), v.end());
}

std::span<const float> VectorView::get(Timestamp id) const {
  auto it = slot_.find(id);
  if (it == slot_.end()) return {};
  return row(it->second);
}

namespace {

void check_query(std::size_t k, std::size_t view_dim, std::size_t q_dim) {
  if (k == 0) throw Error(ErrorCode::kInvalidK, "k must be at least 1");
  if (view_dim != q_dim) {
    throw Error(ErrorCode::kDimensionMismatch, "query dimension " + std::to_string(q_dim) +
                                                   " vs view dimension " + std::to_string(view_dim));
  }
}

std::vector<Neighbor> top_k(std::vector<Neighbor> all, std::size_t k) {
  if (all.size() > k) {
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), ranks_before);
    all.resize(k);
  } else {
    std::sort(all.begin(), all.end(), ranks_before);
  }
  return all;
}

bool in_candidates(const CandidateList* candidates, Timestamp id) {
  return candidates == nullptr || std::binary_search(candidates->begin(), candidates->end(), id);
}

}  // namespace

std::vector<Neighbor> knn_flat(const VectorView& view, std::span<const float> q, std::size_t k,
                               const CandidateList* candidates) {
  check_query(k, view.dim(), q.size());
  std::vector<Neighbor> all;
  if (candidates != nullptr) {
    all.reserve(candidates->size());
    for (const auto id : *candidates) {
      const auto v = view.get(id);
      if (v.empty()) continue;
      all.push_back(Neighbor{id, similarity(q, v)});
    }
  } else {
    all.reserve(view.size());
    for (std::size_t i = 0; i < view.size(); ++i) {
      all.push_back(Neighbor{view.ids()[i], similarity(q, view.row(i))});
    }
  }
  return top_k(std::move(all), k);
}

std::size_t default_n_lists(std::size_t n) noexcept {
  const auto root = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  return std::clamp<std::size_t>(root, 16, 4096);
}

std::size_t IvfIndex::assign(std::span<const float> v) const {
  std::size_t best = 0;
  double best_sim = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < n_lists; ++c) {
    const double s = similarity(v, centroid(c));
    if (s > best_sim) {
      best_sim = s;
      best = c;
    }
  }
  return best;
}

void IvfIndex::add(Timestamp id, std::span<const float> v) {
  if (!trained()) throw Error(ErrorCode::kUntrained, "IVF index is not trained");
  auto& list = postings[assign(v)];
  list.insert(std::upper_bound(list.begin(), list.end(), id), id);
}

IvfIndex train_ivf(const VectorView& view, const IvfParams& params,
                   const std::vector<Timestamp>* ids) {
  std::vector<std::size_t> rows;
  if (ids != nullptr) {
    for (auto id : *ids) {
      if (auto row = view.index_of(id)) rows.push_back(*row);
    }
  } else {
    rows.resize(view.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  }
  if (rows.empty()) throw Error(ErrorCode::kUntrained, "no vectors to train on");

  const std::size_t dim = view.dim();
  std::size_t n_lists = params.n_lists == 0 ? default_n_lists(rows.size()) : params.n_lists;
  n_lists = std::min(n_lists, rows.size());

  std::mt19937_64 rng(params.seed);
  std::vector<std::size_t> sample = rows;
  const std::size_t cap = params.max_training == 0 ? 256 * n_lists : params.max_training;
  if (sample.size() > cap) {
    std::shuffle(sample.begin(), sample.end(), rng);
    sample.resize(cap);
    std::sort(sample.begin(), sample.end());
  }

  IvfIndex index;
  index.view_name = view.name();
  index.dim = dim;
  index.n_lists = n_lists;
  index.trained_on = sample.size();
  index.centroids.reserve(n_lists * dim);

  // k-means++ seeding
  std::vector<double> nearest(sample.size(), std::numeric_limits<double>::infinity());
  std::uniform_int_distribution<std::size_t> pick(0, sample.size() - 1);
  std::size_t chosen = sample[pick(rng)];
  for (std::size_t c = 0; c < n_lists; ++c) {
    const auto row = view.row(chosen);
    index.centroids.insert(index.centroids.end(), row.begin(), row.end());
    double total = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      const double d2 = std::max(0.0, 2.0 - 2.0 * similarity(view.row(sample[i]), row));
      nearest[i] = std::min(nearest[i], d2);
      total += nearest[i];
    }
    if (c + 1 == n_lists) break;
    if (total <= 0.0) {
      chosen = sample[pick(rng)];
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    std::size_t i = 0;
    for (; i + 1 < sample.size(); ++i) {
      target -= nearest[i];
      if (target <= 0.0) break;
    }
    chosen = sample[i];
  }

  // Lloyd iterations on the sphere
  std::vector<double> sums(n_lists * dim);
  std::vector<std::size_t> counts(n_lists);
  for (int it = 0; it < params.iterations; ++it) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (auto r : sample) {
      const auto v = view.row(r);
      const auto c = index.assign(v);
      ++counts[c];
      for (std::size_t d = 0; d < dim; ++d) sums[c * dim + d] += v[d];
    }
    for (std::size_t c = 0; c < n_lists; ++c) {
      if (counts[c] == 0) continue;  // keep the previous centroid
      double norm = 0.0;
      for (std::size_t d = 0; d < dim; ++d) norm += sums[c * dim + d] * sums[c * dim + d];
      norm = std::sqrt(norm);
      if (norm == 0.0) continue;
      for (std::size_t d = 0; d < dim; ++d) {
        index.centroids[c * dim + d] = static_cast<float>(sums[c * dim + d] / norm);
      }
    }
  }

  index.postings.assign(n_lists, {});
  for (auto r : rows) index.postings[index.assign(view.row(r))].push_back(view.ids()[r]);
  for (auto& list : index.postings) std::sort(list.begin(), list.end());
  return index;
}

std::vector<Neighbor> knn_ivf(const IvfIndex& index, const VectorView& view,
                              std::span<const float> q, std::size_t k, std::size_t n_probe,
                              const CandidateList* candidates) {
  if (!index.trained()) throw Error(ErrorCode::kUntrained, "IVF index is not trained");
  check_query(k, index.dim, q.size());
  if (view.dim() != index.dim) {
    throw Error(ErrorCode::kDimensionMismatch, "IVF index and view dimensions differ");
  }
  if (n_probe == 0 || n_probe > index.n_lists) {
    throw Error(ErrorCode::kValidation, "n_probe must be in [1, n_lists]");
  }
  std::vector<std::pair<double, std::size_t>> lists;
  lists.reserve(index.n_lists);
  for (std::size_t c = 0; c < index.n_lists; ++c) {
    lists.emplace_back(similarity(q, index.centroid(c)), c);
  }
  std::partial_sort(lists.begin(), lists.begin() + static_cast<std::ptrdiff_t>(n_probe), lists.end(),
                    [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                    });
  std::vector<Neighbor> all;
  for (std::size_t p = 0; p < n_probe; ++p) {
    for (const auto id : index.postings[lists[p].second]) {
      if (!in_candidates(candidates, id)) continue;
      const auto v = view.get(id);
      if (v.empty()) continue;
      all.push_back(Neighbor{id, similarity(q, v)});
    }
  }
  return top_k(std::move(all), k);
}

std::vector<Neighbor> coarse_then_refine(const VectorView& low, const VectorView& high,
                                         std::span<const float> q_high, std::size_t k,
                                         std::size_t k_coarse, const CandidateList* candidates) {
  if (k == 0) throw Error(ErrorCode::kInvalidK, "k must be at least 1");
  if (k_coarse < k) throw Error(ErrorCode::kInvalidK, "k_coarse must be at least k");
  check_query(k, high.dim(), q_high.size());
  const auto q_low = matryoshka_truncate(q_high, low.dim());
  const auto coarse = knn_flat(low, q_low, k_coarse, candidates);
  std::vector<Neighbor> refined;
  refined.reserve(coarse.size());
  for (const auto& n : coarse) {
    const auto v = high.get(n.id);
    if (v.empty()) continue;
    refined.push_back(Neighbor{n.id, similarity(q_high, v)});
  }
  return top_k(std::move(refined), k);
}

namespace {
constexpr std::array<char, 8> kIvfMagic = {'M', 'D', 'B', 'I', 'V', 'F', '0', '1'};
}

std::vector<std::byte> IvfIndex::serialize() const {
  ByteWriter w;
  w.bytes(std::as_bytes(std::span(kIvfMagic)));
  w.str(view_name);
  w.u32(static_cast<std::uint32_t>(dim));
  w.u32(static_cast<std::uint32_t>(n_lists));
  w.u64(trained_on);
  for (float x : centroids) w.f32(x);
  for (const auto& list : postings) {
    w.u32(static_cast<std::uint32_t>(list.size()));
    for (auto t : list) w.i64(t.micros);
  }
  w.u32(crc32c(w.buffer()));
  return w.take();
}

IvfIndex IvfIndex::deserialize(std::span<const std::byte> bytes) {
  auto bad = [] { return Error(ErrorCode::kChecksumFailure, "damaged IVF sidecar"); };
  if (bytes.size() < 12) throw bad();
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4));
  if (tail.u32() != crc32c(body)) throw bad();
  ByteReader r(body);
  const auto magic = r.take(8);
  if (!std::equal(magic.begin(), magic.end(), std::as_bytes(std::span(kIvfMagic)).begin())) throw bad();
  IvfIndex index;
  index.view_name = r.str();
  index.dim = r.u32();
  index.n_lists = r.u32();
  index.trained_on = r.u64();
  index.centroids.resize(index.dim * index.n_lists);
  for (auto& x : index.centroids) x = r.f32();
  index.postings.resize(index.n_lists);
  for (auto& list : index.postings) {
    const auto n = r.u32();
    list.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) list.push_back(Timestamp{r.i64()});
  }
  if (!r.done()) throw bad();
  return index;
}

}  // namespace memdb
