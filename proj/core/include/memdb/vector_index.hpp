#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "memdb/types.hpp"

namespace memdb {

/// v / ||v||. Throws Error(kZeroVector) for a zero (or non-finite) norm.
std::vector<float> normalize(std::span<const float> v);

/// Inner product, accumulated in double. For unit inputs this is the cosine.
/// Throws Error(kDimensionMismatch).
double similarity(std::span<const float> u, std::span<const float> v);

/// First `d_low` components of `v_high`, re-normalized.
/// Throws Error(kZeroPrefix) when that prefix is all zeros.
std::vector<float> matryoshka_truncate(std::span<const float> v_high, std::size_t d_low);

struct Neighbor {
  Timestamp id;
  double similarity = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Descending similarity, ties by ascending timestamp.
inline bool ranks_before(const Neighbor& a, const Neighbor& b) noexcept {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.id < b.id;
}

/// All unit vectors stored under one view name, packed row-major.
class VectorView {
 public:
  VectorView() = default;
  VectorView(std::string name, std::size_t dim) : name_(std::move(name)), dim_(dim) {}

  /// Inserts or replaces the vector for `id`.
  void upsert(Timestamp id, std::span<const float> v);

  std::span<const float> get(Timestamp id) const;
  bool contains(Timestamp id) const { return slot_.contains(id); }
  std::optional<std::size_t> index_of(Timestamp id) const {
    auto it = slot_.find(id);
    return it == slot_.end() ? std::nullopt : std::optional<std::size_t>(it->second);
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<Timestamp>& ids() const noexcept { return ids_; }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * dim_, dim_);
  }

 private:
  std::string name_;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  std::vector<Timestamp> ids_;
  std::unordered_map<Timestamp, std::size_t> slot_;
};

/// Sorted (ascending) candidate timestamps; nullptr means "whole view".
using CandidateList = std::vector<Timestamp>;

/// Exact top-k. Candidates missing from the view are skipped.
/// Throws Error(kInvalidK) for k == 0 and Error(kDimensionMismatch).
std::vector<Neighbor> knn_flat(const VectorView& view, std::span<const float> q, std::size_t k,
                               const CandidateList* candidates = nullptr);

struct IvfParams {
  std::size_t n_lists = 0;  // 0: ceil(sqrt(N)) clamped to [16, 4096]
  int iterations = 20;
  std::uint64_t seed = 0x5eed;
  /// Cap on the k-means training sample; 0 means 256 per list.
  std::size_t max_training = 0;
};

std::size_t default_n_lists(std::size_t n) noexcept;

/// Inverted-file index: spherical k-means centroids plus one posting list per
/// centroid. Every indexed timestamp lives in exactly one list.
struct IvfIndex {
  std::string view_name;
  std::size_t dim = 0;
  std::size_t n_lists = 0;
  std::vector<float> centroids;  // n_lists * dim, unit rows
  std::vector<std::vector<Timestamp>> postings;
  std::uint64_t trained_on = 0;

  bool trained() const noexcept { return n_lists > 0; }
  std::span<const float> centroid(std::size_t list) const {
    return std::span<const float>(centroids).subspan(list * dim, dim);
  }
  /// Most similar centroid; ties go to the lower list id.
  std::size_t assign(std::span<const float> v) const;
  void add(Timestamp id, std::span<const float> v);

  std::vector<std::byte> serialize() const;
  /// Throws Error(kChecksumFailure) on a damaged image.
  static IvfIndex deserialize(std::span<const std::byte> bytes);
};

/// k-means++ seeding, then `iterations` Lloyd rounds on the unit sphere.
/// `ids` restricts training and postings to a subset of the view.
IvfIndex train_ivf(const VectorView& view, const IvfParams& params,
                   const std::vector<Timestamp>* ids = nullptr);

/// Exact scan over the n_probe lists whose centroids best match q.
/// Throws Error(kUntrained), Error(kInvalidK), Error(kDimensionMismatch).
std::vector<Neighbor> knn_ivf(const IvfIndex& index, const VectorView& view,
                              std::span<const float> q, std::size_t k, std::size_t n_probe,
                              const CandidateList* candidates = nullptr);

/// Two-stage search: rank by the low view against the truncated query, keep
/// k_coarse, re-rank those by the high view and return the top k.
std::vector<Neighbor> coarse_then_refine(const VectorView& low, const VectorView& high,
                                         std::span<const float> q_high, std::size_t k,
                                         std::size_t k_coarse,
                                         const CandidateList* candidates = nullptr);

}  // namespace memdb
