#include "memdb/coherence.hpp"

#include <cmath>

namespace memdb {

void CoherenceConfig::validate() const {
  if (lambda_t && !(*lambda_t >= 0.0)) throw Error(ErrorCode::kValidation, "lambda_t must be >= 0");
  if (!(lambda_s >= 0.0)) throw Error(ErrorCode::kValidation, "lambda_s must be >= 0");
  if (mode == DistanceMode::kIdealized && lambda_t && *lambda_t == 0.0 && lambda_s == 0.0) {
    throw Error(ErrorCode::kValidation, "idealized mode needs a nonzero lambda");
  }
  double total = 0.0;
  for (const auto& [name, w] : fusion.weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::kValidation, "fusion weight for '" + name + "' < 0");
    total += w;
  }
  if (!fusion.weights.empty() && !(total > 0.0)) {
    throw Error(ErrorCode::kValidation, "fusion weights sum to zero");
  }
}

namespace {

const std::vector<float>& require_view(const MemoryRecord& r, std::string_view view) {
  const auto* v = r.embeddings.find(view);
  if (v == nullptr) {
    throw Error(ErrorCode::kDimensionMismatch,
                "record " + std::to_string(r.id_time.micros) + " lacks view '" + std::string(view) + "'");
  }
  return *v;
}

double squared_gap(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "views of different dimension");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return sum;
}

}  // namespace

double practical_distance(const MemoryRecord& a, const MemoryRecord& b, const FusionPolicy& fusion) {
  if (fusion.is_identity()) {
    return std::sqrt(squared_gap(require_view(a, kHighView), require_view(b, kHighView)));
  }
  double total = 0.0;
  for (const auto& [name, w] : fusion.weights) total += w;
  double sum = 0.0;
  for (const auto& [name, w] : fusion.weights) {
    if (w == 0.0) continue;
    sum += (w / total) * squared_gap(require_view(a, name), require_view(b, name));
  }
  return std::sqrt(sum);
}

double idealized_distance(const MemoryRecord& a, const MemoryRecord& b, const CoherenceConfig& cfg) {
  Edge probe;
  const auto disp = displacement(probe, &a, &b);
  const double lt = cfg.lambda_t.value_or(0.0);
  const double dt = lt * static_cast<double>(disp.delta_t);
  const double ds = cfg.lambda_s * disp.s;
  return std::sqrt(dt * dt + ds * ds);
}

double coherence_distance(const MemoryRecord& a, const MemoryRecord& b, const CoherenceConfig& cfg) {
  return cfg.mode == DistanceMode::kPractical ? practical_distance(a, b, cfg.fusion)
                                              : idealized_distance(a, b, cfg);
}

double pair_coherence(const MemoryRecord& a, const MemoryRecord& b, const CoherenceConfig& cfg) {
  return std::exp(-coherence_distance(a, b, cfg));
}

CoherenceSample local_coherence(const std::vector<Edge>& edges, const RecordLookup& lookup,
                                Timestamp lo, Timestamp hi, const CoherenceConfig& cfg,
                                Timestamp computed_at) {
  if (lo > hi) throw Error(ErrorCode::kInvalidWindow, "window start after window end");
  cfg.validate();
  CoherenceConfig effective = cfg;
  if (effective.mode == DistanceMode::kIdealized && !effective.lambda_t) {
    effective.lambda_t = 1.0 / static_cast<double>(std::max<std::int64_t>(1, hi.micros - lo.micros));
  }
  CoherenceSample sample;
  sample.window_lo = lo;
  sample.window_hi = hi;
  sample.computed_at = computed_at;
  sample.mode = cfg.mode;
  double sum = 0.0;
  for (const auto& e : edges) {
    const auto* src = lookup(std::string{}, e.source);
    const auto* dst = lookup(e.destination_namespace, e.destination);
    if (src == nullptr || dst == nullptr) continue;
    sum += pair_coherence(*src, *dst, effective);
    ++sample.edge_count;
  }
  if (sample.edge_count > 0) sample.c_local = sum / static_cast<double>(sample.edge_count);
  return sample;
}

std::vector<PlanePoint> project_local_plane(const MemoryRecord& vertex,
                                            const std::vector<Edge>& outgoing,
                                            const RecordLookup& lookup) {
  std::vector<PlanePoint> points;
  points.reserve(outgoing.size());
  for (const auto& e : outgoing) {
    const auto d = displacement(e, &vertex, lookup(e.destination_namespace, e.destination));
    points.push_back(PlanePoint{e.edge_id, d.delta_t, d.s});
  }
  return points;
}

}  // namespace memdb
