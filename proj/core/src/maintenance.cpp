#include "memdb/maintenance.hpp"

#include <algorithm>

#include "memdb/engine.hpp"

namespace memdb {

namespace {

constexpr std::pair<MaintenanceTask, std::string_view> kTaskNames[] = {
    {MaintenanceTask::kRegenLowViews, "regen_low_views"},
    {MaintenanceTask::kRenormalize, "renormalize"},
    {MaintenanceTask::kPruneEdges, "prune_edges"},
    {MaintenanceTask::kSampleCoherence, "sample_coherence"},
    {MaintenanceTask::kCompact, "compact"},
};

// Calls `step(n)` with n <= plan.step until `budget` items are done or a
// step reports no progress.
template <typename F>
std::uint64_t in_steps(std::size_t budget, std::size_t step, F&& fn) {
  std::uint64_t done = 0;
  while (done < budget) {
    const std::size_t n = fn(std::min(step, budget - done));
    if (n == 0) break;
    done += n;
  }
  return done;
}

}  // namespace

std::string_view to_string(MaintenanceTask task) noexcept {
  for (const auto& [t, name] : kTaskNames) {
    if (t == task) return name;
  }
  return "unknown";
}

MaintenanceTask task_from_string(std::string_view name) {
  for (const auto& [t, n] : kTaskNames) {
    if (n == name) return t;
  }
  throw Error(ErrorCode::kValidation, "unknown maintenance task '" + std::string(name) + "'");
}

void MaintenancePlan::validate() const {
  if (batch_size == 0) throw Error(ErrorCode::kValidation, "batch_size must be >= 1");
  if (step == 0) throw Error(ErrorCode::kValidation, "step must be >= 1");
  if (interval.count() <= 0) throw Error(ErrorCode::kValidation, "interval must be > 0");
  if (half_life_micros <= 0) throw Error(ErrorCode::kValidation, "half_life must be > 0");
  if (!(prune_floor > 0.0 && prune_floor < 1.0)) throw Error(ErrorCode::kValidation, "floor must be in (0, 1)");
  if (coherence_window_micros < 0) throw Error(ErrorCode::kValidation, "coherence window must be >= 0");
  coherence.validate();
}

MaintenanceReport run_cycle(NamespaceStore& store, const MaintenancePlan& plan,
                            const ForeignResolver* resolver) {
  plan.validate();
  std::lock_guard cycle(store.maintenance_mutex());
  MaintenanceReport report;
  const auto prior = store.reports();
  report.cycle_id = prior.empty() ? 1 : prior.back().cycle_id + 1;
  report.started_at = Timestamp(store.now());

  const auto run = [&](MaintenanceTask task, auto&& body) {
    if (!plan.tasks.contains(task)) return;
    try {
      body();
    } catch (const Error& e) {
      report.errors.push_back({{"task", to_string(task)}, {"code", to_string(e.code())}, {"message", e.what()}});
    } catch (const std::exception& e) {
      report.errors.push_back({{"task", to_string(task)}, {"code", "Internal"}, {"message", e.what()}});
    }
  };

  run(MaintenanceTask::kRegenLowViews, [&] {
    report.low_views_regenerated =
        in_steps(plan.batch_size, plan.step, [&](std::size_t n) { return store.regen_low_views(n); });
  });
  run(MaintenanceTask::kRenormalize, [&] {
    report.vectors_renormalized =
        in_steps(plan.batch_size, plan.step, [&](std::size_t n) { return store.renormalize(n); });
  });
  run(MaintenanceTask::kPruneEdges, [&] {
    const Timestamp now(store.now());
    report.edges_pruned = in_steps(plan.batch_size, plan.step, [&](std::size_t n) {
      return store.decay_and_prune(now, plan.half_life_micros, plan.prune_floor, n);
    });
  });
  run(MaintenanceTask::kSampleCoherence, [&] {
    const std::int64_t now = store.now();
    store.sample_coherence(Timestamp(std::max<std::int64_t>(0, now - plan.coherence_window_micros)),
                           Timestamp(now), plan.coherence, resolver);
    report.samples_written = 1;
  });
  run(MaintenanceTask::kCompact, [&] {
    for (const auto id : store.compactable_segments()) {
      if (report.segments_compacted >= plan.batch_size) break;
      report.bytes_compacted += store.compact(id);
      ++report.segments_compacted;
    }
  });

  report.finished_at = Timestamp(store.now());
  store.record_report(report);
  return report;
}

MaintenanceScheduler::MaintenanceScheduler(Engine& engine, MaintenancePlan plan, Listener listener)
    : engine_(engine), plan_(std::move(plan)), listener_(std::move(listener)) {
  plan_.validate();
}

MaintenanceScheduler::~MaintenanceScheduler() { stop(); }

void MaintenanceScheduler::start() {
  std::lock_guard lock(mutex_);
  if (thread_.joinable()) return;
  stopping_ = false;
  thread_ = std::thread([this] { loop(); });
}

void MaintenanceScheduler::stop() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  wake_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void MaintenanceScheduler::run_once() {
  std::lock_guard cycle(cycle_mutex_);
  auto resolver = engine_.resolver();
  for (const auto& name : engine_.namespaces()) {
    auto* store = engine_.find(name);
    if (store == nullptr) continue;
    const auto report = run_cycle(*store, plan_, &resolver);
    if (listener_) listener_(name, report);
  }
}

void MaintenanceScheduler::loop() {
  std::unique_lock lock(mutex_);
  while (!stopping_) {
    if (wake_.wait_for(lock, plan_.interval, [this] { return stopping_; })) break;
    lock.unlock();
    try {
      run_once();
    } catch (...) {
      // a failing namespace must not stop the scheduler; errors are in the reports
    }
    lock.lock();
  }
}

}  // namespace memdb
