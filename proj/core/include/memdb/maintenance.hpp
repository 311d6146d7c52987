#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <set>
#include <string>
#include <thread>

#include "memdb/coherence.hpp"
#include "memdb/log_entries.hpp"
#include "memdb/namespace_store.hpp"

namespace memdb {

class Engine;

// Declaration order is execution order within a cycle.
enum class MaintenanceTask : std::uint8_t {
  kRegenLowViews,
  kRenormalize,
  kPruneEdges,
  kSampleCoherence,
  kCompact,
};

std::string_view to_string(MaintenanceTask task) noexcept;
/// Throws Error(kValidation) for an unknown name.
MaintenanceTask task_from_string(std::string_view name);

struct MaintenancePlan {
  std::set<MaintenanceTask> tasks{MaintenanceTask::kRegenLowViews, MaintenanceTask::kRenormalize,
                                  MaintenanceTask::kPruneEdges, MaintenanceTask::kSampleCoherence,
                                  MaintenanceTask::kCompact};
  std::size_t batch_size = 256;
  std::chrono::milliseconds interval{60'000};
  std::int64_t half_life_micros = 30LL * 24 * 3600 * 1'000'000;
  double prune_floor = 0.02;
  /// Trailing window of edge creations used for the coherence sample.
  std::int64_t coherence_window_micros = 3600LL * 1'000'000;
  CoherenceConfig coherence;
  /// Items handed to one store call, so writers are never held off for long.
  std::size_t step = 64;

  /// Throws Error(kValidation).
  void validate() const;
};

/// One pass over the namespace. Task failures are recorded in the report
/// and do not stop later tasks. The report is persisted before returning.
MaintenanceReport run_cycle(NamespaceStore& store, const MaintenancePlan& plan,
                            const ForeignResolver* resolver = nullptr);

/// Runs a cycle over every namespace of an engine at a fixed interval.
class MaintenanceScheduler {
 public:
  using Listener = std::function<void(const std::string& ns, const MaintenanceReport&)>;

  MaintenanceScheduler(Engine& engine, MaintenancePlan plan, Listener listener = {});
  ~MaintenanceScheduler();

  MaintenanceScheduler(const MaintenanceScheduler&) = delete;
  MaintenanceScheduler& operator=(const MaintenanceScheduler&) = delete;

  void start();
  void stop();
  /// One cycle over every namespace on the calling thread.
  void run_once();

 private:
  void loop();

  Engine& engine_;
  MaintenancePlan plan_;
  Listener listener_;
  std::mutex mutex_;
  std::mutex cycle_mutex_;
  std::condition_variable wake_;
  bool stopping_ = false;
  std::thread thread_;
};

}  // namespace memdb
