#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "maskroute/training.hpp"

namespace maskroute {

/// Read-only view that evaluates one task: the shared backbone under the
/// slot's masks, followed by the slot's head. Holds no weights of its own.
class RoutedModel {
 public:
  RoutedModel(const Backbone& backbone, const TrainedTaskSlot& slot, std::string id)
      : backbone_(&backbone), slot_(&slot), id_(std::move(id)) {}

  const std::string& task_id() const { return id_; }
  const Backbone& backbone() const { return *backbone_; }
  const TrainedTaskSlot& slot() const { return *slot_; }

  Tensor forward(const TokenBatch& tokens) const;
  std::vector<int> predict(std::span<const Example> examples) const;
  EvalResult evaluate(std::span<const Example> examples) const;

 private:
  const Backbone* backbone_;
  const TrainedTaskSlot* slot_;
  std::string id_;
};

/// One frozen backbone shared by reference plus one mask slot per task.
///
/// Reads (switch_task, slot, storage_report) may run concurrently with each
/// other; register_task trains without holding the lock and then inserts
/// under an exclusive lock. Slot references stay valid for the registry's
/// lifetime.
class MaskRegistry {
 public:
  /// Throws ContractError unless the backbone is frozen.
  explicit MaskRegistry(std::shared_ptr<const Backbone> backbone);

  const Backbone& backbone() const { return *backbone_; }
  const std::shared_ptr<const Backbone>& backbone_handle() const { return backbone_; }

  /// Trains a MASK_FT slot for `id` starting from `head`. Throws
  /// RegistryError for a duplicate id and ContractError unless cfg.mode is
  /// MASK_FT.
  const TrainedTaskSlot& register_task(const std::string& id, const TaskHead& head,
                                       const TrainConfig& cfg, const TaskDataset& data);

  /// Adds an already trained mask slot (e.g. loaded from disk). Throws
  /// RegistryError for a duplicate id and MaskError if its masks do not fit.
  const TrainedTaskSlot& add_slot(const std::string& id, TrainedTaskSlot slot);

  /// Throws LookupError for an unknown id.
  RoutedModel switch_task(const std::string& id) const;
  const TrainedTaskSlot& slot(const std::string& id) const;

  bool contains(const std::string& id) const;
  std::size_t size() const;
  /// Registered ids in ascending order.
  std::vector<std::string> task_ids() const;

 private:
  std::shared_ptr<const Backbone> backbone_;
  std::map<std::string, std::unique_ptr<TrainedTaskSlot>> slots_;
  std::unique_ptr<std::shared_mutex> mutex_ = std::make_unique<std::shared_mutex>();
};

struct TaskStorage {
  std::string task_id;
  std::uint64_t mask_bits = 0;       // one bit per maskable element in scope
  std::uint64_t head_params = 0;
  std::uint64_t head_bits = 0;       // 32 bits per head parameter
  std::uint64_t score_bytes = 0;     // training footprint of f64 scores, not deployed
  double overhead_ratio = 0.0;       // (mask_bits + head_bits) / backbone_bits
};

struct StorageReport {
  std::uint64_t backbone_params = 0;
  std::uint64_t backbone_bits = 0;  // 32 bits per parameter
  std::vector<TaskStorage> tasks;
  std::uint64_t deployed_bits = 0;     // backbone once plus every task's mask and head
  std::uint64_t independent_bits = 0;  // one full weight-finetuned model plus head per task
  /// 1 - deployed / independent.
  double multi_task_saving = 0.0;

  std::string to_text() const;
};

/// Counts for accounting without a live registry.
struct TaskCounts {
  std::string task_id;
  std::uint64_t mask_elements = 0;
  std::uint64_t head_params = 0;
  std::uint64_t score_elements = 0;
};

/// Throws RegistryError when `tasks` is empty.
StorageReport storage_report(std::uint64_t backbone_params, std::span<const TaskCounts> tasks);
StorageReport storage_report(const MaskRegistry& registry);

// Manifest: key=value text listing the backbone file and its CRC-32, then
// one [task] section per slot with sparsity, scope and artifact paths
// relative to the manifest directory.

/// Writes backbone, masks, scores and heads next to `manifest` and the
/// manifest itself.
void write_registry(const MaskRegistry& registry, const std::filesystem::path& manifest);

/// Reassembles a registry. Throws FormatError(kBadCrc) if the backbone file
/// does not match the recorded checksum.
MaskRegistry read_registry(const std::filesystem::path& manifest);

}  // namespace maskroute
