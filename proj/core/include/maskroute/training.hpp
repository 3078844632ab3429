#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maskroute/data.hpp"
#include "maskroute/masking.hpp"
#include "maskroute/model.hpp"
#include "maskroute/schedule.hpp"

namespace maskroute {

enum class TrainMode {
  kWeightFt,       // every backbone weight and the head
  kMaskFt,         // mask scores and the head over a frozen backbone
  kHeadOnly,       // the head alone
  kPruneTwoPhase,  // weight finetune, then mask-based pruning of the result
};

enum class InitScheme { kRandom, kMagnitude, kOrderPreserving };

/// "weight" | "mask" | "head" | "prune"
TrainMode parse_train_mode(std::string_view text);
std::string to_string(TrainMode mode);

/// "ri" | "wmi" | "ori"
InitScheme parse_init_scheme(std::string_view text);
std::string to_string(InitScheme scheme);

struct TrainConfig {
  TrainMode mode = TrainMode::kMaskFt;
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  double peak_lr = 5e-5;
  TriStageSchedule schedule;
  double sparsity = 0.1;
  MaskScope scope;
  InitScheme init = InitScheme::kOrderPreserving;
  std::uint64_t seed = 0;
  /// Steps between metrics rows; the final step is always logged.
  std::size_t eval_interval = 100;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

struct MetricsRow {
  std::size_t step = 0;  // updates completed
  double lr = 0.0;
  double loss = 0.0;      // training batch loss of the last update
  double accuracy = 0.0;  // eval-split accuracy
  std::vector<std::size_t> popcounts;
  std::uint32_t popcount_checksum = 0;

  bool operator==(const MetricsRow&) const = default;
};

using MetricsLog = std::vector<MetricsRow>;

/// FNV-1a over the per-layer popcounts.
std::uint32_t popcount_checksum(std::span<const std::size_t> popcounts);

/// CSV with columns step,lr,loss,accuracy,popcount_checksum.
std::string metrics_csv(const MetricsLog& log);

/// Everything one task needs on top of the shared backbone.
struct TrainedTaskSlot {
  TrainMode mode = TrainMode::kMaskFt;
  MaskScope scope;
  SparsityBudget budget;
  ScoreSet scores;  // empty unless masks were trained
  MaskSet masks;    // binarized final masks; empty without masks
  TaskHead head;
  /// Finetuned weights (WEIGHT_FT and PRUNE_TWO_PHASE); otherwise the slot
  /// runs on the caller's shared backbone.
  std::optional<Backbone> weights;

  const Backbone& backbone_for(const Backbone& shared) const {
    return weights ? *weights : shared;
  }
};

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

EvalResult evaluate(const Backbone& backbone, const TaskHead& head,
                    const WeightOverrides& overrides, std::span<const Example> examples,
                    std::size_t batch_size = 100);
EvalResult evaluate(const Backbone& shared, const TrainedTaskSlot& slot,
                    std::span<const Example> examples);

/// Predicted class per example.
std::vector<int> predict(const Backbone& shared, const TrainedTaskSlot& slot,
                         std::span<const Example> examples);

struct TrainResult {
  TrainedTaskSlot slot;
  MetricsLog log;
  EvalResult final_eval;
};

/// Runs cfg.steps Adam updates under the tri-stage schedule.
///
/// The backbone must be frozen exactly when the mode is MASK_FT or HEAD_ONLY
/// (ContractError otherwise); it is never modified. WEIGHT_FT trains a copy
/// and returns it in slot.weights. PRUNE_TWO_PHASE delegates to
/// prune_two_phase() and accepts either.
TrainResult train(const Backbone& backbone, const TaskHead& head, const TrainConfig& cfg,
                  const TaskDataset& data);

/// Masks that keep the largest-magnitude weights of every scoped layer:
/// one-shot magnitude pruning without any mask training.
MaskSet magnitude_prune_masks(const Backbone& backbone, const MaskScope& scope,
                              const SparsityBudget& budget);

struct PruneResult {
  TrainResult pruned;         // phase 2, slot.weights holds the phase-1 weights
  EvalResult phase1_eval;     // dense finetuned model
  EvalResult omp_eval;        // phase-1 weights + head, magnitude-pruned
};

/// Phase 1 finetunes every weight for cfg.steps; phase 2 learns masks over
/// the now-frozen result at cfg.sparsity, with scope forced to FFN and SA and
/// weight-magnitude initialization. Also evaluates the one-shot magnitude
/// pruning baseline at the same budget.
PruneResult prune_two_phase(const Backbone& backbone, const TaskHead& head,
                            const TrainConfig& cfg, const TaskDataset& data);

struct SweepPoint {
  double sparsity = 0.0;
  double metric = 0.0;  // final eval accuracy
  std::optional<double> runtime_seconds;
};

struct SweepResult {
  std::vector<SweepPoint> points;  // ascending sparsity
  std::size_t best = 0;            // highest metric, lowest sparsity on ties

  /// Columns sparsity,metric,runtime_seconds,is_best. Runtime prints "NA"
  /// unless timing was requested.
  std::string csv() const;
};

/// Trains one mask slot per sparsity (cfg_template with the sparsity
/// substituted; mode must be MASK_FT). Points are independent and may run on
/// `jobs` threads; results are merged by sparsity.
SweepResult sparsity_sweep(const Backbone& backbone, const TaskHead& head,
                           const TrainConfig& cfg_template, const TaskDataset& data,
                           std::span<const double> sparsities, std::size_t jobs = 1,
                           bool timing = false);

}  // namespace maskroute
