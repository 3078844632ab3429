#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maskroute/model.hpp"

namespace maskroute {

struct Example {
  std::vector<int> tokens;
  int label = 0;

  bool operator==(const Example&) const = default;
};

/// One synthetic "language": its symbol inventory, the ordered marker bigram
/// of each class, and train/eval splits.
struct TaskDataset {
  std::string task_id;
  std::vector<int> inventory;
  std::size_t n_classes = 0;
  std::vector<std::pair<int, int>> markers;  // one ordered bigram per class
  std::vector<Example> train;
  std::vector<Example> eval;

  bool operator==(const TaskDataset&) const = default;
};

/// Binary membership vector of a task's inventory over the shared vocabulary.
struct InventoryVector {
  std::string task_id;
  std::vector<std::uint8_t> bits;

  bool operator==(const InventoryVector&) const = default;
};

/// Parameters of the synthetic multi-task generator.
///
/// Classes come in pairs over two marker tokens (a, b): one class plants the
/// bigram "a b", its partner "b a". Every sequence carries each marker token
/// of its task exactly once, so unigram counts do not reveal the class; only
/// token order does.
///
/// Task t's inventory is a window of inventory_size consecutive tokens on a
/// cyclic random ordering of the vocabulary. Consecutive windows overlap by a
/// fraction that runs linearly from overlap_max (tasks 0, 1) to overlap_min
/// (last two tasks). A task's markers are its inventory tokens that rank
/// first in a global random role order, so tasks that share tokens tend to
/// share markers.
struct GenSpec {
  std::size_t n_tasks = 3;
  std::size_t vocab_size = 16;
  std::size_t inventory_size = 8;
  std::size_t n_classes = 4;
  std::size_t seq_len = 8;
  std::size_t train_per_task = 200;
  std::size_t eval_per_task = 1000;
  std::size_t pretrain_per_task = 1000;
  std::size_t pretrain_eval_per_task = 100;
  double overlap_min = 0.5;
  double overlap_max = 0.5;
  std::uint64_t seed = 0;

  /// Throws ConfigError for infeasible combinations.
  void validate() const;
};

struct GeneratedData {
  std::vector<TaskDataset> tasks;
  std::vector<InventoryVector> inventories;
  /// Pooled pretraining data over all tasks, drawn independently of the task
  /// splits; label = task_index * n_classes + class.
  TaskDataset pooled;
};

/// Deterministic under spec.seed. Runs the bigram-oracle self-check on every
/// eval split and throws ConfigError if it falls to 0.95 or below.
GeneratedData gen_data(const GenSpec& spec);

/// Accuracy of the classifier that counts each class's marker bigram and
/// picks the largest count (lowest class on ties).
double bigram_oracle_accuracy(const TaskDataset& task, std::span<const Example> examples);

/// Stacks examples[indices[i]] into a batch; labels are appended to `labels`.
TokenBatch make_batch(std::span<const Example> examples, std::span<const std::size_t> indices,
                      std::vector<int>& labels);

/// Epoch-wise shuffled mini-batch indices.
class BatchSampler {
 public:
  BatchSampler(std::size_t n_examples, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

// Dataset directory layout:
//   dataset.cfg          vocabulary, task list, per-task classes and markers
//   <task>.train.tsv     one example per line: space-separated ids, TAB, label
//   <task>.eval.tsv
//   pretrain.train.tsv, pretrain.eval.tsv
//   inventories.txt      task id then its binary vector, space-separated

void write_dataset_dir(const GeneratedData& data, std::size_t vocab_size,
                       const std::filesystem::path& dir);

struct DatasetDir {
  std::size_t vocab_size = 0;
  std::size_t seq_len = 0;
  std::vector<TaskDataset> tasks;
  TaskDataset pooled;
  std::vector<InventoryVector> inventories;

  const TaskDataset& task(std::string_view id) const;
};

DatasetDir read_dataset_dir(const std::filesystem::path& dir);

std::vector<Example> read_examples(const std::filesystem::path& file);
void write_examples(const std::filesystem::path& file, std::span<const Example> examples);

std::vector<InventoryVector> read_inventories(const std::filesystem::path& file);
void write_inventories(const std::filesystem::path& file, std::span<const InventoryVector> inv);

}  // namespace maskroute
