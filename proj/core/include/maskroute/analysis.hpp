#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskroute/data.hpp"
#include "maskroute/masking.hpp"

namespace maskroute {

class MaskRegistry;

/// dot(a, b) / (|a| |b|) for 0/1 vectors; 0 when either is all zero.
/// Throws ShapeError on a length mismatch.
double binary_cosine(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);
double mask_cosine(const LayerMask& a, const LayerMask& b);

/// Sample Pearson r. Throws ShapeError unless both have the same length
/// >= 2 and UndefinedCorrelationError if either has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson of average ranks (1-based; ties share the mean of their ranks).
double spearman(std::span<const double> x, std::span<const double> y);
std::vector<double> average_ranks(std::span<const double> x);

struct TaskMasks {
  std::string task_id;
  MaskSet masks;
};

/// Per-layer pairwise cosine similarities; tasks sorted by id.
struct SimilarityMatrix {
  std::vector<std::string> task_ids;
  std::vector<std::string> layers;
  /// values[layer][i * n + j]
  std::vector<std::vector<double>> values;

  double at(std::size_t layer, std::size_t i, std::size_t j) const {
    return values[layer][i * task_ids.size() + j];
  }
};

/// All tasks must mask the same layers in the same order (MaskError).
SimilarityMatrix similarity_matrix(std::span<const TaskMasks> tasks);

struct PairSimilarity {
  std::string task_a;  // task_a < task_b
  std::string task_b;
  double mask_cos = 0.0;
  double inventory_cos = 0.0;
};

struct LayerCorrelation {
  std::string layer;
  std::optional<double> pearson;  // empty when undefined on this layer
  std::optional<double> spearman;
};

struct CorrelationReport {
  std::size_t layer_index = 0;
  std::string layer;
  std::vector<PairSimilarity> pairs;  // canonical order by (task_a, task_b)
  double pearson = 0.0;
  double spearman = 0.0;
  std::vector<LayerCorrelation> per_layer;

  /// pair_id,layer,mask_cos,inventory_cos rows, then a summary row.
  std::string csv() const;
  /// layer,pearson,spearman; undefined values print as NA.
  std::string per_layer_csv() const;
};

/// `layer` indexes the masked layers in enumeration order. Throws
/// InsufficientPairsError with fewer than 3 tasks, LookupError when a task
/// has no inventory, IndexError for a bad layer, and
/// UndefinedCorrelationError when the chosen layer's similarities are
/// constant.
CorrelationReport correlation_report(std::span<const TaskMasks> tasks,
                                     std::span<const InventoryVector> inventories,
                                     std::size_t layer);
CorrelationReport correlation_report(const MaskRegistry& registry,
                                     std::span<const InventoryVector> inventories,
                                     std::size_t layer);

}  // namespace maskroute
