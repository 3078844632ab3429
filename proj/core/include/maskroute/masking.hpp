#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maskroute/model_config.hpp"
#include "maskroute/rng.hpp"
#include "maskroute/tensor.hpp"

namespace maskroute {

/// Fraction of maskable weights that are zeroed. keep_count() applies the
/// budget per layer: round((1 - sparsity) * numel).
struct SparsityBudget {
  double sparsity = 0.0;

  SparsityBudget() = default;
  explicit SparsityBudget(double s);

  std::size_t keep_count(std::size_t numel) const;
};

/// Which weight matrices carry a learnable mask.
struct MaskScope {
  enum class Variant { kFfnOnly, kSaOnly, kFfnAndSa, kBlockGroups };

  Variant variant = Variant::kFfnOnly;
  /// One flag per block group, used by kBlockGroups only.
  std::vector<bool> groups;

  static MaskScope ffn_only() { return {}; }
  static MaskScope sa_only() { return {Variant::kSaOnly, {}}; }
  static MaskScope ffn_and_sa() { return {Variant::kFfnAndSa, {}}; }
  static MaskScope block_groups(std::vector<bool> groups) {
    return {Variant::kBlockGroups, std::move(groups)};
  }

  /// Accepts "ffn", "sa", "both" and "groups=0010".
  static MaskScope parse(std::string_view text);
  std::string to_string() const;

  /// Deterministic, enumeration-ordered layer list for `cfg`. Block groups
  /// select the FFN matrices of every block in an enabled group.
  std::vector<LayerId> resolve(const ModelConfig& cfg) const;

  bool operator==(const MaskScope&) const = default;
};

/// Blocks per group: n_blocks / 4 rounded, at least one.
std::size_t blocks_per_group(std::size_t n_blocks);
std::size_t block_group_count(std::size_t n_blocks);

/// One binarized layer mask; bits are 0/1 in row-major element order.
struct LayerMask {
  std::string name;
  Shape shape;
  std::vector<std::uint8_t> bits;

  std::size_t numel() const { return bits.size(); }
  std::size_t popcount() const;

  bool operator==(const LayerMask&) const = default;
};

struct MaskSet {
  std::vector<LayerMask> layers;

  const LayerMask* find(std::string_view name) const;
  bool operator==(const MaskSet&) const = default;
};

/// Real-valued trainable scores of one layer plus its keep-count.
struct LayerScores {
  LayerId layer;
  Tensor scores;
  std::size_t keep = 0;
};

using ScoreSet = std::vector<LayerScores>;

/// A named weight, as handed to the magnitude-aware initializers.
struct LayerWeight {
  LayerId layer;
  Tensor weight;
};

/// Exactly k ones at the k largest scores; equal scores are won by the lower
/// flat index. Throws BudgetError unless 0 <= k <= scores.size().
std::vector<std::uint8_t> topk_binarize(std::span<const double> scores, std::size_t k);

/// mask (.) theta. Records a backward rule for theta when it requires a
/// gradient. Throws MaskError on a size mismatch.
Tensor masked_forward_weight(const Tensor& theta, std::span<const std::uint8_t> mask);

/// Straight-through score gradient: dL/dW_eff (.) theta for every element,
/// including elements the current mask zeroes out.
std::vector<double> ste_score_gradient(std::span<const double> upstream,
                                       std::span<const double> theta);

/// Differentiable masked weight: binarizes `scores` to the top `keep`
/// elements, returns mask (.) theta, and routes the backward pass to `scores`
/// through the straight-through estimator. When `mask_out` is given it
/// receives the binary mask used.
Tensor masked_weight(const Tensor& theta, const Tensor& scores, std::size_t keep,
                     std::vector<std::uint8_t>* mask_out = nullptr);

/// Random scores for a weight of `shape`: uniform in +-1/sqrt(fan_in) with
/// fan_in = shape[0]. Draws in row-major order from `rng`.
std::vector<double> random_scores(const Shape& shape, Rng& rng);

/// Random initialization (RI) of every listed layer, in order.
ScoreSet init_random(std::span<const LayerWeight> layers, const SparsityBudget& budget,
                     std::uint64_t seed);

/// Weight-magnitude initialization (WMI): scores = |theta|.
ScoreSet init_wmi(std::span<const LayerWeight> layers, const SparsityBudget& budget);

/// Order-preserving random initialization (ORI): the RI draws, permuted so
/// their descending order follows descending |theta|.
ScoreSet init_ori(std::span<const LayerWeight> layers, const SparsityBudget& budget,
                  std::uint64_t seed);

/// Core of ORI for one layer: assigns the largest draw to the largest
/// magnitude, and so on. Magnitude ties go to the lower flat index.
std::vector<double> ori_assign(std::span<const double> magnitudes, std::vector<double> draws);

/// Binarizes every layer of `scores` with its keep-count.
MaskSet binarize(const ScoreSet& scores);

/// Masks of all ones for the listed layers (the sparsity-0 mask).
MaskSet dense_masks(std::span<const LayerWeight> layers);

}  // namespace maskroute
