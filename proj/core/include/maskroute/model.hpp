#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "maskroute/masking.hpp"
#include "maskroute/model_config.hpp"
#include "maskroute/tensor.hpp"

namespace maskroute {

struct AttentionWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct FeedForwardWeights {
  Tensor w1, b1, w2, b2;
};

struct BlockWeights {
  Tensor ln1_gamma, ln1_beta;
  AttentionWeights sa;
  Tensor ln2_gamma, ln2_beta;
  FeedForwardWeights ffn;
};

/// Pre-norm transformer encoder shared by every task. Weight matrices are
/// stored [in x out] so a projection is x . W + b.
class Backbone {
 public:
  ModelConfig config;
  Tensor token_embedding;       // [vocab x d]
  Tensor positional_embedding;  // [max_seq_len x d]
  std::vector<BlockWeights> blocks;
  Tensor final_gamma, final_beta;

  bool frozen() const { return frozen_; }

  /// Marks the backbone frozen and stops gradient tracking on every weight.
  void freeze();

  /// Deep copy with every weight trainable.
  Backbone trainable_copy() const;

  /// Deep copy, frozen.
  Backbone frozen_copy() const;

  /// Every tensor in checkpoint enumeration order.
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

  const Tensor& weight(LayerId id) const;
  std::vector<LayerWeight> layer_weights(std::span<const LayerId> ids) const;

 private:
  friend Backbone build_backbone(const ModelConfig& cfg);
  Backbone copy(bool trainable) const;

  bool frozen_ = false;
};

/// Deterministic in cfg.seed: matrices and biases uniform in
/// +-1/sqrt(fan_in), layer norms gamma = 1, beta = 0.
Backbone build_backbone(const ModelConfig& cfg);

/// Parameter count as a pure function of the config.
std::size_t backbone_parameter_count(const ModelConfig& cfg);

/// Per-task classifier over mean-pooled final states.
struct TaskHead {
  Tensor weight;  // [d x n_classes]
  Tensor bias;    // [n_classes]

  std::size_t n_classes() const { return bias.numel(); }
  std::size_t parameter_count() const { return weight.numel() + bias.numel(); }
  TaskHead clone() const { return {weight.clone(), bias.clone()}; }
};

TaskHead make_head(std::size_t d_model, std::size_t n_classes, std::uint64_t seed);

/// Equal-length token sequences, row-major [batch x seq_len].
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<int> ids;
};

/// Optional replacement for each maskable weight, indexed by LayerId::index().
using WeightOverrides = std::vector<std::optional<Tensor>>;

/// Turns a mask set into overrides of m (.) W. Throws MaskError naming the
/// layer when a mask does not exist in the model or has the wrong size.
WeightOverrides overrides_from_masks(const Backbone& backbone, const MaskSet& masks);

/// Mean-pooled final hidden states [batch x d].
Tensor encode(const Backbone& backbone, const TokenBatch& tokens,
              const WeightOverrides& overrides = {});

/// Logits [batch x n_classes].
Tensor forward(const Backbone& backbone, const TaskHead& head, const TokenBatch& tokens,
               const WeightOverrides& overrides = {});
Tensor forward(const Backbone& backbone, const TaskHead& head, const TokenBatch& tokens,
               const MaskSet& masks);

struct TaskDataset;

struct PretrainOptions {
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  double peak_lr = 3e-3;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  Backbone backbone;  // frozen
  TaskHead head;
  double eval_accuracy = 0.0;
};

/// Trains every backbone weight on the pooled objective, then freezes the
/// backbone. Throws ConfigError when steps == 0.
PretrainResult pretrain_surrogate(const ModelConfig& cfg, const TaskDataset& pooled,
                                  const PretrainOptions& options);

}  // namespace maskroute
