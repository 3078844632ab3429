#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace maskroute {

struct ModelConfig {
  std::size_t vocab_size = 16;
  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t n_blocks = 4;
  std::size_t ffn_mult = 4;
  std::size_t max_seq_len = 32;
  std::uint64_t seed = 0;

  std::size_t ffn_hidden() const { return ffn_mult * d_model; }
  std::size_t head_dim() const { return d_model / n_heads; }

  /// Throws ConfigError when a size is zero or d_model % n_heads != 0.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// The six maskable weight matrices of a block, in enumeration order.
enum class LayerKind : std::uint8_t { kQuery, kKey, kValue, kOutput, kFfnIn, kFfnOut };

inline constexpr std::size_t kLayersPerBlock = 6;

struct LayerId {
  std::size_t block = 0;
  LayerKind kind = LayerKind::kQuery;

  bool is_attention() const { return kind <= LayerKind::kOutput; }
  bool is_ffn() const { return !is_attention(); }

  /// Position in the stable block-major enumeration of maskable layers.
  std::size_t index() const { return block * kLayersPerBlock + static_cast<std::size_t>(kind); }

  /// e.g. "block0.sa.wq", "block3.ffn.w2"
  std::string name() const;

  /// Inverse of name(); throws MaskError for unknown names.
  static LayerId parse(std::string_view name);

  auto operator<=>(const LayerId&) const = default;
};

/// Every maskable layer of a model, in enumeration order.
std::vector<LayerId> all_maskable_layers(const ModelConfig& cfg);

}  // namespace maskroute
