#include "maskroute/model_config.hpp"

#include <array>

#include "maskroute/errors.hpp"

namespace maskroute {

namespace {

constexpr std::array<std::string_view, kLayersPerBlock> kKindNames = {
    "sa.wq", "sa.wk", "sa.wv", "sa.wo", "ffn.w1", "ffn.w2"};

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size == 0 || d_model == 0 || n_heads == 0 || n_blocks == 0 || ffn_mult == 0 ||
      max_seq_len == 0) {
    throw ConfigError("model config: all sizes must be at least 1");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("model config: d_model " + std::to_string(d_model) +
                      " is not divisible by n_heads " + std::to_string(n_heads));
  }
}

std::string LayerId::name() const {
  return "block" + std::to_string(block) + "." +
         std::string(kKindNames[static_cast<std::size_t>(kind)]);
}

LayerId LayerId::parse(std::string_view name) {
  constexpr std::string_view prefix = "block";
  const auto dot = name.find('.');
  if (name.substr(0, prefix.size()) != prefix || dot == std::string_view::npos ||
      dot == prefix.size()) {
    throw MaskError("unknown layer name '" + std::string(name) + "'");
  }
  std::size_t block = 0;
  for (const char c : name.substr(prefix.size(), dot - prefix.size())) {
    if (c < '0' || c > '9') throw MaskError("unknown layer name '" + std::string(name) + "'");
    block = block * 10 + static_cast<std::size_t>(c - '0');
  }
  const auto rest = name.substr(dot + 1);
  for (std::size_t k = 0; k < kKindNames.size(); ++k) {
    if (rest == kKindNames[k]) return {block, static_cast<LayerKind>(k)};
  }
  throw MaskError("unknown layer name '" + std::string(name) + "'");
}

std::vector<LayerId> all_maskable_layers(const ModelConfig& cfg) {
  std::vector<LayerId> out;
  out.reserve(cfg.n_blocks * kLayersPerBlock);
  for (std::size_t b = 0; b < cfg.n_blocks; ++b)
    for (std::size_t k = 0; k < kLayersPerBlock; ++k) out.push_back({b, static_cast<LayerKind>(k)});
  return out;
}

}  // namespace maskroute
