#include "maskroute/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "maskroute/autograd.hpp"
#include "maskroute/errors.hpp"

namespace maskroute {

SparsityBudget::SparsityBudget(double s) : sparsity(s) {
  if (!(s >= 0.0 && s <= 1.0)) {
    throw BudgetError("sparsity " + std::to_string(s) + " outside [0, 1]");
  }
}

std::size_t SparsityBudget::keep_count(std::size_t numel) const {
  const double keep = std::round((1.0 - sparsity) * static_cast<double>(numel));
  if (keep <= 0.0) return 0;
  return std::min(numel, static_cast<std::size_t>(keep));
}

std::size_t blocks_per_group(std::size_t n_blocks) {
  const auto g = static_cast<std::size_t>(std::lround(static_cast<double>(n_blocks) / 4.0));
  return std::max<std::size_t>(1, g);
}

std::size_t block_group_count(std::size_t n_blocks) {
  const auto per = blocks_per_group(n_blocks);
  return (n_blocks + per - 1) / per;
}

MaskScope MaskScope::parse(std::string_view text) {
  if (text == "ffn") return ffn_only();
  if (text == "sa") return sa_only();
  if (text == "both") return ffn_and_sa();
  constexpr std::string_view prefix = "groups=";
  if (text.substr(0, prefix.size()) == prefix && text.size() > prefix.size()) {
    std::vector<bool> bits;
    for (const char c : text.substr(prefix.size())) {
      if (c != '0' && c != '1') throw ConfigError("bad scope '" + std::string(text) + "'");
      bits.push_back(c == '1');
    }
    return block_groups(std::move(bits));
  }
  throw ConfigError("unknown scope '" + std::string(text) + "' (expected ffn|sa|both|groups=BITS)");
}

std::string MaskScope::to_string() const {
  switch (variant) {
    case Variant::kFfnOnly: return "ffn";
    case Variant::kSaOnly: return "sa";
    case Variant::kFfnAndSa: return "both";
    case Variant::kBlockGroups: {
      std::string s = "groups=";
      for (const bool b : groups) s.push_back(b ? '1' : '0');
      return s;
    }
  }
  return "?";
}

std::vector<LayerId> MaskScope::resolve(const ModelConfig& cfg) const {
  std::vector<LayerId> out;
  const auto per_group = blocks_per_group(cfg.n_blocks);
  if (variant == Variant::kBlockGroups && groups.size() != block_group_count(cfg.n_blocks)) {
    throw ConfigError("scope " + to_string() + " needs " +
                      std::to_string(block_group_count(cfg.n_blocks)) + " group flags for " +
                      std::to_string(cfg.n_blocks) + " blocks");
  }
  for (const auto& id : all_maskable_layers(cfg)) {
    bool keep = false;
    switch (variant) {
      case Variant::kFfnOnly: keep = id.is_ffn(); break;
      case Variant::kSaOnly: keep = id.is_attention(); break;
      case Variant::kFfnAndSa: keep = true; break;
      case Variant::kBlockGroups: keep = id.is_ffn() && groups[id.block / per_group]; break;
    }
    if (keep) out.push_back(id);
  }
  return out;
}

std::size_t LayerMask::popcount() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

const LayerMask* MaskSet::find(std::string_view name) const {
  for (const auto& l : layers)
    if (l.name == name) return &l;
  return nullptr;
}

std::vector<std::uint8_t> topk_binarize(std::span<const double> scores, std::size_t k) {
  const std::size_t n = scores.size();
  if (k > n) {
    throw BudgetError("keep-count " + std::to_string(k) + " exceeds " + std::to_string(n) +
                      " elements");
  }
  std::vector<std::uint8_t> mask(n, 0);
  if (k == n) {
    std::fill(mask.begin(), mask.end(), std::uint8_t{1});
    return mask;
  }
  if (k == 0) return mask;
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  // Strict total order: larger score first, then lower index.
  const auto before = [&](std::uint32_t a, std::uint32_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
  for (std::size_t i = 0; i < k; ++i) mask[idx[i]] = 1;
  return mask;
}

Tensor masked_forward_weight(const Tensor& theta, std::span<const std::uint8_t> mask) {
  if (mask.size() != theta.numel()) {
    throw MaskError("mask of " + std::to_string(mask.size()) + " elements applied to weight " +
                    shape_str(theta.shape()));
  }
  std::vector<double> out(theta.numel());
  const auto w = theta.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i] > 1) throw MaskError("mask value " + std::to_string(mask[i]) + " is not 0/1");
    out[i] = mask[i] ? w[i] : 0.0;
  }
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return record_op(theta.shape(), std::move(out), {theta},
                   [m = std::move(m)](std::span<const double>, std::span<const double> g,
                                      std::span<const GradSpan> grads) {
                     for (std::size_t i = 0; i < g.size(); ++i)
                       if (m[i]) grads[0][i] += g[i];
                   });
}

std::vector<double> ste_score_gradient(std::span<const double> upstream,
                                       std::span<const double> theta) {
  if (upstream.size() != theta.size()) {
    throw ShapeError("ste_score_gradient: " + std::to_string(upstream.size()) + " vs " +
                     std::to_string(theta.size()) + " elements");
  }
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = upstream[i] * theta[i];
  return out;
}

Tensor masked_weight(const Tensor& theta, const Tensor& scores, std::size_t keep,
                     std::vector<std::uint8_t>* mask_out) {
  if (theta.shape() != scores.shape()) {
    throw MaskError("scores " + shape_str(scores.shape()) + " do not match weight " +
                    shape_str(theta.shape()));
  }
  auto mask = std::make_shared<std::vector<std::uint8_t>>(topk_binarize(scores.data(), keep));
  if (mask_out) *mask_out = *mask;
  std::vector<double> out(theta.numel());
  const auto w = theta.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*mask)[i] ? w[i] : 0.0;
  return record_op(theta.shape(), std::move(out), {theta, scores},
                   [theta, mask](std::span<const double>, std::span<const double> g,
                                 std::span<const GradSpan> grads) {
                     if (!grads[0].empty())
                       for (std::size_t i = 0; i < g.size(); ++i)
                         if ((*mask)[i]) grads[0][i] += g[i];
                     if (!grads[1].empty()) {
                       // d(m_hat (.) theta)/d m_hat, passed to m unchanged.
                       const auto w = theta.data();
                       for (std::size_t i = 0; i < g.size(); ++i) grads[1][i] += g[i] * w[i];
                     }
                   });
}

std::vector<double> random_scores(const Shape& shape, Rng& rng) {
  const std::size_t fan_in = shape.empty() ? 1 : std::max<std::size_t>(1, shape[0]);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> out(shape_numel(shape));
  for (auto& v : out) v = rng.uniform(-bound, bound);
  return out;
}

namespace {

LayerScores make_scores(const LayerWeight& lw, std::vector<double> values,
                        const SparsityBudget& budget) {
  LayerScores ls{lw.layer, Tensor(lw.weight.shape(), std::move(values)),
                 budget.keep_count(lw.weight.numel())};
  ls.scores.set_requires_grad(true);
  return ls;
}

}  // namespace

ScoreSet init_random(std::span<const LayerWeight> layers, const SparsityBudget& budget,
                     std::uint64_t seed) {
  Rng rng(seed);
  ScoreSet out;
  for (const auto& lw : layers)
    out.push_back(make_scores(lw, random_scores(lw.weight.shape(), rng), budget));
  return out;
}

ScoreSet init_wmi(std::span<const LayerWeight> layers, const SparsityBudget& budget) {
  ScoreSet out;
  for (const auto& lw : layers) {
    std::vector<double> values(lw.weight.numel());
    const auto w = lw.weight.data();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::abs(w[i]);
    out.push_back(make_scores(lw, std::move(values), budget));
  }
  return out;
}

std::vector<double> ori_assign(std::span<const double> magnitudes, std::vector<double> draws) {
  if (magnitudes.size() != draws.size()) {
    throw ShapeError("ori_assign: " + std::to_string(magnitudes.size()) + " magnitudes, " +
                     std::to_string(draws.size()) + " draws");
  }
  std::vector<std::size_t> order(magnitudes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return magnitudes[a] > magnitudes[b]; });
  std::sort(draws.begin(), draws.end(), std::greater<>());
  std::vector<double> out(draws.size());
  for (std::size_t r = 0; r < order.size(); ++r) out[order[r]] = draws[r];
  return out;
}

ScoreSet init_ori(std::span<const LayerWeight> layers, const SparsityBudget& budget,
                  std::uint64_t seed) {
  Rng rng(seed);
  ScoreSet out;
  for (const auto& lw : layers) {
    std::vector<double> magnitudes(lw.weight.numel());
    const auto w = lw.weight.data();
    for (std::size_t i = 0; i < magnitudes.size(); ++i) magnitudes[i] = std::abs(w[i]);
    auto values = ori_assign(magnitudes, random_scores(lw.weight.shape(), rng));
    out.push_back(make_scores(lw, std::move(values), budget));
  }
  return out;
}

MaskSet binarize(const ScoreSet& scores) {
  MaskSet out;
  for (const auto& ls : scores) {
    out.layers.push_back(
        {ls.layer.name(), ls.scores.shape(), topk_binarize(ls.scores.data(), ls.keep)});
  }
  return out;
}

MaskSet dense_masks(std::span<const LayerWeight> layers) {
  MaskSet out;
  for (const auto& lw : layers)
    out.layers.push_back({lw.layer.name(), lw.weight.shape(),
                          std::vector<std::uint8_t>(lw.weight.numel(), std::uint8_t{1})});
  return out;
}

}  // namespace maskroute
