#include "maskroute/model.hpp"

#include <cmath>
#include <string>

#include "maskroute/errors.hpp"
#include "maskroute/ops.hpp"
#include "maskroute/rng.hpp"

namespace maskroute {

namespace {

Tensor uniform_tensor(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(values));
}

void linear(std::size_t in, std::size_t out, Tensor& w, Tensor& b, Rng& rng) {
  w = uniform_tensor({in, out}, in, rng);
  b = uniform_tensor({out}, in, rng);
}

Tensor copy_tensor(const Tensor& t, bool trainable) {
  Tensor out = t.clone();
  out.set_requires_grad(trainable);
  return out;
}

}  // namespace

Backbone build_backbone(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(Rng::derive(cfg.seed, "backbone"));
  const std::size_t d = cfg.d_model, h = cfg.ffn_hidden();
  Backbone bb;
  bb.config = cfg;
  bb.token_embedding = uniform_tensor({cfg.vocab_size, d}, cfg.vocab_size, rng);
  bb.positional_embedding = uniform_tensor({cfg.max_seq_len, d}, cfg.max_seq_len, rng);
  bb.blocks.resize(cfg.n_blocks);
  for (auto& blk : bb.blocks) {
    blk.ln1_gamma = Tensor({d}, 1.0);
    blk.ln1_beta = Tensor({d}, 0.0);
    linear(d, d, blk.sa.wq, blk.sa.bq, rng);
    linear(d, d, blk.sa.wk, blk.sa.bk, rng);
    linear(d, d, blk.sa.wv, blk.sa.bv, rng);
    linear(d, d, blk.sa.wo, blk.sa.bo, rng);
    blk.ln2_gamma = Tensor({d}, 1.0);
    blk.ln2_beta = Tensor({d}, 0.0);
    linear(d, h, blk.ffn.w1, blk.ffn.b1, rng);
    linear(h, d, blk.ffn.w2, blk.ffn.b2, rng);
  }
  bb.final_gamma = Tensor({d}, 1.0);
  bb.final_beta = Tensor({d}, 0.0);
  return bb;
}

std::size_t backbone_parameter_count(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d_model, h = cfg.ffn_hidden();
  const std::size_t attention = 4 * (d * d + d);
  const std::size_t ffn = d * h + h + h * d + d;
  const std::size_t norms = 4 * d;
  return cfg.vocab_size * d + cfg.max_seq_len * d + cfg.n_blocks * (attention + ffn + norms) +
         2 * d;
}

void Backbone::freeze() {
  for (auto& t : parameters()) t.set_requires_grad(false);
  frozen_ = true;
}

Backbone Backbone::copy(bool trainable) const {
  Backbone out;
  out.config = config;
  out.token_embedding = copy_tensor(token_embedding, trainable);
  out.positional_embedding = copy_tensor(positional_embedding, trainable);
  out.blocks.resize(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& s = blocks[i];
    auto& o = out.blocks[i];
    o.ln1_gamma = copy_tensor(s.ln1_gamma, trainable);
    o.ln1_beta = copy_tensor(s.ln1_beta, trainable);
    o.sa = {copy_tensor(s.sa.wq, trainable), copy_tensor(s.sa.bq, trainable),
            copy_tensor(s.sa.wk, trainable), copy_tensor(s.sa.bk, trainable),
            copy_tensor(s.sa.wv, trainable), copy_tensor(s.sa.bv, trainable),
            copy_tensor(s.sa.wo, trainable), copy_tensor(s.sa.bo, trainable)};
    o.ln2_gamma = copy_tensor(s.ln2_gamma, trainable);
    o.ln2_beta = copy_tensor(s.ln2_beta, trainable);
    o.ffn = {copy_tensor(s.ffn.w1, trainable), copy_tensor(s.ffn.b1, trainable),
             copy_tensor(s.ffn.w2, trainable), copy_tensor(s.ffn.b2, trainable)};
  }
  out.final_gamma = copy_tensor(final_gamma, trainable);
  out.final_beta = copy_tensor(final_beta, trainable);
  out.frozen_ = !trainable;
  return out;
}

Backbone Backbone::trainable_copy() const { return copy(true); }
Backbone Backbone::frozen_copy() const { return copy(false); }

std::vector<Tensor> Backbone::parameters() const {
  std::vector<Tensor> out{token_embedding, positional_embedding};
  for (const auto& b : blocks) {
    out.insert(out.end(), {b.ln1_gamma, b.ln1_beta, b.sa.wq, b.sa.bq, b.sa.wk, b.sa.bk, b.sa.wv,
                           b.sa.bv, b.sa.wo, b.sa.bo, b.ln2_gamma, b.ln2_beta, b.ffn.w1, b.ffn.b1,
                           b.ffn.w2, b.ffn.b2});
  }
  out.push_back(final_gamma);
  out.push_back(final_beta);
  return out;
}

std::size_t Backbone::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : parameters()) n += t.numel();
  return n;
}

const Tensor& Backbone::weight(LayerId id) const {
  if (id.block >= blocks.size()) {
    throw MaskError("layer " + id.name() + " does not exist in a " +
                    std::to_string(blocks.size()) + "-block model");
  }
  const auto& b = blocks[id.block];
  switch (id.kind) {
    case LayerKind::kQuery: return b.sa.wq;
    case LayerKind::kKey: return b.sa.wk;
    case LayerKind::kValue: return b.sa.wv;
    case LayerKind::kOutput: return b.sa.wo;
    case LayerKind::kFfnIn: return b.ffn.w1;
    case LayerKind::kFfnOut: return b.ffn.w2;
  }
  throw MaskError("bad layer kind");
}

std::vector<LayerWeight> Backbone::layer_weights(std::span<const LayerId> ids) const {
  std::vector<LayerWeight> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back({id, weight(id)});
  return out;
}

TaskHead make_head(std::size_t d_model, std::size_t n_classes, std::uint64_t seed) {
  if (d_model == 0 || n_classes == 0) throw ConfigError("head needs d_model, n_classes >= 1");
  Rng rng(Rng::derive(seed, "head"));
  TaskHead head;
  head.weight = uniform_tensor({d_model, n_classes}, d_model, rng);
  head.bias = uniform_tensor({n_classes}, d_model, rng);
  return head;
}

WeightOverrides overrides_from_masks(const Backbone& backbone, const MaskSet& masks) {
  WeightOverrides out(backbone.config.n_blocks * kLayersPerBlock);
  for (const auto& m : masks.layers) {
    const LayerId id = LayerId::parse(m.name);
    const Tensor& w = backbone.weight(id);
    if (m.numel() != w.numel() || (m.shape.size() == 2 && m.shape != w.shape())) {
      throw MaskError("mask for layer " + m.name + " has shape " + shape_str(m.shape) +
                      ", weight is " + shape_str(w.shape()));
    }
    if (out[id.index()]) throw MaskError("duplicate mask for layer " + m.name);
    out[id.index()] = masked_forward_weight(w, m.bits);
  }
  return out;
}

namespace {

const Tensor& resolve_weight(const Backbone& bb, const WeightOverrides& overrides, LayerId id) {
  const auto i = id.index();
  if (i < overrides.size() && overrides[i]) return *overrides[i];
  return bb.weight(id);
}

Tensor self_attention(const Backbone& bb, const WeightOverrides& ov, std::size_t block,
                      const Tensor& h, std::size_t batch, std::size_t len) {
  const auto& cfg = bb.config;
  const auto& sa = bb.blocks[block].sa;
  const std::size_t heads = cfg.n_heads, hd = cfg.head_dim(), d = cfg.d_model;
  const auto split = [&](const Tensor& x) {
    return reshape(swap_axes12(reshape(x, {batch, len, heads, hd})), {batch * heads, len, hd});
  };
  const Tensor q = split(add_bias(matmul(h, resolve_weight(bb, ov, {block, LayerKind::kQuery})), sa.bq));
  const Tensor k = split(add_bias(matmul(h, resolve_weight(bb, ov, {block, LayerKind::kKey})), sa.bk));
  const Tensor v = split(add_bias(matmul(h, resolve_weight(bb, ov, {block, LayerKind::kValue})), sa.bv));
  const Tensor att =
      softmax(scale(bmm(q, transpose_last2(k)), 1.0 / std::sqrt(static_cast<double>(hd))), -1);
  const Tensor ctx = reshape(swap_axes12(reshape(bmm(att, v), {batch, heads, len, hd})),
                             {batch * len, d});
  return add_bias(matmul(ctx, resolve_weight(bb, ov, {block, LayerKind::kOutput})), sa.bo);
}

Tensor feed_forward(const Backbone& bb, const WeightOverrides& ov, std::size_t block,
                    const Tensor& h) {
  const auto& ffn = bb.blocks[block].ffn;
  const Tensor hidden =
      relu(add_bias(matmul(h, resolve_weight(bb, ov, {block, LayerKind::kFfnIn})), ffn.b1));
  return add_bias(matmul(hidden, resolve_weight(bb, ov, {block, LayerKind::kFfnOut})), ffn.b2);
}

}  // namespace

Tensor encode(const Backbone& bb, const TokenBatch& tokens, const WeightOverrides& overrides) {
  const auto& cfg = bb.config;
  if (tokens.ids.size() != tokens.batch * tokens.seq_len) {
    throw ShapeError("token batch holds " + std::to_string(tokens.ids.size()) + " ids for " +
                     std::to_string(tokens.batch) + "x" + std::to_string(tokens.seq_len));
  }
  if (tokens.seq_len == 0 || tokens.seq_len > cfg.max_seq_len) {
    throw ShapeError("sequence length " + std::to_string(tokens.seq_len) + " outside [1, " +
                     std::to_string(cfg.max_seq_len) + "]");
  }
  if (!overrides.empty() && overrides.size() != cfg.n_blocks * kLayersPerBlock) {
    throw MaskError("weight overrides sized " + std::to_string(overrides.size()) + " for " +
                    std::to_string(cfg.n_blocks * kLayersPerBlock) + " maskable layers");
  }
  std::vector<int> positions(tokens.ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i)
    positions[i] = static_cast<int>(i % tokens.seq_len);

  Tensor x = add(embedding(bb.token_embedding, tokens.ids),
                 embedding(bb.positional_embedding, positions));
  for (std::size_t b = 0; b < bb.blocks.size(); ++b) {
    const auto& blk = bb.blocks[b];
    x = add(x, self_attention(bb, overrides, b, layer_norm(x, blk.ln1_gamma, blk.ln1_beta),
                              tokens.batch, tokens.seq_len));
    x = add(x, feed_forward(bb, overrides, b, layer_norm(x, blk.ln2_gamma, blk.ln2_beta)));
  }
  x = layer_norm(x, bb.final_gamma, bb.final_beta);
  return mean_axis1(reshape(x, {tokens.batch, tokens.seq_len, cfg.d_model}));
}

Tensor forward(const Backbone& bb, const TaskHead& head, const TokenBatch& tokens,
               const WeightOverrides& overrides) {
  if (head.weight.rank() != 2 || head.weight.dim(0) != bb.config.d_model) {
    throw ShapeError("head weight " + shape_str(head.weight.shape()) + " does not fit d_model " +
                     std::to_string(bb.config.d_model));
  }
  return add_bias(matmul(encode(bb, tokens, overrides), head.weight), head.bias);
}

Tensor forward(const Backbone& bb, const TaskHead& head, const TokenBatch& tokens,
               const MaskSet& masks) {
  return forward(bb, head, tokens, overrides_from_masks(bb, masks));
}

}  // namespace maskroute
