#include "maskroute/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <numeric>
#include <sstream>

#include "maskroute/adam.hpp"
#include "maskroute/autograd.hpp"
#include "maskroute/errors.hpp"
#include "maskroute/ops.hpp"

namespace maskroute {

TrainMode parse_train_mode(std::string_view text) {
  if (text == "weight") return TrainMode::kWeightFt;
  if (text == "mask") return TrainMode::kMaskFt;
  if (text == "head") return TrainMode::kHeadOnly;
  if (text == "prune") return TrainMode::kPruneTwoPhase;
  throw ConfigError("unknown mode '" + std::string(text) + "' (expected weight|mask|head|prune)");
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kWeightFt: return "weight";
    case TrainMode::kMaskFt: return "mask";
    case TrainMode::kHeadOnly: return "head";
    case TrainMode::kPruneTwoPhase: return "prune";
  }
  return "?";
}

InitScheme parse_init_scheme(std::string_view text) {
  if (text == "ri") return InitScheme::kRandom;
  if (text == "wmi") return InitScheme::kMagnitude;
  if (text == "ori") return InitScheme::kOrderPreserving;
  throw ConfigError("unknown init '" + std::string(text) + "' (expected ri|wmi|ori)");
}

std::string to_string(InitScheme scheme) {
  switch (scheme) {
    case InitScheme::kRandom: return "ri";
    case InitScheme::kMagnitude: return "wmi";
    case InitScheme::kOrderPreserving: return "ori";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (steps == 0) throw ConfigError("steps must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(peak_lr > 0.0)) throw ConfigError("peak_lr must be positive");
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) throw ConfigError("sparsity must lie in [0, 1]");
  if (eval_interval == 0) throw ConfigError("eval_interval must be positive");
  schedule.validate();
}

std::uint32_t popcount_checksum(std::span<const std::size_t> popcounts) {
  std::uint32_t h = 2166136261u;
  for (const auto p : popcounts) {
    for (int byte = 0; byte < 8; ++byte) {
      h ^= static_cast<std::uint8_t>(static_cast<std::uint64_t>(p) >> (8 * byte));
      h *= 16777619u;
    }
  }
  return h;
}

std::string metrics_csv(const MetricsLog& log) {
  std::ostringstream os;
  os << "step,lr,loss,accuracy,popcount_checksum\n";
  char buf[160];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9f,%.6f,%08x\n", r.step, r.lr, r.loss, r.accuracy,
                  r.popcount_checksum);
    os << buf;
  }
  return os.str();
}

EvalResult evaluate(const Backbone& backbone, const TaskHead& head,
                    const WeightOverrides& overrides, std::span<const Example> examples,
                    std::size_t batch_size) {
  if (examples.empty()) return {};
  std::size_t correct = 0;
  double loss_total = 0.0;
  std::vector<std::size_t> idx;
  std::vector<int> labels;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t end = std::min(examples.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    labels.clear();
    const TokenBatch batch = make_batch(examples, idx, labels);
    const Tensor logits = forward(backbone, head, batch, overrides);
    loss_total += cross_entropy(logits, labels).item() * static_cast<double>(labels.size());
    const std::size_t c = logits.dim(1);
    const auto z = logits.data();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto row = z.subspan(i * c, c);
      const auto arg = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      if (arg == labels[i]) ++correct;
    }
  }
  const double n = static_cast<double>(examples.size());
  return {static_cast<double>(correct) / n, loss_total / n};
}

namespace {

WeightOverrides slot_overrides(const Backbone& bb, const TrainedTaskSlot& slot) {
  if (slot.masks.layers.empty()) return {};
  return overrides_from_masks(bb, slot.masks);
}

}  // namespace

EvalResult evaluate(const Backbone& shared, const TrainedTaskSlot& slot,
                    std::span<const Example> examples) {
  const Backbone& bb = slot.backbone_for(shared);
  return evaluate(bb, slot.head, slot_overrides(bb, slot), examples);
}

std::vector<int> predict(const Backbone& shared, const TrainedTaskSlot& slot,
                         std::span<const Example> examples) {
  const Backbone& bb = slot.backbone_for(shared);
  const auto overrides = slot_overrides(bb, slot);
  std::vector<int> out;
  std::vector<int> labels;
  std::vector<std::size_t> idx;
  constexpr std::size_t kChunk = 100;
  for (std::size_t start = 0; start < examples.size(); start += kChunk) {
    const std::size_t end = std::min(examples.size(), start + kChunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    labels.clear();
    const Tensor logits = forward(bb, slot.head, make_batch(examples, idx, labels), overrides);
    const std::size_t c = logits.dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto row = logits.data().subspan(i * c, c);
      out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return out;
}

namespace {

ScoreSet initial_scores(const Backbone& bb, const TrainConfig& cfg) {
  const auto layers = bb.layer_weights(cfg.scope.resolve(bb.config));
  const SparsityBudget budget(cfg.sparsity);
  const auto seed = Rng::derive(cfg.seed, "scores");
  switch (cfg.init) {
    case InitScheme::kRandom: return init_random(layers, budget, seed);
    case InitScheme::kMagnitude: return init_wmi(layers, budget);
    case InitScheme::kOrderPreserving: return init_ori(layers, budget, seed);
  }
  throw ConfigError("bad init scheme");
}

std::vector<std::size_t> measured_popcounts(const ScoreSet& scores) {
  std::vector<std::size_t> out;
  for (const auto& ls : scores) {
    const auto bits = topk_binarize(ls.scores.data(), ls.keep);
    out.push_back(static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)));
  }
  return out;
}

WeightOverrides score_overrides(const Backbone& bb, const ScoreSet& scores) {
  WeightOverrides out;
  if (scores.empty()) return out;
  out.resize(bb.config.n_blocks * kLayersPerBlock);
  for (const auto& ls : scores)
    out[ls.layer.index()] = masked_weight(bb.weight(ls.layer), ls.scores, ls.keep);
  return out;
}

WeightOverrides frozen_score_overrides(const Backbone& bb, const ScoreSet& scores) {
  WeightOverrides out;
  if (scores.empty()) return out;
  out.resize(bb.config.n_blocks * kLayersPerBlock);
  for (const auto& ls : scores)
    out[ls.layer.index()] =
        masked_forward_weight(bb.weight(ls.layer), topk_binarize(ls.scores.data(), ls.keep));
  return out;
}

}  // namespace

TrainResult train(const Backbone& backbone, const TaskHead& head, const TrainConfig& cfg,
                  const TaskDataset& data) {
  cfg.validate();
  if (cfg.mode == TrainMode::kPruneTwoPhase) return prune_two_phase(backbone, head, cfg, data).pruned;

  const bool wants_frozen = cfg.mode != TrainMode::kWeightFt;
  if (backbone.frozen() != wants_frozen) {
    throw ContractError(std::string("mode ") + to_string(cfg.mode) + " needs a " +
                        (wants_frozen ? "frozen" : "trainable") + " backbone");
  }
  if (data.train.empty()) throw ConfigError("task " + data.task_id + " has no training examples");
  if (head.n_classes() != data.n_classes) {
    throw ShapeError("head has " + std::to_string(head.n_classes()) + " classes, task " +
                     data.task_id + " has " + std::to_string(data.n_classes));
  }

  TrainResult result;
  auto& slot = result.slot;
  slot.mode = cfg.mode;
  slot.scope = cfg.scope;
  slot.budget = SparsityBudget(cfg.sparsity);
  slot.head = head.clone();
  slot.head.weight.set_requires_grad(true);
  slot.head.bias.set_requires_grad(true);

  std::vector<Tensor> params;
  if (cfg.mode == TrainMode::kWeightFt) {
    slot.weights = backbone.trainable_copy();
    params = slot.weights->parameters();
  } else if (cfg.mode == TrainMode::kMaskFt) {
    slot.scores = initial_scores(backbone, cfg);
    for (const auto& ls : slot.scores) params.push_back(ls.scores);
  }
  params.push_back(slot.head.weight);
  params.push_back(slot.head.bias);

  const Backbone& model = slot.backbone_for(backbone);
  AdamState adam = AdamState::for_params(params);
  BatchSampler sampler(data.train.size(), cfg.batch_size, Rng::derive(cfg.seed, "batches"));
  std::vector<int> labels;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto idx = sampler.next();
    labels.clear();
    const TokenBatch batch = make_batch(data.train, idx, labels);
    const double lr = lr_at_step(cfg.schedule, cfg.peak_lr, step, cfg.steps);
    double loss_value = 0.0;
    {
      Tape tape;
      const Tensor logits = forward(model, slot.head, batch, score_overrides(model, slot.scores));
      const Tensor loss = cross_entropy(logits, labels);
      loss_value = loss.item();
      tape.backward(loss);
    }
    adam_step(params, adam, lr);
    for (auto& p : params) p.zero_grad();

    const bool last = step + 1 == cfg.steps;
    if ((step + 1) % cfg.eval_interval == 0 || last) {
      MetricsRow row;
      row.step = step + 1;
      row.lr = lr;
      row.loss = loss_value;
      const auto eval =
          evaluate(model, slot.head, frozen_score_overrides(model, slot.scores), data.eval);
      row.accuracy = eval.accuracy;
      row.popcounts = measured_popcounts(slot.scores);
      row.popcount_checksum = popcount_checksum(row.popcounts);
      result.log.push_back(std::move(row));
      if (last) result.final_eval = eval;
    }
  }

  for (auto& p : params) p.drop_grad();
  slot.head.weight.set_requires_grad(false);
  slot.head.bias.set_requires_grad(false);
  for (auto& ls : slot.scores) ls.scores.set_requires_grad(false);
  slot.masks = binarize(slot.scores);
  if (slot.weights) slot.weights->freeze();
  return result;
}

MaskSet magnitude_prune_masks(const Backbone& backbone, const MaskScope& scope,
                              const SparsityBudget& budget) {
  return binarize(init_wmi(backbone.layer_weights(scope.resolve(backbone.config)), budget));
}

PruneResult prune_two_phase(const Backbone& backbone, const TaskHead& head,
                            const TrainConfig& cfg, const TaskDataset& data) {
  cfg.validate();
  PruneResult out;

  TrainConfig phase1 = cfg;
  phase1.mode = TrainMode::kWeightFt;
  const Backbone start = backbone.trainable_copy();
  TrainResult tuned = train(start, head, phase1, data);
  const Backbone weights = std::move(*tuned.slot.weights);  // frozen by train()
  out.phase1_eval = tuned.final_eval;

  const MaskScope scope = MaskScope::ffn_and_sa();
  const SparsityBudget budget(cfg.sparsity);
  out.omp_eval = evaluate(weights, tuned.slot.head,
                          overrides_from_masks(weights, magnitude_prune_masks(weights, scope, budget)),
                          data.eval);

  TrainConfig phase2 = cfg;
  phase2.mode = TrainMode::kMaskFt;
  phase2.scope = scope;
  phase2.init = InitScheme::kMagnitude;
  out.pruned = train(weights, tuned.slot.head, phase2, data);
  out.pruned.slot.mode = TrainMode::kPruneTwoPhase;
  out.pruned.slot.weights = weights;
  return out;
}

std::string SweepResult::csv() const {
  std::ostringstream os;
  os << "sparsity,metric,runtime_seconds,is_best\n";
  char buf[128];
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (p.runtime_seconds) {
      std::snprintf(buf, sizeof buf, "%.4f,%.6f,%.3f,%d\n", p.sparsity, p.metric,
                    *p.runtime_seconds, i == best ? 1 : 0);
    } else {
      std::snprintf(buf, sizeof buf, "%.4f,%.6f,NA,%d\n", p.sparsity, p.metric, i == best ? 1 : 0);
    }
    os << buf;
  }
  return os.str();
}

SweepResult sparsity_sweep(const Backbone& backbone, const TaskHead& head,
                           const TrainConfig& cfg_template, const TaskDataset& data,
                           std::span<const double> sparsities, std::size_t jobs, bool timing) {
  if (sparsities.empty()) throw ConfigError("sweep needs at least one sparsity");
  if (cfg_template.mode != TrainMode::kMaskFt) throw ConfigError("sweep runs mask finetuning");
  for (const double s : sparsities) {
    if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("sweep sparsity outside [0, 1]");
  }

  const auto run_point = [&](double s) {
    TrainConfig cfg = cfg_template;
    cfg.sparsity = s;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = train(backbone, head, cfg, data);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    SweepPoint p{s, r.final_eval.accuracy, std::nullopt};
    if (timing) p.runtime_seconds = dt.count();
    return p;
  };

  SweepResult result;
  result.points.resize(sparsities.size());
  jobs = std::max<std::size_t>(1, jobs);
  for (std::size_t start = 0; start < sparsities.size(); start += jobs) {
    std::vector<std::future<SweepPoint>> pending;
    const std::size_t end = std::min(sparsities.size(), start + jobs);
    for (std::size_t i = start; i < end; ++i)
      pending.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                   run_point, sparsities[i]));
    for (std::size_t i = start; i < end; ++i) result.points[i] = pending[i - start].get();
  }
  std::stable_sort(result.points.begin(), result.points.end(),
                   [](const SweepPoint& a, const SweepPoint& b) { return a.sparsity < b.sparsity; });
  for (std::size_t i = 1; i < result.points.size(); ++i)
    if (result.points[i].metric > result.points[result.best].metric) result.best = i;
  return result;
}

PretrainResult pretrain_surrogate(const ModelConfig& cfg, const TaskDataset& pooled,
                                  const PretrainOptions& options) {
  if (options.steps == 0) throw ConfigError("pretraining needs steps > 0");
  if (options.batch_size == 0) throw ConfigError("pretraining needs batch_size > 0");
  if (pooled.train.empty()) throw ConfigError("pretraining data is empty");

  Backbone bb = build_backbone(cfg).trainable_copy();
  TaskHead head = make_head(cfg.d_model, pooled.n_classes, Rng::derive(options.seed, "pretrain"));
  head.weight.set_requires_grad(true);
  head.bias.set_requires_grad(true);

  std::vector<Tensor> params = bb.parameters();
  params.push_back(head.weight);
  params.push_back(head.bias);
  AdamState adam = AdamState::for_params(params);
  BatchSampler sampler(pooled.train.size(), options.batch_size,
                       Rng::derive(options.seed, "pretrain-batches"));
  const TriStageSchedule sched;
  std::vector<int> labels;
  for (std::size_t step = 0; step < options.steps; ++step) {
    const auto idx = sampler.next();
    labels.clear();
    const TokenBatch batch = make_batch(pooled.train, idx, labels);
    {
      Tape tape;
      tape.backward(cross_entropy(forward(bb, head, batch), labels));
    }
    adam_step(params, adam, lr_at_step(sched, options.peak_lr, step, options.steps));
    for (auto& p : params) p.zero_grad();
  }
  for (auto& p : params) p.drop_grad();
  head.weight.set_requires_grad(false);
  head.bias.set_requires_grad(false);
  bb.freeze();

  PretrainResult out{std::move(bb), std::move(head), 0.0};
  const auto& eval_set = pooled.eval.empty() ? pooled.train : pooled.eval;
  out.eval_accuracy = evaluate(out.backbone, out.head, {}, eval_set).accuracy;
  return out;
}

}  // namespace maskroute
