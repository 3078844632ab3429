// Acceptance run: one PASS/FAIL line per criterion, exit status = number of
// failures. Tolerances and run sizes are pinned below.
//
//   maskroute_acceptance [--cache DIR] [--only 1,5,12]
//
// Pretrained backbones are cached in DIR (they are deterministic, so a cache
// hit changes timing only). Pretraining of the shared 3-task suites is timed
// as a separate setup line; criterion 12 pretrains its own 5-task suites and
// is charged for them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "maskroute/analysis.hpp"
#include "maskroute/checkpoint.hpp"
#include "maskroute/config.hpp"
#include "maskroute/crc32.hpp"
#include "maskroute/errors.hpp"
#include "maskroute/mask_io.hpp"
#include "maskroute/router.hpp"
#include "maskroute/training.hpp"
#include "oracles.hpp"

using namespace maskroute;
namespace fs = std::filesystem;

namespace {

// Criterion 1-3
constexpr std::size_t kGradGraphs = 24;
constexpr double kGradTol = 1e-5;
constexpr std::size_t kTopkVectors = 10000;
constexpr std::size_t kSteLayers = 50;

// Shared desk suite
constexpr std::uint64_t kSuiteSeeds[] = {0, 1, 2};
constexpr std::size_t kPretrainSteps = 6000;

// Criterion 5
constexpr std::size_t kFreezeSteps = 500;
constexpr std::size_t kRouterSteps = 200;

// Criterion 6
constexpr double kChanceTol = 0.03;

// Criterion 7: each mode at its own learning rate, same step budget.
constexpr std::size_t kFinetuneSteps = 600;
constexpr double kMaskLr = 1e-2;
constexpr double kWeightLr = 1e-3;
constexpr double kHeadlineSparsity = 0.1;
constexpr double kHeadlineSlack = 0.02;

// Criterion 9
constexpr double kPruneSparsity = 0.5;
constexpr double kPruneLr = 1e-3;
constexpr double kPruneLossTol = 0.01;

// Criterion 11
constexpr double kAnalysisTol = 1e-12;

// Criterion 12: 5 tasks on a 24-token vocabulary, inventories of 10, neighbour
// overlap 0.9 down to 0.7 (pairwise 0.2-0.9). Run settings were chosen on
// seeds 10-14; the criterion is evaluated on seeds 0-4.
constexpr std::uint64_t kCorrSeeds[] = {0, 1, 2, 3, 4};
constexpr std::size_t kCorrVocab = 24;
constexpr std::size_t kCorrInventory = 10;
constexpr double kCorrOverlapMin = 0.7;
constexpr double kCorrOverlapMax = 0.9;
constexpr double kCorrLr = 3e-3;
constexpr std::size_t kCorrBatch = 64;
constexpr std::size_t kCorrMinPositive = 4;

// Criterion 13
constexpr double kAblationSparsity = 0.1;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path g_cache;

struct Suite {
  std::uint64_t seed = 0;
  GeneratedData data;
  Backbone backbone;
  double pretrain_accuracy = 0.0;
};

Suite load_or_pretrain(const GenSpec& spec, const ModelConfig& mc, const std::string& tag) {
  Suite s{spec.seed, gen_data(spec), build_backbone(mc), 0.0};
  const auto bb_file = g_cache / (tag + ".backbone");
  const auto head_file = g_cache / (tag + ".head");
  if (fs::exists(bb_file) && fs::exists(head_file)) {
    s.backbone = load_backbone(bb_file);
    if (s.backbone.config == mc && s.backbone.frozen()) {
      s.pretrain_accuracy =
          evaluate(s.backbone, load_head(head_file), {}, s.data.pooled.eval).accuracy;
      return s;
    }
  }
  PretrainOptions po;
  po.steps = kPretrainSteps;
  po.seed = spec.seed;
  auto pre = pretrain_surrogate(mc, s.data.pooled, po);
  save_backbone(pre.backbone, bb_file);
  save_head(pre.head, head_file);
  s.backbone = std::move(pre.backbone);
  s.pretrain_accuracy = pre.eval_accuracy;
  return s;
}

std::vector<Suite> g_suites;

const Suite& suite(std::uint64_t seed) {
  for (const auto& s : g_suites)
    if (s.seed == seed) return s;
  GenSpec spec;
  spec.seed = seed;
  ModelConfig mc;
  mc.seed = seed;
  g_suites.push_back(load_or_pretrain(spec, mc, "suite" + std::to_string(seed)));
  return g_suites.back();
}

TaskHead task_head(std::uint64_t seed, const TaskDataset& task) {
  return make_head(ModelConfig{}.d_model, task.n_classes, Rng::derive(seed, task.task_id));
}

TrainConfig finetune_config(TrainMode mode, std::uint64_t seed) {
  TrainConfig c;
  c.mode = mode;
  c.steps = kFinetuneSteps;
  c.eval_interval = kFinetuneSteps;
  c.seed = seed;
  c.peak_lr = mode == TrainMode::kWeightFt ? kWeightLr : kMaskLr;
  c.sparsity = kHeadlineSparsity;
  c.scope = MaskScope::ffn_only();
  c.init = InitScheme::kOrderPreserving;
  return c;
}

std::vector<double> random_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// 1 ----------------------------------------------------------------------
Outcome autodiff() {
  double worst = 0;
  std::set<std::string> ops;
  for (std::size_t i = 0; i < kGradGraphs; ++i) {
    auto g = gradcheck::random_graph(1000 + i, i);
    worst = std::max(worst, gradcheck::check(g.inputs, g.loss).max_rel_error);
    ops.insert(g.stages.begin(), g.stages.end());
  }
  const bool all_ops = ops.size() == gradcheck::stage_names().size();
  return {worst < kGradTol && all_ops,
          fmt("%zu graphs, max rel err %.2e, %zu/%zu stage kinds", kGradGraphs, worst, ops.size(),
              gradcheck::stage_names().size())};
}

// 2 ----------------------------------------------------------------------
Outcome topk_oracle() {
  Rng rng(2024);
  std::size_t mismatches = 0;
  for (std::size_t t = 0; t < kTopkVectors; ++t) {
    const std::size_t n = 1 + rng.below(64);
    std::vector<double> s(n);
    const bool coarse = t % 2 == 0;  // half the vectors are full of ties
    for (auto& x : s) x = coarse ? static_cast<double>(rng.below(5)) : rng.uniform(-1, 1);
    const std::size_t k = rng.below(n + 1);
    mismatches += topk_binarize(s, k) != oracle::topk(s, k);
  }
  return {mismatches == 0, fmt("%zu vectors, %zu mismatches", kTopkVectors, mismatches)};
}

// 3 ----------------------------------------------------------------------
Outcome ste_structure() {
  Rng rng(33);
  double worst = 0;
  std::size_t masked_out = 0, masked_out_updated = 0;
  for (std::size_t t = 0; t < kSteLayers; ++t) {
    const Tensor theta({4, 4}, random_vector(rng, 16));
    Tensor scores({4, 4}, random_vector(rng, 16));
    const Tensor x({5, 4}, random_vector(rng, 20));
    const Tensor b({4}, random_vector(rng, 4));
    const Tensor w2({4, 3}, random_vector(rng, 12));
    const std::vector<int> labels{0, 2, 1, 1, 0};
    // The bias keeps ReLU inputs off the kink when a whole column is masked.
    const auto loss = [&](const Tensor& weff) {
      return cross_entropy(matmul(relu(add_bias(matmul(x, weff), b)), w2), labels);
    };
    scores.set_requires_grad(true);
    std::vector<std::uint8_t> mask;
    {
      Tape tape;
      tape.backward(loss(masked_weight(theta, scores, 6, &mask)));
    }
    Tensor weff = masked_forward_weight(theta, mask).clone();
    std::vector<double> expected(16);
    auto w = weff.mutable_data();
    for (std::size_t i = 0; i < 16; ++i) {
      const double orig = w[i];
      w[i] = orig + 1e-5;
      const double up = loss(weff).item();
      w[i] = orig - 1e-5;
      const double down = loss(weff).item();
      w[i] = orig;
      expected[i] = theta[i] * (up - down) / 2e-5;
    }
    const std::vector<double> got(scores.grad().begin(), scores.grad().end());
    worst = std::max(worst, gradcheck::rel_error(got, expected));
    for (std::size_t i = 0; i < 16; ++i) {
      if (mask[i] || std::abs(expected[i]) < 1e-8) continue;
      ++masked_out;
      masked_out_updated += got[i] != 0.0;
    }
  }
  return {worst < kGradTol && masked_out > 0 && masked_out_updated == masked_out,
          fmt("max rel err %.2e; masked-out elements with gradient %zu/%zu", worst,
              masked_out_updated, masked_out)};
}

// 4 ----------------------------------------------------------------------
Outcome ori_properties() {
  const auto bb = build_backbone(ModelConfig{});
  const auto layers = bb.layer_weights(all_maskable_layers(bb.config));
  const auto ori = init_ori(layers, SparsityBudget(0.1), 4);
  const auto ri = init_random(layers, SparsityBudget(0.1), 4);
  std::size_t bad_rank = 0, bad_multiset = 0, bad_topk = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto s = ori[l].scores.data();
    std::vector<double> scores(s.begin(), s.end()), mag;
    for (const double v : layers[l].weight.data()) mag.push_back(std::abs(v));
    bad_rank += spearman(scores, mag) != 1.0;
    auto a = scores;
    std::vector<double> b(ri[l].scores.data().begin(), ri[l].scores.data().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    bad_multiset += a != b;
    const std::size_t n = scores.size();
    for (const std::size_t k : {std::size_t{0}, n / 10, n / 2, n})
      bad_topk += topk_binarize(scores, k) != topk_binarize(mag, k);
  }
  return {bad_rank + bad_multiset + bad_topk == 0,
          fmt("%zu layers; rank!=1: %zu, multiset: %zu, top-k: %zu", layers.size(), bad_rank,
              bad_multiset, bad_topk)};
}

// 5 ----------------------------------------------------------------------
Outcome freeze_isolation() {
  const auto& s = suite(0);
  const auto before = serialize_backbone(s.backbone);
  auto cfg = finetune_config(TrainMode::kMaskFt, 0);
  cfg.steps = kFreezeSteps;
  cfg.eval_interval = kFreezeSteps;
  train(s.backbone, task_head(0, s.data.tasks[0]), cfg, s.data.tasks[0]);
  const bool frozen_ok = serialize_backbone(s.backbone) == before;

  auto shared = std::make_shared<const Backbone>(s.backbone.frozen_copy());
  MaskRegistry reg(shared);
  cfg.steps = kRouterSteps;
  cfg.eval_interval = kRouterSteps;
  const auto& a_task = s.data.tasks[0];
  const auto& b_task = s.data.tasks[1];
  reg.register_task("A", task_head(0, a_task), cfg, a_task);
  const auto& a = reg.slot("A");
  const auto a_bytes = std::make_tuple(serialize_masks(a.masks), serialize_scores(a.scores),
                                       serialize_head(a.head));
  std::vector<std::size_t> idx(32);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<int> labels;
  const auto batch = make_batch(a_task.eval, idx, labels);
  const auto logits = reg.switch_task("A").forward(batch);
  const auto shared_bytes = serialize_backbone(*shared);

  reg.register_task("B", task_head(0, b_task), cfg, b_task);
  const bool slot_ok = std::make_tuple(serialize_masks(a.masks), serialize_scores(a.scores),
                                       serialize_head(a.head)) == a_bytes;
  const auto after = reg.switch_task("A").forward(batch);
  const bool pred_ok = std::ranges::equal(logits.data(), after.data());
  const bool shared_ok = serialize_backbone(*shared) == shared_bytes;
  return {frozen_ok && slot_ok && pred_ok && shared_ok,
          fmt("backbone after %zu mask steps %s; slot A %s, A logits %s, shared backbone %s",
              kFreezeSteps, frozen_ok ? "identical" : "CHANGED", slot_ok ? "identical" : "CHANGED",
              pred_ok ? "identical" : "CHANGED", shared_ok ? "identical" : "CHANGED")};
}

// 6 ----------------------------------------------------------------------
Outcome zero_information() {
  const auto& s = suite(0);
  bool identical = true;
  std::string accs;
  bool chance_ok = true;
  for (const auto& task : s.data.tasks) {
    const auto head = task_head(0, task);
    auto mask_cfg = finetune_config(TrainMode::kMaskFt, 0);
    mask_cfg.sparsity = 0.0;
    const auto m = train(s.backbone, head, mask_cfg, task);
    const auto h = train(s.backbone, head, finetune_config(TrainMode::kHeadOnly, 0), task);
    identical = identical && serialize_head(m.slot.head) == serialize_head(h.slot.head) &&
                m.final_eval.accuracy == h.final_eval.accuracy &&
                m.final_eval.loss == h.final_eval.loss &&
                predict(s.backbone, m.slot, task.eval) == predict(s.backbone, h.slot, task.eval);

    // Sparsity 1 over every maskable matrix: attention and FFN are both cut.
    auto full = finetune_config(TrainMode::kMaskFt, 0);
    full.sparsity = 1.0;
    full.scope = MaskScope::ffn_and_sa();
    const auto z = train(s.backbone, head, full, task);
    const double chance = 1.0 / static_cast<double>(task.n_classes);
    chance_ok = chance_ok && std::abs(z.final_eval.accuracy - chance) <= kChanceTol;
    accs += fmt(" %s=%.3f", task.task_id.c_str(), z.final_eval.accuracy);
  }
  return {identical && chance_ok,
          fmt("s=0 vs head-only %s; s=1 accuracy%s (chance 0.25 +- %.2f)",
              identical ? "bit-identical" : "DIFFERENT", accs.c_str(), kChanceTol)};
}

// 7 ----------------------------------------------------------------------
Outcome headline() {
  const std::size_t n_tasks = suite(0).data.tasks.size();
  std::vector<double> mask_acc(n_tasks, 0), weight_acc(n_tasks, 0);
  for (const auto seed : kSuiteSeeds) {
    const auto& s = suite(seed);
    const auto weights = s.backbone.trainable_copy();
    for (std::size_t t = 0; t < n_tasks; ++t) {
      const auto& task = s.data.tasks[t];
      const auto head = task_head(seed, task);
      mask_acc[t] += train(s.backbone, head, finetune_config(TrainMode::kMaskFt, seed), task)
                         .final_eval.accuracy / std::size(kSuiteSeeds);
      weight_acc[t] += train(weights, head, finetune_config(TrainMode::kWeightFt, seed), task)
                           .final_eval.accuracy / std::size(kSuiteSeeds);
    }
  }
  bool within = true, any_better = false;
  std::string detail = "3-seed mean mask/weight:";
  for (std::size_t t = 0; t < n_tasks; ++t) {
    within = within && mask_acc[t] >= weight_acc[t] - kHeadlineSlack;
    any_better = any_better || mask_acc[t] >= weight_acc[t];
    detail += fmt(" t%zu %.3f/%.3f", t, mask_acc[t], weight_acc[t]);
  }
  return {within && any_better, detail};
}

// 8 ----------------------------------------------------------------------
Outcome storage() {
  const auto cfg = Config::load(fs::path(MASKROUTE_FIXTURE_DIR) / "wav2vec2_base_counts.cfg");
  std::vector<TaskCounts> tasks;
  for (std::size_t i = 0; i < cfg.get_size("n_tasks", 0); ++i)
    tasks.push_back({"lang" + std::to_string(i), cfg.get_u64("ffn_mask_elements", 0),
                     cfg.get_u64("head_params", 0), 0});
  const auto rep = storage_report(cfg.get_u64("backbone_params", 0), tasks);
  const double overhead = rep.tasks[0].overhead_ratio;
  return {overhead <= 0.063 && rep.multi_task_saving > 0.885,
          fmt("per-task overhead %.4f%% (<= 6.3%%), %zu-task saving %.4f%% (> 88.5%%)",
              100 * overhead, tasks.size(), 100 * rep.multi_task_saving)};
}

// 9 ----------------------------------------------------------------------
Outcome pruning() {
  std::size_t wins = 0;
  double worst_loss = 0;
  std::string detail = "mean over tasks pruned/omp:";
  for (const auto seed : kSuiteSeeds) {
    const auto& s = suite(seed);
    double pruned = 0, omp = 0;
    for (const auto& task : s.data.tasks) {
      auto cfg = finetune_config(TrainMode::kPruneTwoPhase, seed);
      cfg.sparsity = kPruneSparsity;
      cfg.peak_lr = kPruneLr;
      const auto r = prune_two_phase(s.backbone, task_head(seed, task), cfg, task);
      pruned += r.pruned.final_eval.accuracy / s.data.tasks.size();
      omp += r.omp_eval.accuracy / s.data.tasks.size();
    }
    wins += pruned > omp;
    worst_loss = std::max(worst_loss, omp - pruned);
    detail += fmt(" seed%llu %.3f/%.3f", static_cast<unsigned long long>(seed), pruned, omp);
  }
  return {wins >= 2 && worst_loss <= kPruneLossTol, detail + fmt("; wins %zu/3", wins)};
}

// 10 ---------------------------------------------------------------------
Outcome serialization() {
  Rng rng(10);
  const auto layers = all_maskable_layers(ModelConfig{});
  std::size_t round_trip_bad = 0, undetected = 0, flips = 0, size_bad = 0;
  for (int t = 0; t < 100; ++t) {
    MaskSet set;
    const std::size_t count = 1 + rng.below(4);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t n = rng.below(100);
      LayerMask m{layers[rng.below(layers.size())].name(), {n}, std::vector<std::uint8_t>(n)};
      for (auto& b : m.bits) b = rng.below(2);
      set.layers.push_back(std::move(m));
    }
    const auto bytes = serialize_masks(set);
    size_bad += bytes.size() != mask_file_size(set);
    round_trip_bad += !(deserialize_masks(bytes) == set);
    for (std::size_t bit = 0; bit < bytes.size() * 8; ++bit) {
      auto bad = bytes;
      bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      ++flips;
      try {
        deserialize_masks(bad);
        ++undetected;
      } catch (const FormatError&) {
      }
    }
  }
  const std::string check = "123456789";
  const auto crc = crc32(std::span(reinterpret_cast<const std::uint8_t*>(check.data()), 9));
  MaskSet golden;
  golden.layers.push_back({"block0.ffn.w1", {13}, {1, 0, 1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 1}});
  golden.layers.push_back({"block1.sa.wq", {8}, std::vector<std::uint8_t>(8, 1)});
  golden.layers.push_back({"block2.ffn.w2", {3}, std::vector<std::uint8_t>(3, 0)});
  const bool golden_ok =
      serialize_masks(golden) == read_file(fs::path(MASKROUTE_FIXTURE_DIR) / "golden.mask");
  return {round_trip_bad == 0 && size_bad == 0 && undetected == 0 && crc == 0xCBF43926u &&
              golden_ok,
          fmt("round-trip failures %zu, size mismatches %zu, undetected flips %zu/%zu, "
              "crc 0x%08X, golden %s",
              round_trip_bad, size_bad, undetected, flips, crc, golden_ok ? "stable" : "CHANGED")};
}

// 11 ---------------------------------------------------------------------
Outcome analysis_fixtures() {
  using V = std::vector<double>;
  using B = std::vector<std::uint8_t>;
  double err = 0;
  const auto check = [&](double got, double want) { err = std::max(err, std::abs(got - want)); };
  check(binary_cosine(B{1, 1, 0, 0}, B{1, 0, 1, 0}), 0.5);
  check(binary_cosine(B{1, 0, 1}, B{1, 0, 1}), 1.0);
  check(binary_cosine(B{1, 1, 0, 0}, B{0, 0, 1, 1}), 0.0);
  check(pearson(V{1, 2, 3}, V{2, 4, 6}), 1.0);
  check(pearson(V{1, 2, 3}, V{3, 2, 1}), -1.0);
  check(pearson(V{1, 2, 3}, V{1, 3, 2}), 0.5);
  check(spearman(V{1, 2, 3}, V{1, 3, 2}), 0.5);
  check(spearman(V{1, 1, 2}, V{1, 2, 3}), std::sqrt(3.0) / 2);

  // Masks a|b = 2/3, a|c = b|c = 1/3; inventories 3/sqrt(12), 2/sqrt(12), 1/3.
  const auto task = [](std::string id, B bits) {
    TaskMasks t{std::move(id), {}};
    t.masks.layers.push_back({"block0.ffn.w1", {6}, std::move(bits)});
    return t;
  };
  const std::vector<TaskMasks> tasks{task("a", {1, 1, 1, 0, 0, 0}), task("b", {1, 1, 0, 1, 0, 0}),
                                     task("c", {1, 0, 0, 0, 1, 1})};
  const std::vector<InventoryVector> inv{
      {"a", {1, 1, 1, 1, 0}}, {"b", {1, 1, 1, 0, 0}}, {"c", {0, 0, 1, 1, 1}}};
  const auto rep = correlation_report(tasks, inv, 0);
  const double ab = 3 / std::sqrt(12.0), ac = 2 / std::sqrt(12.0), bc = 1.0 / 3;
  const double m = (ab + ac + bc) / 3;
  check(rep.pearson, (2 * ab - ac - bc) / std::sqrt(6.0 * ((ab - m) * (ab - m) +
                                                           (ac - m) * (ac - m) +
                                                           (bc - m) * (bc - m))));
  check(rep.spearman, std::sqrt(3.0) / 2);
  return {err <= kAnalysisTol, fmt("max abs error %.1e over 10 fixtures", err)};
}

// 12 ---------------------------------------------------------------------
Outcome similarity_analogue() {
  std::size_t positive = 0;
  std::string detail = "r per seed:";
  double lo = 1, hi = 0;
  for (const auto seed : kCorrSeeds) {
    GenSpec spec;
    spec.seed = seed;
    spec.n_tasks = 5;
    spec.vocab_size = kCorrVocab;
    spec.inventory_size = kCorrInventory;
    spec.overlap_min = kCorrOverlapMin;
    spec.overlap_max = kCorrOverlapMax;
    ModelConfig mc;
    mc.seed = seed;
    mc.vocab_size = kCorrVocab;
    const auto s = load_or_pretrain(spec, mc, "corr" + std::to_string(seed));
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = i + 1; j < 5; ++j) {
        std::size_t both = 0;
        for (std::size_t v = 0; v < kCorrVocab; ++v)
          both += s.data.inventories[i].bits[v] & s.data.inventories[j].bits[v];
        lo = std::min(lo, static_cast<double>(both) / kCorrInventory);
        hi = std::max(hi, static_cast<double>(both) / kCorrInventory);
      }
    std::vector<TaskMasks> masks;
    for (const auto& task : s.data.tasks) {
      auto cfg = finetune_config(TrainMode::kMaskFt, seed);
      cfg.peak_lr = kCorrLr;
      cfg.batch_size = kCorrBatch;
      // Every task starts from the same head so mask differences come from the data.
      const auto head = make_head(mc.d_model, task.n_classes, seed);
      masks.push_back({task.task_id, train(s.backbone, head, cfg, task).slot.masks});
    }
    const auto rep = correlation_report(masks, s.data.inventories, 0);
    if (g_cache.empty() == false) {
      std::ofstream(g_cache / ("correlation_seed" + std::to_string(seed) + ".csv"))
          << rep.csv() << rep.per_layer_csv();
    }
    positive += rep.pearson > 0;
    detail += fmt(" %.3f", rep.pearson);
  }
  const bool span_ok = lo <= 0.2 + 1e-12 && hi >= 0.9 - 1e-12;
  return {positive >= kCorrMinPositive && span_ok,
          detail + fmt("; positive %zu/5; overlaps span [%.1f, %.1f]", positive, lo, hi)};
}

// 13 ---------------------------------------------------------------------
Outcome scope_ablation() {
  const auto& s = suite(0);
  const std::vector<std::string> scopes{"ffn", "sa", "both", "groups=0010"};
  std::ostringstream csv;
  csv << "scope,task,masked_layers,masked_elements,accuracy,budget_ok\n";
  std::size_t rows = 0, bad = 0;
  for (const auto& scope : scopes) {
    for (const auto& task : s.data.tasks) {
      auto cfg = finetune_config(TrainMode::kMaskFt, 0);
      cfg.scope = MaskScope::parse(scope);
      cfg.sparsity = kAblationSparsity;
      cfg.eval_interval = kFinetuneSteps / 4;
      const auto r = train(s.backbone, task_head(0, task), cfg, task);
      const auto layers = cfg.scope.resolve(s.backbone.config);
      std::vector<std::size_t> expected;
      std::size_t elements = 0;
      for (const auto id : layers) {
        const auto n = s.backbone.weight(id).numel();
        expected.push_back(SparsityBudget(kAblationSparsity).keep_count(n));
        elements += n;
      }
      bool ok = r.slot.masks.layers.size() == layers.size();
      for (const auto& row : r.log) ok = ok && row.popcounts == expected;
      for (std::size_t l = 0; ok && l < layers.size(); ++l)
        ok = r.slot.masks.layers[l].popcount() == expected[l];
      bad += !ok;
      ++rows;
      csv << scope << ',' << task.task_id << ',' << layers.size() << ',' << elements << ','
          << fmt("%.4f", r.final_eval.accuracy) << ',' << (ok ? 1 : 0) << '\n';
    }
  }
  if (!g_cache.empty()) std::ofstream(g_cache / "scope_ablation.csv") << csv.str();
  return {bad == 0 && rows == scopes.size() * s.data.tasks.size(),
          fmt("%zu rows, %zu budget violations", rows, bad)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  g_cache = fs::temp_directory_path() / "maskroute_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--cache" && i + 1 < argc) {
      g_cache = argv[++i];
    } else if (arg == "--only" && i + 1 < argc) {
      for (const auto& item : split_list(argv[++i])) only.insert(std::stoi(item));
    } else {
      std::fprintf(stderr, "usage: %s [--cache DIR] [--only 1,2,...]\n", argv[0]);
      return 2;
    }
  }
  fs::create_directories(g_cache);

  const std::vector<Criterion> criteria{
      {1, "autodiff matches finite differences", 30, autodiff},
      {2, "top-k equals full-sort oracle", 10, topk_oracle},
      {3, "STE score gradient structure", 10, ste_structure},
      {4, "ORI order and multiset properties", 5, ori_properties},
      {5, "freeze and slot isolation", 120, freeze_isolation},
      {6, "zero-information boundaries", 180, zero_information},
      {7, "mask finetune vs weight finetune", 600, headline},
      {8, "storage accounting", 1, storage},
      {9, "two-phase pruning vs one-shot magnitude", 600, pruning},
      {10, "mask file serialization", 10, serialization},
      {11, "analysis fixtures", 1, analysis_fixtures},
      {12, "mask similarity tracks inventory similarity", 900, similarity_analogue},
      {13, "scope ablation sweep", 900, scope_ablation},
  };

  static const std::set<int> needs_suites{5, 6, 7, 9, 13};
  if (std::any_of(criteria.begin(), criteria.end(), [&](const Criterion& c) {
        return (only.empty() || only.count(c.id)) && needs_suites.count(c.id);
      })) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string accs;
    for (const auto seed : kSuiteSeeds) accs += fmt(" %.3f", suite(seed).pretrain_accuracy);
    std::printf("setup: 3 pretrained desk suites (%zu steps), pooled accuracy%s, %.1f s\n",
                kPretrainSteps, accs.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double t = seconds_since(t0);
    const bool in_time = t < c.limit_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("criterion %2d: %s  %s: %s [%.2f s, limit %.0f s%s]\n", c.id,
                pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), t, c.limit_seconds,
                in_time ? "" : ", OVER TIME");
    std::fflush(stdout);
  }
  return failures;
}
