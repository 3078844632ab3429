#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "maskroute/analysis.hpp"
#include "maskroute/errors.hpp"
#include "maskroute/masking.hpp"
#include "maskroute/ops.hpp"
#include "oracles.hpp"

using namespace maskroute;

namespace {

using Bits = std::vector<std::uint8_t>;

std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -1, double hi = 1) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST(TopK, Examples) {
  const std::vector<double> s{0.3, -0.1, 0.5, 0.2};
  EXPECT_EQ(topk_binarize(s, 2), (Bits{1, 0, 1, 0}));
  EXPECT_EQ(topk_binarize(s, 0), (Bits{0, 0, 0, 0}));
  EXPECT_EQ(topk_binarize(s, 4), (Bits{1, 1, 1, 1}));
  const std::vector<double> tie{0.5, 0.5, 0.1};
  EXPECT_EQ(topk_binarize(tie, 1), (Bits{1, 0, 0}));
  EXPECT_THROW(topk_binarize(s, 5), BudgetError);
}

TEST(TopK, MatchesStableSortOracle) {
  Rng rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<double> s(n);
    // Coarse values so ties are common.
    for (auto& x : s) x = static_cast<double>(rng.below(6)) - 2.0;
    const std::size_t k = rng.below(n + 1);
    EXPECT_EQ(topk_binarize(s, k), oracle::topk(s, k));
  }
}

TEST(SparsityBudget, KeepCountRoundsPerLayer) {
  EXPECT_EQ(SparsityBudget(0.0).keep_count(4096), 4096u);
  EXPECT_EQ(SparsityBudget(1.0).keep_count(4096), 0u);
  EXPECT_EQ(SparsityBudget(0.1).keep_count(4096), 3686u);  // 3686.4
  EXPECT_EQ(SparsityBudget(0.5).keep_count(5), 3u);        // 2.5 rounds half away from zero
  EXPECT_THROW(SparsityBudget(1.5), BudgetError);
  EXPECT_THROW(SparsityBudget(-0.1), BudgetError);
}

TEST(MaskedForward, Examples) {
  const Tensor theta({1, 2}, {2, -3});
  const Bits keep{1, 0};
  const auto w = masked_forward_weight(theta, keep);
  EXPECT_EQ(w[0], 2);
  EXPECT_EQ(w[1], 0);
  const Bits ones{1, 1}, zeros{0, 0};
  EXPECT_EQ(masked_forward_weight(theta, ones)[1], -3);
  EXPECT_EQ(masked_forward_weight(theta, zeros)[0], 0);
  const Bits wrong{1};
  EXPECT_THROW(masked_forward_weight(theta, wrong), MaskError);
}

TEST(Ste, Examples) {
  const std::vector<double> theta{2, -3}, up{0.1, 0.4};
  const auto g = ste_score_gradient(up, theta);
  EXPECT_NEAR(g[0], 0.2, 1e-15);
  EXPECT_NEAR(g[1], -1.2, 1e-15);
  const std::vector<double> zero{0, 0};
  EXPECT_EQ(ste_score_gradient(up, zero), zero);
}

TEST(Ste, ScoreGradientEqualsThetaTimesEffectiveWeightGradient) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor theta({4, 4}, random_vector(rng, 16));
    Tensor scores({4, 4}, random_vector(rng, 16));
    const Tensor x({3, 4}, random_vector(rng, 12));
    const std::vector<int> labels{0, 3, 1};
    const std::size_t keep = 8;
    scores.set_requires_grad(true);
    Bits mask;
    {
      Tape tape;
      tape.backward(cross_entropy(matmul(x, masked_weight(theta, scores, keep, &mask)), labels));
    }
    EXPECT_EQ(std::accumulate(mask.begin(), mask.end(), 0u), keep);

    std::vector<Tensor> weff{masked_forward_weight(theta, mask)};
    weff[0] = weff[0].clone();
    const gradcheck::LossFn f = [&](const std::vector<Tensor>& in) {
      return cross_entropy(matmul(x, in[0]), labels);
    };
    std::vector<double> fd(16);
    auto w = weff[0].mutable_data();
    for (std::size_t i = 0; i < 16; ++i) {
      const double orig = w[i];
      w[i] = orig + 1e-5;
      const double up = f(weff).item();
      w[i] = orig - 1e-5;
      const double down = f(weff).item();
      w[i] = orig;
      fd[i] = (up - down) / 2e-5 * theta[i];
    }
    const std::vector<double> analytic(scores.grad().begin(), scores.grad().end());
    EXPECT_LT(gradcheck::rel_error(analytic, fd), 1e-5);
    for (std::size_t i = 0; i < 16; ++i)
      if (!mask[i] && theta[i] != 0.0 && fd[i] != 0.0) EXPECT_NE(analytic[i], 0.0) << i;
  }
}

TEST(Ste, ThetaReceivesNoGradient) {
  const Tensor theta({2, 2}, {1, 2, 3, 4});
  Tensor scores({2, 2}, {0.1, 0.2, 0.3, 0.4});
  scores.set_requires_grad(true);
  {
    Tape tape;
    tape.backward(sum(masked_weight(theta, scores, 2)));
  }
  EXPECT_FALSE(theta.has_grad());
  // Every element, kept or not, gets d(sum)/dW_eff * theta = theta.
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(scores.grad()[i], theta[i]);
}

TEST(InitRandom, DeterministicAndFanInScaled) {
  const std::vector<LayerWeight> layers{
      {{0, LayerKind::kFfnIn}, Tensor({32, 128}, 0.1)},
      {{0, LayerKind::kFfnOut}, Tensor({128, 32}, 0.1)}};
  const SparsityBudget budget(0.1);
  const auto a = init_random(layers, budget, 3);
  const auto b = init_random(layers, budget, 3);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_TRUE(std::ranges::equal(a[l].scores.data(), b[l].scores.data()));
    EXPECT_EQ(a[l].keep, budget.keep_count(4096));
  }
  const auto max_abs = [](const Tensor& t) {
    double m = 0;
    for (double v : t.data()) m = std::max(m, std::abs(v));
    return m;
  };
  EXPECT_LE(max_abs(a[0].scores), 1.0 / std::sqrt(32.0));
  EXPECT_LE(max_abs(a[1].scores), 1.0 / std::sqrt(128.0));
  EXPECT_GT(max_abs(a[0].scores), 1.0 / std::sqrt(128.0));
}

TEST(InitRandom, MeanWithinThreeStandardErrors) {
  Rng rng(99);
  const auto draws = random_scores({100, 1000}, rng);
  ASSERT_EQ(draws.size(), 100000u);
  const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / draws.size();
  const double bound = 0.1;  // 1/sqrt(100)
  const double se = bound / std::sqrt(3.0) / std::sqrt(100000.0);
  EXPECT_LT(std::abs(mean), 3 * se);
}

TEST(InitWmi, ScoresAreMagnitudes) {
  const std::vector<LayerWeight> layers{{{0, LayerKind::kFfnIn}, Tensor({3}, {-0.9, 0.1, 0.5})}};
  const auto s = init_wmi(layers, SparsityBudget(0.0));
  EXPECT_EQ(s[0].scores[0], 0.9);
  EXPECT_EQ(s[0].scores[1], 0.1);
  EXPECT_EQ(s[0].scores[2], 0.5);

  const std::vector<LayerWeight> flat{{{0, LayerKind::kFfnIn}, Tensor({5}, 0.3)}};
  const auto tied = init_wmi(flat, SparsityBudget(0.6));
  EXPECT_EQ(binarize(tied).layers[0].bits, (Bits{1, 1, 0, 0, 0}));
}

TEST(InitOri, HandExample) {
  const std::vector<double> mags{0.1, 0.9, 0.5};
  EXPECT_EQ(ori_assign(mags, {0.2, 0.7, 0.4}), (std::vector<double>{0.2, 0.7, 0.4}));
  EXPECT_EQ(ori_assign(mags, {0.7, 0.4, 0.2}), (std::vector<double>{0.2, 0.7, 0.4}));
}

TEST(InitOri, OrderMultisetAndTopkProperties) {
  Rng wrng(8);
  std::vector<LayerWeight> layers;
  for (std::size_t i = 0; i < 3; ++i) {
    auto v = random_vector(wrng, 6 * 10);
    v[5] = v[7];  // a magnitude tie
    layers.push_back({{i, LayerKind::kFfnIn}, Tensor({6, 10}, v)});
  }
  const auto ori = init_ori(layers, SparsityBudget(0.3), 17);
  const auto ri = init_random(layers, SparsityBudget(0.3), 17);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto s = ori[l].scores.data();
    std::vector<double> mag;
    for (double w : layers[l].weight.data()) mag.push_back(std::abs(w));
    std::vector<double> a(s.begin(), s.end()), b(ri[l].scores.data().begin(), ri[l].scores.data().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
    for (const std::size_t k : {std::size_t{0}, std::size_t{6}, std::size_t{30}, std::size_t{60}})
      EXPECT_EQ(topk_binarize(s, k), topk_binarize(mag, k)) << "k=" << k;
    mag[5] += 1e-9;  // rank the tie the way ORI broke it
    EXPECT_EQ(spearman(std::vector<double>(s.begin(), s.end()), mag), 1.0);
  }
}

TEST(Scope, ParseAndResolve) {
  ModelConfig cfg;  // 4 blocks
  EXPECT_EQ(MaskScope::parse("ffn").resolve(cfg).size(), 8u);
  EXPECT_EQ(MaskScope::parse("sa").resolve(cfg).size(), 16u);
  EXPECT_EQ(MaskScope::parse("both").resolve(cfg).size(), 24u);
  const auto g = MaskScope::parse("groups=0010").resolve(cfg);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].name(), "block2.ffn.w1");
  EXPECT_EQ(g[1].name(), "block2.ffn.w2");
  EXPECT_EQ(MaskScope::parse("groups=0010").to_string(), "groups=0010");
  EXPECT_THROW(MaskScope::parse("groups=001").resolve(cfg), ConfigError);
  EXPECT_THROW(MaskScope::parse("attention"), ConfigError);
}

TEST(Scope, BlockGroupsRoundBlocksPerGroup) {
  EXPECT_EQ(blocks_per_group(4), 1u);
  EXPECT_EQ(blocks_per_group(12), 3u);
  EXPECT_EQ(block_group_count(12), 4u);
  EXPECT_EQ(blocks_per_group(2), 1u);
  ModelConfig cfg;
  cfg.n_blocks = 12;
  const auto g = MaskScope::parse("groups=0100").resolve(cfg);
  ASSERT_EQ(g.size(), 6u);
  EXPECT_EQ(g.front().block, 3u);
  EXPECT_EQ(g.back().block, 5u);
}
