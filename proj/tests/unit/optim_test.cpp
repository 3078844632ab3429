#include <gtest/gtest.h>

#include <cmath>

#include "maskroute/adam.hpp"
#include "maskroute/errors.hpp"
#include "maskroute/schedule.hpp"

using namespace maskroute;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST(Schedule, DefaultClosedForm) {
  const TriStageSchedule s;
  const std::size_t total = 1001;  // step axis [0, 1000]
  const double peak = 5e-5;
  EXPECT_LT(rel(lr_at_step(s, peak, 0, total), 5e-7), 1e-12);
  EXPECT_LT(rel(lr_at_step(s, peak, 100, total), 5e-5), 1e-12);
  EXPECT_LT(rel(lr_at_step(s, peak, 300, total), 5e-5), 1e-12);
  EXPECT_LT(rel(lr_at_step(s, peak, 500, total), 5e-5), 1e-12);
  EXPECT_LT(rel(lr_at_step(s, peak, 1000, total), 5e-7), 1e-12);
  // Halfway through warmup and decay.
  EXPECT_LT(rel(lr_at_step(s, peak, 50, total), 0.5 * (5e-7 + 5e-5)), 1e-12);
  EXPECT_LT(rel(lr_at_step(s, peak, 750, total), 5e-5 * std::sqrt(0.01)), 1e-12);
  EXPECT_THROW(lr_at_step(s, peak, total, total), ContractError);
}

TEST(Schedule, EmptyWarmupStartsAtPeak) {
  TriStageSchedule s;
  s.warmup_frac = 0.0;
  s.hold_frac = 0.5;
  EXPECT_EQ(lr_at_step(s, 1e-3, 0, 200), 1e-3);
}

TEST(Schedule, ShapeIsMonotoneAndContinuous) {
  const TriStageSchedule s;
  const std::size_t total = 2000;
  double prev = 0;
  for (std::size_t i = 0; i < total; ++i) {
    const double lr = lr_at_step(s, 1.0, i, total);
    const double t = static_cast<double>(i) / (total - 1);
    if (t <= 0.1) EXPECT_GE(lr, prev);
    if (t >= 0.5 && i > 0) EXPECT_LE(lr, prev);
    if (i > 0) EXPECT_LT(std::abs(lr - prev), 0.02);  // no jumps at boundaries
    prev = lr;
  }
}

TEST(Schedule, Validation) {
  TriStageSchedule s;
  s.hold_frac = 0.5;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.final_scale = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_NO_THROW(TriStageSchedule{}.validate());
}

TEST(Adam, FirstStepClosedForm) {
  Tensor p({3}, 0.0);
  p.mutable_grad();
  for (auto& g : p.mutable_grad()) g = 1.0;
  std::vector<Tensor> params{p};
  auto state = AdamState::for_params(params);
  adam_step(params, state, 1e-3);
  EXPECT_EQ(state.step, 1u);
  for (double v : p.data()) EXPECT_NEAR(v, -1e-3 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Tensor p({2}, std::vector<double>{0.5, -0.5});
  std::vector<Tensor> params{p};
  auto state = AdamState::for_params(params);
  adam_step(params, state, 1e-2);
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], -0.5);
}

TEST(Adam, DeterministicTrajectory) {
  const auto run = [] {
    Tensor p({4}, std::vector<double>{1, -2, 3, -4});
    std::vector<Tensor> params{p};
    auto state = AdamState::for_params(params);
    for (int i = 0; i < 50; ++i) {
      auto g = p.mutable_grad();
      for (std::size_t j = 0; j < 4; ++j) g[j] = 2 * p[j] + std::sin(i + j);
      adam_step(params, state, 1e-2);
    }
    return std::vector<double>(p.data().begin(), p.data().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ShapeMismatchThrows) {
  std::vector<Tensor> params{Tensor({2})};
  auto state = AdamState::for_params(params);
  std::vector<Tensor> other{Tensor({3})};
  EXPECT_THROW(adam_step(other, state, 1e-3), ShapeError);
}
