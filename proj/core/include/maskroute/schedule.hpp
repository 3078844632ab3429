#pragma once

#include <cstddef>

namespace maskroute {

/// Warmup / hold / decay learning-rate schedule. Warmup is a linear ramp
/// from init_scale * peak to peak, hold is constant at peak, and decay is
/// exponential from peak down to final_scale * peak at the last step.
struct TriStageSchedule {
  double warmup_frac = 0.1;
  double hold_frac = 0.4;
  double decay_frac = 0.5;
  double init_scale = 0.01;
  double final_scale = 0.01;

  /// Throws ConfigError unless the fractions are non-negative and sum to 1
  /// and both scales lie in (0, 1].
  void validate() const;
};

/// Learning rate at `step` of a run of `total` steps. Phase boundaries are
/// placed on the continuous step axis [0, total - 1], so the rate is
/// continuous across them. Throws ContractError unless step < total.
double lr_at_step(const TriStageSchedule& sched, double peak_lr, std::size_t step,
                  std::size_t total);

}  // namespace maskroute
