#include "maskroute/schedule.hpp"

#include <cmath>
#include <string>

#include "maskroute/errors.hpp"

namespace maskroute {

void TriStageSchedule::validate() const {
  if (warmup_frac < 0 || hold_frac < 0 || decay_frac < 0 ||
      std::abs(warmup_frac + hold_frac + decay_frac - 1.0) > 1e-9) {
    throw ConfigError("tri-stage fractions must be non-negative and sum to 1");
  }
  if (!(init_scale > 0 && init_scale <= 1) || !(final_scale > 0 && final_scale <= 1)) {
    throw ConfigError("tri-stage scales must lie in (0, 1]");
  }
}

double lr_at_step(const TriStageSchedule& sched, double peak_lr, std::size_t step,
                  std::size_t total) {
  if (step >= total) {
    throw ContractError("lr_at_step: step " + std::to_string(step) + " not below total " +
                        std::to_string(total));
  }
  if (total == 1) return sched.final_scale * peak_lr;
  const double last = static_cast<double>(total - 1);
  const double t = static_cast<double>(step);
  const double warmup_end = sched.warmup_frac * last;
  const double hold_end = (sched.warmup_frac + sched.hold_frac) * last;

  if (t < warmup_end) {
    return peak_lr * (sched.init_scale + (1.0 - sched.init_scale) * t / warmup_end);
  }
  if (t <= hold_end || hold_end >= last) return peak_lr;
  const double progress = (t - hold_end) / (last - hold_end);
  if (step + 1 == total) return peak_lr * sched.final_scale;
  return peak_lr * std::exp(std::log(sched.final_scale) * progress);
}

}  // namespace maskroute
