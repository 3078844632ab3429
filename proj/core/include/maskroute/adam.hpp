#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "maskroute/tensor.hpp"

namespace maskroute {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers, one pair per parameter tensor.
struct AdamState {
  AdamHyper hyper;
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::uint64_t step = 0;

  static AdamState for_params(std::span<const Tensor> params, AdamHyper hyper = {});
};

/// One bias-corrected Adam update of every parameter from its gradient
/// buffer (a missing buffer counts as zero). Increments state.step once.
/// Throws ShapeError if the moment buffers do not match the parameters.
void adam_step(std::span<Tensor> params, AdamState& state, double lr);

/// The same update on raw buffers; `step` is the 1-based update count.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> first,
                 std::span<double> second, std::uint64_t step, const AdamHyper& hyper, double lr);

}  // namespace maskroute
