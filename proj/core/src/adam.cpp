#include "maskroute/adam.hpp"

#include <cmath>
#include <string>

#include "maskroute/errors.hpp"

namespace maskroute {

AdamState AdamState::for_params(std::span<const Tensor> params, AdamHyper hyper) {
  AdamState s;
  s.hyper = hyper;
  for (const auto& p : params) {
    s.first.emplace_back(p.numel(), 0.0);
    s.second.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> first,
                 std::span<double> second, std::uint64_t step, const AdamHyper& h, double lr) {
  if (grad.size() != param.size() || first.size() != param.size() ||
      second.size() != param.size()) {
    throw ShapeError("adam: parameter of " + std::to_string(param.size()) +
                     " elements with gradient/moments of " + std::to_string(grad.size()) + "/" +
                     std::to_string(first.size()) + "/" + std::to_string(second.size()));
  }
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    first[i] = h.beta1 * first[i] + (1.0 - h.beta1) * g;
    second[i] = h.beta2 * second[i] + (1.0 - h.beta2) * g * g;
    const double m_hat = first[i] / c1;
    const double v_hat = second[i] / c2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + h.eps);
  }
}

void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
  if (params.size() != state.first.size() || params.size() != state.second.size()) {
    throw ShapeError("adam: " + std::to_string(params.size()) + " parameters but state for " +
                     std::to_string(state.first.size()));
  }
  ++state.step;
  std::vector<double> zeros;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    std::span<const double> g = p.grad();
    if (!p.has_grad()) {
      zeros.assign(p.numel(), 0.0);
      g = zeros;
    }
    adam_update(p.mutable_data(), g, state.first[i], state.second[i], state.step, state.hyper,
                lr);
  }
}

}  // namespace maskroute
