#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "maskroute/tensor.hpp"

namespace maskroute {

/// Gradient buffer handed to a backward rule, one per parent. An empty span
/// means that parent does not require a gradient and must be skipped.
using GradSpan = std::span<double>;

/// Receives the op's output values and the gradient w.r.t. them, and
/// accumulates (never assigns) into the parent gradient buffers.
using BackwardFn = std::function<void(std::span<const double> out, std::span<const double> out_grad,
                                      std::span<const GradSpan> parent_grads)>;

/// Records operations for reverse-mode differentiation.
///
/// Constructing a Tape makes it the active tape of the calling thread until
/// it is destroyed; the previously active tape (if any) is restored then.
/// Operations executed without an active tape are not recorded.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() noexcept;

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule that is
  /// reachable from `loss`, in reverse recording order. A tape can be
  /// differentiated once.
  void backward(const Tensor& loss);

  struct Node {
    std::shared_ptr<detail::TensorImpl> out;
    std::vector<std::shared_ptr<detail::TensorImpl>> parents;
    BackwardFn backward;
  };

 private:
  friend Tensor record_op(Shape, std::vector<double>, const std::vector<Tensor>&, BackwardFn);

  std::vector<Node> nodes_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
};

/// Wraps freshly computed output data into a tensor and, when a tape is
/// active and any parent requires a gradient, records `backward` for it.
/// This is the extension point for operations defined outside ops.hpp.
Tensor record_op(Shape shape, std::vector<double> data, const std::vector<Tensor>& parents,
                 BackwardFn backward);

/// Differentiates `loss` on the active tape.
void backward(const Tensor& loss);

}  // namespace maskroute
