#include "maskroute/autograd.hpp"

#include "maskroute/errors.hpp"

namespace maskroute {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = previous_;
}

Tape* Tape::active() noexcept { return g_active_tape; }

Tensor record_op(Shape shape, std::vector<double> data, const std::vector<Tensor>& parents,
                 BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data));
  Tape* tape = Tape::active();
  if (tape == nullptr || tape->consumed_) return out;

  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;

  auto& impl = *out.impl();
  impl.requires_grad = true;
  impl.is_leaf = false;
  impl.tape = tape;
  impl.node = tape->nodes_.size();

  Tape::Node node;
  node.out = out.impl();
  node.parents.reserve(parents.size());
  for (const auto& p : parents) node.parents.push_back(p.impl());
  node.backward = std::move(backward);
  tape->nodes_.push_back(std::move(node));
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1 || (!loss.shape().empty() && loss.shape() != Shape{1})) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (consumed_) throw ContractError("tape has already been differentiated");
  if (!loss.requires_grad()) {
    throw ContractError("loss does not depend on any tensor that requires a gradient");
  }
  consumed_ = true;

  auto& loss_impl = *loss.impl();
  if (loss_impl.grad.empty()) loss_impl.grad.assign(1, 0.0);
  loss_impl.grad[0] += 1.0;
  if (loss_impl.is_leaf) return;
  if (loss_impl.tape != this) throw ContractError("loss was not recorded on this tape");

  std::vector<GradSpan> spans;
  for (std::size_t i = loss_impl.node + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.out->grad.empty()) continue;  // not reachable from loss
    spans.clear();
    for (const auto& p : node.parents) {
      if (!p->requires_grad) {
        spans.emplace_back();
        continue;
      }
      if (p->grad.empty()) p->grad.assign(p->data.size(), 0.0);
      spans.emplace_back(p->grad);
    }
    node.backward(node.out->data, node.out->grad, spans);
  }
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (tape == nullptr) throw ContractError("backward() called without an active tape");
  tape->backward(loss);
}

}  // namespace maskroute
