#include "disco/autodiff.hpp"

#include <algorithm>

namespace disco {

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("use of an unbound Var");
  return tape_->value_of(index_);
}

bool Var::needs_grad() const { return tape_ && tape_->needs_grad(index_); }

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant contains non-finite values");
  nodes_.push_back(Node{std::move(value), Tensor(), false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const std::string& id, Tensor value) {
  if (auto it = params_.find(id); it != params_.end()) return Var(this, it->second);
  if (!value.all_finite()) throw NumericError("parameter '" + id + "' contains non-finite values");
  nodes_.push_back(Node{std::move(value), Tensor(), true, nullptr});
  params_.emplace(id, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, const std::vector<Var>& operands, Backprop backprop) {
  if (!value.all_finite()) throw NumericError("operation produced non-finite values");
  bool needs = false;
  for (const auto& op : operands) {
    check_owned(op, "record");
    needs = needs || nodes_[op.index()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), Tensor(), needs, needs ? std::move(backprop) : nullptr});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_of(const Var& v) {
  Node& node = nodes_[v.index()];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::check_owned(const Var& v, const char* op) const {
  if (!v.valid() || &v.tape() != this || v.index() >= nodes_.size()) {
    throw std::invalid_argument(std::string(op) + ": tensor is not recorded on this tape");
  }
}

Gradients Tape::backward(const Var& loss) {
  check_owned(loss, "backward");
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be a scalar [1], got " + shape_to_string(loss.shape()));
  }
  for (auto& node : nodes_) node.grad = Tensor();
  grad_of(loss)[0] = 1.0;

  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backprop || node.grad.empty()) continue;
    // Copy: the closure may touch other slots of nodes_ while reading this one.
    const Tensor out_grad = node.grad;
    node.backprop(out_grad, *this);
  }

  Gradients grads;
  for (const auto& [id, index] : params_) {
    const Node& node = nodes_[index];
    grads.emplace(id, node.grad.empty() ? Tensor(node.value.shape()) : node.grad);
  }
  return grads;
}

}  // namespace disco
