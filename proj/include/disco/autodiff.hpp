#pragma once

// Reverse-mode gradient tape.
//
// A Tape owns every value computed during one forward pass. Values enter as
// constants (never differentiated) or named parameters; every op records its
// result with a closure that pushes the result's gradient back onto its
// operands. Nodes are appended in evaluation order, so replaying them from
// the loss backwards is a valid reverse topological order.

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "disco/tensor.hpp"

namespace disco {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }
  bool needs_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

using Gradients = std::map<std::string, Tensor>;

class Tape {
 public:
  /// Receives the gradient of the recorded node and accumulates into operands.
  using Backprop = std::function<void(const Tensor& out_grad, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Registers a trainable tensor under `id`. Registering the same id twice
  /// returns the existing node.
  Var parameter(const std::string& id, Tensor value);
  bool has_parameter(const std::string& id) const { return params_.count(id) != 0; }

  /// Gradient of a single-element `loss` with respect to every parameter on
  /// this tape. Parameters the loss does not depend on get zero gradients.
  Gradients backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

  // Op-implementer interface.
  Var record(Tensor value, const std::vector<Var>& operands, Backprop backprop);
  const Tensor& value_of(std::size_t index) const { return nodes_[index].value; }
  bool needs_grad(std::size_t index) const { return nodes_[index].needs_grad; }
  /// Gradient slot of `v`, zero-initialised on first access.
  Tensor& grad_of(const Var& v);
  void check_owned(const Var& v, const char* op) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Backprop backprop;
  };

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> params_;
};

}  // namespace disco
