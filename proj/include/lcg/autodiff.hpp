#pragma once

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "lcg/tensor.hpp"

namespace lcg {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Arguments handed to a node's backward rule. `grad_in[i]` is an empty tensor
/// when input i does not require a gradient; otherwise it is zero-filled with
/// the input's shape and the rule accumulates into it.
struct BackwardArgs {
  std::span<const Tensor* const> inputs;
  const Tensor& output;
  const Tensor& grad_out;
  std::span<Tensor> grad_in;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

/// Linear record of primitive applications. Nodes are appended in evaluation
/// order, so every node's inputs precede it. Not thread-safe; use one tape per
/// concurrent forward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Each node is visited once; leaves the
  /// loss does not depend on end with zero gradient.
  void backward(Var loss);
  /// Gradient of the last backward() loss with respect to `v`.
  const Tensor& grad(Var v) const;

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
  std::vector<Tensor> grads_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

// Differentiable primitives. Binary elementwise ops broadcast with
// trailing-dimension alignment.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);
Var pow(Var a, double exponent);
Var sigmoid(Var a);
Var swish(Var a);
Var matmul(Var a, Var b);
Var transpose(Var a);
/// Softmax over the last axis.
Var softmax(Var a);
/// Normalizes each row over the last axis to zero mean and unit variance, no affine terms.
Var layer_norm(Var a, double eps = 1e-5);
Var sum(Var a);
Var mean(Var a);
/// mean(a ⊙ a) as a scalar.
Var mean_square(Var a);
Var broadcast_to(Var a, const Shape& shape);
Var reshape(Var a, const Shape& shape);
/// out.flat[i] = a.flat[index[i]]; the backward rule scatter-adds.
Var gather(Var a, std::vector<std::size_t> index, const Shape& shape);
/// Selects whole rows of a 2-D tensor.
Var gather_rows(Var a, std::span<const std::size_t> rows);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace lcg
