#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "couple/numerics/tensor.hpp"

namespace couple::numerics {

// Closed set of differentiable primitives. Everything the model computes is
// expressed with these; reshape only relabels the extents of a row-major
// buffer.
enum class OpKind : std::uint8_t {
  kMatmul,
  kAdd,
  kSub,
  kMulElem,
  kScale,
  kTanh,
  kExp,
  kLog,
  kSoftmaxLastdim,
  kMeanLastdim,
  kSum,
  kConcatLastdim,
  kGatherRows,
  kDot,
  kMaskedFill,
  kReshape,
};

std::string_view op_name(OpKind kind);

struct OpAttrs {
  bool transpose_a = false;  // matmul
  bool transpose_b = false;  // matmul
  double scalar = 0.0;       // scale factor, masked_fill value
  std::size_t segment = 0;   // softmax group width; 0 means the whole last axis
  std::vector<std::size_t> indices;  // gather_rows row ids
  Shape shape;                       // gather_rows index shape, reshape target
  std::vector<std::uint8_t> mask;    // masked_fill: 1 where the value is replaced
};

// Pure evaluation of one primitive. Throws ShapeError / DomainError.
Tensor apply_primitive(OpKind kind, std::span<const Tensor* const> inputs,
                       const OpAttrs& attrs = {});

// Adds this op's vector-Jacobian product into grad_inputs[i] for every
// non-null slot.
void primitive_vjp(OpKind kind, std::span<const Tensor* const> inputs,
                   const Tensor& output, const Tensor& grad_output,
                   const OpAttrs& attrs, std::span<Tensor* const> grad_inputs);

using NodeId = std::size_t;

class Tape;

// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  NodeId id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

class Tape {
 public:
  struct Node {
    bool is_input = false;
    bool requires_grad = false;
    OpKind kind = OpKind::kAdd;
    std::vector<NodeId> inputs;
    OpAttrs attrs;
    Tensor value;
  };

  // Differentiable input (a parameter).
  Var leaf(Tensor value);
  // Non-differentiable input (data, masks, detached vectors).
  Var constant(Tensor value);
  Var apply(OpKind kind, std::span<const Var> inputs, OpAttrs attrs = {});

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }

  // Recomputes every op node from the recorded inputs.
  std::vector<Tensor> replay() const;

 private:
  std::vector<Node> nodes_;
};

// dLoss/dLeaf for every differentiable leaf on the tape; unreachable leaves
// map to zeros.
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<Tensor> grads, std::vector<bool> present)
      : grads_(std::move(grads)), present_(std::move(present)) {}

  bool contains(NodeId id) const { return id < present_.size() && present_[id]; }
  const Tensor& of(NodeId id) const;
  const Tensor& of(const Var& v) const { return of(v.id()); }

 private:
  std::vector<Tensor> grads_;
  std::vector<bool> present_;
};

Gradients backward(const Tape& tape, const Var& loss);

// Builders. Every op records onto the tape of its first operand.
Var matmul(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var softmax_lastdim(const Var& a, std::size_t segment = 0);
Var mean_lastdim(const Var& a);
Var sum(const Var& a);
Var concat_lastdim(std::span<const Var> parts);
Var concat_lastdim(std::initializer_list<Var> parts);
Var gather_rows(const Var& table, std::vector<std::size_t> indices, Shape index_shape);
Var dot(const Var& a, const Var& b);
Var masked_fill(const Var& a, std::vector<std::uint8_t> mask, double value);
Var reshape(const Var& a, Shape shape);

// Composites built from the primitives above.
Var relu(const Var& a);
Var sqrt_positive(const Var& a);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps);

}  // namespace couple::numerics
