#include "couple/numerics/tape.hpp"

#include <string>

#include "couple/errors.hpp"

namespace couple::numerics {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::leaf(Tensor value) {
  Node n;
  n.is_input = true;
  n.requires_grad = true;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.is_input = true;
  n.requires_grad = false;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::apply(OpKind kind, std::span<const Var> inputs, OpAttrs attrs) {
  Node n;
  n.kind = kind;
  std::vector<const Tensor*> values;
  values.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.tape() != this) {
      throw ValidationError(std::string(op_name(kind)) + ": operand recorded on a different tape");
    }
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
    values.push_back(&nodes_[v.id()].value);
  }
  n.value = apply_primitive(kind, values, attrs);
  n.attrs = std::move(attrs);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

std::vector<Tensor> Tape::replay() const {
  std::vector<Tensor> values;
  values.reserve(nodes_.size());
  std::vector<const Tensor*> in;
  for (const Node& n : nodes_) {
    if (n.is_input) {
      values.push_back(n.value);
      continue;
    }
    in.clear();
    for (NodeId id : n.inputs) in.push_back(&values[id]);
    values.push_back(apply_primitive(n.kind, in, n.attrs));
  }
  return values;
}

const Tensor& Gradients::of(NodeId id) const {
  if (!contains(id)) throw ValidationError("no gradient recorded for node " + std::to_string(id));
  return grads_[id];
}

Gradients backward(const Tape& tape, const Var& loss) {
  if (loss.tape() != &tape) throw ValidationError("backward: loss is not on this tape");
  if (!loss.value().is_scalar()) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  }
  const std::size_t n = tape.size();
  std::vector<Tensor> grads(n);
  std::vector<bool> has(n, false);
  const auto ensure = [&](NodeId id) -> Tensor* {
    if (!has[id]) {
      grads[id] = Tensor(tape.value(id).shape());
      has[id] = true;
    }
    return &grads[id];
  };
  *ensure(loss.id()) = Tensor(loss.shape(), 1.0);

  std::vector<const Tensor*> in;
  std::vector<Tensor*> gin;
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    const auto& node = tape.node(id);
    if (node.is_input || !has[id] || !node.requires_grad) continue;
    in.clear();
    gin.clear();
    for (NodeId src : node.inputs) {
      in.push_back(&tape.value(src));
      gin.push_back(tape.node(src).requires_grad ? ensure(src) : nullptr);
    }
    primitive_vjp(node.kind, in, node.value, grads[id], node.attrs, gin);
    if (id != loss.id()) {
      grads[id] = Tensor();
      has[id] = false;
    }
  }

  std::vector<bool> present(n, false);
  for (NodeId id = 0; id < n; ++id) {
    const auto& node = tape.node(id);
    if (node.is_input && node.requires_grad) {
      ensure(id);
      present[id] = true;
    } else {
      grads[id] = Tensor();
    }
  }
  return Gradients(std::move(grads), std::move(present));
}

namespace {
Var record(OpKind kind, std::initializer_list<Var> in, OpAttrs attrs = {}) {
  const Var& first = *in.begin();
  return first.tape()->apply(kind, std::span<const Var>(in.begin(), in.size()), std::move(attrs));
}
}  // namespace

Var matmul(const Var& a, const Var& b, bool transpose_a, bool transpose_b) {
  OpAttrs at;
  at.transpose_a = transpose_a;
  at.transpose_b = transpose_b;
  return record(OpKind::kMatmul, {a, b}, std::move(at));
}

Var add(const Var& a, const Var& b) { return record(OpKind::kAdd, {a, b}); }
Var sub(const Var& a, const Var& b) { return record(OpKind::kSub, {a, b}); }
Var mul(const Var& a, const Var& b) { return record(OpKind::kMulElem, {a, b}); }

Var scale(const Var& a, double factor) {
  OpAttrs at;
  at.scalar = factor;
  return record(OpKind::kScale, {a}, std::move(at));
}

Var tanh(const Var& a) { return record(OpKind::kTanh, {a}); }
Var exp(const Var& a) { return record(OpKind::kExp, {a}); }
Var log(const Var& a) { return record(OpKind::kLog, {a}); }

Var softmax_lastdim(const Var& a, std::size_t segment) {
  OpAttrs at;
  at.segment = segment;
  return record(OpKind::kSoftmaxLastdim, {a}, std::move(at));
}

Var mean_lastdim(const Var& a) { return record(OpKind::kMeanLastdim, {a}); }
Var sum(const Var& a) { return record(OpKind::kSum, {a}); }

Var concat_lastdim(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_lastdim: needs at least one input");
  return parts.front().tape()->apply(OpKind::kConcatLastdim, parts);
}

Var concat_lastdim(std::initializer_list<Var> parts) {
  return concat_lastdim(std::span<const Var>(parts.begin(), parts.size()));
}

Var gather_rows(const Var& table, std::vector<std::size_t> indices, Shape index_shape) {
  OpAttrs at;
  at.indices = std::move(indices);
  at.shape = std::move(index_shape);
  return record(OpKind::kGatherRows, {table}, std::move(at));
}

Var dot(const Var& a, const Var& b) { return record(OpKind::kDot, {a, b}); }

Var masked_fill(const Var& a, std::vector<std::uint8_t> mask, double value) {
  OpAttrs at;
  at.mask = std::move(mask);
  at.scalar = value;
  return record(OpKind::kMaskedFill, {a}, std::move(at));
}

Var reshape(const Var& a, Shape shape) {
  OpAttrs at;
  at.shape = std::move(shape);
  return record(OpKind::kReshape, {a}, std::move(at));
}

Var relu(const Var& a) {
  const Tensor& x = a.value();
  std::vector<std::uint8_t> mask(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) mask[i] = x[i] < 0.0 ? 1 : 0;
  return masked_fill(a, std::move(mask), 0.0);
}

Var sqrt_positive(const Var& a) { return exp(scale(log(a), 0.5)); }

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  Tape& tape = *x.tape();
  const Var centered = sub(x, mean_lastdim(x));
  const Var var = mean_lastdim(mul(centered, centered));
  const Var inv_std = exp(scale(log(add(var, tape.constant(Tensor::scalar(eps)))), -0.5));
  return add(mul(mul(centered, inv_std), gain), bias);
}

}  // namespace couple::numerics
