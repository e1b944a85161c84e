#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "couple/numerics/tape.hpp"

namespace couple::memtree {

using numerics::Tensor;
using numerics::Var;

// Layer sizes including the implicit root, e.g. {1, 32, 512}. Every size
// divides the next; children of node p in layer i are the contiguous block
// [p * fanout, (p + 1) * fanout) of layer i + 1.
struct TreeShape {
  std::vector<std::size_t> layers{1, 32, 512};

  void validate() const;
  std::size_t depth() const { return layers.size() - 1; }  // slot matrices
  std::size_t leaves() const { return layers.back(); }
  std::size_t fanout(std::size_t layer) const { return layers.at(layer) / layers.at(layer - 1); }
};

// Slot matrices S_1..S_depth, S_i of shape layers[i] x d.
struct MemoryTree {
  TreeShape shape;
  std::vector<Tensor> slots;
  std::size_t dim() const { return slots.front().dim(1); }
};

// Uniform(-1/sqrt(d), 1/sqrt(d)) slots from the given generator seed.
MemoryTree random_tree(const TreeShape& shape, std::size_t dim, std::uint64_t seed);

struct AnnealSchedule {
  double rate = 1e-5;
  std::uint64_t interval = 1000;
  double floor = 1.0;
  double scale = 20.0;
};

// max(floor, scale * exp(-rate * t')) with t' = step rounded down to a
// multiple of the interval.
double temperature(const AnnealSchedule& schedule, std::uint64_t step);

// Child weight = parent weight * softmax over the parent's children of
// history . slot. history [B, d]; returns one [B, layers[i]] weight tensor
// per non-root layer.
std::vector<Var> propagate_weights(const TreeShape& shape, std::span<const Var> slots,
                                   const Var& history);

// Single-history convenience on plain tensors.
std::vector<Tensor> propagate_weights(const MemoryTree& tree, const Tensor& history);

// -log(-log(u)).
double gumbel_from_uniform(double u);

// `count` i.i.d. Gumbel(0, 1) draws from the (seed, counter) noise stream.
Tensor gumbel_noise(std::size_t count, std::uint64_t seed, std::uint64_t counter);

// softmax((log w + g) / tau) over the last axis.
Tensor gumbel_relax(const Tensor& weights, const Tensor& noise, double tau);

// Relaxed sample with noise from the seed's stream (counter 0).
Tensor gumbel_sample(const Tensor& weights, double tau, std::uint64_t seed);

// Indices of the top-K leaves of every row of leaf_weights [B, L], ranked by
// the weights (no noise) or by the relaxed logits (log w + g) / tau. Ties go to
// the lower index. Returns B*K indices, row-major.
std::vector<std::size_t> select_leaves(const Tensor& leaf_weights, const Tensor* noise, double tau,
                                       std::size_t k);

// Selected leaves of one row with their weights renormalized over the set.
std::vector<std::pair<std::size_t, double>> select_topk(const Tensor& leaf_weights,
                                                        const Tensor* noise, double tau,
                                                        std::size_t k);

// sum_k w_k s_k over the selected leaves with weights renormalized to 1.
// leaf_weights [B, L], leaf_slots [L, d], selected B*K indices; returns [B, d].
Var group_representation(const Var& leaf_weights, const Var& leaf_slots,
                         const std::vector<std::size_t>& selected, std::size_t k);

// Inverted dropout with a 0/1 keep mask drawn from the (seed, counter) stream.
Var dropout(const Var& x, double rate, std::uint64_t seed, std::uint64_t counter);

// Power-iteration directions used for the penalty, one per slot matrix. An
// empty tensor marks a degenerate iterate (the term contributes 0).
struct OrthoDirections {
  std::vector<Tensor> u;
};

// lambda * sum_i |(S_i^T S_i - I) u_i| where u_i is the unit iterate of a
// power iteration on S_i^T S_i - I, held constant for differentiation. When
// `frozen` is given its directions are used instead of iterating; `used`
// receives the directions actually applied.
Var ortho_penalty(std::span<const Var> slots, double lambda, int iters, std::uint64_t seed,
                  const OrthoDirections* frozen = nullptr, OrthoDirections* used = nullptr);

// sigma(S^T S - I) by power iteration, for monitoring.
double ortho_sigma(const Tensor& slots, int iters, std::uint64_t seed);

}  // namespace couple::memtree
