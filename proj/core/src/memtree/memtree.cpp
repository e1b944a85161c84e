#include "couple/memtree/memtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "couple/errors.hpp"
#include "couple/numerics/rng.hpp"
#include "couple/numerics/spectral.hpp"

namespace couple::memtree {

using numerics::make_stream;
using numerics::Shape;
using numerics::Stream;
using numerics::Tape;

void TreeShape::validate() const {
  if (layers.size() < 2) throw ValidationError("memory tree needs at least one layer below the root");
  if (layers.front() != 1) throw ValidationError("memory tree root layer must have size 1");
  for (std::size_t i = 1; i < layers.size(); ++i) {
    if (layers[i] <= layers[i - 1]) throw ValidationError("memory tree layer sizes must strictly increase");
    if (layers[i] % layers[i - 1] != 0) {
      throw ValidationError("memory tree layer " + std::to_string(i) + " size " + std::to_string(layers[i]) +
                            " is not a multiple of " + std::to_string(layers[i - 1]));
    }
  }
}

MemoryTree random_tree(const TreeShape& shape, std::size_t dim, std::uint64_t seed) {
  shape.validate();
  MemoryTree tree;
  tree.shape = shape;
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 1; i < shape.layers.size(); ++i) {
    auto gen = make_stream(seed, Stream::kInit, i);
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor s({shape.layers[i], dim});
    for (double& x : s.data()) x = u(gen);
    tree.slots.push_back(std::move(s));
  }
  return tree;
}

double temperature(const AnnealSchedule& s, std::uint64_t step) {
  const std::uint64_t interval = std::max<std::uint64_t>(s.interval, 1);
  const double t = static_cast<double>(step / interval * interval);
  return std::max(s.floor, s.scale * std::exp(-s.rate * t));
}

std::vector<Var> propagate_weights(const TreeShape& shape, std::span<const Var> slots,
                                   const Var& history) {
  shape.validate();
  if (slots.size() != shape.depth()) throw ValidationError("propagate_weights: slot matrix count mismatch");
  const std::size_t B = history.shape().at(0);
  std::vector<Var> out;
  for (std::size_t i = 1; i <= shape.depth(); ++i) {
    const std::size_t width = shape.layers[i], fan = shape.fanout(i);
    const Var children = softmax_lastdim(matmul(history, slots[i - 1], false, true), fan);
    if (i == 1) {
      out.push_back(children);
      continue;
    }
    const std::size_t parents = shape.layers[i - 1];
    std::vector<std::size_t> parent_of(B * width);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t j = 0; j < width; ++j) parent_of[b * width + j] = b * parents + j / fan;
    }
    const Var inherited = reshape(gather_rows(reshape(out.back(), {B * parents, 1}), parent_of, {B, width}),
                                  {B, width});
    out.push_back(mul(children, inherited));
  }
  return out;
}

std::vector<Tensor> propagate_weights(const MemoryTree& tree, const Tensor& history) {
  Tape tape;
  std::vector<Var> slots;
  for (const auto& s : tree.slots) slots.push_back(tape.constant(s));
  const Var h = tape.constant(history.reshaped({1, history.size()}));
  std::vector<Tensor> out;
  for (const Var& w : propagate_weights(tree.shape, slots, h)) {
    out.push_back(w.value().reshaped({w.value().size()}));
  }
  return out;
}

double gumbel_from_uniform(double u) { return -std::log(-std::log(u)); }

Tensor gumbel_noise(std::size_t count, std::uint64_t seed, std::uint64_t counter) {
  auto gen = make_stream(seed, Stream::kGumbel, counter);
  Tensor g({count});
  for (double& x : g.data()) x = gumbel_from_uniform(numerics::uniform_open(gen));
  return g;
}

Tensor gumbel_relax(const Tensor& weights, const Tensor& noise, double tau) {
  if (weights.size() != noise.size()) throw ShapeError("gumbel_relax: weights and noise sizes differ");
  if (!(tau > 0.0)) throw ValidationError("gumbel_relax: tau must be positive");
  Tensor y(weights.shape());
  const std::size_t width = weights.last_dim();
  for (std::size_t r = 0; r < weights.rows(); ++r) {
    auto w = weights.row(r);
    auto g = noise.row(r);
    auto out = y.row(r);
    // Direct form w^(1/tau) e^(g/tau); the log-domain form takes over when
    // that leaves the representable range.
    double total = 0.0;
    bool ok = true;
    for (std::size_t j = 0; j < width; ++j) {
      out[j] = std::pow(w[j], 1.0 / tau) * std::exp(g[j] / tau);
      ok = ok && std::isfinite(out[j]);
      total += out[j];
    }
    if (!ok || !(total > std::numeric_limits<double>::min()) || !std::isfinite(total)) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < width; ++j) {
        out[j] = (std::log(w[j]) + g[j]) / tau;
        top = std::max(top, out[j]);
      }
      total = 0.0;
      for (std::size_t j = 0; j < width; ++j) {
        out[j] = std::exp(out[j] - top);
        total += out[j];
      }
    }
    // A total within summation rounding of 1 is left alone, so an already
    // normalized input with zero noise at tau = 1 comes back unchanged.
    const double slack = static_cast<double>(width) * std::numeric_limits<double>::epsilon();
    if (std::abs(total - 1.0) > slack) {
      for (std::size_t j = 0; j < width; ++j) out[j] /= total;
    }
  }
  return y;
}

Tensor gumbel_sample(const Tensor& weights, double tau, std::uint64_t seed) {
  return gumbel_relax(weights, gumbel_noise(weights.size(), seed, 0).reshaped(weights.shape()), tau);
}

std::vector<std::size_t> select_leaves(const Tensor& leaf_weights, const Tensor* noise, double tau,
                                       std::size_t k) {
  const std::size_t L = leaf_weights.last_dim(), B = leaf_weights.rows();
  if (k == 0 || k > L) throw ValidationError("select_leaves: K must lie in [1, " + std::to_string(L) + "]");
  if (noise && noise->size() != leaf_weights.size()) throw ShapeError("select_leaves: noise shape mismatch");
  if (noise && !(tau > 0.0)) throw ValidationError("select_leaves: tau must be positive");
  std::vector<std::size_t> out;
  out.reserve(B * k);
  std::vector<std::size_t> order(L);
  std::vector<double> key(L);
  for (std::size_t b = 0; b < B; ++b) {
    auto w = leaf_weights.row(b);
    for (std::size_t j = 0; j < L; ++j) {
      key[j] = noise ? (std::log(w[j]) + (*noise)[b * L + j]) / tau : w[j];
      order[j] = j;
    }
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t c) { return key[a] > key[c] || (key[a] == key[c] && a < c); });
    out.insert(out.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

std::vector<std::pair<std::size_t, double>> select_topk(const Tensor& leaf_weights,
                                                        const Tensor* noise, double tau,
                                                        std::size_t k) {
  const Tensor row = leaf_weights.reshaped({1, leaf_weights.size()});
  const auto idx = select_leaves(row, noise, tau, k);
  double total = 0.0;
  for (auto i : idx) total += row[i];
  std::vector<std::pair<std::size_t, double>> out;
  for (auto i : idx) out.emplace_back(i, k == 1 ? 1.0 : row[i] / total);
  return out;
}

Var group_representation(const Var& leaf_weights, const Var& leaf_slots,
                         const std::vector<std::size_t>& selected, std::size_t k) {
  const std::size_t B = leaf_weights.shape().at(0), L = leaf_weights.shape().at(1);
  const std::size_t d = leaf_slots.shape().at(1);
  if (selected.size() != B * k) throw ShapeError("group_representation: expected B*K selected leaves");
  const Var rows = gather_rows(leaf_slots, selected, {B, k});  // [B, K, d]
  // A single leaf has renormalized weight 1 whatever its raw weight.
  if (k == 1) return reshape(rows, {B, d});
  std::vector<std::size_t> flat(selected.size());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j < k; ++j) flat[b * k + j] = b * L + selected[b * k + j];
  }
  const Var w = reshape(gather_rows(reshape(leaf_weights, {B * L, 1}), flat, {B, k}), {B, 1, k});
  const Var total = scale(mean_lastdim(w), static_cast<double>(k));
  const Var normalized = mul(w, exp(scale(log(total), -1.0)));
  return reshape(matmul(normalized, rows), {B, d});
}

Var dropout(const Var& x, double rate, std::uint64_t seed, std::uint64_t counter) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  auto gen = make_stream(seed, Stream::kDropout, counter);
  Tensor keep(x.shape());
  const double scale_kept = 1.0 / (1.0 - rate);
  for (double& v : keep.data()) v = numerics::uniform_open(gen) < rate ? 0.0 : scale_kept;
  return mul(x, x.tape()->constant(std::move(keep)));
}

Var ortho_penalty(std::span<const Var> slots, double lambda, int iters, std::uint64_t seed,
                  const OrthoDirections* frozen, OrthoDirections* used) {
  if (lambda < 0.0) throw ValidationError("ortho_penalty: lambda must be non-negative");
  if (slots.empty()) throw ValidationError("ortho_penalty: no slot matrices");
  if (frozen && frozen->u.size() != slots.size()) throw ValidationError("ortho_penalty: frozen direction count mismatch");
  Tape& tape = *slots.front().tape();
  if (used) used->u.assign(slots.size(), Tensor());
  if (lambda == 0.0) return tape.constant(Tensor::scalar(0.0));

  std::vector<Var> terms;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const std::size_t d = slots[i].shape().at(1);
    const Var a = sub(matmul(slots[i], slots[i], true, false), tape.constant(Tensor::identity(d)));
    Tensor u;
    if (frozen) {
      u = frozen->u[i];
    } else {
      try {
        u = numerics::power_iterate(a.value(), iters, seed + i).direction;
      } catch (const numerics::DegenerateIterate&) {
        u = Tensor();
      }
    }
    if (used) used->u[i] = u;
    if (u.rank() != 1 || u.size() != d) continue;
    const Var v = matmul(a, tape.constant(u.reshaped({d, 1})));
    const Var sq = dot(v, v);
    if (!(sq.value().item() > 0.0)) continue;
    terms.push_back(sqrt_positive(sq));
  }
  if (terms.empty()) return tape.constant(Tensor::scalar(0.0));
  Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return scale(total, lambda);
}

double ortho_sigma(const Tensor& slots, int iters, std::uint64_t seed) {
  Tape tape;
  const Var s = tape.constant(slots);
  const Var a = sub(matmul(s, s, true, false), tape.constant(Tensor::identity(slots.dim(1))));
  try {
    return numerics::spectral_norm_estimate(a.value(), iters, seed);
  } catch (const numerics::DegenerateIterate&) {
    return 0.0;
  }
}

}  // namespace couple::memtree
