#include "couple/model/model.hpp"

#include <algorithm>
#include <numeric>

#include "couple/errors.hpp"
#include "couple/memtree/memtree.hpp"

namespace couple::model {

using encoder::SequenceBatch;
using numerics::Tape;

UserOutputs user_forward(const ModelConfig& config, const ModelVars& vars, const SequenceBatch& batch,
                         const TrainContext* train) {
  batch.validate();
  if (batch.length > config.max_len) throw ValidationError("user_forward: batch length exceeds max_len");
  Var x = encoder::embed_items(vars.embedding, batch, train != nullptr);
  if (vars.positions) {
    std::vector<std::size_t> pos(batch.length);
    std::iota(pos.begin(), pos.end(), 0);
    x = add(x, gather_rows(*vars.positions, pos, {batch.length}));
  }
  UserOutputs out;
  out.history = encoder::weighted_aggregate(encoder::encode_history(vars.attention, x, batch), vars.wa_heads);
  std::vector<Var> branches{out.history};

  if (config.use_content) {
    out.content = encoder::encode_content(vars.embedding.tag_table, *vars.freq_w, *vars.freq_b, batch,
                                          out.history);
    branches.push_back(*out.content);
  }
  if (config.use_group) {
    const auto weights = memtree::propagate_weights(config.tree, vars.tree, out.history);
    const Var& leaves = weights.back();
    if (train) {
      const Tensor noise = memtree::gumbel_noise(leaves.value().size(), train->seed, train->step)
                               .reshaped(leaves.shape());
      out.selected = memtree::select_leaves(leaves.value(), &noise, train->tau, config.top_k);
    } else {
      out.selected = memtree::select_leaves(leaves.value(), nullptr, 1.0, config.top_k);
    }
    Var g = memtree::group_representation(leaves, vars.tree.back(), out.selected, config.top_k);
    if (train) g = memtree::dropout(g, config.dropout, train->seed, train->step);
    out.group = g;
    branches.push_back(g);
  }
  out.user = encoder::weighted_aggregate(branches, vars.wa_fusion);
  return out;
}

Var embed_single_items(const ModelVars& vars, const SequenceBatch& items, bool training) {
  if (items.length != 1) throw ValidationError("embed_single_items: expected one item per row");
  const std::size_t d = vars.embedding.tag_table.shape().back();
  return reshape(encoder::embed_items(vars.embedding, items, training), {items.batch, d});
}

Var contrastive_loss(const Var& users, const Var& positives, const Tensor* negatives, double omega,
                     bool in_batch) {
  if (!(omega > 0.0)) throw ValidationError("contrastive_loss: omega must be positive");
  if (users.shape() != positives.shape() || users.shape().size() != 2) {
    throw ShapeError("contrastive_loss: users " + numerics::shape_string(users.shape()) + " vs positives " +
                     numerics::shape_string(positives.shape()));
  }
  const std::size_t B = users.shape()[0], d = users.shape()[1];
  const bool has_queue = negatives != nullptr && negatives->rank() == 2;
  if (!has_queue && !(in_batch && B > 1)) {
    throw ValidationError("contrastive_loss: no negatives (empty queue and in-batch negatives off)");
  }
  Tape& tape = *users.tape();
  const double inv = 1.0 / omega;
  std::vector<Var> parts;
  const Var pos = scale(mean_lastdim(mul(users, positives)), static_cast<double>(d) * inv);  // [B, 1]
  parts.push_back(pos);
  if (has_queue) {
    if (negatives->dim(1) != d) throw ShapeError("contrastive_loss: negative width differs from d");
    parts.push_back(scale(matmul(users, tape.constant(*negatives), false, true), inv));
  }
  if (in_batch && B > 1) {
    std::vector<std::uint8_t> self(B * B, 0);
    for (std::size_t b = 0; b < B; ++b) self[b * B + b] = 1;
    const Var others = matmul(users, tape.constant(positives.value()), false, true);
    parts.push_back(masked_fill(scale(others, inv), std::move(self), -1e30));
  }
  const Var logits = concat_lastdim(std::span<const Var>(parts));
  const std::size_t width = logits.shape()[1];

  // log-sum-exp around a constant row maximum; the sum is then >= 1.
  Tensor top({B, 1});
  for (std::size_t b = 0; b < B; ++b) {
    auto r = logits.value().row(b);
    top[b] = *std::max_element(r.begin(), r.end());
  }
  const Var shift = tape.constant(std::move(top));
  const Var lse = add(shift, log(scale(mean_lastdim(exp(sub(logits, shift))), static_cast<double>(width))));
  return scale(sum(sub(lse, pos)), 1.0 / static_cast<double>(B));
}

Tensor infer_users(const CoupleParams& params, const datakit::ItemCatalog& catalog,
                   const std::vector<std::vector<std::size_t>>& histories, std::size_t chunk) {
  const ModelConfig& c = params.config();
  if (histories.empty()) throw ValidationError("infer_users: no histories");
  Tensor out({histories.size(), c.dim});
  for (std::size_t begin = 0; begin < histories.size(); begin += chunk) {
    const std::size_t end = std::min(histories.size(), begin + chunk);
    const std::vector<std::vector<std::size_t>> part(histories.begin() + static_cast<std::ptrdiff_t>(begin),
                                                     histories.begin() + static_cast<std::ptrdiff_t>(end));
    Tape tape;
    const auto handles = record(tape, params, false);
    const ModelVars vars = bind_vars(params, handles);
    const auto batch = encoder::make_sequence_batch(catalog, part, c.max_len, c.max_tags);
    const Tensor& u = user_forward(c, vars, batch, nullptr).user.value();
    std::copy(u.data().begin(), u.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(begin * c.dim));
  }
  return out;
}

Tensor infer_items(const CoupleParams& params, const datakit::ItemCatalog& catalog,
                   const std::vector<std::size_t>& items) {
  if (items.empty()) throw ValidationError("infer_items: no items");
  Tape tape;
  const auto handles = record(tape, params, false);
  const ModelVars vars = bind_vars(params, handles);
  const auto batch = encoder::make_item_batch(catalog, items, params.config().max_tags);
  return embed_single_items(vars, batch, false).value();
}

std::vector<std::vector<std::pair<std::size_t, double>>> infer_assignments(
    const CoupleParams& params, const datakit::ItemCatalog& catalog,
    const std::vector<std::vector<std::size_t>>& histories) {
  const ModelConfig& c = params.config();
  if (!c.use_group) throw ValidationError("the model was built without the memory tree");
  std::vector<std::vector<std::pair<std::size_t, double>>> out;
  for (std::size_t begin = 0; begin < histories.size(); begin += 256) {
    const std::size_t end = std::min(histories.size(), begin + 256);
    const std::vector<std::vector<std::size_t>> part(histories.begin() + static_cast<std::ptrdiff_t>(begin),
                                                     histories.begin() + static_cast<std::ptrdiff_t>(end));
    Tape tape;
    const auto handles = record(tape, params, false);
    const ModelVars vars = bind_vars(params, handles);
    const auto batch = encoder::make_sequence_batch(catalog, part, c.max_len, c.max_tags);
    const auto fwd = user_forward(c, vars, batch, nullptr);
    const auto weights = memtree::propagate_weights(c.tree, vars.tree, fwd.history);
    const Tensor& leaves = weights.back().value();
    for (std::size_t b = 0; b < part.size(); ++b) {
      const Tensor row(numerics::Shape{leaves.last_dim()},
                       std::vector<double>(leaves.row(b).begin(), leaves.row(b).end()));
      out.push_back(memtree::select_topk(row, nullptr, 1.0, c.top_k));
    }
  }
  return out;
}

}  // namespace couple::model
