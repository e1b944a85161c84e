#include "couple/encoder/encoder.hpp"

#include <cmath>
#include <string>

#include "couple/errors.hpp"

namespace couple::encoder {

namespace {

using numerics::Shape;
using numerics::Tensor;

constexpr double kMaskedLogit = -1e30;

std::size_t width(const Var& table) { return table.shape().back(); }

}  // namespace

void SequenceBatch::validate() const {
  const std::size_t cells = batch * length * tags;
  if (batch == 0 || length == 0 || tags == 0) throw ValidationError("sequence batch has a zero extent");
  if (tag_ids.size() != cells || tag_mask.size() != cells || item_mask.size() != batch * length ||
      domain_ids.size() != batch * length) {
    throw ValidationError("sequence batch arrays do not match B=" + std::to_string(batch) +
                          " l=" + std::to_string(length) + " n=" + std::to_string(tags));
  }
  for (std::size_t b = 0; b < batch; ++b) {
    if (!item_mask[b * length]) throw ValidationError("sequence batch row " + std::to_string(b) + " has no items");
    bool live = true;
    for (std::size_t i = 0; i < length; ++i) {
      const std::size_t pos = b * length + i;
      if (item_mask[pos] && !live) {
        throw ValidationError("sequence batch row " + std::to_string(b) + " is not left-aligned");
      }
      live = live && item_mask[pos];
      bool any = false;
      for (std::size_t t = 0; t < tags; ++t) {
        const std::size_t c = pos * tags + t;
        if (tag_mask[c] && !item_mask[pos]) throw ValidationError("live tag on a padding position");
        if (!tag_mask[c] && tag_ids[c] != 0) throw ValidationError("padding tag must carry id 0");
        any = any || tag_mask[c];
      }
      if (item_mask[pos] && !any) {
        throw ValidationError("sequence batch row " + std::to_string(b) + " position " +
                              std::to_string(i) + " has no live tag");
      }
    }
  }
}

std::size_t SequenceBatch::row_length(std::size_t b) const {
  std::size_t n = 0;
  while (n < length && item_mask[b * length + n]) ++n;
  return n;
}

SequenceBatch make_sequence_batch(const datakit::ItemCatalog& catalog,
                                  const std::vector<std::vector<std::size_t>>& histories,
                                  std::size_t length, std::size_t tags) {
  SequenceBatch out;
  out.batch = histories.size();
  out.length = length;
  out.tags = tags;
  out.tag_ids.assign(out.batch * length * tags, 0);
  out.tag_mask.assign(out.batch * length * tags, 0);
  out.item_mask.assign(out.batch * length, 0);
  out.domain_ids.assign(out.batch * length, 0);
  for (std::size_t b = 0; b < histories.size(); ++b) {
    const auto& h = histories[b];
    if (h.empty()) throw ValidationError("cannot encode an empty history");
    const std::size_t keep = std::min(length, h.size());
    const std::size_t first = h.size() - keep;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& item = catalog.item(h[first + i]);
      const std::size_t pos = b * length + i;
      out.item_mask[pos] = 1;
      out.domain_ids[pos] = item.domain;
      const std::size_t nt = std::min(tags, item.tags.size());
      for (std::size_t t = 0; t < nt; ++t) {
        out.tag_ids[pos * tags + t] = item.tags[t];
        out.tag_mask[pos * tags + t] = 1;
      }
    }
  }
  return out;
}

SequenceBatch make_item_batch(const datakit::ItemCatalog& catalog,
                              const std::vector<std::size_t>& items, std::size_t tags) {
  std::vector<std::vector<std::size_t>> rows;
  rows.reserve(items.size());
  for (auto i : items) rows.push_back({i});
  return make_sequence_batch(catalog, rows, 1, tags);
}

Var embed_items(const EmbeddingVars& tables, const SequenceBatch& batch, bool training) {
  const std::size_t B = batch.batch, l = batch.length, n = batch.tags;
  const std::size_t d = width(tables.tag_table);
  Tensor pool({B * l, 1, n});
  for (std::size_t p = 0; p < B * l; ++p) {
    std::size_t live = 0;
    for (std::size_t t = 0; t < n; ++t) live += batch.tag_mask[p * n + t];
    if (live == 0) continue;
    const double w = 1.0 / static_cast<double>(live);
    for (std::size_t t = 0; t < n; ++t) {
      if (batch.tag_mask[p * n + t]) pool[p * n + t] = w;
    }
  }
  const Var tags = gather_rows(tables.tag_table, batch.tag_ids, {B * l, n});
  const Var mean = reshape(matmul(tables.tag_table.tape()->constant(std::move(pool)), tags),
                           {B, l, d});
  if (!training) return mean;
  return add(mean, gather_rows(tables.domain_table, batch.domain_ids, {B, l}));
}

// Only the last live position feeds the block output, so queries are formed
// there alone. Keys at later positions are padding, which makes the causal
// restriction coincide with the padding mask for that query.
Var encode_history(const AttentionVars& attn, const Var& x, const SequenceBatch& batch) {
  const std::size_t B = batch.batch, l = batch.length;
  const std::size_t d = x.shape().back();
  const std::size_t heads = attn.query.size();
  if (heads == 0 || attn.key.size() != heads || attn.value.size() != heads) {
    throw ValidationError("encode_history: query/key/value head counts disagree");
  }
  if (x.shape() != Shape{B, l, d}) {
    throw ShapeError("encode_history: input " + numerics::shape_string(x.shape()) +
                     " does not match the batch");
  }
  std::vector<std::size_t> last(B);
  std::vector<std::uint8_t> key_mask(B * l);
  for (std::size_t b = 0; b < B; ++b) {
    last[b] = b * l + batch.row_length(b) - 1;
    for (std::size_t j = 0; j < l; ++j) key_mask[b * l + j] = batch.item_mask[b * l + j] ? 0 : 1;
  }
  const Var x_last = gather_rows(reshape(x, {B * l, d}), last, {B, 1});
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Var q = matmul(x_last, attn.query[h]);
    const Var k = matmul(x, attn.key[h]);
    const Var v = matmul(x, attn.value[h]);
    const Var scores = masked_fill(scale(matmul(q, k, false, true), inv_sqrt_d), key_mask, kMaskedLogit);
    outs.push_back(matmul(softmax_lastdim(scores), v));
  }
  const Var heads_out = reshape(concat_lastdim(outs), {B, heads, d});
  const Var z = layer_norm(add(heads_out, x_last), attn.ln_gain, attn.ln_bias, kLayerNormEps);
  const Var hidden = relu(add(matmul(z, attn.ffn_w1), attn.ffn_b1));
  return add(z, add(matmul(hidden, attn.ffn_w2), attn.ffn_b2));
}

Var weighted_aggregate(const Var& vectors, const Var& m) {
  if (vectors.shape().size() != 3) {
    throw ShapeError("weighted_aggregate: expected [B, m, d], got " + numerics::shape_string(vectors.shape()));
  }
  const std::size_t B = vectors.shape()[0], k = vectors.shape()[1], d = vectors.shape()[2];
  const Var mean_op = vectors.tape()->constant(Tensor({1, k}, 1.0 / static_cast<double>(k)));
  const Var centre = matmul(mean_op, vectors);          // [B, 1, d]
  const Var mapped = matmul(centre, m, false, true);    // (M e_mean)^T
  const Var scores = reshape(matmul(vectors, mapped, false, true), {B, 1, k});
  return reshape(matmul(softmax_lastdim(scores), vectors), {B, d});
}

Var weighted_aggregate(const std::vector<Var>& branches, const Var& m) {
  if (branches.empty()) throw ValidationError("weighted_aggregate: no inputs");
  const std::size_t B = branches.front().shape()[0], d = branches.front().shape()[1];
  return weighted_aggregate(reshape(concat_lastdim(std::span<const Var>(branches)), {B, branches.size(), d}), m);
}

Var encode_content(const Var& tag_table, const Var& freq_w, const Var& freq_b,
                   const SequenceBatch& batch, const Var& history) {
  const std::size_t B = batch.batch, L = batch.length * batch.tags;
  const std::size_t d = width(tag_table);
  const Var hidden = tanh(add(matmul(tag_table, freq_w, false, true), freq_b));  // [N, d]
  const Var h = gather_rows(hidden, batch.tag_ids, {B, L});
  const Var e = gather_rows(tag_table, batch.tag_ids, {B, L});
  std::vector<std::uint8_t> dead(B * L);
  for (std::size_t i = 0; i < dead.size(); ++i) dead[i] = batch.tag_mask[i] ? 0 : 1;
  const Var logits = masked_fill(matmul(reshape(history, {B, 1, d}), h, false, true), dead, kMaskedLogit);
  return reshape(matmul(softmax_lastdim(logits), e), {B, d});
}

}  // namespace couple::encoder
