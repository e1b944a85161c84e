#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "couple/datakit/catalog.hpp"
#include "couple/numerics/tape.hpp"

namespace couple::encoder {

using numerics::Var;

// Padded block of item sequences. Rows are left-aligned: positions
// [0, length_b) hold items, the rest are padding with tag id 0 and mask 0.
struct SequenceBatch {
  std::size_t batch = 0;   // B
  std::size_t length = 0;  // l
  std::size_t tags = 0;    // n
  std::vector<std::size_t> tag_ids;     // B*l*n
  std::vector<std::uint8_t> tag_mask;   // B*l*n
  std::vector<std::uint8_t> item_mask;  // B*l
  std::vector<std::size_t> domain_ids;  // B*l

  // Throws ValidationError when sizes disagree, a row has no items, masks are
  // not left-aligned, or a live item has no live tag.
  void validate() const;
  std::size_t row_length(std::size_t b) const;
};

// Each history keeps its most recent `length` items; each item its first
// `tags` tags. Empty histories are rejected.
SequenceBatch make_sequence_batch(const datakit::ItemCatalog& catalog,
                                  const std::vector<std::vector<std::size_t>>& histories,
                                  std::size_t length, std::size_t tags);

// One item per row (l = 1).
SequenceBatch make_item_batch(const datakit::ItemCatalog& catalog,
                              const std::vector<std::size_t>& items, std::size_t tags);

struct EmbeddingVars {
  Var tag_table;     // N x d
  Var domain_table;  // Q x d
};

// Mean of the live tag embeddings of every position, divided by the live tag
// count; with `training` set the item's domain embedding is added. Padding
// positions come out as zero (or the domain-0 row when training).
// Returns [B, l, d].
Var embed_items(const EmbeddingVars& tables, const SequenceBatch& batch, bool training);

struct AttentionVars {
  std::vector<Var> query, key, value;  // one d x d matrix per head
  Var ln_gain, ln_bias;                // d
  Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;  // d x d, d, d x d, d
};

inline constexpr double kLayerNormEps = 1e-6;

// One self-attention block over the item embeddings x [B, l, d]. Each head
// has full-width projections; attention is causal and ignores padding. For
// each head the state at the last live position goes through residual +
// layer norm, then a ReLU feed-forward layer with residual.
// Returns [B, m, d].
Var encode_history(const AttentionVars& attn, const Var& x, const SequenceBatch& batch);

// Learned convex fusion of m vectors per row: scores e_k^T M mean(e), softmax
// weights, weighted sum. vectors [B, m, d] -> [B, d].
Var weighted_aggregate(const Var& vectors, const Var& m);

// Same fusion over a list of [B, d] branch vectors.
Var weighted_aggregate(const std::vector<Var>& branches, const Var& m);

// Frequency encoder: every live tag position i of the flattened l*n axis gets
// h_i = tanh(W e_i + b); attention weights are the softmax over live
// positions of history . h_i; the output is sum_i a_i e_i. history [B, d].
Var encode_content(const Var& tag_table, const Var& freq_w, const Var& freq_b,
                   const SequenceBatch& batch, const Var& history);

}  // namespace couple::encoder
