#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "couple/datakit/catalog.hpp"
#include "couple/encoder/encoder.hpp"
#include "couple/model/params.hpp"

namespace couple::model {

// Training-mode switches for one forward pass: domain embeddings on, Gumbel
// leaf selection keyed by (seed, step) at temperature tau, dropout on the group
// vector keyed by (seed, step).
struct TrainContext {
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  double tau = 1.0;
};

struct UserOutputs {
  Var user;     // [B, d] fused representation
  Var history;  // [B, d]
  std::optional<Var> content;
  std::optional<Var> group;
  std::vector<std::size_t> selected;  // B*K leaf indices
};

// Passing no context runs inference: tag-only items, deterministic top-K, no
// dropout.
UserOutputs user_forward(const ModelConfig& config, const ModelVars& vars,
                         const encoder::SequenceBatch& batch, const TrainContext* train);

// [B, d] embeddings of a one-item-per-row batch.
Var embed_single_items(const ModelVars& vars, const encoder::SequenceBatch& items, bool training);

// Batch mean of -log softmax of the positive logit against the negatives,
// logits being dot products over omega. `negatives` [F, d] is treated as
// constant; with `in_batch` the other rows' positives (detached) are added as
// negatives. Throws when no negative is available.
Var contrastive_loss(const Var& users, const Var& positives, const Tensor* negatives, double omega,
                     bool in_batch = false);

// Inference-mode user vectors [H, d] for histories, evaluated in chunks.
Tensor infer_users(const CoupleParams& params, const datakit::ItemCatalog& catalog,
                   const std::vector<std::vector<std::size_t>>& histories, std::size_t chunk = 256);

// Tag-only item vectors [I, d].
Tensor infer_items(const CoupleParams& params, const datakit::ItemCatalog& catalog,
                   const std::vector<std::size_t>& items);

// Inference-mode leaf selection (index, renormalized weight) per history.
std::vector<std::vector<std::pair<std::size_t, double>>> infer_assignments(
    const CoupleParams& params, const datakit::ItemCatalog& catalog,
    const std::vector<std::vector<std::size_t>>& histories);

}  // namespace couple::model
