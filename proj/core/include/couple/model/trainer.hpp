#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "couple/datakit/catalog.hpp"
#include "couple/encoder/encoder.hpp"
#include "couple/memtree/memtree.hpp"
#include "couple/model/params.hpp"
#include "couple/model/queue.hpp"
#include "couple/numerics/adam.hpp"

namespace couple::model {

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t epochs = 1;
  std::uint64_t max_steps = 0;  // 0: run all epochs
  double lr = 1e-4;
  double omega = 0.03;
  double lambda = 0.1;
  std::size_t queue_capacity = 2560;
  bool in_batch_negatives = false;
  int power_iters = 2;
  memtree::AnnealSchedule anneal;
  std::uint64_t seed = 42;

  void validate() const;
};

// Next-item pair: up to l preceding items and the item that followed them.
struct TrainingSample {
  std::vector<std::size_t> history;
  std::size_t positive = 0;
};

// Sliding windows over every user's time-ordered training sequence.
std::vector<TrainingSample> make_training_samples(const datakit::InteractionLog& train,
                                                  const datakit::ItemCatalog& catalog,
                                                  std::size_t max_len);

struct StepLoss {
  std::uint64_t step = 0;
  double total = 0.0;
  double contrastive = 0.0;
  double ortho = 0.0;
};

struct LossGraph {
  Var total;
  Var contrastive;
  Var ortho;
  Var positives;  // [B, d] training-mode positive embeddings
};

// Seed of the power-iteration start vectors at a step.
std::uint64_t power_seed(std::uint64_t seed, std::uint64_t step);

// L = L_N + L_O for one batch on parameter handles given in storage order.
// Negatives come from `negatives` (may be null); when there are none and
// in-batch negatives are off, the other rows' positives stand in.
LossGraph build_loss(const CoupleParams& params, std::span<const Var> handles,
                     const encoder::SequenceBatch& history, const encoder::SequenceBatch& positives,
                     const Tensor* negatives, std::uint64_t step, const TrainConfig& config,
                     const memtree::OrthoDirections* frozen = nullptr,
                     memtree::OrthoDirections* used = nullptr);

// Forward, backward, Adam update, then the batch's positive embeddings are
// enqueued.
StepLoss train_step(CoupleParams& params, numerics::AdamState& adam, NegativeQueue& queue,
                    const encoder::SequenceBatch& history, const encoder::SequenceBatch& positives,
                    std::uint64_t step, const TrainConfig& config);

// Epoch loop over a fixed sample list. Each epoch visits the samples in an
// order drawn from (seed, epoch), so the position in the data is a function of
// the step counter alone.
class Trainer {
 public:
  Trainer(const datakit::ItemCatalog& catalog, std::vector<TrainingSample> samples,
          CoupleParams params, TrainConfig config);
  Trainer(const datakit::ItemCatalog& catalog, std::vector<TrainingSample> samples,
          CoupleParams params, TrainConfig config, numerics::AdamState adam, NegativeQueue queue,
          std::uint64_t step);

  std::uint64_t step() const { return step_; }
  std::uint64_t steps_per_epoch() const { return steps_per_epoch_; }
  std::uint64_t total_steps() const;
  bool done() const { return step_ >= total_steps(); }

  StepLoss run_step();
  // Runs until done() or `limit` more steps; the callback sees every step.
  std::vector<StepLoss> run(std::uint64_t limit = UINT64_MAX,
                            const std::function<void(const StepLoss&)>& on_step = {});

  const CoupleParams& params() const { return params_; }
  const numerics::AdamState& adam() const { return adam_; }
  const NegativeQueue& queue() const { return queue_; }
  const TrainConfig& config() const { return config_; }

 private:
  const std::vector<std::size_t>& order_for(std::uint64_t epoch);

  const datakit::ItemCatalog* catalog_;
  std::vector<TrainingSample> samples_;
  CoupleParams params_;
  TrainConfig config_;
  numerics::AdamState adam_;
  NegativeQueue queue_;
  std::uint64_t step_ = 0;
  std::uint64_t steps_per_epoch_ = 0;
  std::uint64_t order_epoch_ = UINT64_MAX;
  std::vector<std::size_t> order_;
};

}  // namespace couple::model
