#include "couple/model/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "couple/errors.hpp"
#include "couple/model/model.hpp"
#include "couple/numerics/rng.hpp"

namespace couple::model {

using numerics::make_stream;
using numerics::Stream;
using numerics::Tape;

void TrainConfig::validate() const {
  if (batch_size == 0) throw ValidationError("train: batch_size must be positive");
  if (epochs == 0) throw ValidationError("train: epochs must be positive");
  if (!(lr > 0.0)) throw ValidationError("train: lr must be positive");
  if (!(omega > 0.0)) throw ValidationError("train: omega must be positive");
  if (!(lambda >= 0.0)) throw ValidationError("train: lambda must be non-negative");
  if (queue_capacity == 0) throw ValidationError("train: queue_capacity must be positive");
  if (power_iters < 1) throw ValidationError("train: power_iters must be >= 1");
  if (!(anneal.rate >= 0.0) || !(anneal.scale > 0.0) || !(anneal.floor > 0.0)) {
    throw ValidationError("train: invalid temperature schedule");
  }
}

std::vector<TrainingSample> make_training_samples(const datakit::InteractionLog& train,
                                                  const datakit::ItemCatalog& catalog,
                                                  std::size_t max_len) {
  std::vector<TrainingSample> out;
  for (const auto& seq : train.sequences(catalog)) {
    for (std::size_t t = 1; t < seq.size(); ++t) {
      TrainingSample s;
      for (std::size_t i = t > max_len ? t - max_len : 0; i < t; ++i) s.history.push_back(seq[i].item);
      s.positive = seq[t].item;
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::uint64_t power_seed(std::uint64_t seed, std::uint64_t step) {
  return make_stream(seed, Stream::kPower, step)();
}

LossGraph build_loss(const CoupleParams& params, std::span<const Var> handles,
                     const encoder::SequenceBatch& history, const encoder::SequenceBatch& positives,
                     const Tensor* negatives, std::uint64_t step, const TrainConfig& config,
                     const memtree::OrthoDirections* frozen, memtree::OrthoDirections* used) {
  const ModelConfig& mc = params.config();
  const ModelVars vars = bind_vars(params, handles);
  TrainContext ctx{step, config.seed, memtree::temperature(config.anneal, step)};
  const UserOutputs users = user_forward(mc, vars, history, &ctx);
  LossGraph g;
  g.positives = embed_single_items(vars, positives, true);
  const bool in_batch = config.in_batch_negatives || negatives == nullptr;
  g.contrastive = contrastive_loss(users.user, g.positives, negatives, config.omega, in_batch);
  Tape& tape = *handles.front().tape();
  if (mc.use_group && config.lambda > 0.0) {
    g.ortho = memtree::ortho_penalty(vars.tree, config.lambda, config.power_iters,
                                     power_seed(config.seed, step), frozen, used);
  } else {
    g.ortho = tape.constant(Tensor::scalar(0.0));
  }
  g.total = add(g.contrastive, g.ortho);
  return g;
}

StepLoss train_step(CoupleParams& params, numerics::AdamState& adam, NegativeQueue& queue,
                    const encoder::SequenceBatch& history, const encoder::SequenceBatch& positives,
                    std::uint64_t step, const TrainConfig& config) {
  Tape tape;
  const auto handles = record(tape, params, true);
  std::optional<Tensor> negatives;
  if (!queue.empty()) negatives = queue.contents();
  const LossGraph g = build_loss(params, handles, history, positives, negatives ? &*negatives : nullptr,
                                 step, config);
  const auto grads = numerics::backward(tape, g.total);
  std::vector<Tensor> grad_list;
  grad_list.reserve(handles.size());
  for (const Var& h : handles) grad_list.push_back(grads.of(h));
  numerics::adam_step(adam, params.tensors(), grad_list);
  queue.push(g.positives.value());
  return StepLoss{step, g.total.value().item(), g.contrastive.value().item(), g.ortho.value().item()};
}

Trainer::Trainer(const datakit::ItemCatalog& catalog, std::vector<TrainingSample> samples,
                 CoupleParams params, TrainConfig config)
    : Trainer(catalog, std::move(samples), params, config,
              numerics::AdamState::for_params(params.tensors(), config.lr),
              NegativeQueue(config.queue_capacity, params.config().dim), 0) {}

Trainer::Trainer(const datakit::ItemCatalog& catalog, std::vector<TrainingSample> samples,
                 CoupleParams params, TrainConfig config, numerics::AdamState adam, NegativeQueue queue,
                 std::uint64_t step)
    : catalog_(&catalog),
      samples_(std::move(samples)),
      params_(std::move(params)),
      config_(config),
      adam_(std::move(adam)),
      queue_(std::move(queue)),
      step_(step) {
  config_.validate();
  if (samples_.empty()) throw ValidationError("train: no training samples (every user has fewer than 2 events)");
  steps_per_epoch_ = (samples_.size() + config_.batch_size - 1) / config_.batch_size;
}

std::uint64_t Trainer::total_steps() const {
  const std::uint64_t all = steps_per_epoch_ * config_.epochs;
  return config_.max_steps > 0 ? std::min(all, config_.max_steps) : all;
}

const std::vector<std::size_t>& Trainer::order_for(std::uint64_t epoch) {
  if (epoch != order_epoch_) {
    order_.resize(samples_.size());
    std::iota(order_.begin(), order_.end(), 0);
    auto gen = make_stream(config_.seed, Stream::kShuffle, epoch);
    std::shuffle(order_.begin(), order_.end(), gen);
    order_epoch_ = epoch;
  }
  return order_;
}

StepLoss Trainer::run_step() {
  const std::uint64_t epoch = step_ / steps_per_epoch_;
  const std::size_t offset = static_cast<std::size_t>(step_ % steps_per_epoch_) * config_.batch_size;
  const auto& order = order_for(epoch);
  const std::size_t end = std::min(order.size(), offset + config_.batch_size);
  std::vector<std::vector<std::size_t>> histories;
  std::vector<std::size_t> positives;
  for (std::size_t i = offset; i < end; ++i) {
    histories.push_back(samples_[order[i]].history);
    positives.push_back(samples_[order[i]].positive);
  }
  const ModelConfig& mc = params_.config();
  const auto hist = encoder::make_sequence_batch(*catalog_, histories, mc.max_len, mc.max_tags);
  const auto pos = encoder::make_item_batch(*catalog_, positives, mc.max_tags);
  const StepLoss loss = train_step(params_, adam_, queue_, hist, pos, step_, config_);
  ++step_;
  return loss;
}

std::vector<StepLoss> Trainer::run(std::uint64_t limit, const std::function<void(const StepLoss&)>& on_step) {
  std::vector<StepLoss> out;
  for (std::uint64_t i = 0; i < limit && !done(); ++i) {
    out.push_back(run_step());
    if (on_step) on_step(out.back());
  }
  return out;
}

}  // namespace couple::model
