#include <benchmark/benchmark.h>

#include "couple/datakit/synth.hpp"
#include "couple/memtree/memtree.hpp"
#include "couple/model/model.hpp"
#include "couple/model/trainer.hpp"

using namespace couple;

namespace {

struct Setup {
  datakit::SyntheticData data;
  std::vector<model::TrainingSample> samples;
};

const Setup& setup() {
  static const Setup s = [] {
    Setup x{datakit::synth_generate({}), {}};
    x.samples = model::make_training_samples(x.data.log, x.data.catalog, 5);
    return x;
  }();
  return s;
}

model::ModelConfig config(std::size_t dim) {
  model::ModelConfig mc;
  mc.dim = dim;
  return mc;
}

}  // namespace

static void BM_PropagateTree(benchmark::State& state) {
  const auto tree = memtree::random_tree(memtree::TreeShape{}, 64, 1);
  numerics::Tensor h({64}, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(memtree::propagate_weights(tree, h).back().data().data());
}
BENCHMARK(BM_PropagateTree);

// One optimizer step at batch 256 including the orthogonality penalty.
static void BM_TrainStep(benchmark::State& state) {
  const Setup& s = setup();
  const auto mc = config(static_cast<std::size_t>(state.range(0)));
  model::TrainConfig tc;
  tc.epochs = 1000;
  model::Trainer trainer(s.data.catalog, s.samples,
                         model::CoupleParams::init(mc, s.data.catalog.tag_count(), s.data.catalog.domain_count(), 1),
                         tc);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.run_step().total);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(tc.batch_size));
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_InferUsers(benchmark::State& state) {
  const Setup& s = setup();
  const auto mc = config(64);
  const auto params = model::CoupleParams::init(mc, s.data.catalog.tag_count(), s.data.catalog.domain_count(), 1);
  std::vector<std::vector<std::size_t>> histories;
  for (std::size_t i = 0; i < 1024; ++i) histories.push_back(s.samples[i].history);
  for (auto _ : state) benchmark::DoNotOptimize(model::infer_users(params, s.data.catalog, histories).data().data());
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_InferUsers)->Unit(benchmark::kMillisecond);
