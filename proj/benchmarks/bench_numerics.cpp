#include <benchmark/benchmark.h>

#include <random>

#include "couple/numerics/spectral.hpp"
#include "couple/numerics/tape.hpp"

using namespace couple::numerics;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& x : t.data()) x = u(gen);
  return t;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor({256, n}, 1);
  const Tensor b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(matmul(tape.constant(a), tape.constant(b)).value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * 256 * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

static void BM_MatmulBackward(benchmark::State& state) {
  const Tensor a = random_tensor({256, 64}, 1);
  const Tensor b = random_tensor({64, 64}, 2);
  for (auto _ : state) {
    Tape tape;
    const Var x = tape.leaf(a);
    const Var w = tape.leaf(b);
    const auto g = backward(tape, sum(tanh(matmul(x, w))));
    benchmark::DoNotOptimize(g.of(w).data().data());
  }
}
BENCHMARK(BM_MatmulBackward);

static void BM_SegmentedSoftmax(benchmark::State& state) {
  const Tensor x = random_tensor({256, 512}, 3);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(softmax_lastdim(tape.constant(x), 16).value().data().data());
  }
}
BENCHMARK(BM_SegmentedSoftmax);

static void BM_SpectralNorm(benchmark::State& state) {
  const Tensor a = random_tensor({64, 64}, 4);
  const auto iters = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(spectral_norm_estimate(a, iters, 7));
}
BENCHMARK(BM_SpectralNorm)->Arg(2)->Arg(100);

BENCHMARK_MAIN();
