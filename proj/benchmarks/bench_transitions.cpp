#include <benchmark/benchmark.h>

#include <vector>

#include "bilinear/backprop.hpp"
#include "bilinear/model.hpp"
#include "bilinear/rng.hpp"
#include "bilinear/tasks.hpp"
#include "bilinear/tensor.hpp"
#include "bilinear/training.hpp"

using namespace bilinear;

namespace {

TransitionModel bench_model(Variant v, std::size_t hidden) {
  ModelShape s;
  s.variant = v;
  s.hidden = hidden;
  s.input_dim = hidden;
  s.vocab = 7;
  s.classes = 5;
  s.rank = hidden;
  s.block_size = 2;
  Rng rng(7);
  return make_model(s, rng);
}

std::vector<int> bench_tokens(int length) {
  Rng rng(11);
  const auto sample = gen_sample(TaskSpec::mod_add(5, length), length, length, rng);
  return sample.tokens;
}

void BM_Contract(benchmark::State& state) {
  const auto h = std::size_t(state.range(0));
  Rng rng(1);
  const Tensor3 w = uniform_tensor3(h, h, h, 0.01, rng);
  const Vec64 x = uniform_vec(h, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(contract_tensor(w, x.values()));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Contract)->RangeMultiplier(2)->Range(8, 128)->Complexity();

void BM_CpTransition(benchmark::State& state) {
  const auto h = std::size_t(state.range(0));
  Rng rng(2);
  const Mat64 wh1 = uniform_mat(h, h, 0.1, rng);
  const Mat64 wh2 = uniform_mat(h, h, 0.1, rng);
  const Mat64 wx = uniform_mat(h, h, 0.1, rng);
  const Vec64 x = uniform_vec(h, 1.0, rng);
  const Vec64 v = uniform_vec(h, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(cp_transition(wh1, wh2, wx, x.values(), v.values()));
}
BENCHMARK(BM_CpTransition)->RangeMultiplier(2)->Range(8, 128);

template <Variant V>
void BM_Forward(benchmark::State& state) {
  const TransitionModel model = bench_model(V, 32);
  const auto tokens = bench_tokens(int(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward(model, tokens, true).logits);
  state.SetItemsProcessed(state.iterations() * std::int64_t(tokens.size()));
}
BENCHMARK_TEMPLATE(BM_Forward, Variant::FullBilinear)->Arg(100)->Arg(500);
BENCHMARK_TEMPLATE(BM_Forward, Variant::Factored)->Arg(100)->Arg(500);
BENCHMARK_TEMPLATE(BM_Forward, Variant::BlockDiag)->Arg(100)->Arg(500);
BENCHMARK_TEMPLATE(BM_Forward, Variant::R2Rotation)->Arg(100)->Arg(500);
BENCHMARK_TEMPLATE(BM_Forward, Variant::RealDiag)->Arg(100)->Arg(500);
BENCHMARK_TEMPLATE(BM_Forward, Variant::Elman)->Arg(100)->Arg(500);

// One training batch: 64 sequences of 2-10 inputs through the engine.
template <Variant V>
void BM_TrainBatch(benchmark::State& state) {
  const TransitionModel model = bench_model(V, 32);
  const TaskSpec task = TaskSpec::mod_add(5);
  Rng rng(3);
  std::vector<Sample> batch;
  for (int i = 0; i < 64; ++i) batch.push_back(gen_sample(task, rng));
  for (auto _ : state) {
    RecurrenceEngine engine(model);
    for (const auto& s : batch) {
      const ForwardResult fr = engine.forward(s.tokens, false);
      const Vec64 d = cross_entropy_grad(fr.logits.values(), s.target);
      engine.accumulate(fr.trace, d.values());
    }
    benchmark::DoNotOptimize(engine.take_gradients());
  }
}
BENCHMARK_TEMPLATE(BM_TrainBatch, Variant::FullBilinear);
BENCHMARK_TEMPLATE(BM_TrainBatch, Variant::Factored);
BENCHMARK_TEMPLATE(BM_TrainBatch, Variant::BlockDiag);
BENCHMARK_TEMPLATE(BM_TrainBatch, Variant::R2Rotation);
BENCHMARK_TEMPLATE(BM_TrainBatch, Variant::RealDiag);
BENCHMARK_TEMPLATE(BM_TrainBatch, Variant::Elman);

}  // namespace
BENCHMARK_MAIN();
