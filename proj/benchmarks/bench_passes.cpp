#include <benchmark/benchmark.h>

#include "bnfold/equivalence.hpp"
#include "bnfold/fold_transform.hpp"
#include "bnfold/interpreter.hpp"
#include "bnfold/models.hpp"

using namespace bnfold;

namespace {

GeneratedModel fig2a_model() {
  ArchetypeDims dims;
  dims.blocks = 6;
  dims.channels = 32;
  return generate(Archetype::Fig2a, dims, 42);
}

void BM_EvalFig2aOriginal(benchmark::State& state) {
  GeneratedModel m = fig2a_model();
  InputBinding binding = random_binding(m.graph, state.range(0), 42);
  for (auto _ : state) {
    auto out = eval_graph(m.graph, binding);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_EvalFig2aOriginal)->Arg(1)->Arg(8)->Arg(32);

void BM_EvalFig2aFolded(benchmark::State& state) {
  GeneratedModel m = fig2a_model();
  auto [folded, report] = banoff_pass(m.graph);
  InputBinding binding = random_binding(folded, state.range(0), 42);
  for (auto _ : state) {
    auto out = eval_graph(folded, binding);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_EvalFig2aFolded)->Arg(1)->Arg(8)->Arg(32);

void BM_EvalResNetOriginal(benchmark::State& state) {
  GeneratedModel m = generate(Archetype::ResNetToy, {}, 42);
  InputBinding binding = random_binding(m.graph, 8, 42);
  for (auto _ : state) {
    auto out = eval_graph(m.graph, binding);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_EvalResNetOriginal);

void BM_EvalResNetFolded(benchmark::State& state) {
  GeneratedModel m = generate(Archetype::ResNetToy, {}, 42);
  auto [folded, report] = banoff_pass(m.graph);
  InputBinding binding = random_binding(folded, 8, 42);
  for (auto _ : state) {
    auto out = eval_graph(folded, binding);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_EvalResNetFolded);

void BM_BanoffPassFig2c(benchmark::State& state) {
  GeneratedModel m = generate(Archetype::Fig2c, {}, 42);
  for (auto _ : state) {
    auto result = banoff_pass(m.graph);
    benchmark::DoNotOptimize(result);
  }
}
BENCHMARK(BM_BanoffPassFig2c);

void BM_CheckFoldableResNet(benchmark::State& state) {
  GeneratedModel m = generate(Archetype::ResNetToy, {}, 42);
  for (auto _ : state) {
    FoldDecision d = check_foldable(m.graph, "bn2");
    benchmark::DoNotOptimize(d);
  }
}
BENCHMARK(BM_CheckFoldableResNet);

}  // namespace

BENCHMARK_MAIN();
