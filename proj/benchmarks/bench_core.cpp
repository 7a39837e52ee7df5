#include <benchmark/benchmark.h>

#include "dps/analysis.hpp"
#include "dps/datasets.hpp"
#include "dps/model.hpp"
#include "dps/pattern.hpp"

namespace {

using namespace dps;

SyntheticDatasetConfig shapes_config(std::size_t per_class) {
  SyntheticDatasetConfig c;
  c.num_classes = 6;
  c.samples_per_class = per_class;
  return c;
}

ModelCheckpoint standard_model() {
  const std::vector<std::size_t> channels{8, 16, 16};
  return make_model({1, 16, 16}, standard_cnn_layers(channels, 6), 1);
}

void BM_Forward(benchmark::State& state) {
  const auto model = standard_model();
  const Tensor x = gen_shapes(shapes_config(1), 2).sample(0);
  for (auto _ : state) benchmark::DoNotOptimize(forward(model, x));
}
BENCHMARK(BM_Forward);

void BM_GradWrtActivation(benchmark::State& state) {
  const auto model = standard_model();
  const Tensor x = gen_shapes(shapes_config(1), 2).sample(0);
  for (auto _ : state) benchmark::DoNotOptimize(grad_wrt_activation(model, x, 0));
}
BENCHMARK(BM_GradWrtActivation);

void BM_ExtractPattern(benchmark::State& state) {
  const auto model = standard_model();
  const Tensor x = gen_shapes(shapes_config(1), 2).sample(0);
  for (auto _ : state) benchmark::DoNotOptimize(extract_pattern(model, x, 0));
}
BENCHMARK(BM_ExtractPattern);

void BM_TrainEpoch(benchmark::State& state) {
  const Batch data = gen_shapes(shapes_config(static_cast<std::size_t>(state.range(0))), 3);
  TrainOptions opts;
  opts.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train(standard_model(), data, opts));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}
BENCHMARK(BM_TrainEpoch)->Arg(10)->Arg(60)->Unit(benchmark::kMillisecond);

void BM_Analyze(benchmark::State& state) {
  const auto model = standard_model();
  const auto train_p = extract_patterns(model, gen_shapes(shapes_config(60), 4));
  const auto test_p = extract_patterns(model, gen_shapes(shapes_config(40), 5));
  for (auto _ : state) benchmark::DoNotOptimize(analyze(train_p, test_p));
}
BENCHMARK(BM_Analyze)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
