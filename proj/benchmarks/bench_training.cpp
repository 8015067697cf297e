// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "aft/probe.hpp"
#include "aft/synthetic.hpp"
#include "aft/trainer.hpp"

namespace {

using namespace aft;

Dataset planted(std::size_t n, std::size_t d_noise) {
  SyntheticSpec spec;
  spec.n_examples = n;
  spec.d_noise = d_noise;
  const SyntheticData s = synth_planted(spec);
  Dataset d;
  d.inputs = s.inputs;
  d.pretrained = s.psi;
  d.source_dims = {s.psi.cols()};
  d.labels = s.labels;
  d.n_classes = static_cast<std::uint32_t>(spec.n_classes);
  d.splits = make_splits(n, 0.5, spec.seed);
  return d;
}

// One optimisation step of the default model at batch 32, per regularizer.
void BM_TrainStep(benchmark::State& state) {
  const auto kind = static_cast<RegularizerKind>(state.range(0));
  const Dataset data = planted(512, 64);
  TrainConfig config;
  config.regularizer = RegularizerSpec{kind};
  config.steps = 1'000'000;
  TrainState s = init_state(config, data.inputs.cols(), data.pretrained.cols(), data.n_classes);
  if (kind == RegularizerKind::ft) s.regularizer.ft().pretrained = true;
  std::vector<std::size_t> rows(32);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const Batch batch = make_batch(data, rows);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(s, config, batch));
  state.SetLabel(to_string(kind));
}
BENCHMARK(BM_TrainStep)->DenseRange(0, 5);

void BM_LinearProbe(benchmark::State& state) {
  const Dataset data = planted(static_cast<std::size_t>(state.range(0)), 64);
  ProbeOptions opt;
  opt.max_iters = 200;
  const auto train = data.splits.full_train();
  for (auto _ : state) {
    benchmark::DoNotOptimize(linear_probe(data.pretrained, data.labels, data.n_classes, train, data.splits.test, opt));
  }
}
BENCHMARK(BM_LinearProbe)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
