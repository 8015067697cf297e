// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "aft/regularizers.hpp"
#include "aft/rng.hpp"

namespace {

using namespace aft;

Matrix random(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

// Forward + backward of the kernel distance at batch size B (arg 0) and d_psi (arg 1).
void BM_AftForwardBackward(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const Kernel kernel = state.range(2) ? Kernel::rbf : Kernel::linear;
  Rng rng(1);
  const Matrix phi = random(b, 32, rng), psi = random(b, d, rng);
  const MuWeights mu = MuWeights::diagonal(d);
  for (auto _ : state) {
    ad::Tape tape;
    ad::Var p = tape.parameter("phi", phi);
    ad::Var delta = aft_regularizer(tape, p, tape.constant(psi), mu, kernel);
    benchmark::DoNotOptimize(tape.backward(delta));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b));
}
BENCHMARK(BM_AftForwardBackward)
    ->ArgsProduct({{32, 128, 512}, {16, 256}, {0, 1}})
    ->ArgNames({"B", "d_psi", "rbf"});

void BM_KdForwardBackward(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Matrix phi = random(b, 32, rng), psi = random(b, 256, rng);
  const KdTransform v(256, 32, 3);
  for (auto _ : state) {
    ad::Tape tape;
    ad::Var delta = kd_regularizer(tape, tape.parameter("phi", phi), tape.constant(psi), v);
    benchmark::DoNotOptimize(tape.backward(delta));
  }
}
BENCHMARK(BM_KdForwardBackward)->Arg(32)->Arg(128)->Arg(512);

void BM_RkdForward(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  const Matrix phi = random(b, 32, rng), psi = random(b, 64, rng);
  for (auto _ : state) benchmark::DoNotOptimize(rkd_regularizer(phi, psi));
}
BENCHMARK(BM_RkdForward)->Arg(16)->Arg(32)->Arg(64);

void BM_Gram(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  const Matrix x = random(b, 64, rng);
  for (auto _ : state) benchmark::DoNotOptimize(gram(x));
}
BENCHMARK(BM_Gram)->Arg(32)->Arg(256)->Arg(1024);

}  // namespace
