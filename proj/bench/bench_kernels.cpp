// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>

#include "pp/downscale.hpp"
#include "pp/netcore.hpp"
#include "pp/spectral.hpp"
#include "pp/synth.hpp"

using namespace pp;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(1) ? Exec::Parallel : Exec::Serial; }

void label(benchmark::State& state) { state.SetLabel(state.range(1) ? "omp" : "serial"); }

const GridSeries& synth_tp() {
  static const GridSeries tp = [] {
    SynthConfig c;
    c.nlat = 96;
    c.nlon = 96;
    c.nsteps = 64;
    return synth_tp_vimd(c).tp;
  }();
  return tp;
}

void BM_Synth(benchmark::State& state) {
  SynthConfig c;
  c.nlat = 96;
  c.nlon = 96;
  c.nsteps = 32;
  for (auto _ : state) benchmark::DoNotOptimize(state.range(1) ? synth_tp_vimd(c) : serial::synth_tp_vimd(c));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.nsteps));
  label(state);
}

void BM_Forward(benchmark::State& state) {
  const std::vector<std::size_t> widths{2, 64, 64, 1};
  const MLP mlp = init_mlp_fan_in(widths, 1);
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  Matrix x(2, batch);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  for (auto& v : x.flat()) v = nd(rng);
  for (auto _ : state) benchmark::DoNotOptimize(forward(mlp, x, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
  label(state);
}

void BM_ForwardBackward(benchmark::State& state) {
  const std::vector<std::size_t> widths{2, 64, 64, 1};
  const MLP mlp = init_mlp_fan_in(widths, 1);
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  Matrix x(2, batch), g(1, batch, 1.0);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (auto& v : x.flat()) v = nd(rng);
  for (auto _ : state) {
    const auto cache = forward(mlp, x, exec_of(state));
    benchmark::DoNotOptimize(backward(mlp, cache, g, exec_of(state)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
  label(state);
}

void BM_Lowpass(benchmark::State& state) {
  const GridSeries& tp = synth_tp();
  const LowpassSpec spec{0.25, Taper::RaisedCosine, 0.2, 8};
  for (auto _ : state)
    benchmark::DoNotOptimize(state.range(1) ? lowpass_series(tp, spec) : serial::lowpass_series(tp, spec));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(tp.size()));
  label(state);
}

void BM_TrainDownscaler(benchmark::State& state) {
  const PairSet pairs = make_pairs(synth_tp(), 4, LowpassSpec{});
  for (auto _ : state)
    benchmark::DoNotOptimize(state.range(1) ? train_downscaler(pairs) : serial::train_downscaler(pairs));
  label(state);
}

void BM_ApplyDownscaler(benchmark::State& state) {
  const PairSet pairs = make_pairs(synth_tp(), 4, LowpassSpec{});
  const DSModel model = train_downscaler(pairs);
  for (auto _ : state)
    benchmark::DoNotOptimize(state.range(1) ? apply_downscaler(model, pairs.lr)
                                            : serial::apply_downscaler(model, pairs.lr));
  label(state);
}

}  // namespace

BENCHMARK(BM_Synth)->ArgsProduct({{0}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Forward)->ArgsProduct({{1024, 8192, 65536}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ForwardBackward)->ArgsProduct({{8192}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Lowpass)->ArgsProduct({{0}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainDownscaler)->ArgsProduct({{0}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ApplyDownscaler)->ArgsProduct({{0}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
