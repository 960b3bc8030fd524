#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "tdmr/channel.hpp"
#include "tdmr/detector.hpp"
#include "tdmr/equalizer.hpp"
#include "tdmr/training.hpp"

namespace {

using namespace tdmr;

ChannelParams bench_params() {
  ChannelParams p;
  p.pw50_over_t = 1.5;
  p.jitter_sigma = 0.08;
  p.awgn_sigma = 0.26;
  return p;
}

Sector bench_sector(int bits) {
  const ChannelParams p = bench_params();
  ReaderGeometry g;
  TrackEnsemble tracks = gen_tracks(bits, 1, p);
  Sector sector;
  sector.frame = normalize_frame(synthesize_readback(tracks, p, g, 2));
  sector.bits = tracks.bits[kCenterTrack];
  sector.meta = {1, 2, p, g, iti_weights(g)};
  return sector;
}

void BM_synthesize_sector(benchmark::State& state) {
  const ChannelParams p = bench_params();
  ReaderGeometry g;
  const auto bits = static_cast<int>(state.range(0));
  const TrackEnsemble tracks = gen_tracks(bits, 1, p);
  for (auto _ : state) {
    benchmark::DoNotOptimize(synthesize_readback(tracks, p, g, 2));
  }
  state.SetItemsProcessed(state.iterations() * bits);
}
BENCHMARK(BM_synthesize_sector)->Arg(4096)->Arg(39512);

void BM_maxlog_llr(benchmark::State& state) {
  const PrTarget target{{1.0, 0.5367, 0.0781, -0.1535, 0.0347}, true};
  const Trellis trellis = build_trellis(target);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.5);
  std::vector<double> y(n);
  for (double& v : y) v = gauss(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(maxlog_llr(trellis, y));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_maxlog_llr)->Arg(1024)->Arg(39502);

void BM_viterbi_hard(benchmark::State& state) {
  const PrTarget target{{1.0, 0.5367, 0.0781, -0.1535, 0.0347}, true};
  const Trellis trellis = build_trellis(target);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.5);
  std::vector<double> y(39502);
  for (double& v : y) v = gauss(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(viterbi_hard(trellis, y));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(y.size()));
}
BENCHMARK(BM_viterbi_hard);

void BM_ce_chain_span(benchmark::State& state) {
  const Sector sector = bench_sector(4096);
  const MlpSpec spec{{22, 6, 1}, Activation::Tanh};
  MlpParams params = init_mlp(spec, 3);
  PrTarget target{{1.0, 0.45, 0.08, -0.15, 0.03}, true};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        ce_chain_gradient(params, target, true, sector, 64, 1024, 3, 50.0));
  }
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_ce_chain_span);

void BM_mlp_forward(benchmark::State& state) {
  const MlpSpec spec{{22, 6, 1}, Activation::Tanh};
  const MlpParams params = init_mlp(spec, 3);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> window(22);
  for (double& v : window) v = gauss(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mlp_forward(params, window));
  }
}
BENCHMARK(BM_mlp_forward);

void BM_evaluate_sector(benchmark::State& state) {
  const Sector sector = bench_sector(39512);
  const MlpSpec spec{{22, 1}, Activation::Tanh};
  const MlpParams params = init_mlp(spec, 3);
  const PrTarget target{{1.0, 0.5367, 0.0781, -0.1535, 0.0347}, true};
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_sector(params, target, sector));
  }
}
BENCHMARK(BM_evaluate_sector);

}  // namespace

BENCHMARK_MAIN();
