// Serial reference vs OpenMP kernels. The second argument of every benchmark
// selects the path: 0 = serial, 1 = parallel.

#include <benchmark/benchmark.h>

#include <vector>

#include "rankattn/constructions.hpp"
#include "rankattn/montecarlo.hpp"
#include "rankattn/spectral.hpp"
#include "rankattn/targets.hpp"
#include "rankattn/trainer.hpp"

using namespace rankattn;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(1) == 0 ? Exec::serial : Exec::parallel; }

void BM_KernelMonteCarlo(benchmark::State& state) {
  SeededRng rng(1);
  const Omega w{sample_sphere(8, rng), sample_sphere(8, rng)};
  const Omega wp{sample_sphere(8, rng), sample_sphere(8, rng)};
  const auto n = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(kernel_mc_check(8, w, wp, n, 2, exec_of(state)).mean);
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_KernelMonteCarlo)->ArgsProduct({{100000, 1000000}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_NearestMse(benchmark::State& state) {
  DistributionSpec dist;
  dist.kind = DistributionSpec::Kind::sphere_iid;
  dist.d = 16;
  dist.N = 4;
  const SoftmaxHead head = full_rank_nearest(16, 100.0);
  const auto n = state.range(0);
  for (auto _ : state) {
    const auto e = estimate_mse([&](const PointConfiguration& p) { return attend(head, p.X, p.y); },
                                [](const PointConfiguration& p) { return Mat(nearest_neighbor(p.X, p.y)); }, dist, n,
                                3, exec_of(state));
    benchmark::DoNotOptimize(e.mean);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_NearestMse)->ArgsProduct({{100000}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_SpectralTable(benchmark::State& state) {
  const int lmax = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(build_spectral_table(10, lmax, exec_of(state)).at(1).eta);
}
BENCHMARK(BM_SpectralTable)->ArgsProduct({{101, 201}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_BatchGradient(benchmark::State& state) {
  TrainConfig c;
  c.d = 16;
  c.N = 4;
  c.r = 16;
  c.H = 1;
  AttentionModel m(c);
  SeededRng init(1, 0), data(1, 1);
  m.init(init);
  const Batch b = make_batch(c, static_cast<int>(state.range(0)), data);
  std::vector<double> g;
  for (auto _ : state) benchmark::DoNotOptimize(m.loss_and_grad(b, g, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BatchGradient)->ArgsProduct({{64, 1024}, {0, 1}})->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
