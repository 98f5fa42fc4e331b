#include <benchmark/benchmark.h>

#include "kfp/certify.hpp"
#include "kfp/hypo.hpp"
#include "kfp/mc.hpp"
#include "kfp/pde.hpp"

using namespace kfp;

namespace {

ModelSpec nonequilibrium() {
  return ModelSpec::perturbed_harmonic(1.0, {Perturbation::Family::trig, 0.3});
}

void BM_Assemble(benchmark::State& state) {
  const auto grid = PhaseGrid::symmetric(6, 6, static_cast<int>(state.range(0)), static_cast<int>(state.range(0)));
  const auto m = nonequilibrium();
  for (auto _ : state) benchmark::DoNotOptimize(assemble_generator(m, grid));
}
BENCHMARK(BM_Assemble)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_SteadyState(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto gen = assemble_generator(ModelSpec::equilibrium(1.0), PhaseGrid::symmetric(6, 6, n, n));
  for (auto _ : state) benchmark::DoNotOptimize(steady_state(gen));
}
BENCHMARK(BM_SteadyState)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_CrankNicolsonStep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto gen = assemble_generator(nonequilibrium(), PhaseGrid::symmetric(9, 9, n, n));
  const CrankNicolson cn(gen.observable, cfl_dt(gen));
  Vec g = Vec::Random(gen.grid.size());
  for (auto _ : state) {
    g = cn.step(g);
    benchmark::DoNotOptimize(g.data());
  }
}
BENCHMARK(BM_CrankNicolsonStep)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_PoincareRayleigh(benchmark::State& state) {
  const auto gen = assemble_generator(ModelSpec::equilibrium(1.0), PhaseGrid::symmetric(6, 6, 64, 64));
  const Vec mu = steady_state(gen).mu.values;
  for (auto _ : state) benchmark::DoNotOptimize(poincare_rayleigh(gen.grid, mu));
}
BENCHMARK(BM_PoincareRayleigh)->Unit(benchmark::kMillisecond);

void BM_SdeSteps(benchmark::State& state) {
  const auto m = nonequilibrium();
  SdeRunConfig cfg;
  cfg.dt = 0.01;
  cfg.T = 10.0;
  cfg.n_traj = 256;
  cfg.workers = 1;
  cfg.integrator = static_cast<Integrator>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(integrate(m, PhasePoint(0.0, 0.0), cfg));
  state.SetItemsProcessed(state.iterations() * cfg.n_traj * 1000);
}
BENCHMARK(BM_SdeSteps)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Lyapunov(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(certify_linear(1.0, d));
}
BENCHMARK(BM_Lyapunov)->Arg(1)->Arg(4)->Arg(8);

void BM_Falsifier(benchmark::State& state) {
  const auto m = ModelSpec::perturbed_harmonic(1.0, {Perturbation::Family::trig, 0.1});
  const auto cert = certify_model(m);
  for (auto _ : state) benchmark::DoNotOptimize(falsify_condition(cert, m, 100000, 1, 1));
}
BENCHMARK(BM_Falsifier)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
