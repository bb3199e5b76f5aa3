#include <random>

#include <benchmark/benchmark.h>

#include "hbtm/inference.hpp"
#include "hbtm/simulator.hpp"

using namespace hbtm;

namespace {

ModelParams bench_params(std::size_t S, std::size_t W, double t_end) {
  ModelParams p;
  p.S = S;
  p.W = W;
  p.background = BackgroundRate::make(S, 0.0, t_end, 1.0, 1.0);
  p.p0.assign(S, 0.2);
  p.theta = SquareMatrix(S, 0.4 / static_cast<double>(S));
  p.omega = SquareMatrix(S, 1.0);
  p.p_on = SquareMatrix(S, 0.05);
  p.p_off = SquareMatrix(S, 0.3);
  return p;
}

std::vector<MarkedEvent> bench_events(const ModelParams& p, double t_end) {
  std::vector<MarkedEvent> ev;
  for (auto& e : simulate(p, t_end, 1)) ev.push_back(std::move(e.event));
  return ev;
}

void BM_JOneLogMass(benchmark::State& state) {
  const std::size_t W = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  Mark a(W), b(W);
  for (std::size_t w = 0; w < W; ++w) {
    a.set(w, rng() % 5 == 0);
    b.set(w, rng() % 5 == 0);
  }
  for (auto _ : state) benchmark::DoNotOptimize(j1_log_mass(a, b, 0.05, 0.3));
}
BENCHMARK(BM_JOneLogMass)->Arg(20)->Arg(425)->Arg(4096);

void BM_EStep(benchmark::State& state) {
  const double t_end = static_cast<double>(state.range(0));
  const auto p = bench_params(12, 425, t_end);
  const auto ev = bench_events(p, t_end);
  for (auto _ : state) benchmark::DoNotOptimize(e_step(p, ev, 14.0));
  state.counters["events"] = static_cast<double>(ev.size());
}
BENCHMARK(BM_EStep)->Arg(30)->Arg(120)->Unit(benchmark::kMillisecond);

void BM_Simulate(benchmark::State& state) {
  const double t_end = static_cast<double>(state.range(0));
  const auto p = bench_params(12, 425, t_end);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(simulate(p, t_end, ++seed));
}
BENCHMARK(BM_Simulate)->Arg(30)->Arg(120)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
