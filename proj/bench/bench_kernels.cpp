#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "hvac/controllers/mpc.hpp"
#include "hvac/env/batch.hpp"
#include "hvac/ingest.hpp"
#include "hvac/nn/kernels.hpp"

using namespace hvac;

namespace {

std::vector<double> random_matrix(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <void (*Kernel)(const nn::GemmArgs&)>
void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const std::size_t k = 64, n = 64;
  const auto a = random_matrix(m * k, 1);
  const auto b = random_matrix(k * n, 2);
  std::vector<double> c(m * n);
  nn::GemmArgs g;
  g.m = m;
  g.n = n;
  g.k = k;
  g.a = a.data();
  g.lda = k;
  g.b = b.data();
  g.ldb = n;
  g.c = c.data();
  g.ldc = n;
  for (auto _ : state) {
    Kernel(g);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * m * n * k));
}

template <controllers::Plan (*Planner)(const controllers::PlanWindow&, double, const ThermalParams&,
                          const ComfortModel&, const controllers::MpcConfig&)>
void BM_DpPlan(benchmark::State& state) {
  const auto traces = ingest::synth_traces(3, 5);
  const auto horizon = static_cast<std::size_t>(state.range(0));
  const auto window = controllers::window_from_traces(traces, 0, horizon);
  const controllers::MpcConfig cfg;
  for (auto _ : state) {
    auto plan = Planner(window, 22.0, ThermalParams{}, ComfortModel{}, cfg);
    benchmark::DoNotOptimize(plan.cost);
  }
}

template <void (*Step)(std::span<env::EnvSlot>, std::span<const int>,
                       std::span<env::StepOutcome>)>
void BM_StepBatch(benchmark::State& state) {
  const auto count = static_cast<std::size_t>(state.range(0));
  auto traces = std::make_shared<const ExogenousTraces>(ingest::synth_traces(30, 7));
  std::vector<env::EnvSlot> slots;
  for (std::size_t i = 0; i < count; ++i) {
    slots.push_back({env::HvacEnv(traces, SimConfig{}), std::make_unique<env::SimulatedFeedback>(),
                     Rng(9).substream("bench.env", i)});
    slots.back().env.reset((i % 29) * 96);
  }
  std::vector<int> actions(count, 1);
  std::vector<env::StepOutcome> out(count);
  for (auto _ : state) {
    for (auto& s : slots) {
      if (s.env.done()) s.env.reset(s.env.episode_start());
    }
    Step(slots, actions, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * count));
}

}  // namespace

BENCHMARK(BM_Gemm<nn::gemm_serial>)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_Gemm<nn::gemm_parallel>)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_DpPlan<controllers::dp_plan_serial>)->Arg(24)->Arg(96);
BENCHMARK(BM_DpPlan<controllers::dp_plan_parallel>)->Arg(24)->Arg(96);
BENCHMARK(BM_StepBatch<env::step_batch_serial>)->Arg(8)->Arg(64);
BENCHMARK(BM_StepBatch<env::step_batch_parallel>)->Arg(8)->Arg(64);

BENCHMARK_MAIN();
