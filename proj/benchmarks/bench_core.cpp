#include <benchmark/benchmark.h>

#include "spoc/config.hpp"
#include "spoc/control.hpp"
#include "spoc/filter.hpp"
#include "spoc/forward.hpp"
#include "spoc/noise.hpp"

namespace spoc {
namespace {

Problem benchmark_problem(std::size_t elements) {
  RunConfig cfg = preset_config("heat_benchmark");
  cfg.n_elems = elements;
  cfg.N_W = std::min<std::size_t>(cfg.N_W, elements - 1);
  validate(cfg);
  return make_problem(cfg);
}

void BM_SolveImplicit(benchmark::State& state) {
  const auto ops = assemble(10.0, static_cast<std::size_t>(state.range(0)), 0.01);
  Field rhs = ops.interpolate([](double l) { return l * (10.0 - l); });
  for (auto _ : state) {
    ops.solve_implicit_in_place(rhs.values());
    benchmark::DoNotOptimize(rhs.values().data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SolveImplicit)->RangeMultiplier(4)->Range(100, 6400)->Complexity(benchmark::oN);

void BM_AdvanceTruth(benchmark::State& state) {
  const Problem p = benchmark_problem(static_cast<std::size_t>(state.range(0)));
  const auto noise = sample_path(1, stream_id(Stream::Truth), 1, p.spec.n_w(), p.spec.d(), p.ops.dt());
  StepWorkspace ws(p.ops.dofs(), p.spec.d());
  Field x = p.spec.initial.mean, next(p.ops.dofs());
  const Field u = p.ops.zeros();
  for (auto _ : state) {
    advance(p.spec, p.ops, x, u, noise.dw_row(0), noise.db_row(0), next, ws);
    benchmark::DoNotOptimize(next.values().data());
  }
}
BENCHMARK(BM_AdvanceTruth)->Arg(100)->Arg(400)->Arg(1600);

void BM_PropagateCloud(benchmark::State& state) {
  const Problem p = benchmark_problem(400);
  auto cloud = init_cloud(static_cast<std::size_t>(state.range(0)), p.spec, 1);
  const std::vector<double> dy(p.spec.d(), 0.0);
  const Field u = p.ops.zeros();
  std::size_t step = 0;
  for (auto _ : state) {
    propagate_and_weight(cloud, u, dy, p.spec, p.ops, {.seed = 1, .step = step++});
    benchmark::DoNotOptimize(cloud.log_weights.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PropagateCloud)->Arg(50)->Arg(200);

void BM_OffspringCounts(benchmark::State& state) {
  const auto S = static_cast<std::size_t>(state.range(0));
  std::vector<double> w(S);
  for (std::size_t s = 0; s < S; ++s) w[s] = 1.0 + static_cast<double>(s % 7);
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  std::uint32_t t = 0;
  for (auto _ : state) {
    auto c = offspring_counts(w, S, uniform01(1, stream_id(Stream::Branching), t++));
    benchmark::DoNotOptimize(c.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_OffspringCounts)->RangeMultiplier(4)->Range(64, 4096)->Complexity(benchmark::oN);

// One SGD sample at benchmark scale: rollout, z and p sweeps, psi.
void BM_GradientSample(benchmark::State& state) {
  const Problem p = benchmark_problem(static_cast<std::size_t>(state.range(0)));
  const auto schedule = zero_schedule(0, p.config.n_steps(), p.ops.dofs(), p.config.alpha);
  std::uint32_t b = 0;
  for (auto _ : state) {
    auto g = sample_gradient(p.spec, p.ops, p.spec.initial.mean, schedule, 1, stream_id(Stream::Rollout, 0, b++), {});
    benchmark::DoNotOptimize(g.cost);
  }
}
BENCHMARK(BM_GradientSample)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace spoc

BENCHMARK_MAIN();
