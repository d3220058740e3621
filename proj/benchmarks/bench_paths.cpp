#include <benchmark/benchmark.h>

#include <bdsgvi/drivers.hpp>
#include <bdsgvi/reflected.hpp>

namespace {

using namespace bdsgvi;

const AnalyticIncreasing kNoA{[](double) { return 0.0; }, "0"};

void BM_GeneratePaths(benchmark::State& state) {
  const auto paths = static_cast<std::size_t>(state.range(0));
  const auto grid = TimeGrid::uniform(0.0, 1.0, 100);
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_paths(grid, 2, paths, 1, kNoA));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(paths * 100));
}
BENCHMARK(BM_GeneratePaths)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_ReflectedBall(benchmark::State& state) {
  const auto paths = static_cast<std::size_t>(state.range(0));
  const auto domain = domains::ball(2);
  const auto dyn = make_dynamics("zero", "identity", 2);
  PathOptions o;
  o.with_backward = false;
  const auto noise = generate_paths(TimeGrid::uniform(0.0, 1.0, 100), 2, paths, 1, DeferredIncreasing{}, o);
  const Vector x0 = Vector::Zero(2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate_reflected(domain, dyn, 0.0, x0, noise));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(paths * 100));
}
BENCHMARK(BM_ReflectedBall)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_ReflectedEllipsoid(benchmark::State& state) {
  const auto domain = make_domain("ellipsoid(1,0.5)", 2);
  const auto dyn = make_dynamics("zero", "identity", 2);
  PathOptions o;
  o.with_backward = false;
  const auto noise = generate_paths(TimeGrid::uniform(0.0, 1.0, 100), 2, 1000, 1, DeferredIncreasing{}, o);
  const Vector x0 = Vector::Zero(2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate_reflected(domain, dyn, 0.0, x0, noise));
  }
}
BENCHMARK(BM_ReflectedEllipsoid)->Unit(benchmark::kMillisecond);

}  // namespace
