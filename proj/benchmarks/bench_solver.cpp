#include <benchmark/benchmark.h>

#include <bdsgvi/bdsde.hpp>
#include <bdsgvi/reflected.hpp>

namespace {

using namespace bdsgvi;

// Markov solve on the unit disc; arg 0 selects the regression, arg 1 the scheme.
void BM_SolveBall(benchmark::State& state) {
  const auto domain = domains::ball(2);
  const auto dyn = make_dynamics("zero", "identity", 2);
  PathOptions o;
  o.with_backward = false;
  const auto noise = generate_paths(TimeGrid::uniform(0.0, 1.0, 100), 2, 2000, 1, DeferredIncreasing{}, o);
  const auto ens = simulate_reflected(domain, dyn, 0.0, Vector::Constant(2, 0.2), noise);
  const auto c = make_coefficients(1, 2, "linear(0.5,-0.3,0.2)", "const(1)", "zero", "norm_sq");
  SolverConfig cfg;
  cfg.regression = parse_regression(state.range(0) == 0 ? "sample_mean" : "polynomial(2)");
  cfg.scheme = state.range(1) == 0 ? Scheme::ExplicitYosida : Scheme::ImplicitProx;
  const auto phi = catalog::indicator_box(-kInfinity, 0.8);
  const auto psi = catalog::hinge_sq();
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_penalized(c, phi, psi, cfg, noise, &ens));
  }
}
BENCHMARK(BM_SolveBall)->ArgsProduct({{0, 1}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_CauchyLadder(benchmark::State& state) {
  const auto noise = generate_paths(TimeGrid::uniform(0.0, 1.0, 10000), 1, 1, 3,
                                    AnalyticIncreasing{[](double) { return 0.0; }, "0"});
  const auto c = make_coefficients(1, 1, "const(1)", "zero", "zero", "const(0)");
  SolverConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cauchy_study(c, catalog::indicator_box(-kInfinity, 0.5), catalog::zero(), cfg,
                                          {1e-1, 1e-2, 1e-3}, noise, 12.0, 2.0));
  }
}
BENCHMARK(BM_CauchyLadder)->Unit(benchmark::kMillisecond);

}  // namespace
