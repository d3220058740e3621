#include <random>

#include <benchmark/benchmark.h>

#include <bdsgvi/convex.hpp>

namespace {

using namespace bdsgvi;

std::vector<Vector> sample_points(int dim, std::size_t n) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::vector<Vector> xs(n, Vector(dim));
  for (auto& x : xs) {
    for (auto& c : x) c = u(rng);
  }
  return xs;
}

// Arg 0: catalog index; closed-form resolvent.
void BM_ProxClosedForm(benchmark::State& state) {
  const std::vector<ConvexFunction> fns{catalog::quadratic(1.5), catalog::abs(), catalog::indicator_box(-0.5, 1.0),
                                        catalog::hinge_sq()};
  const auto& f = fns[static_cast<std::size_t>(state.range(0))];
  const auto xs = sample_points(1, 1024);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(prox(f, 0.1, xs[i++ & 1023]));
  }
  state.SetLabel(f.label);
}
BENCHMARK(BM_ProxClosedForm)->DenseRange(0, 3);

void BM_ProxGridOracle(benchmark::State& state) {
  ConvexFunction f = catalog::hinge_sq();
  f.prox_oracle.reset();
  const auto xs = sample_points(1, 1024);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(prox(f, 0.1, xs[i++ & 1023]));
  }
}
BENCHMARK(BM_ProxGridOracle);

void BM_YosidaGradientSeparable(benchmark::State& state) {
  const auto f = separable(catalog::hinge_sq(), static_cast<int>(state.range(0)));
  const auto xs = sample_points(f.dim, 1024);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(yosida_gradient(f, 0.01, xs[i++ & 1023]));
  }
}
BENCHMARK(BM_YosidaGradientSeparable)->Arg(1)->Arg(4)->Arg(16);

}  // namespace
