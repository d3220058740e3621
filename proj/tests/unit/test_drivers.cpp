#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "bdsgvi/drivers.hpp"
#include "bdsgvi/errors.hpp"

using namespace bdsgvi;

namespace {

std::vector<double> row(const Matrix& m, Eigen::Index r = 0) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.cols(); ++i) out[static_cast<std::size_t>(i)] = m(r, i);
  return out;
}

const AnalyticIncreasing kClock{[](double t) { return t; }, "t"};

}  // namespace

TEST_SUITE("drivers") {

TEST_CASE("time grid") {
  const auto g = TimeGrid::uniform(0.0, 1.0, 4);
  CHECK(g.steps() == 4);
  CHECK(g.max_step() == doctest::Approx(0.25));
  CHECK(g.index_of(0.5) == 2);
  CHECK_THROWS_AS(g.index_of(0.3), ValidationError);
  CHECK(g.coarsen(2).size() == 3);
  CHECK_THROWS_AS(g.coarsen(3), ValidationError);
  CHECK_THROWS_AS(TimeGrid({0.0}), ValidationError);
  CHECK_THROWS_AS(TimeGrid({0.0, 0.5, 0.5}), ValidationError);
  CHECK_THROWS_AS(TimeGrid({-1.0, 0.5}), ValidationError);
  CHECK_THROWS_AS(TimeGrid::uniform(1.0, 1.0, 3), ValidationError);
}

TEST_CASE("increment moments at 1e5 paths") {
  const std::size_t n = 100000;
  const auto b = generate_paths(TimeGrid::uniform(0.0, 1.0, 1), 1, n, 42, kClock);
  double s = 0.0, s2 = 0.0, sb = 0.0, sb2 = 0.0, swb = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double w = b.dw(p, 0)[0];
    const double v = b.db(p, 0)[0];
    s += w;
    s2 += w * w;
    sb += v;
    sb2 += v * v;
    swb += w * v;
  }
  const double nn = static_cast<double>(n);
  const double mean = s / nn;
  const double var = s2 / nn - mean * mean;
  CHECK(std::abs(mean) <= 4.0 / std::sqrt(nn));
  CHECK(std::abs(var - 1.0) <= 0.02);
  const double mb = sb / nn;
  const double corr = (swb / nn - mean * mb) / std::sqrt(var * (sb2 / nn - mb * mb));
  CHECK(std::abs(corr) <= 4.0 / std::sqrt(nn));
}

TEST_CASE("analytic clock copies node times and A starts at zero") {
  const auto g = TimeGrid::uniform(0.0, 2.0, 8);
  const auto b = generate_paths(g, 2, 3, 1, kClock);
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(b.A[p][static_cast<Eigen::Index>(i)] == g[i]);
  const auto shifted = generate_paths(TimeGrid::uniform(1.0, 2.0, 4), 1, 1, 1, kClock);
  CHECK(shifted.A[0][0] == 0.0);
  CHECK(shifted.A[0][4] == doctest::Approx(1.0));
}

TEST_CASE("determinism regardless of threads and path count") {
  const auto g = TimeGrid::uniform(0.0, 1.0, 16);
  PathOptions one;
  PathOptions four;
  four.threads = 4;
  const auto a = generate_paths(g, 2, 37, 9, kClock, one);
  const auto b = generate_paths(g, 2, 37, 9, kClock, four);
  const auto c = generate_paths(g, 2, 50, 9, kClock, one);
  for (std::size_t p = 0; p < 37; ++p) {
    CHECK(a.dW[p] == b.dW[p]);
    CHECK(a.dB[p] == b.dB[p]);
    CHECK(a.dW[p] == c.dW[p]);
  }
  const auto d = generate_paths(g, 2, 37, 10, kClock, one);
  CHECK(a.dW[0] != d.dW[0]);
}

TEST_CASE("common backward noise is shared") {
  PathOptions o;
  o.backward = BackwardNoise::Common;
  const auto b = generate_paths(TimeGrid::uniform(0.0, 1.0, 4), 1, 5, 3, kClock, o);
  CHECK(b.dB.size() == 1);
  CHECK(b.db(0, 2)[0] == b.db(4, 2)[0]);
  PathOptions none;
  none.with_backward = false;
  CHECK_FALSE(generate_paths(TimeGrid::uniform(0.0, 1.0, 4), 1, 5, 3, kClock, none).has_backward());
}

TEST_CASE("increasing process validation") {
  const auto g = TimeGrid::uniform(0.0, 1.0, 2);
  CHECK_THROWS_AS(validate_table({{0.0, 0.5, 1.0}, {0.0, 1.0, 0.5}}), ValidationError);
  CHECK_THROWS_AS(validate_table({{0.0, 0.5}, {0.0}}), ValidationError);
  CHECK_THROWS_AS(generate_paths(g, 1, 1, 0, TabulatedIncreasing{{0.0, 0.5, 1.0}, {0.0, 2.0, 1.0}}), ValidationError);
  const AnalyticIncreasing decreasing{[](double t) { return -t; }, "-t"};
  CHECK_THROWS_AS(generate_paths(g, 1, 1, 0, decreasing), ValidationError);
  CHECK_THROWS_AS(generate_paths(g, 1, 0, 0, kClock), ValidationError);
  const auto tab = generate_paths(g, 1, 2, 0, TabulatedIncreasing{{0.0, 0.5, 1.0}, {0.0, 0.25, 1.0}});
  CHECK(tab.A[1][1] == doctest::Approx(0.25));

  const auto def = generate_paths(g, 1, 2, 0, DeferredIncreasing{});
  CHECK(def.a_deferred);
  Vector ok(3);
  ok << 0.0, 0.1, 0.1;
  Vector bad(3);
  bad << 0.0, 0.2, 0.1;
  CHECK_FALSE(with_increasing_process(def, {ok, ok}).a_deferred);
  CHECK_THROWS_AS(with_increasing_process(def, {ok, bad}), ValidationError);
  CHECK_THROWS_AS(with_increasing_process(def, {ok}), ValidationError);
}

TEST_CASE("increasing process from csv") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto good = dir / "bdsgvi_a_good.csv";
  const auto bad = dir / "bdsgvi_a_bad.csv";
  std::ofstream(good) << "t,A\n0,0\n0.5,0.2\n1,0.7\n";
  std::ofstream(bad) << "t,A\n0,0\n0.5,0.3\n1,0.2\n";
  const auto t = load_increasing_csv(good.string());
  CHECK(t.A.size() == 3);
  CHECK(t.A[2] == doctest::Approx(0.7));
  CHECK_THROWS_AS(load_increasing_csv(bad.string()), ValidationError);
  CHECK_THROWS_AS(load_increasing_csv((dir / "bdsgvi_missing.csv").string()), ValidationError);
}

TEST_CASE("coarsened bundle sums increments") {
  const auto b = generate_paths(TimeGrid::uniform(0.0, 1.0, 8), 1, 2, 5, kClock);
  const auto c = coarsened(b, 4);
  CHECK(c.grid.steps() == 2);
  CHECK(c.dW[1](0, 1) == doctest::Approx(b.dW[1].block(0, 4, 1, 4).sum()).epsilon(1e-14));
  CHECK(c.A[1][2] == b.A[1][8]);
}

TEST_CASE("discrete integrals") {
  const auto b = generate_paths(TimeGrid::uniform(0.0, 1.0, 50), 1, 1, 2, kClock);
  const auto dw = row(b.dW[0]);
  const auto db = row(b.dB[0]);
  const std::vector<double> zero(50, 0.0), three(50, 3.0);
  CHECK(forward_ito(zero, dw) == 0.0);
  CHECK(backward_ito(zero, db) == 0.0);
  CHECK(forward_ito(three, dw) == doctest::Approx(3.0 * std::accumulate(dw.begin(), dw.end(), 0.0)).epsilon(1e-13));
  CHECK(backward_ito(three, db) == doctest::Approx(3.0 * std::accumulate(db.begin(), db.end(), 0.0)).epsilon(1e-13));
  CHECK_THROWS_AS(forward_ito(std::vector<double>(49, 1.0), dw), ValidationError);
  CHECK_THROWS_AS(backward_ito(std::vector<double>(51, 1.0), db), ValidationError);
}

TEST_CASE("Ito isometry and backward endpoint bias") {
  const std::size_t n = 20000;
  const std::size_t steps = 20;
  const auto b = generate_paths(TimeGrid::uniform(0.0, 1.0, steps), 1, n, 8, kClock);
  double m = 0.0, m2 = 0.0, mb = 0.0;
  std::vector<double> left(steps), right(steps);
  for (std::size_t p = 0; p < n; ++p) {
    const auto dw = row(b.dW[p]);
    const auto db = row(b.dB[p]);
    double w = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < steps; ++i) {
      left[i] = w;
      w += dw[i];
      bb += db[i];
      right[i] = bb;
    }
    const double fi = forward_ito(left, dw);
    m += fi;
    m2 += fi * fi;
    mb += backward_ito(right, db);
  }
  const double nn = static_cast<double>(n);
  // E[Σ W_{t_i} ΔW_i] = 0 and E[(Σ W_{t_i} ΔW_i)²] = Σ t_i Δt = (1 − Δt)/2.
  const double target = 0.5 * (1.0 - 1.0 / steps);
  CHECK(std::abs(m / nn) <= 4.0 * std::sqrt(target / nn));
  CHECK(std::abs(m2 / nn - target) <= 0.05 * target);
  // E[Σ B_{t_{i+1}} ΔB_i] = Σ Δt_i = T.
  CHECK(std::abs(mb / nn - 1.0) <= 4.0 * std::sqrt(1.0 / nn) * 1.5);
}

TEST_CASE("backward Stratonovich integral") {
  const auto g = TimeGrid::uniform(0.0, 1.0, 64);
  const auto b = generate_paths(g, 1, 1, 4, kClock);
  const auto db = row(b.dB[0]);
  const double total = std::accumulate(db.begin(), db.end(), 0.0);
  CHECK(stratonovich_backward([](double, double) { return 0.0; }, g, db, 1.0) == 0.0);
  CHECK(stratonovich_backward([](double, double) { return 2.5; }, g, db, 1.0) ==
        doctest::Approx(2.5 * total).epsilon(1e-13));
  CHECK_THROWS_AS(stratonovich_backward([](double, double) { return 1.0; }, g, std::vector<double>(3, 0.0), 0.0),
                  ValidationError);
}

TEST_CASE("linear Stratonovich flow converges with strong order near one") {
  // s' = a s ∘dB backward from s(T) = y: s(t0) = y exp(a (B_T − B_{t0})).
  const double a = 0.8, y = 1.3;
  const std::size_t fine = 1024;
  const std::size_t n = 200;
  const auto b = generate_paths(TimeGrid::uniform(0.0, 1.0, fine), 1, n, 6, kClock);
  const std::vector<std::size_t> factors{64, 32, 16, 8};
  std::vector<double> err(factors.size(), 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    const auto db = row(b.dB[p]);
    const double exact = y * std::exp(a * std::accumulate(db.begin(), db.end(), 0.0)) - y;
    for (std::size_t k = 0; k < factors.size(); ++k) {
      const auto c = coarsened(b, factors[k]);
      const double approx = stratonovich_backward([a](double, double s) { return a * s; }, c.grid, row(c.dB[p]), y);
      err[k] += std::abs(approx - exact) / static_cast<double>(n);
    }
  }
  for (std::size_t k = 1; k < err.size(); ++k) CHECK(err[k] < err[k - 1]);
  const double order = std::log(err.front() / err.back()) / std::log(8.0);
  CHECK(order >= 0.9);
}

}  // TEST_SUITE
