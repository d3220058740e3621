#include <doctest.h>

#include <cmath>
#include <random>

#include "bdsgvi/convex.hpp"
#include "bdsgvi/errors.hpp"

using namespace bdsgvi;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }

// Brute-force minimizer of ½(x−y)² + εθ(y) over a fixed lattice.
std::pair<double, double> brute_min(const ConvexFunction& f, double eps, double x, double lo, double hi, double step) {
  double best = kInfinity;
  double arg = lo;
  const auto n = static_cast<long>(std::llround((hi - lo) / step));
  for (long i = 0; i <= n; ++i) {
    const double y = lo + static_cast<double>(i) * step;
    const double v = 0.5 * (x - y) * (x - y) + eps * f(y);
    if (v < best) {
      best = v;
      arg = y;
    }
  }
  return {arg, best};
}

ConvexFunction without_oracle(ConvexFunction f) {
  f.prox_oracle.reset();
  return f;
}

std::vector<ConvexFunction> shipped() {
  return {catalog::zero(), catalog::quadratic(1.5), catalog::abs(), catalog::indicator_box(-0.5, 1.0),
          catalog::hinge_sq()};
}

}  // namespace

TEST_SUITE("convex") {

TEST_CASE("prox closed forms") {
  CHECK(prox(catalog::quadratic(1.0), 1.0, 2.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(prox(catalog::zero(), 0.3, 3.7) == 3.7);
  CHECK(prox(catalog::abs(), 0.5, 2.0) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(prox(catalog::abs(), 0.5, 0.2) == 0.0);
  CHECK(prox(catalog::hinge_sq(), 1.0, 3.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(prox(catalog::indicator_box(-kInfinity, 0.5), 2.0, 3.0) == 0.5);
}

TEST_CASE("moreau envelope examples") {
  CHECK(moreau_envelope(catalog::quadratic(1.0), 1.0, v1(2.0)) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(moreau_envelope(catalog::zero(), 0.7, v1(5.0)) == 0.0);
  // Independent lattice minimization over [−4, 4] with step 1e-4.
  const auto [arg, val] = brute_min(catalog::abs(), 0.5, 2.0, -4.0, 4.0, 1e-4);
  CHECK(arg == doctest::Approx(1.5).epsilon(1e-4));
  CHECK(val == doctest::Approx(0.875).epsilon(1e-8));
  CHECK(moreau_envelope(catalog::abs(), 0.5, v1(2.0)) == doctest::Approx(val).epsilon(1e-8));
  CHECK(moreau_envelope(without_oracle(catalog::abs()), 0.5, v1(2.0)) == doctest::Approx(val).epsilon(1e-8));
}

TEST_CASE("yosida gradient examples") {
  CHECK(yosida_gradient(catalog::quadratic(1.0), 1.0, 2.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(yosida_gradient(catalog::indicator_box(-kInfinity, 0.0), 0.25, 3.0) == doctest::Approx(12.0).epsilon(1e-15));
  CHECK(yosida_gradient(without_oracle(catalog::abs()), 0.5, 2.0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("grid oracle examples") {
  CHECK(std::abs(grid_prox_oracle(catalog::quadratic(1.0), 1.0, v1(2.0), 1e-4)[0] - 1.0) <= 1e-4);
  CHECK(std::abs(grid_prox_oracle(catalog::hinge_sq(), 1.0, v1(-1.0), 1e-4)[0] + 1.0) <= 1e-4);
  CHECK(std::abs(grid_prox_oracle(catalog::abs(), 0.5, v1(-2.0), 1e-4)[0] + 1.5) <= 1e-4);
  CHECK(grid_prox_oracle(catalog::abs(), 0.5, v1(0.0), 1e-4)[0] == 0.0);
}

TEST_CASE("grid oracle agrees with closed forms, 1-d and 2-d") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ux(-4.0, 4.0);
  std::uniform_real_distribution<double> ue(0.05, 2.0);
  for (const auto& f : shipped()) {
    for (int s = 0; s < 200; ++s) {
      const double x = ux(rng);
      const double e = ue(rng);
      const double exact = prox(f, e, x);
      CHECK(std::abs(grid_prox_oracle(f, e, v1(x), 1e-7)[0] - exact) <= 1e-7);
    }
    const ConvexFunction f2 = separable(f, 2);
    for (int s = 0; s < 20; ++s) {
      Vector x(2);
      x << ux(rng), ux(rng);
      const double e = ue(rng);
      const Vector exact = prox(f2, e, x);
      CHECK((grid_prox_oracle(f2, e, x, 1e-6) - exact).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("grid oracle handles a non-separable 2-d function") {
  // θ(y) = ½ yᵀQy with an anisotropic, rotated Q; prox = (I + εQ)⁻¹ x.
  Matrix Q(2, 2);
  Q << 20.0, 9.0, 9.0, 5.0;
  ConvexFunction f;
  f.label = "rotated quadratic";
  f.dim = 2;
  f.evaluate = [Q](const Vector& y) { return 0.5 * y.dot(Q * y); };
  f.domain_hint = DomainBox{Vector::Constant(2, -kInfinity), Vector::Constant(2, kInfinity)};
  Vector x(2);
  x << 1.3, -2.1;
  const double e = 0.7;
  const Vector exact = (Matrix::Identity(2, 2) + e * Q).inverse() * x;
  CHECK((grid_prox_oracle(f, e, x, 1e-7) - exact).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("prox and grid oracle errors") {
  CHECK_THROWS_AS(prox(catalog::abs(), 0.0, 1.0), ValidationError);
  CHECK_THROWS_AS(prox(catalog::abs(), -1.0, 1.0), ValidationError);
  CHECK_THROWS_AS(prox(catalog::abs(), 1.0, std::nan("")), ValidationError);
  CHECK_THROWS_AS(prox(catalog::abs(), 1.0, kInfinity), ValidationError);
  ConvexFunction bare = without_oracle(catalog::abs());
  bare.domain_hint.reset();
  CHECK_THROWS_AS(prox(bare, 1.0, 1.0), ValidationError);
  CHECK_THROWS_AS(grid_prox_oracle(without_oracle(separable(catalog::abs(), 3)), 1.0, Vector::Ones(3), 1e-3),
                  ValidationError);
}

TEST_CASE("one-sided derivatives") {
  const auto a = one_sided_derivatives(catalog::abs(), 0.0);
  CHECK(a.left == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(a.right == doctest::Approx(1.0).epsilon(1e-9));
  const auto q = one_sided_derivatives(catalog::quadratic(1.0), 3.0);
  CHECK(q.left == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(q.right == doctest::Approx(3.0).epsilon(1e-8));
  const auto ind = one_sided_derivatives(catalog::indicator_box(-kInfinity, 0.0), 0.0);
  CHECK(ind.left == 0.0);
  CHECK(ind.right == kInfinity);
  const auto h = one_sided_derivatives(catalog::hinge_sq(), 0.7);
  CHECK(h.left == doctest::Approx(1.4).epsilon(1e-8));
  CHECK(h.left <= h.right);
  CHECK_THROWS_AS(one_sided_derivatives(catalog::indicator_box(-1.0, 0.0), 0.5), ValidationError);
}

TEST_CASE("compatibility checker") {
  const auto f1 = [](double, const Vector& y, const Matrix&) -> Vector { return Vector::Ones(y.size()); };
  const auto g1 = [](double, const Vector& y) -> Vector { return Vector::Ones(y.size()); };
  const auto f0 = [](double, const Vector& y, const Matrix&) -> Vector { return Vector::Zero(y.size()); };
  const auto g0 = [](double, const Vector& y) -> Vector { return Vector::Zero(y.size()); };
  std::vector<CompatibilitySample> samples;
  for (int i = 0; i <= 60; ++i) samples.push_back({0.0, v1(-3.0 + 0.1 * i), Matrix::Zero(1, 1)});
  const std::vector<double> ladder{1.0, 0.1, 0.01};

  const auto same = check_compatibility(catalog::abs(), catalog::abs(), f1, g1, ladder, samples);
  CHECK(same.gradients_aligned.amount <= 0.0);
  const auto zeros = check_compatibility(catalog::zero(), catalog::zero(), f0, g0, ladder, samples);
  CHECK(zeros.ok);
  CHECK(zeros.gradients_aligned.amount == 0.0);
  CHECK(zeros.boundary_term.amount == 0.0);
  CHECK(zeros.drift_term.amount == 0.0);

  // φ = |y|, ψ = y²/2, f = g = 1: evaluate the three inequalities directly.
  const auto rep = check_compatibility(catalog::abs(), catalog::quadratic(1.0), f1, g1, ladder, samples);
  double worst_i = -kInfinity, worst_ii = -kInfinity, worst_iii = -kInfinity;
  for (const double e : ladder) {
    for (const auto& s : samples) {
      const double y = s.y[0];
      const double gp = std::clamp(y / e, -1.0, 1.0);
      const double gq = y / (1.0 + e);
      worst_i = std::max(worst_i, -gp * gq);
      worst_ii = std::max(worst_ii, gp - std::max(0.0, gq));
      worst_iii = std::max(worst_iii, gq - std::max(0.0, gp));
    }
  }
  CHECK(rep.gradients_aligned.amount == doctest::Approx(worst_i).epsilon(1e-12));
  CHECK(rep.boundary_term.amount == doctest::Approx(worst_ii).epsilon(1e-12));
  CHECK(rep.drift_term.amount == doctest::Approx(worst_iii).epsilon(1e-12));
  CHECK(rep.ok == (worst_i <= 1e-9 && worst_ii <= 1e-9 && worst_iii <= 1e-9));
  CHECK_FALSE(rep.ok);
}

TEST_CASE("weight inequalities") {
  auto r = validate_weights({0, 0, 1, 0.5, 12, 2});
  CHECK(r.ok);
  CHECK(r.lambda_threshold == doctest::Approx(11.0));
  CHECK(r.mu_threshold == doctest::Approx(1.0));
  r = validate_weights({0, 0, 0, 0.5, 2.5, 1.5});
  CHECK(r.lambda_threshold == doctest::Approx(2.0));
  CHECK(r.ok);
  r = validate_weights({1, 1, 1, 0.5, 10, 5});
  CHECK(r.lambda_threshold == doctest::Approx(15.0));
  CHECK_FALSE(r.ok);
  CHECK(r.lambda_margin == doctest::Approx(-5.0));
  CHECK_THROWS_AS(validate_weights({0, 0, 1, 1.0, 12, 2}), ValidationError);
  CHECK_THROWS_AS(validate_weights({0, 0, 1, 0.0, 12, 2}), ValidationError);
}

TEST_CASE("catalog parsing") {
  CHECK(make_convex("quadratic(2)")(3.0) == doctest::Approx(9.0));
  CHECK(make_convex("indicator_box(-inf, 0.5)")(0.6) == kInfinity);
  CHECK(make_convex("indicator_box(-inf,0.5)")(-100.0) == 0.0);
  CHECK(make_convex("abs", 2)(Vector::Constant(2, -1.5)) == doctest::Approx(3.0));
  CHECK_THROWS_AS(make_convex("cubic"), ValidationError);
  CHECK_THROWS_AS(make_convex("quadratic(-1)"), ValidationError);
  CHECK_THROWS_AS(make_convex("indicator_box(0.1, 1)"), ValidationError);
  CHECK_THROWS_AS(make_convex("abs(1"), ValidationError);
}

TEST_CASE("convexity spot check") {
  std::vector<Vector> pts;
  for (int i = -10; i <= 10; ++i) pts.push_back(v1(0.3 * i));
  for (const auto& f : shipped()) CHECK(spot_check(f, pts).ok);
  ConvexFunction bad;
  bad.label = "concave bump";
  bad.evaluate = [](const Vector& y) { return std::sqrt(std::abs(y[0])); };
  CHECK_FALSE(spot_check(bad, pts).ok);
  ConvexFunction shifted;
  shifted.label = "shifted";
  shifted.evaluate = [](const Vector& y) { return (y[0] - 1.0) * (y[0] - 1.0); };
  CHECK_FALSE(spot_check(shifted, pts).ok);
}

TEST_CASE("resolvent and Yosida-gradient laws on random samples") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ux(-4.0, 4.0);
  std::uniform_real_distribution<double> ule(-2.0, 1.0);
  for (const auto& base : shipped()) {
    for (const int dim : {1, 2}) {
      const ConvexFunction f = separable(base, dim);
      for (int s = 0; s < 500; ++s) {
        Vector x(dim), y(dim), r(dim);
        for (int j = 0; j < dim; ++j) {
          x[j] = ux(rng);
          y[j] = ux(rng);
          r[j] = ux(rng);
        }
        const double e = std::pow(10.0, ule(rng));
        const double dl = std::pow(10.0, ule(rng));
        const Vector jx = prox(f, e, x);
        const Vector jy = prox(f, e, y);
        const Vector gx = yosida_gradient(f, e, x);
        const Vector gy = yosida_gradient(f, e, y);
        const Vector gyd = yosida_gradient(f, dl, y);
        const double tol = 1e-9 * (1.0 + x.norm() + y.norm()) / std::min(e, dl);
        CHECK((jx - jy).norm() <= (x - y).norm() + 1e-12);
        CHECK((gx - gy).norm() <= (x - y).norm() / e + tol);
        CHECK((gx - gy).dot(x - y) >= -tol);
        CHECK((gx - gyd).dot(x - y) >= -(e + dl) * gx.dot(gyd) - tol);
        const double env = moreau_envelope(f, e, x);
        CHECK(0.5 * (x - jx).squaredNorm() <= env + 1e-12);
        if (f(x) < kInfinity) CHECK(env <= e * f(x) + 1e-12);
        if (f(r) < kInfinity) CHECK(gx.dot(r - jx) + f(jx) <= f(r) + tol);
        CHECK(yosida_gradient(f, e, Vector::Zero(dim)).norm() == 0.0);
      }
    }
  }
}

}  // TEST_SUITE
