#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "bdsgvi/doss_sussmann.hpp"
#include "bdsgvi/errors.hpp"

using namespace bdsgvi;

namespace {

const AnalyticIncreasing kClock{[](double t) { return t; }, "t"};

BrownianPath path_of(std::size_t steps, std::uint64_t seed, std::size_t p = 0, std::size_t n = 1) {
  return BrownianPath::from_bundle(generate_paths(TimeGrid::uniform(0.0, 1.0, steps), 1, n, seed, kClock), p);
}

Vector pt(std::initializer_list<double> v) {
  Vector x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double c : v) x[i++] = c;
  return x;
}

}  // namespace

TEST_SUITE("doss_sussmann") {

TEST_CASE("identity and additive flows") {
  const auto path = path_of(64, 1);
  const Vector x = pt({0.2});
  const auto id = flow(make_flow_spec("zero", 1), 0.25, x, 1.7, path, 48);
  CHECK(id.eta == 1.7);
  CHECK(id.d_y_eta == 1.0);
  const auto add = flow(make_flow_spec("const(0.6)", 1), 0.25, x, 1.7, path, 48);
  CHECK(add.eta == doctest::Approx(1.7 + 0.6 * path.increment_from(0.25)).epsilon(1e-13));
  CHECK(add.d_y_eta == 1.0);
  const auto spec = make_flow_spec("const(0.6)", 1);
  CHECK(flow_inverse(spec, 0.25, x, 2.0, path, 48) ==
        doctest::Approx(2.0 - 0.6 * path.increment_from(0.25)).epsilon(1e-10));
}

TEST_CASE("linear flow: closed form, inverse and strong order") {
  const auto spec = make_flow_spec("linear(1)", 1);
  const Vector x = pt({0.0});
  const std::size_t n = 200;
  const std::vector<std::size_t> steps{16, 32, 64, 128};
  std::vector<double> err(steps.size(), 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    const auto path = path_of(1024, 2, p, n);
    const double exact = 1.3 * std::exp(path.increment_from(0.0));
    for (std::size_t k = 0; k < steps.size(); ++k)
      err[k] += std::abs(flow(spec, 0.0, x, 1.3, path, steps[k]).eta - exact) / exact / static_cast<double>(n);
    if (p < 5) {
      const double target = 0.8;
      const double inv = flow_inverse(spec, 0.0, x, target, path, 1024);
      // Agreement up to the Heun discretization error at 1024 steps.
      CHECK(inv == doctest::Approx(target * std::exp(-path.increment_from(0.0))).epsilon(1e-2));
    }
  }
  for (std::size_t k = 1; k < err.size(); ++k) CHECK(err[k] < err[k - 1]);
  CHECK(std::log(err.front() / err.back()) / std::log(8.0) >= 0.9);
}

TEST_CASE("discrete derivative is exact for the discrete map") {
  const auto spec = make_flow_spec("sine(0.8,0.3)", 2);
  const auto path = path_of(100, 3);
  const Vector x = pt({0.4, -0.1});
  for (double y : {-2.0, 0.1, 1.5}) {
    const auto s = flow(spec, 0.2, x, y, path, 80);
    const double h = 1e-6;
    const double fd = (flow(spec, 0.2, x, y + h, path, 80).eta - flow(spec, 0.2, x, y - h, path, 80).eta) / (2 * h);
    CHECK(s.d_y_eta > 0.0);
    CHECK(s.d_y_eta == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("diffeomorphism and round trip on random inputs") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> uy(-3.0, 3.0);
  std::uniform_int_distribution<int> ut(0, 9);
  const auto spec = make_flow_spec("sine(1.2,0.5)", 2);
  for (int s = 0; s < 30; ++s) {
    const auto path = path_of(50, 100 + static_cast<std::uint64_t>(s));
    const double t = 0.1 * ut(rng);
    const std::size_t steps = 50 - static_cast<std::size_t>(std::llround(t * 50.0));
    const Vector x = pt({uy(rng), uy(rng)});
    double prev = -kInfinity;
    for (double y = -3.0; y <= 3.0; y += 0.5) {
      const auto f = flow(spec, t, x, y, path, steps);
      CHECK(f.d_y_eta > 0.0);
      CHECK(f.eta > prev);
      prev = f.eta;
    }
    const double y = uy(rng);
    const double eta = flow(spec, t, x, y, path, steps).eta;
    CHECK(std::abs(flow_inverse(spec, t, x, eta, path, steps) - y) <= 1e-9);
  }
}

TEST_CASE("flow argument errors") {
  const auto path = path_of(10, 4);
  const auto spec = make_flow_spec("linear(1)", 1);
  CHECK_THROWS_AS(flow(spec, 0.0, pt({0.0}), 1.0, path, 0), ValidationError);
  CHECK_THROWS_AS(flow(spec, 0.0, pt({0.0}), 1.0, path, 3), ValidationError);
  CHECK_THROWS_AS(flow(spec, 0.0, pt({0.0, 1.0}), 1.0, path, 10), ValidationError);
  CHECK_THROWS_AS(flow(spec, 0.05, pt({0.0}), 1.0, path, 10), ValidationError);
  FlowSpec no_derivative = spec;
  no_derivative.h_u = nullptr;
  CHECK_THROWS_AS(flow(no_derivative, 0.0, pt({0.0}), 1.0, path, 10), ValidationError);
  FlowSpec no_jet = spec;
  no_jet.jet.reset();
  CHECK_THROWS_AS(flow_derivatives(no_jet, 0.0, pt({0.0}), 1.0, path, 10, DerivativeMethod::Variational),
                  ValidationError);
  CHECK_THROWS_AS(make_flow_spec("cosine(1)", 1), ValidationError);
}

TEST_CASE("identity transform without backward noise") {
  const auto spec = make_flow_spec("zero", 2);
  const auto path = path_of(20, 5);
  const auto coeffs = make_coefficients(1, 2, "linear(0.5,-1,0.25)", "linear(0.1,-2)", "zero", "const(0)");
  const auto dyn = make_dynamics("linear(-1)", "identity", 2);
  const auto ball = domains::ball(2);
  const TransformPoint p{0.3, pt({0.2, 0.5}), 0.7, pt({0.4, -0.2})};
  const auto v = transform_coefficients(spec, coeffs, dyn, ball, p, path, 14);
  Matrix z(1, 2);
  z << 0.4, -0.2;
  CHECK(v.f_tilde == doctest::Approx(coeffs.f(0.3, p.x, Vector::Constant(1, 0.7), z)[0]).epsilon(1e-12));
  CHECK(v.g_tilde == doctest::Approx(coeffs.g(0.3, p.x, Vector::Constant(1, 0.7))[0]).epsilon(1e-12));
  CHECK(v.derivatives.eta == 0.7);
}

TEST_CASE("pure shift transform") {
  const auto spec = make_flow_spec("const(0.4)", 1);
  const auto path = path_of(20, 6);
  const auto coeffs = make_coefficients(1, 1, "linear(0,-1,0)", "const(0.3)", "zero", "const(0)");
  const auto dyn = make_dynamics("zero", "identity", 1);
  const auto iv = domains::interval(-1.0, 1.0);
  const TransformPoint p{0.5, pt({0.1}), 1.0, pt({0.0})};
  const auto v = transform_coefficients(spec, coeffs, dyn, iv, p, path, 10);
  const double eta = 1.0 + 0.4 * path.increment_from(0.5);
  CHECK(v.derivatives.eta == doctest::Approx(eta).epsilon(1e-13));
  CHECK(v.f_tilde == doctest::Approx(-eta).epsilon(1e-6));
  CHECK(v.g_tilde == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("variational and finite-difference assemblies agree") {
  const auto path = path_of(200, 7);
  const auto dyn = make_dynamics("linear(-0.5)", "scaled(0.8)", 2);
  const auto ball = domains::ball(2);
  const auto coeffs = make_coefficients(1, 2, "linear(0.2,-1,0.5)", "linear(0.1,-1)", "zero", "const(0)");
  for (const char* h : {"linear(1)", "sine(0.9,0.4)"}) {
    const auto spec = make_flow_spec(h, 2);
    for (const auto& p : {TransformPoint{0.0, pt({0.1, 0.3}), 0.5, pt({0.0, 0.0})},
                          TransformPoint{0.4, pt({-0.3, 0.2}), -1.2, pt({0.7, -0.4})}}) {
      const std::size_t steps = 200 - static_cast<std::size_t>(std::llround(p.t * 200.0));
      const auto fd = transform_coefficients(spec, coeffs, dyn, ball, p, path, steps, DerivativeMethod::FiniteDifference);
      const auto va = transform_coefficients(spec, coeffs, dyn, ball, p, path, steps, DerivativeMethod::Variational);
      CHECK(std::abs(fd.f_tilde - va.f_tilde) <= 1e-6);
      CHECK(std::abs(fd.g_tilde - va.g_tilde) <= 1e-6);
      CHECK(std::abs(fd.derivatives.D_yy - va.derivatives.D_yy) <= 1e-6);
      CHECK((fd.derivatives.D_xx - va.derivatives.D_xx).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("linear flow transform at z = 0 reduces to the Ito correction") {
  const auto spec = make_flow_spec("linear(1)", 1);
  const auto path = path_of(100, 8);
  const auto coeffs = make_coefficients(1, 1, "zero", "zero", "zero", "const(0)");
  const auto dyn = make_dynamics("zero", "identity", 1);
  const TransformPoint p{0.0, pt({0.0}), 0.9, pt({0.0})};
  const auto v = transform_coefficients(spec, coeffs, dyn, domains::interval(-1.0, 1.0), p, path, 100,
                                        DerivativeMethod::Variational);
  CHECK(v.f_tilde == doctest::Approx(-0.5 * v.derivatives.eta / v.derivatives.D_y).epsilon(1e-10));
  CHECK(v.g_tilde == doctest::Approx(0.0));
}

TEST_CASE("penalized transforms") {
  const auto path = path_of(20, 9);
  const auto coeffs = make_coefficients(1, 1, "const(0.5)", "const(0.2)", "zero", "const(0)");
  const auto dyn = make_dynamics("zero", "identity", 1);
  const auto iv = domains::interval(-1.0, 1.0);
  const TransformPoint p{0.0, pt({0.0}), 0.7, pt({0.0})};

  const auto sine = make_flow_spec("sine(0.5,0.2)", 1);
  const auto plain = transform_coefficients(sine, coeffs, dyn, iv, p, path, 20);
  const auto zero = transform_penalized(sine, coeffs, dyn, iv, catalog::zero(), catalog::zero(), 0.1, p, path, 20);
  CHECK(zero.f_tilde == plain.f_tilde);
  CHECK(zero.g_tilde == plain.g_tilde);

  const auto id = make_flow_spec("zero", 1);
  for (double delta : {1.0, 0.1}) {
    const auto q = transform_penalized(id, coeffs, dyn, iv, catalog::quadratic(1.0), catalog::zero(), delta, p, path, 20);
    CHECK(q.f_tilde == doctest::Approx(0.5 - 0.7 / (1.0 + delta)).epsilon(1e-12));
  }
  const double slope = one_sided_derivatives(catalog::hinge_sq(), 0.7).right;
  double prev_gap = kInfinity;
  for (double delta : {1e-1, 1e-2, 1e-3, 1e-4}) {
    const auto q = transform_penalized(id, coeffs, dyn, iv, catalog::hinge_sq(), catalog::hinge_sq(), delta, p, path, 20);
    const double gap = std::abs(q.f_tilde - (0.5 - slope));
    CHECK(gap < prev_gap);
    prev_gap = gap;
  }
  CHECK(prev_gap <= 1e-3);
  CHECK_THROWS_AS(transform_penalized(id, coeffs, dyn, iv, catalog::zero(), catalog::zero(), 0.0, p, path, 20),
                  ValidationError);
  CHECK_THROWS_AS(transform_coefficients(id, make_coefficients(2, 1, "zero", "zero", "zero", "const(0)"), dyn, iv, p,
                                         path, 20),
                  ValidationError);
}

TEST_CASE("flow csv") {
  std::ostringstream out;
  write_flow_csv(out, {{0.0, 1.0, {1.5, 1.1}}, {0.5, 2.0, {2.5, 0.9}}});
  const std::string s = out.str();
  CHECK(s.rfind("t,y,eta,d_y_eta\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 3);
}

}  // TEST_SUITE
