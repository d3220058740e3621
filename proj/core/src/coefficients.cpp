#include "bdsgvi/coefficients.hpp"

#include <algorithm>
#include <random>

#include <fmt/format.h>

#include "bdsgvi/call_spec.hpp"
#include "bdsgvi/drivers.hpp"
#include "bdsgvi/errors.hpp"

namespace bdsgvi {

Vector CoefficientSet::terminal_value(const Vector& x) const {
  if (const auto* v = std::get_if<Vector>(&terminal)) return *v;
  return std::get<TerminalMap>(terminal)(x);
}

CoefficientSet make_coefficients(int k, int d, const std::string& f, const std::string& g,
                                 const std::string& h, const std::string& terminal) {
  if (k < 1 || d < 1) throw ValidationError("coefficients need k >= 1 and d >= 1");
  CoefficientSet c;
  c.k = k;
  c.d = d;
  c.label = fmt::format("f={} g={} h={} terminal={}", f, g, h, terminal);

  const CallSpec fs = parse_call(f);
  if (fs.name == "zero") {
    expect_arity(fs, 0, 0);
    c.f = [k](double, const Vector&, const Vector&, const Matrix&) -> Vector { return Vector::Zero(k); };
  } else if (fs.name == "const") {
    expect_arity(fs, 1, 1);
    const double v = fs.args[0];
    c.f = [k, v](double, const Vector&, const Vector&, const Matrix&) -> Vector { return Vector::Constant(k, v); };
  } else if (fs.name == "linear") {
    expect_arity(fs, 3, 3);
    const double a = fs.args[0];
    const double b = fs.args[1];
    const double cz = fs.args[2];
    c.f = [a, b, cz](double, const Vector&, const Vector& y, const Matrix& z) -> Vector {
      return (a + b * y.array() + cz * z.rowwise().sum().array()).matrix();
    };
  } else {
    throw ValidationError(fmt::format("unknown f '{}' (known: zero, const(c), linear(a,b,c))", fs.name));
  }

  const CallSpec gs = parse_call(g);
  if (gs.name == "zero") {
    expect_arity(gs, 0, 0);
    c.g = [k](double, const Vector&, const Vector&) -> Vector { return Vector::Zero(k); };
  } else if (gs.name == "const") {
    expect_arity(gs, 1, 1);
    const double v = gs.args[0];
    c.g = [k, v](double, const Vector&, const Vector&) -> Vector { return Vector::Constant(k, v); };
  } else if (gs.name == "linear") {
    expect_arity(gs, 2, 2);
    const double a = gs.args[0];
    const double b = gs.args[1];
    c.g = [a, b](double, const Vector&, const Vector& y) -> Vector { return (a + b * y.array()).matrix(); };
  } else {
    throw ValidationError(fmt::format("unknown g '{}' (known: zero, const(c), linear(a,b))", gs.name));
  }

  const CallSpec hs = parse_call(h);
  if (hs.name == "zero") {
    expect_arity(hs, 0, 0);
    c.h = [k, d](double, const Vector&, const Vector&, const Matrix&) -> Matrix { return Matrix::Zero(k, d); };
  } else if (hs.name == "const") {
    expect_arity(hs, 1, 1);
    const double v = hs.args[0];
    c.h = [k, d, v](double, const Vector&, const Vector&, const Matrix&) -> Matrix {
      return Matrix::Constant(k, d, v);
    };
    c.backward_noise = v != 0.0;
  } else if (hs.name == "linear") {
    expect_arity(hs, 2, 2);
    const double a = hs.args[0];
    const double b = hs.args[1];
    c.h = [d, a, b](double, const Vector&, const Vector& y, const Matrix&) -> Matrix {
      return (a + b * y.array()).matrix().replicate(1, d);
    };
    c.backward_noise = a != 0.0 || b != 0.0;
  } else {
    throw ValidationError(fmt::format("unknown h '{}' (known: zero, const(c), linear(a,b))", hs.name));
  }

  const CallSpec ts = parse_call(terminal);
  if (ts.name == "const") {
    expect_arity(ts, 1, 1);
    c.terminal = Vector(Vector::Constant(k, ts.args[0]));
  } else if (ts.name == "norm_sq") {
    expect_arity(ts, 0, 0);
    c.terminal = CoefficientSet::TerminalMap([k](const Vector& x) -> Vector {
      return Vector::Constant(k, x.squaredNorm());
    });
    c.state_dependent = true;
  } else if (ts.name == "coord") {
    expect_arity(ts, 1, 1);
    const auto j = static_cast<Eigen::Index>(ts.args[0]);
    if (j < 0 || static_cast<double>(j) != ts.args[0]) throw ValidationError("coord(j) needs an integer j >= 0");
    c.terminal = CoefficientSet::TerminalMap([k, j](const Vector& x) -> Vector {
      if (j >= x.size()) throw ValidationError(fmt::format("coord({}) on a {}-dimensional state", j, x.size()));
      return Vector::Constant(k, x[j]);
    });
    c.state_dependent = true;
  } else {
    throw ValidationError(fmt::format("unknown terminal '{}' (known: const(c), norm_sq, coord(j))", ts.name));
  }
  return c;
}

CoefficientCheck spot_check(const CoefficientSet& c, std::size_t samples, std::uint64_t seed, double box,
                            double tol) {
  CoefficientCheck r;
  auto rng = substream(seed, 0, 0xC0EF);
  std::uniform_real_distribution<double> u(-box, box);
  auto vec = [&](Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
    return v;
  };
  auto mat = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
  };
  const AssumptionConstants& k = c.constants;
  for (std::size_t s = 0; s < samples; ++s) {
    const double t = std::abs(u(rng));
    const Vector x = c.state_dependent ? vec(c.d) : Vector();
    const Vector y = vec(c.k);
    const Vector y2 = vec(c.k);
    const Matrix z = mat(c.k, c.d);
    const Matrix z2 = mat(c.k, c.d);
    const Vector dy = y - y2;
    const double dy2 = dy.squaredNorm();
    const double dz2 = (z - z2).squaredNorm();
    if (dy2 > 0.0) {
      r.f_monotonicity = std::max(r.f_monotonicity, dy.dot(c.f(t, x, y, z) - c.f(t, x, y2, z)) / dy2);
      r.g_monotonicity = std::max(r.g_monotonicity, dy.dot(c.g(t, x, y) - c.g(t, x, y2)) / dy2);
    }
    if (dz2 > 0.0) {
      r.f_lipschitz_z = std::max(r.f_lipschitz_z, (c.f(t, x, y, z) - c.f(t, x, y, z2)).norm() / std::sqrt(dz2));
    }
    const double dh2 = (c.h(t, x, y, z) - c.h(t, x, y2, z2)).squaredNorm();
    r.h_contraction = std::max(r.h_contraction, dh2 - k.K * dy2 - k.alpha * dz2);
  }
  auto fail = [&](std::string why) {
    if (r.ok) r.failure = std::move(why);
    r.ok = false;
  };
  if (r.f_monotonicity > k.beta1 + tol) fail(fmt::format("f monotonicity ratio {} exceeds beta1 = {}", r.f_monotonicity, k.beta1));
  if (r.f_lipschitz_z > k.K + tol) fail(fmt::format("f Lipschitz ratio in z {} exceeds K = {}", r.f_lipschitz_z, k.K));
  if (r.g_monotonicity > k.beta2 + tol) fail(fmt::format("g monotonicity ratio {} exceeds beta2 = {}", r.g_monotonicity, k.beta2));
  if (r.h_contraction > tol) fail(fmt::format("h contraction excess {} is positive", r.h_contraction));
  return r;
}

}  // namespace bdsgvi
