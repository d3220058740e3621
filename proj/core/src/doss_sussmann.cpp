#include "bdsgvi/doss_sussmann.hpp"

#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "bdsgvi/call_spec.hpp"
#include "bdsgvi/errors.hpp"

namespace bdsgvi {
namespace {

struct Segment {
  std::vector<double> times;  // coarse nodes from t to T
  std::vector<double> dB;     // per coarse step
};

Segment segment(const BrownianPath& path, double t, std::size_t steps) {
  if (steps == 0) throw ValidationError("flow: step count must be positive");
  if (path.increments.size() != path.grid.steps()) throw ValidationError("flow: path increments do not match its grid");
  const std::size_t i0 = path.grid.index_of(t, 1e-12 * std::max(1.0, std::abs(t)));
  const std::size_t m = path.grid.steps() - i0;
  if (m == 0) return Segment{{t}, {}};
  if (m % steps != 0) {
    throw ValidationError(fmt::format("flow: {} steps do not divide the {} path intervals on [t, T]", steps, m));
  }
  const std::size_t r = m / steps;
  Segment s;
  for (std::size_t j = 0; j <= steps; ++j) s.times.push_back(path.grid[i0 + j * r]);
  for (std::size_t j = 0; j < steps; ++j) {
    double db = 0.0;
    for (std::size_t q = 0; q < r; ++q) db += path.increments[i0 + j * r + q];
    s.dB.push_back(db);
  }
  return s;
}

void check_spec(const FlowSpec& spec, const Vector& x) {
  if (!spec.h) throw ValidationError("flow: h is not set");
  if (!spec.h_u) throw ValidationError("flow: derivative oracle h_u is missing");
  if (x.size() != spec.dim) throw ValidationError(fmt::format("flow: x has dimension {}, expected {}", x.size(), spec.dim));
}

FlowSample integrate(const FlowSpec& spec, const Segment& seg, const Vector& x, double y) {
  double s = y;
  double ds = 1.0;
  for (std::size_t j = seg.dB.size(); j-- > 0;) {
    const double t1 = seg.times[j + 1];
    const double t0 = seg.times[j];
    const double db = seg.dB[j];
    const double k1 = spec.h(t1, x, s);
    const double k1u = spec.h_u(t1, x, s);
    const double pred = s + k1 * db;
    const double k2 = spec.h(t0, x, pred);
    const double k2u = spec.h_u(t0, x, pred);
    ds *= 1.0 + 0.5 * db * (k1u + k2u * (1.0 + k1u * db));
    s += 0.5 * (k1 + k2) * db;
  }
  if (!std::isfinite(s) || !std::isfinite(ds)) throw NumericalError("flow: integration produced a non-finite value");
  return {s, ds};
}

// Propagates value, gradient and Hessian of the state with respect to the
// parameters p = (y, x) through the discrete Heun map.
FlowDerivatives integrate_variational(const FlowSpec& spec, const Segment& seg, const Vector& x, double y) {
  const int d = spec.dim;
  const int m = d + 1;
  double s = y;
  Vector ds = Vector::Zero(m);
  ds[0] = 1.0;
  Matrix dds = Matrix::Zero(m, m);
  Matrix J(m, m);
  J.setZero();
  J.bottomRightCorner(d, d).setIdentity();
  auto lift = [&](const Jet& jet, const Vector& dv, const Matrix& ddv, Vector& grad, Matrix& hess) {
    J.row(0) = dv.transpose();
    grad = J.transpose() * jet.gradient;
    hess = J.transpose() * jet.hessian * J + jet.gradient[0] * ddv;
  };
  const auto& jet_fn = *spec.jet;
  Vector g1, g2;
  Matrix h1, h2;
  for (std::size_t j = seg.dB.size(); j-- > 0;) {
    const double db = seg.dB[j];
    const Jet a = jet_fn(seg.times[j + 1], x, s);
    lift(a, ds, dds, g1, h1);
    const double pred = s + a.value * db;
    const Vector dpred = ds + db * g1;
    const Matrix ddpred = dds + db * h1;
    const Jet b = jet_fn(seg.times[j], x, pred);
    lift(b, dpred, ddpred, g2, h2);
    s += 0.5 * (a.value + b.value) * db;
    ds += 0.5 * db * (g1 + g2);
    dds += 0.5 * db * (h1 + h2);
  }
  FlowDerivatives out;
  out.eta = s;
  out.D_y = ds[0];
  out.D_x = ds.tail(d);
  out.D_yy = dds(0, 0);
  out.D_xy = dds.row(0).tail(d).transpose();
  out.D_xx = dds.bottomRightCorner(d, d);
  return out;
}

}  // namespace

FlowSpec make_flow_spec(const std::string& text, int dim) {
  const CallSpec c = parse_call(text);
  FlowSpec s;
  s.dim = dim;
  s.label = text;
  auto jet_of = [dim](double value, double hu, double huu, Vector hx, Matrix hxx, Vector hux) {
    Jet j;
    j.value = value;
    j.gradient.resize(dim + 1);
    j.gradient[0] = hu;
    j.gradient.tail(dim) = hx;
    j.hessian = Matrix::Zero(dim + 1, dim + 1);
    j.hessian(0, 0) = huu;
    j.hessian.block(0, 1, 1, dim) = hux.transpose();
    j.hessian.block(1, 0, dim, 1) = hux;
    j.hessian.bottomRightCorner(dim, dim) = hxx;
    return j;
  };
  const Vector zx = Vector::Zero(dim);
  const Matrix zxx = Matrix::Zero(dim, dim);
  if (c.name == "zero" || c.name == "const") {
    expect_arity(c, c.name == "zero" ? 0 : 1, c.name == "zero" ? 0 : 1);
    const double v = c.args.empty() ? 0.0 : c.args[0];
    s.h = [v](double, const Vector&, double) { return v; };
    s.h_u = [](double, const Vector&, double) { return 0.0; };
    s.jet = [=](double, const Vector&, double) { return jet_of(v, 0.0, 0.0, zx, zxx, zx); };
  } else if (c.name == "linear") {
    expect_arity(c, 1, 1);
    const double a = c.args[0];
    s.h = [a](double, const Vector&, double u) { return a * u; };
    s.h_u = [a](double, const Vector&, double) { return a; };
    s.jet = [=](double, const Vector&, double u) { return jet_of(a * u, a, 0.0, zx, zxx, zx); };
  } else if (c.name == "sine") {
    expect_arity(c, 2, 2);
    const double a = c.args[0];
    const double b = c.args[1];
    s.h = [a, b](double, const Vector& x, double u) { return a * std::sin(u) + b * x.sum(); };
    s.h_u = [a](double, const Vector&, double u) { return a * std::cos(u); };
    s.jet = [=](double, const Vector& x, double u) {
      return jet_of(a * std::sin(u) + b * x.sum(), a * std::cos(u), -a * std::sin(u), Vector::Constant(dim, b), zxx, zx);
    };
  } else {
    throw ValidationError(fmt::format("unknown noise coefficient '{}' (known: zero, const(c), linear(a), sine(a,b))", c.name));
  }
  return s;
}

BrownianPath BrownianPath::from_bundle(const PathBundle& bundle, std::size_t path, int component) {
  if (!bundle.has_backward()) throw ValidationError("bundle carries no backward driver");
  if (path >= bundle.n_paths || component < 0 || component >= bundle.d) {
    throw ValidationError("BrownianPath::from_bundle: path or component out of range");
  }
  BrownianPath b;
  b.grid = bundle.grid;
  b.increments.resize(bundle.grid.steps());
  for (std::size_t i = 0; i < bundle.grid.steps(); ++i) b.increments[i] = bundle.db(path, i)[component];
  return b;
}

double BrownianPath::increment_from(double t) const {
  const std::size_t i0 = grid.index_of(t, 1e-12 * std::max(1.0, std::abs(t)));
  double s = 0.0;
  for (std::size_t i = i0; i < increments.size(); ++i) s += increments[i];
  return s;
}

FlowSample flow(const FlowSpec& spec, double t, const Vector& x, double y, const BrownianPath& path,
                std::size_t steps) {
  check_spec(spec, x);
  if (!std::isfinite(y)) throw ValidationError("flow: non-finite initial value");
  const FlowSample s = integrate(spec, segment(path, t, steps), x, y);
  if (!(s.d_y_eta > 0.0)) throw NumericalError(fmt::format("flow: D_y eta = {} is not positive", s.d_y_eta));
  return s;
}

double flow_inverse(const FlowSpec& spec, double t, const Vector& x, double target, const BrownianPath& path,
                    std::size_t steps) {
  check_spec(spec, x);
  if (!std::isfinite(target)) throw ValidationError("flow_inverse: non-finite target");
  const Segment seg = segment(path, t, steps);
  constexpr double kTol = 1e-10;
  auto F = [&](double y) { return integrate(spec, seg, x, y); };
  // Bracket the root; η is increasing in y.
  double y = target - (F(target).eta - target);
  FlowSample fy = F(y);
  double lo = y;
  double hi = y;
  double step = std::max(1.0, std::abs(fy.eta - target));
  if (fy.eta < target) {
    for (int i = 0; F(hi).eta < target; ++i) {
      if (i > 80) throw NumericalError("flow_inverse: no bracket found within the expansion limit");
      lo = hi;
      hi += step;
      step *= 2.0;
    }
  } else {
    for (int i = 0; F(lo).eta > target; ++i) {
      if (i > 80) throw NumericalError("flow_inverse: no bracket found within the expansion limit");
      hi = lo;
      lo -= step;
      step *= 2.0;
    }
  }
  for (int it = 0; it < 300; ++it) {
    fy = F(y);
    const double r = fy.eta - target;
    if (std::abs(r) <= kTol) return y;
    if (r < 0.0) lo = std::max(lo, y); else hi = std::min(hi, y);
    double next = y - r / fy.d_y_eta;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == y || hi - lo <= 4e-16 * std::max(1.0, std::abs(y))) return y;
    y = next;
  }
  throw NumericalError("flow_inverse: iteration did not converge");
}

FlowDerivatives flow_derivatives(const FlowSpec& spec, double t, const Vector& x, double y, const BrownianPath& path,
                                 std::size_t steps, DerivativeMethod method) {
  check_spec(spec, x);
  const Segment seg = segment(path, t, steps);
  FlowDerivatives out;
  if (method == DerivativeMethod::Variational) {
    if (!spec.jet) throw ValidationError("flow_derivatives: variational route needs a jet oracle for h");
    out = integrate_variational(spec, seg, x, y);
  } else {
    constexpr double h = 1e-4;
    const int d = spec.dim;
    const FlowSample c = integrate(spec, seg, x, y);
    out.eta = c.eta;
    out.D_y = c.d_y_eta;
    out.D_yy = (integrate(spec, seg, x, y + h).d_y_eta - integrate(spec, seg, x, y - h).d_y_eta) / (2.0 * h);
    out.D_x = Vector::Zero(d);
    out.D_xy = Vector::Zero(d);
    out.D_xx = Matrix::Zero(d, d);
    Vector e = Vector::Zero(d);
    for (int i = 0; i < d; ++i) {
      e[i] = h;
      const FlowSample p = integrate(spec, seg, x + e, y);
      const FlowSample m = integrate(spec, seg, x - e, y);
      out.D_x[i] = (p.eta - m.eta) / (2.0 * h);
      out.D_xy[i] = (p.d_y_eta - m.d_y_eta) / (2.0 * h);
      out.D_xx(i, i) = (p.eta - 2.0 * c.eta + m.eta) / (h * h);
      for (int j = 0; j < i; ++j) {
        Vector f = Vector::Zero(d);
        f[j] = h;
        const double pp = integrate(spec, seg, x + e + f, y).eta;
        const double pm = integrate(spec, seg, x + e - f, y).eta;
        const double mp = integrate(spec, seg, x - e + f, y).eta;
        const double mm = integrate(spec, seg, x - e - f, y).eta;
        out.D_xx(i, j) = out.D_xx(j, i) = (pp - pm - mp + mm) / (4.0 * h * h);
      }
      e[i] = 0.0;
    }
  }
  if (!(out.D_y > 0.0)) throw NumericalError(fmt::format("flow: D_y eta = {} is not positive", out.D_y));
  return out;
}

TransformedValues transform_coefficients(const FlowSpec& spec, const CoefficientSet& coeffs, const Dynamics& dyn,
                                         const DomainSpec& domain, const TransformPoint& point,
                                         const BrownianPath& path, std::size_t steps, DerivativeMethod method) {
  if (coeffs.k != 1) throw ValidationError("transform_coefficients: the transform is defined for k = 1");
  if (point.z.size() != coeffs.d || point.x.size() != spec.dim || domain.dim != spec.dim) {
    throw ValidationError("transform_coefficients: inconsistent dimensions");
  }
  TransformedValues out;
  out.derivatives = flow_derivatives(spec, point.t, point.x, point.y, path, steps, method);
  const FlowDerivatives& D = out.derivatives;
  constexpr double kDegenerate = 1e-12;
  if (!(D.D_y > kDegenerate)) throw NumericalError(fmt::format("flow degenerate: D_y eta = {}", D.D_y));
  const Matrix sigma = dyn.sigma(point.t, point.x);
  const Vector b = dyn.drift(point.t, point.x);
  const Vector eta = Vector::Constant(1, D.eta);
  const Vector zarg = sigma.transpose() * D.D_x + D.D_y * point.z;
  const double lx = 0.5 * (sigma * sigma.transpose()).cwiseProduct(D.D_xx).sum() + b.dot(D.D_x);
  const double hh = spec.h(point.t, point.x, D.eta) * spec.h_u(point.t, point.x, D.eta);
  const double fval = coeffs.f(point.t, point.x, eta, zarg.transpose())[0];
  out.f_tilde = (fval - 0.5 * hh + lx + (sigma.transpose() * D.D_xy).dot(point.z) + 0.5 * D.D_yy * point.z.squaredNorm()) / D.D_y;
  const double gval = coeffs.g(point.t, point.x, eta)[0];
  out.g_tilde = (gval - domain.gradient(point.x).dot(D.D_x)) / D.D_y;
  return out;
}

TransformedValues transform_penalized(const FlowSpec& spec, const CoefficientSet& coeffs, const Dynamics& dyn,
                                      const DomainSpec& domain, const ConvexFunction& phi, const ConvexFunction& psi,
                                      double delta, const TransformPoint& point, const BrownianPath& path,
                                      std::size_t steps, DerivativeMethod method) {
  if (!(delta > 0.0)) throw ValidationError("transform_penalized: delta must be positive");
  TransformedValues out = transform_coefficients(spec, coeffs, dyn, domain, point, path, steps, method);
  const double eta = out.derivatives.eta;
  out.f_tilde -= yosida_gradient(phi, delta, eta) / out.derivatives.D_y;
  out.g_tilde -= yosida_gradient(psi, delta, eta) / out.derivatives.D_y;
  return out;
}

void write_flow_csv(std::ostream& out, const std::vector<FlowRecord>& records) {
  out << "t,y,eta,d_y_eta\n";
  for (const auto& r : records) {
    out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", r.t, r.y, r.sample.eta, r.sample.d_y_eta);
  }
}

}  // namespace bdsgvi
