#include "bdsgvi/convex.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "bdsgvi/call_spec.hpp"
#include "bdsgvi/errors.hpp"

namespace bdsgvi {
namespace {

ConvexFunction scalar(std::string label, std::function<double(double)> value,
                      std::function<double(double, double)> prox1, double lo = -kInfinity,
                      double hi = kInfinity) {
  ConvexFunction f;
  f.label = std::move(label);
  f.dim = 1;
  f.evaluate = [value = std::move(value)](const Vector& y) { return value(y[0]); };
  f.prox_oracle = [prox1 = std::move(prox1)](double eps, const Vector& x) {
    return Vector::Constant(1, prox1(eps, x[0]));
  };
  f.domain_hint = DomainBox{Vector::Constant(1, lo), Vector::Constant(1, hi)};
  return f;
}

void check_args(const ConvexFunction& theta, double eps, const Vector& x) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw ValidationError(fmt::format("{}: eps must be positive and finite, got {}", theta.label, eps));
  }
  if (x.size() != theta.dim) {
    throw ValidationError(fmt::format("{}: point has dimension {}, function has {}", theta.label,
                                      x.size(), theta.dim));
  }
  if (!x.allFinite()) throw ValidationError(fmt::format("{}: non-finite argument", theta.label));
}

double objective(const ConvexFunction& theta, double eps, const Vector& x, const Vector& y) {
  const double v = theta.evaluate(y);
  if (v == kInfinity) return kInfinity;
  return 0.5 * (x - y).squaredNorm() + eps * v;
}

// Spacing below which objective differences drown in rounding.
constexpr double kSpacingFloor = 1e-12;

Vector grid_search_1d(const ConvexFunction& theta, double eps, const Vector& x, double lo,
                      double hi, double resolution) {
  constexpr int kCoarse = 64;
  constexpr int kFine = 16;
  Vector y(1);
  double a = lo;
  double b = hi;
  int n = kCoarse;
  double best = lo;
  while (true) {
    const double h = (b - a) / n;
    double best_val = kInfinity;
    int best_i = -1;
    for (int i = 0; i <= n; ++i) {
      y[0] = (i == n) ? b : a + i * h;
      const double v = objective(theta, eps, x, y);
      if (v < best_val) {
        best_val = v;
        best_i = i;
      }
    }
    if (best_i < 0) {
      throw NumericalError(fmt::format("{}: objective infinite on the whole search lattice", theta.label));
    }
    best = (best_i == n) ? b : a + best_i * h;
    // Strict convexity of the objective puts the minimizer within one cell.
    if (h <= resolution || h <= kSpacingFloor * (1.0 + std::abs(best))) break;
    a = std::max(lo, best - h);
    b = std::min(hi, best + h);
    n = kFine;
  }
  return Vector::Constant(1, best);
}

Vector grid_search_2d(const ConvexFunction& theta, double eps, const Vector& x, const Vector& lo,
                      const Vector& hi, double resolution) {
  constexpr int kCoarse = 32;
  constexpr int kFine = 16;
  Vector a = lo;
  Vector b = hi;
  int n = kCoarse;
  Vector best = lo;
  Vector y(2);
  for (int guard = 0; guard < 10000; ++guard) {
    const Vector h = (b - a) / n;
    double best_val = kInfinity;
    int bi = -1;
    int bj = -1;
    for (int i = 0; i <= n; ++i) {
      y[0] = (i == n) ? b[0] : a[0] + i * h[0];
      for (int j = 0; j <= n; ++j) {
        y[1] = (j == n) ? b[1] : a[1] + j * h[1];
        const double v = objective(theta, eps, x, y);
        if (v < best_val) {
          best_val = v;
          bi = i;
          bj = j;
        }
      }
    }
    if (bi < 0) {
      throw NumericalError(fmt::format("{}: objective infinite on the whole search lattice", theta.label));
    }
    best[0] = (bi == n) ? b[0] : a[0] + bi * h[0];
    best[1] = (bj == n) ? b[1] : a[1] + bj * h[1];
    // An argmin on a window edge that is not a box edge means the window
    // missed the minimizer: recentre at the same spacing.
    const bool on_edge = (bi == 0 && a[0] > lo[0]) || (bi == n && b[0] < hi[0]) ||
                         (bj == 0 && a[1] > lo[1]) || (bj == n && b[1] < hi[1]);
    const double hmax = h.maxCoeff();
    const bool fine = hmax <= resolution || hmax <= kSpacingFloor * (1.0 + best.cwiseAbs().maxCoeff());
    if (fine && !on_edge) return best;
    const Vector half = on_edge && n == kFine ? Vector(h * (kFine / 2)) : Vector(2.0 * h);
    a = (best - half).cwiseMax(lo);
    b = (best + half).cwiseMin(hi);
    n = kFine;
  }
  throw NumericalError(fmt::format("{}: grid oracle failed to settle", theta.label));
}

}  // namespace

namespace catalog {

ConvexFunction zero(int dim) {
  ConvexFunction f = scalar(
      "zero", [](double) { return 0.0; }, [](double, double x) { return x; });
  return separable(f, dim);
}

ConvexFunction quadratic(double a) {
  if (!(a >= 0.0) || !std::isfinite(a)) {
    throw ValidationError(fmt::format("quadratic: coefficient must be finite and >= 0, got {}", a));
  }
  return scalar(
      fmt::format("quadratic({})", a), [a](double y) { return 0.5 * a * y * y; },
      [a](double eps, double x) { return x / (1.0 + eps * a); });
}

ConvexFunction abs() {
  return scalar(
      "abs", [](double y) { return std::abs(y); },
      [](double eps, double x) { return std::copysign(std::max(std::abs(x) - eps, 0.0), x); });
}

ConvexFunction indicator_box(double lo, double hi) {
  if (std::isnan(lo) || std::isnan(hi) || !(lo <= 0.0 && 0.0 <= hi)) {
    throw ValidationError(
        fmt::format("indicator_box: [{}, {}] must contain 0 so that the indicator vanishes there", lo, hi));
  }
  return scalar(
      fmt::format("indicator_box({},{})", lo, hi),
      [lo, hi](double y) { return (y >= lo && y <= hi) ? 0.0 : kInfinity; },
      [lo, hi](double, double x) { return std::clamp(x, lo, hi); }, lo, hi);
}

ConvexFunction hinge_sq() {
  return scalar(
      "hinge_sq",
      [](double y) {
        const double p = std::max(0.0, y);
        return p * p;
      },
      [](double eps, double x) { return x > 0.0 ? x / (1.0 + 2.0 * eps) : x; });
}

}  // namespace catalog

ConvexFunction separable(const ConvexFunction& base, int dim) {
  if (base.dim != 1) throw ValidationError("separable: base function must be scalar");
  if (dim < 1) throw ValidationError("separable: dimension must be >= 1");
  if (dim == 1) return base;
  ConvexFunction f;
  f.label = fmt::format("{}^{}", base.label, dim);
  f.dim = dim;
  f.evaluate = [ev = base.evaluate](const Vector& y) {
    double total = 0.0;
    Vector yi(1);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      yi[0] = y[i];
      total += ev(yi);
      if (total == kInfinity) break;
    }
    return total;
  };
  if (base.prox_oracle) {
    f.prox_oracle = [p = *base.prox_oracle](double eps, const Vector& x) {
      Vector out(x.size());
      Vector xi(1);
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        xi[0] = x[i];
        out[i] = p(eps, xi)[0];
      }
      return out;
    };
  }
  if (base.domain_hint) {
    f.domain_hint = DomainBox{Vector::Constant(dim, base.domain_hint->lo[0]),
                              Vector::Constant(dim, base.domain_hint->hi[0])};
  }
  return f;
}

ConvexFunction make_convex(const std::string& text, int dim) {
  const CallSpec spec = parse_call(text);
  ConvexFunction base;
  if (spec.name == "zero") {
    expect_arity(spec, 0, 0);
    base = catalog::zero();
  } else if (spec.name == "quadratic") {
    expect_arity(spec, 0, 1);
    base = catalog::quadratic(spec.args.empty() ? 1.0 : spec.args[0]);
  } else if (spec.name == "abs") {
    expect_arity(spec, 0, 0);
    base = catalog::abs();
  } else if (spec.name == "indicator_box") {
    expect_arity(spec, 2, 2);
    base = catalog::indicator_box(spec.args[0], spec.args[1]);
  } else if (spec.name == "hinge_sq") {
    expect_arity(spec, 0, 0);
    base = catalog::hinge_sq();
  } else {
    throw ValidationError(fmt::format(
        "unknown convex function '{}' (known: zero, quadratic(a), abs, indicator_box(lo,hi), hinge_sq)",
        spec.name));
  }
  return separable(base, dim);
}

Vector grid_prox_oracle(const ConvexFunction& theta, double eps, const Vector& x, double resolution) {
  check_args(theta, eps, x);
  if (!(resolution > 0.0)) throw ValidationError("grid_prox_oracle: resolution must be positive");
  if (!theta.domain_hint) {
    throw ValidationError(fmt::format("{}: grid oracle needs an effective-domain hint", theta.label));
  }
  if (theta.dim > 2) {
    throw ValidationError(
        fmt::format("{}: grid oracle is exhaustive and limited to k <= 2 (k = {})", theta.label, theta.dim));
  }
  // J_ε(0) = 0 and J_ε is nonexpansive, so |J_ε(x)| ≤ |x|.
  const double r = x.norm();
  if (r == 0.0) return Vector::Zero(theta.dim);
  const Vector lo = theta.domain_hint->lo.cwiseMax(-r);
  const Vector hi = theta.domain_hint->hi.cwiseMin(r);
  if ((lo.array() > hi.array()).any()) {
    throw ValidationError(fmt::format("{}: domain hint does not contain 0", theta.label));
  }
  if (theta.dim == 1) return grid_search_1d(theta, eps, x, lo[0], hi[0], resolution);
  return grid_search_2d(theta, eps, x, lo, hi, resolution);
}

Vector prox(const ConvexFunction& theta, double eps, const Vector& x) {
  check_args(theta, eps, x);
  if (theta.prox_oracle) return (*theta.prox_oracle)(eps, x);
  return grid_prox_oracle(theta, eps, x, 1e-9);
}

double moreau_envelope(const ConvexFunction& theta, double eps, const Vector& x) {
  const Vector j = prox(theta, eps, x);
  return 0.5 * (x - j).squaredNorm() + eps * theta.evaluate(j);
}

Vector yosida_gradient(const ConvexFunction& theta, double eps, const Vector& x) {
  return (x - prox(theta, eps, x)) / eps;
}

double prox(const ConvexFunction& theta, double eps, double x) {
  return prox(theta, eps, Vector::Constant(1, x))[0];
}

double yosida_gradient(const ConvexFunction& theta, double eps, double x) {
  return yosida_gradient(theta, eps, Vector::Constant(1, x))[0];
}

OneSided one_sided_derivatives(const ConvexFunction& theta, double y) {
  if (theta.dim != 1) throw ValidationError("one_sided_derivatives: scalar functions only");
  if (!std::isfinite(y)) throw ValidationError("one_sided_derivatives: non-finite point");
  Vector p(1);
  p[0] = y;
  const double fy = theta.evaluate(p);
  if (fy == kInfinity) {
    throw ValidationError(fmt::format("{}: {} lies outside the effective domain", theta.label, y));
  }
  static constexpr double kLadder[] = {1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
  auto side = [&](double sign) {
    // Quotients at the two smallest steps that stay in the domain are combined
    // by Richardson extrapolation, which removes the O(h) bias at smooth points.
    double q_prev = 0.0;
    double h_prev = 0.0;
    double q_last = 0.0;
    double h_last = 0.0;
    int finite = 0;
    for (const double h : kLadder) {
      p[0] = y + sign * h;
      const double v = theta.evaluate(p);
      if (v == kInfinity) continue;
      q_prev = q_last;
      h_prev = h_last;
      q_last = sign * (v - fy) / h;
      h_last = h;
      ++finite;
    }
    p[0] = y + sign * kLadder[4];
    if (theta.evaluate(p) == kInfinity) return sign * kInfinity;
    if (finite < 2) return q_last;
    return (h_prev * q_last - h_last * q_prev) / (h_prev - h_last);
  };
  OneSided out{side(-1.0), side(1.0)};
  if (out.left > out.right) {
    const double mid = 0.5 * (out.left + out.right);
    out.left = out.right = mid;
  }
  return out;
}

ConvexitySpotCheck spot_check(const ConvexFunction& theta, const std::vector<Vector>& points, double tol) {
  ConvexitySpotCheck out;
  const double at_zero = theta.evaluate(Vector::Zero(theta.dim));
  if (!(std::abs(at_zero) <= tol)) {
    out.ok = false;
    out.failure = fmt::format("{}: theta(0) = {} (must be 0)", theta.label, at_zero);
    return out;
  }
  std::vector<double> values;
  values.reserve(points.size());
  for (const Vector& p : points) {
    const double v = theta.evaluate(p);
    if (std::isnan(v) || v < -tol) {
      out.ok = false;
      out.failure = fmt::format("{}: negative or NaN value {} at a sample", theta.label, v);
      return out;
    }
    values.push_back(v);
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      if (values[i] == kInfinity || values[j] == kInfinity) continue;
      const double mid = theta.evaluate(0.5 * (points[i] + points[j]));
      const double chord = 0.5 * (values[i] + values[j]);
      if (mid > chord + tol * (1.0 + std::abs(chord))) {
        out.ok = false;
        out.failure = fmt::format("{}: midpoint value {} exceeds chord {}", theta.label, mid, chord);
        return out;
      }
    }
  }
  return out;
}

WeightReport validate_weights(const AssumptionConstants& c) {
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) {
    throw ValidationError(fmt::format("alpha must lie in (0,1), got {}", c.alpha));
  }
  if (!(c.K >= 0.0)) throw ValidationError(fmt::format("K must be >= 0, got {}", c.K));
  WeightReport r;
  r.lambda_threshold = 2.0 + 2.0 * (c.beta1 + c.beta2) + c.K * (3.0 - c.alpha + 2.0 * c.K) / (1.0 - c.alpha);
  r.mu_threshold = 1.0 + 2.0 * c.beta2;
  r.lambda_margin = c.lambda - r.lambda_threshold;
  r.mu_margin = c.mu - r.mu_threshold;
  r.ok = r.lambda_margin > 0.0 && r.mu_margin > 0.0;
  return r;
}

CompatibilityReport check_compatibility(const ConvexFunction& phi, const ConvexFunction& psi,
                                        const DriftField& f, const BoundaryField& g,
                                        const std::vector<double>& eps_ladder,
                                        const std::vector<CompatibilitySample>& samples,
                                        double tolerance) {
  if (phi.dim != psi.dim) throw ValidationError("check_compatibility: phi and psi differ in dimension");
  CompatibilityReport r;
  r.tolerance = tolerance;
  const double lowest = -kInfinity;
  r.gradients_aligned.amount = r.boundary_term.amount = r.drift_term.amount = lowest;
  auto record = [](CompatibilityViolation& v, double amount, double eps, std::size_t s) {
    if (amount > v.amount) v = {amount, eps, s};
  };
  for (const double eps : eps_ladder) {
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const auto& smp = samples[s];
      const Vector gphi = yosida_gradient(phi, eps, smp.y);
      const Vector gpsi = yosida_gradient(psi, eps, smp.y);
      const Vector fv = f(smp.t, smp.y, smp.z);
      const Vector gv = g(smp.t, smp.y);
      record(r.gradients_aligned, -gphi.dot(gpsi), eps, s);
      record(r.boundary_term, gphi.dot(gv) - std::max(0.0, gpsi.dot(gv)), eps, s);
      record(r.drift_term, gpsi.dot(fv) - std::max(0.0, gphi.dot(fv)), eps, s);
      ++r.evaluations;
    }
  }
  r.ok = r.gradients_aligned.amount <= tolerance && r.boundary_term.amount <= tolerance &&
         r.drift_term.amount <= tolerance;
  return r;
}

}  // namespace bdsgvi
