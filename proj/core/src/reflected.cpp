#include "bdsgvi/reflected.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "bdsgvi/call_spec.hpp"
#include "bdsgvi/errors.hpp"
#include "bdsgvi/parallel.hpp"

namespace bdsgvi {
namespace {

void check_point(const DomainSpec& domain, const Vector& x) {
  if (x.size() != domain.dim) {
    throw ValidationError(fmt::format("{}: point of dimension {} in a {}-dimensional domain", domain.label,
                                      x.size(), domain.dim));
  }
  if (!x.allFinite()) throw ValidationError(fmt::format("{}: non-finite point", domain.label));
}

// Smallest δ ≥ 0 (to bisection precision) with ℓ(x + δ n) ≥ 0, x outside.
double restore_step(const DomainSpec& domain, const Vector& x, const Vector& n, double l0) {
  const double nn = n.squaredNorm();
  if (!(nn > 0.0)) throw NumericalError(fmt::format("{}: vanishing normal outside the domain", domain.label));
  double lo = 0.0;
  double hi = -l0 / nn;
  int doublings = 0;
  while (domain.level(x + hi * n) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 60) {
      throw NumericalError(fmt::format(
          "{}: projection along the normal failed to bracket the boundary; reduce the time step", domain.label));
    }
  }
  for (int it = 0; it < 200 && hi - lo > 1e-16 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (domain.level(x + mid * n) >= 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace

namespace domains {

DomainSpec ball(int dim, double radius) {
  if (dim < 1) throw ValidationError("ball: dimension must be >= 1");
  if (!(radius > 0.0) || !std::isfinite(radius)) throw ValidationError("ball: radius must be positive");
  DomainSpec d;
  d.label = fmt::format("ball({})", radius);
  d.dim = dim;
  const double R = radius;
  d.level = [R](const Vector& x) { return (R * R - x.squaredNorm()) / (2.0 * R); };
  d.gradient = [R](const Vector& x) -> Vector { return -x / R; };
  d.hessian = [R, dim](const Vector&) -> Matrix { return -Matrix::Identity(dim, dim) / R; };
  d.box = DomainBox{Vector::Constant(dim, -R), Vector::Constant(dim, R)};
  return d;
}

DomainSpec interval(double a, double b) {
  if (!(b > a) || !std::isfinite(a) || !std::isfinite(b)) {
    throw ValidationError(fmt::format("interval: need finite a < b, got ({}, {})", a, b));
  }
  DomainSpec d;
  d.label = fmt::format("interval({},{})", a, b);
  d.dim = 1;
  const double w = b - a;
  d.level = [a, b, w](const Vector& x) { return (x[0] - a) * (b - x[0]) / w; };
  d.gradient = [a, b, w](const Vector& x) -> Vector { return Vector::Constant(1, (a + b - 2.0 * x[0]) / w); };
  d.hessian = [w](const Vector&) -> Matrix { return Matrix::Constant(1, 1, -2.0 / w); };
  d.box = DomainBox{Vector::Constant(1, a), Vector::Constant(1, b)};
  return d;
}

DomainSpec ellipsoid(const Vector& semi_axes) {
  if (semi_axes.size() < 1 || !(semi_axes.array() > 0.0).all() || !semi_axes.allFinite()) {
    throw ValidationError("ellipsoid: semi-axes must be positive and finite");
  }
  const Vector inv2 = semi_axes.array().square().inverse().matrix();
  const auto dim = static_cast<int>(semi_axes.size());
  return normalized(
      fmt::format("ellipsoid({})", fmt::join(semi_axes.data(), semi_axes.data() + semi_axes.size(), ",")), dim,
      [inv2](const Vector& x) { return 1.0 - x.cwiseProduct(inv2).dot(x); },
      [inv2](const Vector& x) -> Vector { return -2.0 * x.cwiseProduct(inv2); },
      [inv2](const Vector&) -> Matrix { return Matrix((-2.0 * inv2).asDiagonal()); },
      DomainBox{-semi_axes, semi_axes});
}

}  // namespace domains

DomainSpec normalized(std::string label, int dim, std::function<double(const Vector&)> L,
                      std::function<Vector(const Vector&)> grad_L, std::function<Matrix(const Vector&)> hess_L,
                      DomainBox box) {
  DomainSpec d;
  d.label = std::move(label);
  d.dim = dim;
  d.box = std::move(box);
  d.level = [L, grad_L](const Vector& x) {
    const double l = L(x);
    return l / std::sqrt(grad_L(x).squaredNorm() + l * l);
  };
  d.gradient = [L, grad_L, hess_L](const Vector& x) -> Vector {
    const double l = L(x);
    const Vector g = grad_L(x);
    const double n = std::sqrt(g.squaredNorm() + l * l);
    const Vector grad_n = (hess_L(x) * g + l * g) / n;
    return g / n - l * grad_n / (n * n);
  };
  auto grad = d.gradient;
  d.hessian = [grad, dim](const Vector& x) -> Matrix {
    constexpr double h = 1e-5;
    Matrix H(dim, dim);
    Vector e = Vector::Zero(dim);
    for (int j = 0; j < dim; ++j) {
      e[j] = h;
      H.col(j) = (grad(x + e) - grad(x - e)) / (2.0 * h);
      e[j] = 0.0;
    }
    return 0.5 * (H + H.transpose());
  };
  return d;
}

DomainSpec make_domain(const std::string& text, int dim) {
  const CallSpec spec = parse_call(text);
  if (spec.name == "unit_ball") {
    expect_arity(spec, 0, 0);
    return domains::ball(dim, 1.0);
  }
  if (spec.name == "ball") {
    expect_arity(spec, 0, 1);
    return domains::ball(dim, spec.args.empty() ? 1.0 : spec.args[0]);
  }
  if (spec.name == "interval") {
    expect_arity(spec, 2, 2);
    if (dim != 1) throw ValidationError("interval domain requires dimension 1");
    return domains::interval(spec.args[0], spec.args[1]);
  }
  if (spec.name == "ellipsoid") {
    expect_arity(spec, 1, 16);
    if (static_cast<int>(spec.args.size()) != dim) {
      throw ValidationError(fmt::format("ellipsoid needs {} semi-axes", dim));
    }
    return domains::ellipsoid(Eigen::Map<const Vector>(spec.args.data(), dim));
  }
  throw ValidationError(fmt::format(
      "unknown domain '{}' (known: unit_ball, ball(R), interval(a,b), ellipsoid(a1,..,ad))", spec.name));
}

Dynamics make_dynamics(const std::string& drift, const std::string& sigma, int dim) {
  Dynamics dyn;
  const CallSpec b = parse_call(drift);
  if (b.name == "zero") {
    expect_arity(b, 0, 0);
    dyn.drift = [dim](double, const Vector&) -> Vector { return Vector::Zero(dim); };
  } else if (b.name == "const") {
    expect_arity(b, 1, 16);
    if (b.args.size() != 1 && static_cast<int>(b.args.size()) != dim) {
      throw ValidationError(fmt::format("const drift needs 1 or {} values", dim));
    }
    const Vector c = b.args.size() == 1 ? Vector::Constant(dim, b.args[0])
                                        : Vector(Eigen::Map<const Vector>(b.args.data(), dim));
    dyn.drift = [c](double, const Vector&) -> Vector { return c; };
  } else if (b.name == "linear") {
    expect_arity(b, 1, 1);
    const double a = b.args[0];
    dyn.drift = [a](double, const Vector& x) -> Vector { return a * x; };
  } else {
    throw ValidationError(fmt::format("unknown drift '{}' (known: zero, const(c..), linear(a))", b.name));
  }
  const CallSpec s = parse_call(sigma);
  if (s.name == "identity") {
    expect_arity(s, 0, 0);
    dyn.sigma = [dim](double, const Vector&) -> Matrix { return Matrix::Identity(dim, dim); };
    dyn.sigma_bound = 1.0;
  } else if (s.name == "zero") {
    expect_arity(s, 0, 0);
    dyn.sigma = [dim](double, const Vector&) -> Matrix { return Matrix::Zero(dim, dim); };
    dyn.sigma_bound = 0.0;
  } else if (s.name == "scaled") {
    expect_arity(s, 1, 1);
    const double c = s.args[0];
    dyn.sigma = [dim, c](double, const Vector&) -> Matrix { return c * Matrix::Identity(dim, dim); };
    dyn.sigma_bound = std::abs(c);
  } else {
    throw ValidationError(fmt::format("unknown sigma '{}' (known: identity, zero, scaled(s))", s.name));
  }
  return dyn;
}

ReflectedEnsemble simulate_reflected(const DomainSpec& domain, const Dynamics& dyn, double start_t,
                                     const Vector& x, const PathBundle& noise, unsigned threads) {
  check_point(domain, x);
  if (noise.d != domain.dim) {
    throw ValidationError(fmt::format("noise dimension {} does not match domain dimension {}", noise.d, domain.dim));
  }
  if (!domain.contains(x)) {
    throw ValidationError(fmt::format("{}: start point lies outside the closed domain (level {})", domain.label,
                                      domain.level(x)));
  }
  ReflectedEnsemble ens;
  ens.grid = noise.grid;
  ens.dim = domain.dim;
  ens.n_paths = noise.n_paths;
  ens.start_t = start_t;
  ens.start_index = noise.grid.index_of(start_t, 1e-12 * std::max(1.0, std::abs(start_t)));
  ens.start_x = x;
  ens.noise_seed = noise.seed;
  ens.X.resize(noise.n_paths);
  ens.A.resize(noise.n_paths);
  const TimeGrid& grid = noise.grid;
  const auto nodes = static_cast<Eigen::Index>(grid.size());
  parallel_for(noise.n_paths, threads, [&](std::size_t p) {
    Matrix X(domain.dim, nodes);
    Vector A = Vector::Zero(nodes);
    for (std::size_t i = 0; i <= ens.start_index; ++i) X.col(static_cast<Eigen::Index>(i)) = x;
    Vector cur = x;
    double a = 0.0;
    for (std::size_t i = ens.start_index; i < grid.steps(); ++i) {
      const double t = grid[i];
      Vector next = cur + dyn.drift(t, cur) * grid.dt(i) + dyn.sigma(t, cur) * noise.dw(p, i);
      if (!next.allFinite()) throw NumericalError(fmt::format("path {} left the finite range at node {}", p, i));
      const double l = domain.level(next);
      if (l < 0.0) {
        const Vector n = domain.gradient(next);
        const double delta = restore_step(domain, next, n, l);
        next += delta * n;
        a += delta;
      }
      cur = next;
      X.col(static_cast<Eigen::Index>(i + 1)) = cur;
      A[static_cast<Eigen::Index>(i + 1)] = a;
    }
    ens.X[p] = std::move(X);
    ens.A[p] = std::move(A);
  });
  return ens;
}

ResidualStats local_time_identity_residual(const ReflectedEnsemble& ens, const DomainSpec& domain,
                                           const Dynamics& dyn, const PathBundle& noise) {
  if (noise.seed != ens.noise_seed || noise.n_paths != ens.n_paths || noise.grid.nodes() != ens.grid.nodes()) {
    throw ValidationError("local_time_identity_residual: ensemble was not simulated from this noise bundle");
  }
  ResidualStats st;
  st.per_path.resize(ens.n_paths);
  const double l0 = domain.level(ens.start_x);
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    double drift_int = 0.0;
    double mart_int = 0.0;
    double sup = 0.0;
    for (std::size_t i = ens.start_index; i < ens.grid.steps(); ++i) {
      const Vector xi = ens.X[p].col(static_cast<Eigen::Index>(i));
      const double t = ens.grid[i];
      const Matrix s = dyn.sigma(t, xi);
      const Vector g = domain.gradient(xi);
      drift_int += generator_apply(s, dyn.drift(t, xi), g, domain.hessian(xi)) * ens.grid.dt(i);
      mart_int += g.dot(s * noise.dw(p, i));
      const Vector xn = ens.X[p].col(static_cast<Eigen::Index>(i + 1));
      const double recon = domain.level(xn) - l0 - drift_int - mart_int;
      sup = std::max(sup, std::abs(ens.A[p][static_cast<Eigen::Index>(i + 1)] - recon));
    }
    st.per_path[p] = sup;
  }
  double s1 = 0.0;
  double s2 = 0.0;
  for (const double r : st.per_path) {
    s1 += r;
    s2 += r * r;
    st.max = std::max(st.max, r);
  }
  const auto n = static_cast<double>(st.per_path.size());
  st.mean = s1 / n;
  st.rms = std::sqrt(s2 / n);
  return st;
}

double default_boundary_band(const TimeGrid& grid, const Dynamics& dyn) {
  return 2.0 * std::sqrt(grid.max_step()) * dyn.sigma_bound;
}

SupportReport local_time_support(const ReflectedEnsemble& ens, const DomainSpec& domain, double band) {
  SupportReport r;
  r.band = band;
  r.containment_worst = kInfinity;
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    for (Eigen::Index i = 0; i < ens.X[p].cols(); ++i) {
      const double l = domain.level(ens.X[p].col(i));
      r.containment_worst = std::min(r.containment_worst, l);
      if (l < -1e-12) ++r.containment_failures;
      if (i > 0 && ens.A[p][i] > ens.A[p][i - 1]) {
        ++r.increments;
        if (l > band) ++r.outside_band;
      }
    }
  }
  return r;
}

BoundaryInequalityReport boundary_inequality_check(const DomainSpec& domain, const std::vector<Vector>& boundary,
                                                   const std::vector<Vector>& interior, double tol) {
  BoundaryInequalityReport r;
  for (const Vector& x : boundary) {
    check_point(domain, x);
    if (std::abs(domain.level(x)) > tol) {
      throw ValidationError(fmt::format("{}: sample is not on the boundary (level {})", domain.label, domain.level(x)));
    }
    const Vector n = domain.gradient(x);
    for (const Vector& xp : interior) {
      check_point(domain, xp);
      ++r.pairs;
      const double q = (xp - x).dot(n);
      if (q >= 0.0) continue;
      ++r.constraining_pairs;
      r.alpha_max = std::min(r.alpha_max, (xp - x).squaredNorm() / -q);
    }
  }
  return r;
}

double generator_apply(const Matrix& sigma, const Vector& b, const Vector& grad_v, const Matrix& hess_v) {
  if (grad_v.size() != b.size() || hess_v.rows() != b.size() || hess_v.cols() != b.size() ||
      sigma.rows() != b.size()) {
    throw ValidationError("generator_apply: inconsistent dimensions");
  }
  const Matrix a = sigma * sigma.transpose();
  return 0.5 * (a.cwiseProduct(hess_v)).sum() + b.dot(grad_v);
}

double normal_derivative(const DomainSpec& domain, const Vector& grad_v, const Vector& x, double tol) {
  check_point(domain, x);
  const double l = domain.level(x);
  if (std::abs(l) > tol) {
    throw ValidationError(fmt::format("{}: normal derivative requested off the boundary (level {})", domain.label, l));
  }
  return domain.gradient(x).dot(grad_v);
}

void write_ensemble_csv(std::ostream& out, const ReflectedEnsemble& ens) {
  out << "path,t";
  for (int j = 0; j < ens.dim; ++j) out << ",x" << (j + 1);
  out << ",A\n";
  fmt::memory_buffer buf;
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    for (Eigen::Index i = 0; i < ens.X[p].cols(); ++i) {
      buf.clear();
      fmt::format_to(std::back_inserter(buf), "{},{:.17g}", p, ens.grid[static_cast<std::size_t>(i)]);
      for (int j = 0; j < ens.dim; ++j) fmt::format_to(std::back_inserter(buf), ",{:.17g}", ens.X[p](j, i));
      fmt::format_to(std::back_inserter(buf), ",{:.17g}\n", ens.A[p][i]);
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
  }
}

}  // namespace bdsgvi
