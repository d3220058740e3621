#include "bdsgvi/feynman_kac.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <fmt/format.h>

#include "bdsgvi/call_spec.hpp"
#include "bdsgvi/errors.hpp"
#include "bdsgvi/parallel.hpp"

namespace bdsgvi {
namespace {

struct LocalFit {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;
};

// Quadratic least-squares model around point m at time index j. Neighbours
// are added nearest-first until the design is well conditioned, so the fit
// is exact for quadratic fields.
LocalFit local_quadratic(const FieldEstimate& field, std::size_t j, std::size_t m) {
  const auto& pts = field.grid.points;
  const Vector& x0 = pts[m];
  const auto d = static_cast<int>(x0.size());
  const int unknowns = 1 + d + d * (d + 1) / 2;
  std::vector<std::size_t> order(pts.size());
  for (std::size_t q = 0; q < pts.size(); ++q) order[q] = q;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return (pts[a] - x0).squaredNorm() < (pts[b] - x0).squaredNorm();
  });
  for (auto count = static_cast<std::size_t>(2 * unknowns); ; count += static_cast<std::size_t>(unknowns)) {
    count = std::min(count, pts.size());
    if (count < static_cast<std::size_t>(unknowns)) break;
    Matrix M(static_cast<Eigen::Index>(count), unknowns);
    Vector rhs(static_cast<Eigen::Index>(count));
    double scale = 0.0;
    for (std::size_t r = 0; r < count; ++r) scale = std::max(scale, (pts[order[r]] - x0).norm());
    if (!(scale > 0.0)) scale = 1.0;
    for (std::size_t r = 0; r < count; ++r) {
      const Vector dx = (pts[order[r]] - x0) / scale;
      const auto row = static_cast<Eigen::Index>(r);
      int c = 0;
      M(row, c++) = 1.0;
      for (int a = 0; a < d; ++a) M(row, c++) = dx[a];
      for (int a = 0; a < d; ++a) {
        for (int b = a; b < d; ++b) M(row, c++) = (a == b ? 0.5 : 1.0) * dx[a] * dx[b];
      }
      rhs[row] = field.at(j, order[r]);
    }
    Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const bool ok = sv[sv.size() - 1] > 1e-8 * sv[0];
    if (ok) {
      const Vector coef = svd.solve(rhs);
      LocalFit fit;
      fit.value = coef[0];
      fit.gradient = coef.segment(1, d) / scale;
      fit.hessian = Matrix::Zero(d, d);
      int c = 1 + d;
      for (int a = 0; a < d; ++a) {
        for (int b = a; b < d; ++b) {
          fit.hessian(a, b) = fit.hessian(b, a) = coef[c++] / (scale * scale);
        }
      }
      return fit;
    }
    if (count == pts.size()) break;
  }
  throw ValidationError(fmt::format("lattice too coarse for the residual stencil at point {}", m));
}

void check_k1(const CoefficientSet& coeffs) {
  if (coeffs.k != 1) throw ValidationError("field diagnostics are defined for k = 1");
  if (coeffs.backward_noise) {
    throw ValidationError("residual diagnostics need h = 0 (deterministic reduction of the equation)");
  }
}

}  // namespace

FieldGrid make_field_grid(const DomainSpec& domain, std::vector<double> times, std::vector<Vector> points, double tol) {
  if (times.empty() || points.empty()) throw ValidationError("field grid needs at least one time and one point");
  if (!std::is_sorted(times.begin(), times.end()) ||
      std::adjacent_find(times.begin(), times.end()) != times.end()) {
    throw ValidationError("field grid times must be strictly increasing");
  }
  FieldGrid g;
  g.times = std::move(times);
  for (std::size_t m = 0; m < points.size(); ++m) {
    if (points[m].size() != domain.dim) throw ValidationError(fmt::format("lattice point {} has wrong dimension", m));
    const double l = domain.level(points[m]);
    if (l < -tol) {
      throw ValidationError(fmt::format("lattice point {} lies outside the closed domain (level {})", m, l));
    }
    g.on_boundary.push_back(std::abs(l) <= tol);
  }
  g.points = std::move(points);
  return g;
}

namespace lattices {

std::vector<Vector> polar(double radius, std::size_t nr, std::size_t na) {
  if (nr == 0 || na == 0) throw ValidationError("polar lattice needs nr, na >= 1");
  std::vector<Vector> pts;
  pts.push_back(Vector::Zero(2));
  for (std::size_t i = 1; i <= nr; ++i) {
    const double r = radius * static_cast<double>(i) / static_cast<double>(nr);
    for (std::size_t j = 0; j < na; ++j) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(na);
      Vector p(2);
      p << r * std::cos(a), r * std::sin(a);
      if (i == nr) p *= radius / p.norm();
      pts.push_back(p);
    }
  }
  return pts;
}

std::vector<Vector> interval(double a, double b, std::size_t n) {
  if (n == 0 || !(b > a)) throw ValidationError("interval lattice needs n >= 1 and a < b");
  std::vector<Vector> pts;
  for (std::size_t i = 0; i <= n; ++i) {
    pts.push_back(Vector::Constant(1, i == n ? b : a + (b - a) * static_cast<double>(i) / static_cast<double>(n)));
  }
  return pts;
}

}  // namespace lattices

std::vector<Vector> make_lattice(const std::string& text, const DomainSpec& domain) {
  const CallSpec c = parse_call(text);
  if (c.name == "polar") {
    expect_arity(c, 2, 2);
    if (domain.dim != 2) throw ValidationError("polar lattice needs a two-dimensional domain");
    // Ball of radius R centred at 0: the box half-width is R.
    return lattices::polar(domain.box.hi[0], static_cast<std::size_t>(c.args[0]), static_cast<std::size_t>(c.args[1]));
  }
  if (c.name == "uniform") {
    expect_arity(c, 1, 1);
    if (domain.dim != 1) throw ValidationError("uniform lattice needs a one-dimensional domain");
    return lattices::interval(domain.box.lo[0], domain.box.hi[0], static_cast<std::size_t>(c.args[0]));
  }
  throw ValidationError(fmt::format("unknown lattice '{}' (known: polar(nr,na), uniform(n))", c.name));
}

FieldEstimate FieldEstimate::from_function(const FieldGrid& grid, const std::function<double(double, const Vector&)>& fn) {
  FieldEstimate f;
  f.grid = grid;
  f.u.resize(grid.size());
  f.std_error.assign(grid.size(), 0.0);
  for (std::size_t j = 0; j < grid.times.size(); ++j) {
    for (std::size_t m = 0; m < grid.points.size(); ++m) f.u[grid.node(j, m)] = fn(grid.times[j], grid.points[m]);
  }
  f.per_draw.push_back(f.u);
  return f;
}

FieldEstimate sample_field(const DomainSpec& domain, const Dynamics& dyn, const CoefficientSet& coeffs,
                           const ConvexFunction& phi, const ConvexFunction& psi, const FieldConfig& config,
                           const FieldGrid& grid) {
  if (coeffs.k != 1) throw ValidationError("field sampling is defined for k = 1");
  if (coeffs.d != domain.dim) throw ValidationError("coefficient dimension d must equal the domain dimension");
  if (config.b_draws == 0 || config.n_paths == 0) throw ValidationError("field sampling needs paths and draws");
  const TimeGrid tg = TimeGrid::uniform(0.0, config.T, config.steps);
  for (const double t : grid.times) tg.index_of(t, 1e-9);  // throws for non-nodes
  for (std::size_t m = 0; m < grid.points.size(); ++m) {
    if (!domain.contains(grid.points[m], 1e-9)) throw ValidationError(fmt::format("lattice point {} outside domain", m));
  }
  FieldEstimate est;
  est.grid = grid;
  est.n_paths = config.n_paths;
  est.eps = config.solver.eps;
  est.dt = tg.max_step();
  est.regression = to_string(config.solver.regression.kind);
  const std::size_t nodes = grid.size();
  est.per_draw.assign(config.b_draws, std::vector<double>(nodes, 0.0));
  std::vector<std::vector<double>> within(config.b_draws, std::vector<double>(nodes, 0.0));
  SolverConfig solver = config.solver;
  solver.threads = 1;
  PathOptions opts;
  opts.backward = BackwardNoise::Common;
  opts.with_backward = coeffs.backward_noise;
  opts.threads = config.threads;
  for (std::size_t b = 0; b < config.b_draws; ++b) {
    const PathBundle bundle =
        generate_paths(tg, domain.dim, config.n_paths, derive_seed(config.seed, b), DeferredIncreasing{}, opts);
    parallel_for(nodes, config.threads, [&](std::size_t node) {
      const std::size_t j = node / grid.points.size();
      const std::size_t m = node % grid.points.size();
      const Vector& x = grid.points[m];
      const double t = tg[tg.index_of(grid.times[j], 1e-9)];
      if (tg.index_of(t) == tg.steps()) {
        est.per_draw[b][node] = coeffs.terminal_value(x)[0];
        return;
      }
      try {
        const ReflectedEnsemble ens = simulate_reflected(domain, dyn, t, x, bundle, 1);
        const BdsdeSolution sol = solve_penalized(coeffs, phi, psi, solver, bundle, &ens);
        est.per_draw[b][node] = sol.start_mean()[0];
        within[b][node] = sol.start_stderr()[0];
      } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("lattice node (t = {}, point {}): {}", t, m, e.what()));
      } catch (const NumericalError& e) {
        throw NumericalError(fmt::format("lattice node (t = {}, point {}): {}", t, m, e.what()));
      }
    });
  }
  est.u.assign(nodes, 0.0);
  est.std_error.assign(nodes, 0.0);
  const auto nb = static_cast<double>(config.b_draws);
  for (std::size_t node = 0; node < nodes; ++node) {
    double s = 0.0;
    for (std::size_t b = 0; b < config.b_draws; ++b) s += est.per_draw[b][node];
    const double mean = s / nb;
    est.u[node] = mean;
    if (config.b_draws > 1) {
      double v = 0.0;
      for (std::size_t b = 0; b < config.b_draws; ++b) v += (est.per_draw[b][node] - mean) * (est.per_draw[b][node] - mean);
      est.std_error[node] = std::sqrt(v / (nb - 1.0) / nb);
    } else {
      est.std_error[node] = within[0][node];
    }
  }
  // The terminal slice is χ exactly.
  for (std::size_t j = 0; j < grid.times.size(); ++j) {
    if (tg.index_of(grid.times[j], 1e-9) != tg.steps()) continue;
    for (std::size_t m = 0; m < grid.points.size(); ++m) {
      est.u[grid.node(j, m)] = coeffs.terminal_value(grid.points[m])[0];
      est.std_error[grid.node(j, m)] = 0.0;
    }
  }
  return est;
}

std::vector<NodePair> neighbor_pairs(const FieldGrid& grid, double radius) {
  std::vector<NodePair> pairs;
  for (std::size_t j = 0; j < grid.times.size(); ++j) {
    for (std::size_t a = 0; a < grid.points.size(); ++a) {
      for (std::size_t b = a + 1; b < grid.points.size(); ++b) {
        if ((grid.points[a] - grid.points[b]).norm() <= radius) pairs.emplace_back(grid.node(j, a), grid.node(j, b));
      }
      if (j + 1 < grid.times.size()) pairs.emplace_back(grid.node(j, a), grid.node(j + 1, a));
    }
  }
  return pairs;
}

ContinuityReport continuity_diagnostic(const FieldEstimate& field, const std::vector<NodePair>& pairs) {
  if (pairs.empty()) throw ValidationError("continuity diagnostic: no pairs");
  const std::size_t np = field.grid.points.size();
  struct Entry {
    double sep;
    double ratio;
  };
  std::vector<Entry> entries;
  for (const auto& [a, b] : pairs) {
    if (a >= field.u.size() || b >= field.u.size()) throw ValidationError("continuity diagnostic: node out of range");
    const double dt = std::abs(field.grid.times[a / np] - field.grid.times[b / np]);
    const double dx = (field.grid.points[a % np] - field.grid.points[b % np]).norm();
    const double sep = std::sqrt(dt) + dx;
    if (!(sep > 0.0)) continue;
    entries.push_back({sep, std::abs(field.u[a] - field.u[b]) / sep});
  }
  if (entries.size() < 2) throw ValidationError("continuity diagnostic: need pairs at two separation scales");
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& x, const Entry& y) { return x.sep < y.sep; });
  ContinuityReport r;
  r.pairs = entries.size();
  const std::size_t half = entries.size() / 2;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    double& target = i < half ? r.fine_max : r.coarse_max;
    target = std::max(target, entries[i].ratio);
  }
  r.fine_scale = entries[half / 2].sep;
  r.coarse_scale = entries[half + (entries.size() - half) / 2].sep;
  r.blow_up = r.fine_max > 10.0 * r.coarse_max && r.fine_max > 0.0;
  return r;
}

ResidualReport interior_residual(const FieldEstimate& field, const CoefficientSet& coeffs, const Dynamics& dyn,
                                 const ConvexFunction& phi, double eps, const DomainSpec& domain) {
  check_k1(coeffs);
  const FieldGrid& g = field.grid;
  if (g.times.size() < 2) throw ValidationError("interior residual needs at least two lattice times");
  ResidualReport r;
  for (std::size_t j = 0; j + 1 < g.times.size(); ++j) {
    for (std::size_t m = 0; m < g.points.size(); ++m) {
      if (g.on_boundary[m]) continue;
      const Vector& x = g.points[m];
      if (!domain.contains(x)) throw ValidationError("lattice point outside the domain");
      const double t = g.times[j];
      const LocalFit fit = local_quadratic(field, j, m);
      const double u = field.at(j, m);
      const double ut = (field.at(j + 1, m) - u) / (g.times[j + 1] - t);
      const Matrix sigma = dyn.sigma(t, x);
      const double lu = generator_apply(sigma, dyn.drift(t, x), fit.gradient, fit.hessian);
      const Vector uy = Vector::Constant(1, u);
      const Matrix z = (sigma.transpose() * fit.gradient).transpose();
      const double res = ut + lu + coeffs.f(t, x, uy, z)[0] - yosida_gradient(phi, eps, uy)[0];
      r.values.push_back(res);
      if (std::abs(res) > r.max_abs || r.nodes == 0) {
        r.max_abs = std::max(r.max_abs, std::abs(res));
        r.worst_node = g.node(j, m);
      }
      ++r.nodes;
    }
  }
  return r;
}

ResidualReport boundary_residual(const FieldEstimate& field, const CoefficientSet& coeffs, const ConvexFunction& psi,
                                 double eps, const DomainSpec& domain) {
  check_k1(coeffs);
  const FieldGrid& g = field.grid;
  ResidualReport r;
  for (std::size_t j = 0; j + 1 < g.times.size(); ++j) {
    for (std::size_t m = 0; m < g.points.size(); ++m) {
      if (!g.on_boundary[m]) continue;
      const Vector& x = g.points[m];
      const double t = g.times[j];
      const LocalFit fit = local_quadratic(field, j, m);
      const Vector uy = Vector::Constant(1, field.at(j, m));
      const double res = normal_derivative(domain, fit.gradient, x, 1e-6) + coeffs.g(t, x, uy)[0] -
                         yosida_gradient(psi, eps, uy)[0];
      r.values.push_back(res);
      if (std::abs(res) > r.max_abs || r.nodes == 0) {
        r.max_abs = std::max(r.max_abs, std::abs(res));
        r.worst_node = g.node(j, m);
      }
      ++r.nodes;
    }
  }
  return r;
}

void write_field_csv(std::ostream& out, const FieldEstimate& field) {
  const FieldGrid& g = field.grid;
  const std::size_t d = g.points.empty() ? 0 : static_cast<std::size_t>(g.points[0].size());
  out << "t";
  for (std::size_t a = 0; a < d; ++a) out << ",x" << (a + 1);
  out << ",u,stderr,tag\n";
  fmt::memory_buffer buf;
  for (std::size_t j = 0; j < g.times.size(); ++j) {
    for (std::size_t m = 0; m < g.points.size(); ++m) {
      buf.clear();
      auto it = std::back_inserter(buf);
      fmt::format_to(it, "{:.17g}", g.times[j]);
      for (std::size_t a = 0; a < d; ++a) fmt::format_to(it, ",{:.17g}", g.points[m][static_cast<Eigen::Index>(a)]);
      const std::size_t node = g.node(j, m);
      fmt::format_to(it, ",{:.17g},{:.17g},{}\n", field.u[node], field.std_error[node],
                     g.on_boundary[m] ? "boundary" : "interior");
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
  }
}

}  // namespace bdsgvi
