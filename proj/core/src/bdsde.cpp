#include "bdsgvi/bdsde.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "bdsgvi/errors.hpp"
#include "bdsgvi/parallel.hpp"

namespace bdsgvi {
namespace {

Matrix unflatten(const Matrix& flat, Eigen::Index row, int k, int d) {
  Matrix z(k, d);
  for (int j = 0; j < k; ++j) {
    for (int l = 0; l < d; ++l) z(j, l) = flat(row, j * d + l);
  }
  return z;
}

double weight(double lambda, double mu, double t, double a) { return std::exp(lambda * t + mu * a); }

// Trapezoid of w|row|² against dt and dA along one path.
struct PathIntegrals {
  double dt = 0.0;
  double dA = 0.0;
  double sup = 0.0;
};

template <class ValueAt>
PathIntegrals integrate_path(const BdsdeSolution& sol, std::size_t p, double lambda, double mu, ValueAt value) {
  PathIntegrals out;
  double prev = weight(lambda, mu, sol.grid[0], sol.A[p][0]) * value(0);
  out.sup = prev;
  for (std::size_t i = 0; i < sol.grid.steps(); ++i) {
    const double next = weight(lambda, mu, sol.grid[i + 1], sol.A[p][static_cast<Eigen::Index>(i + 1)]) * value(i + 1);
    out.dt += 0.5 * (prev + next) * sol.grid.dt(i);
    out.dA += 0.5 * (prev + next) * sol.dA(p, i);
    out.sup = std::max(out.sup, next);
    prev = next;
  }
  return out;
}

}  // namespace

std::string to_string(Scheme s) {
  return s == Scheme::ExplicitYosida ? "explicit_yosida" : "implicit_prox";
}

Scheme parse_scheme(const std::string& text) {
  if (text == "explicit_yosida" || text == "explicit-yosida" || text == "explicit") return Scheme::ExplicitYosida;
  if (text == "implicit_prox" || text == "implicit-prox" || text == "implicit") return Scheme::ImplicitProx;
  throw ValidationError(fmt::format("unknown scheme '{}' (known: explicit_yosida, implicit_prox)", text));
}

Vector BdsdeSolution::start_mean() const { return Y[start_index].colwise().mean().transpose(); }

namespace {
Vector column_sd(const Matrix& m) {
  if (m.rows() < 2) return Vector::Zero(m.cols());
  const Eigen::RowVectorXd mean = m.colwise().mean();
  const auto n = static_cast<double>(m.rows());
  return ((m.rowwise() - mean).array().square().colwise().sum() / (n - 1.0)).sqrt().transpose();
}
}  // namespace

Vector BdsdeSolution::start_stderr() const {
  if (pathwise_start.size() == 0) return Vector::Zero(k);
  return column_sd(pathwise_start) / std::sqrt(static_cast<double>(n_paths));
}

BdsdeSolution solve_penalized(const CoefficientSet& coeffs, const ConvexFunction& phi, const ConvexFunction& psi,
                              const SolverConfig& config, const PathBundle& noise, const ReflectedEnsemble* state) {
  const bool explicit_scheme = config.scheme == Scheme::ExplicitYosida;
  if (explicit_scheme && (!(config.eps > 0.0) || !std::isfinite(config.eps))) {
    throw ValidationError(fmt::format("explicit scheme needs eps > 0, got {}", config.eps));
  }
  const int k = coeffs.k;
  const int d = coeffs.d;
  if (phi.dim != k || psi.dim != k) {
    throw ValidationError(fmt::format("phi/psi have dimensions {}/{}, equation has k = {}", phi.dim, psi.dim, k));
  }
  if (noise.d != d) throw ValidationError(fmt::format("noise dimension {} differs from d = {}", noise.d, d));
  if (coeffs.backward_noise) {
    if (!noise.has_backward()) throw ValidationError("h is nonzero but the noise bundle carries no backward driver");
    if (noise.backward != BackwardNoise::Common && noise.n_paths > 1) {
      throw ValidationError(
          "h is nonzero: the backward driver must be common to all paths so that conditional expectations "
          "keep the B-dependence (use backward noise mode 'common')");
    }
  }
  if (state) {
    if (state->grid.nodes() != noise.grid.nodes() || state->n_paths != noise.n_paths) {
      throw ValidationError("state ensemble is not aligned with the noise bundle");
    }
  } else if (coeffs.state_dependent) {
    throw ValidationError("state-dependent coefficients need a state ensemble");
  } else if (noise.a_deferred) {
    throw ValidationError("the bundle's increasing process was deferred and never supplied");
  }

  const TimeGrid& grid = noise.grid;
  const std::size_t n = grid.steps();
  const std::size_t np = noise.n_paths;
  const auto rows = static_cast<Eigen::Index>(np);

  BdsdeSolution sol;
  sol.grid = grid;
  sol.n_paths = np;
  sol.k = k;
  sol.d = d;
  sol.config = config;
  sol.start_index = state ? state->start_index : 0;
  sol.A = state ? state->A : noise.A;
  for (std::size_t p = 0; p < np; ++p) {
    for (std::size_t i = 0; i < n; ++i) {
      if (sol.dA(p, i) < 0.0) throw ValidationError(fmt::format("negative increment of A on path {} at node {}", p, i));
    }
  }
  sol.Y.assign(n + 1, Matrix::Zero(rows, k));
  sol.Z.assign(n + 1, Matrix::Zero(rows, k * d));
  sol.U.assign(n + 1, Matrix::Zero(rows, k));
  sol.V.assign(n + 1, Matrix::Zero(rows, k));
  const int xdim = state ? state->dim : 0;
  if (state) {
    sol.X.assign(n + 1, Matrix(rows, xdim));
    for (std::size_t i = 0; i <= n; ++i) {
      for (std::size_t p = 0; p < np; ++p) {
        sol.X[i].row(static_cast<Eigen::Index>(p)) = state->X[p].col(static_cast<Eigen::Index>(i)).transpose();
      }
    }
  }
  auto state_at = [&](std::size_t i, std::size_t p) -> Vector {
    return state ? Vector(sol.X[i].row(static_cast<Eigen::Index>(p)).transpose()) : Vector();
  };

  for (std::size_t p = 0; p < np; ++p) {
    const Vector xi = coeffs.terminal_value(state_at(n, p));
    if (xi.size() != k || !xi.allFinite()) throw ValidationError("terminal value has wrong size or is not finite");
    sol.Y[n].row(static_cast<Eigen::Index>(p)) = xi.transpose();
    if (explicit_scheme) {
      sol.U[n].row(static_cast<Eigen::Index>(p)) = yosida_gradient(phi, config.eps, xi).transpose();
      sol.V[n].row(static_cast<Eigen::Index>(p)) = yosida_gradient(psi, config.eps, xi).transpose();
    }
  }

  sol.pathwise_start = sol.Y[n];
  const bool use_h = coeffs.backward_noise && noise.has_backward();
  const Matrix no_state(rows, 0);
  for (std::size_t i = n; i-- > sol.start_index;) {
    const double dt = grid.dt(i);
    const double t1 = grid[i + 1];
    sol.stiffness = std::max(sol.stiffness, explicit_scheme ? dt / config.eps : 0.0);
    const Projector proj = Projector::fit(state ? sol.X[i] : no_state, config.regression);
    sol.max_condition_number = std::max(sol.max_condition_number, proj.condition_number());
    sol.regression_used = to_string(proj.kind());

    const Matrix& ynext = sol.Y[i + 1];
    const Matrix py = proj.apply(ynext);
    Matrix resp(rows, k * d);
    for (Eigen::Index p = 0; p < rows; ++p) {
      const auto dw = noise.dw(static_cast<std::size_t>(p), i);
      for (int j = 0; j < k; ++j) {
        for (int l = 0; l < d; ++l) resp(p, j * d + l) = (ynext(p, j) - py(p, j)) * dw[l];
      }
    }
    sol.Z[i] = proj.apply(resp) / dt;

    Matrix q(rows, k);
    parallel_for(np, config.threads, [&](std::size_t p) {
      const auto r = static_cast<Eigen::Index>(p);
      const Vector x = state_at(i + 1, p);
      const Vector y = ynext.row(r).transpose();
      const Matrix z = unflatten(sol.Z[i], r, k, d);
      Vector v = y + coeffs.f(t1, x, y, z) * dt + coeffs.g(t1, x, y) * sol.dA(p, i);
      if (use_h) v += coeffs.h(t1, x, y, z) * noise.db(p, i);
      q.row(r) = v.transpose();
    });
    const Matrix ytilde = proj.apply(q);

    parallel_for(np, config.threads, [&](std::size_t p) {
      const auto r = static_cast<Eigen::Index>(p);
      const Vector yt = ytilde.row(r).transpose();
      const double da = sol.dA(p, i);
      if (!yt.allFinite()) {
        throw NumericalError(
            fmt::format("conditional expectation became non-finite at node {} (t = {}) on path {}", i, grid[i], p));
      }
      Vector y;
      Vector u;
      Vector v;
      if (explicit_scheme) {
        y = yt - yosida_gradient(phi, config.eps, yt) * dt - yosida_gradient(psi, config.eps, yt) * da;
        u = yosida_gradient(phi, config.eps, y);
        v = yosida_gradient(psi, config.eps, y);
      } else {
        const Vector p1 = prox(phi, dt, yt);
        u = (yt - p1) / dt;
        if (da > 0.0) {
          y = prox(psi, da, p1);
          v = (p1 - y) / da;
        } else {
          y = p1;
          v = Vector::Zero(k);
        }
      }
      if (!y.allFinite()) {
        throw NumericalError(fmt::format("solution became non-finite at node {} (t = {}) on path {}", i, grid[i], p));
      }
      sol.Y[i].row(r) = y.transpose();
      sol.U[i].row(r) = u.transpose();
      sol.V[i].row(r) = v.transpose();
    });
    sol.pathwise_start += (q - ynext) - (ytilde - sol.Y[i]);
  }
  for (std::size_t i = 0; i < sol.start_index; ++i) sol.Y[i] = sol.Y[sol.start_index];
  return sol;
}

NormReport weighted_norms(const BdsdeSolution& sol, double lambda, double mu) {
  if (!std::isfinite(lambda) || !std::isfinite(mu)) throw ValidationError("weights must be finite");
  NormReport r;
  const auto n = static_cast<double>(sol.n_paths);
  for (std::size_t p = 0; p < sol.n_paths; ++p) {
    const auto row = static_cast<Eigen::Index>(p);
    const auto y = integrate_path(sol, p, lambda, mu, [&](std::size_t i) { return sol.Y[i].row(row).squaredNorm(); });
    const auto z = integrate_path(sol, p, lambda, mu, [&](std::size_t i) { return sol.Z[i].row(row).squaredNorm(); });
    const auto u = integrate_path(sol, p, lambda, mu, [&](std::size_t i) { return sol.U[i].row(row).squaredNorm(); });
    const auto v = integrate_path(sol, p, lambda, mu, [&](std::size_t i) { return sol.V[i].row(row).squaredNorm(); });
    r.Y_M += y.dt / n;
    r.Y_Mbar += y.dA / n;
    r.Y_S += y.sup / n;
    r.Z_M += z.dt / n;
    r.U_M += u.dt / n;
    r.V_Mbar += v.dA / n;
  }
  return r;
}

double lambda_functional(const BdsdeSolution& sol, const CoefficientSet& coeffs, const ConvexFunction& phi,
                         const ConvexFunction& psi, double lambda, double mu) {
  const std::size_t last = sol.grid.steps();
  const Vector y0 = Vector::Zero(sol.k);
  const Matrix z0 = Matrix::Zero(sol.k, sol.d);
  const auto n = static_cast<double>(sol.n_paths);
  double total = 0.0;
  for (std::size_t p = 0; p < sol.n_paths; ++p) {
    const auto row = static_cast<Eigen::Index>(p);
    auto x_at = [&](std::size_t i) { return sol.X.empty() ? Vector() : Vector(sol.X[i].row(row).transpose()); };
    const Vector xi = sol.Y[last].row(row).transpose();
    const double wT = weight(lambda, mu, sol.grid.T(), sol.A[p][static_cast<Eigen::Index>(last)]);
    total += wT * (xi.squaredNorm() + phi(xi) + psi(xi)) / n;
    const auto fh = integrate_path(sol, p, lambda, mu, [&](std::size_t i) {
      const Vector x = x_at(i);
      return coeffs.f(sol.grid[i], x, y0, z0).squaredNorm() + coeffs.h(sol.grid[i], x, y0, z0).squaredNorm();
    });
    const auto g = integrate_path(sol, p, lambda, mu,
                                  [&](std::size_t i) { return coeffs.g(sol.grid[i], x_at(i), y0).squaredNorm(); });
    total += (fh.dt + g.dA) / n;
  }
  return total;
}

PenalizationReport penalization_diagnostics(const BdsdeSolution& sol, const CoefficientSet& coeffs,
                                            const ConvexFunction& phi, const ConvexFunction& psi, double eps,
                                            double lambda, double mu) {
  PenalizationReport r;
  const std::size_t nodes = sol.grid.size();
  const auto n = static_cast<double>(sol.n_paths);
  std::vector<double> dist_mean(nodes, 0.0);
  std::vector<double> value_mean(nodes, 0.0);
  for (std::size_t p = 0; p < sol.n_paths; ++p) {
    const auto row = static_cast<Eigen::Index>(p);
    std::vector<double> gphi(nodes), gpsi(nodes), vphi(nodes), vpsi(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
      const Vector y = sol.Y[i].row(row).transpose();
      const Vector jphi = prox(phi, eps, y);
      const Vector jpsi = prox(psi, eps, y);
      gphi[i] = ((y - jphi) / eps).squaredNorm();
      gpsi[i] = ((y - jpsi) / eps).squaredNorm();
      vphi[i] = phi(jphi);
      vpsi[i] = psi(jpsi);
      const double w = weight(lambda, mu, sol.grid[i], sol.A[p][static_cast<Eigen::Index>(i)]);
      dist_mean[i] += w * ((y - jphi).squaredNorm() + (y - jpsi).squaredNorm()) / n;
      value_mean[i] += w * (vphi[i] + vpsi[i]) / n;
    }
    r.grad_phi_energy += integrate_path(sol, p, lambda, mu, [&](std::size_t i) { return gphi[i]; }).dt / n;
    r.grad_psi_energy += integrate_path(sol, p, lambda, mu, [&](std::size_t i) { return gpsi[i]; }).dA / n;
    r.phi_resolvent_integral += integrate_path(sol, p, lambda, mu, [&](std::size_t i) { return vphi[i]; }).dt / n;
    r.psi_resolvent_integral += integrate_path(sol, p, lambda, mu, [&](std::size_t i) { return vpsi[i]; }).dA / n;
  }
  r.resolvent_distance_sup = *std::max_element(dist_mean.begin(), dist_mean.end());
  r.resolvent_value_sup = *std::max_element(value_mean.begin(), value_mean.end());
  r.lambda_functional = lambda_functional(sol, coeffs, phi, psi, lambda, mu);
  return r;
}

CauchyReport cauchy_study(const CoefficientSet& coeffs, const ConvexFunction& phi, const ConvexFunction& psi,
                          const SolverConfig& base, const std::vector<double>& eps_ladder, const PathBundle& noise,
                          double lambda, double mu, const ReflectedEnsemble* state, bool keep_runs) {
  if (eps_ladder.size() < 2) throw ValidationError("cauchy study: ladder too short (need at least two entries)");
  for (std::size_t j = 0; j < eps_ladder.size(); ++j) {
    if (!(eps_ladder[j] > 0.0)) throw ValidationError("cauchy study: ladder entries must be positive");
    if (j > 0 && !(eps_ladder[j] < eps_ladder[j - 1])) {
      throw ValidationError("cauchy study: ladder must be strictly decreasing");
    }
  }
  CauchyReport r;
  r.eps = eps_ladder;
  BdsdeSolution prev;
  for (std::size_t j = 0; j < eps_ladder.size(); ++j) {
    SolverConfig cfg = base;
    cfg.eps = eps_ladder[j];
    BdsdeSolution cur = solve_penalized(coeffs, phi, psi, cfg, noise, state);
    r.start_values.push_back(cur.start_mean());
    if (j > 0) {
      double gap = 0.0;
      for (std::size_t p = 0; p < cur.n_paths; ++p) {
        const auto row = static_cast<Eigen::Index>(p);
        double sup = 0.0;
        for (std::size_t i = 0; i < cur.grid.size(); ++i) {
          const double w = weight(lambda, mu, cur.grid[i], cur.A[p][static_cast<Eigen::Index>(i)]);
          sup = std::max(sup, w * (cur.Y[i].row(row) - prev.Y[i].row(row)).squaredNorm());
        }
        gap += sup / static_cast<double>(cur.n_paths);
      }
      r.gaps.push_back(gap);
    }
    if (keep_runs) r.runs.push_back(cur);
    prev = std::move(cur);
  }
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t j = 0; j < r.gaps.size(); ++j) {
    if (r.gaps[j] > 0.0) {
      lx.push_back(std::log(r.eps[j] + r.eps[j + 1]));
      ly.push_back(std::log(r.gaps[j]));
    }
  }
  if (lx.size() >= 2) {
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(lx.size());
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(ly.size());
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t j = 0; j < lx.size(); ++j) {
      sxy += (lx[j] - mx) * (ly[j] - my);
      sxx += (lx[j] - mx) * (lx[j] - mx);
    }
    r.slope = sxy / sxx;
  } else {
    r.slope = std::nan("");
  }
  const std::size_t m = r.eps.size();
  const double e1 = r.eps[m - 2];
  const double e2 = r.eps[m - 1];
  r.extrapolated_start = r.start_values[m - 1] - e2 * (r.start_values[m - 2] - r.start_values[m - 1]) / (e1 - e2);
  return r;
}

InclusionReport verify_vi_inclusion(const BdsdeSolution& sol, const ConvexFunction& phi, const ConvexFunction& psi,
                                    const std::vector<Vector>& test_points) {
  InclusionReport r;
  std::vector<double> phi_r;
  std::vector<double> psi_r;
  for (const Vector& t : test_points) {
    if (t.size() != sol.k) throw ValidationError("test point dimension differs from k");
    phi_r.push_back(phi(t));
    psi_r.push_back(psi(t));
  }
  for (std::size_t i = sol.start_index; i < sol.grid.steps(); ++i) {
    for (std::size_t p = 0; p < sol.n_paths; ++p) {
      const auto row = static_cast<Eigen::Index>(p);
      const Vector y = sol.Y[i].row(row).transpose();
      const Vector u = sol.U[i].row(row).transpose();
      const Vector v = sol.V[i].row(row).transpose();
      const double py = phi(y);
      if (py == kInfinity) {
        ++r.phi_infinite;
        r.worst_phi = kInfinity;
      }
      const bool boundary = sol.dA(p, i) > 0.0;
      const double sy = boundary ? psi(y) : 0.0;
      if (boundary && sy == kInfinity) {
        ++r.psi_infinite;
        r.worst_psi = kInfinity;
      }
      for (std::size_t j = 0; j < test_points.size(); ++j) {
        const Vector diff = test_points[j] - y;
        if (phi_r[j] != kInfinity && py != kInfinity) r.worst_phi = std::max(r.worst_phi, u.dot(diff) + py - phi_r[j]);
        if (boundary && psi_r[j] != kInfinity && sy != kInfinity) {
          r.worst_psi = std::max(r.worst_psi, v.dot(diff) + sy - psi_r[j]);
        }
      }
    }
  }
  return r;
}

void write_solution_csv(std::ostream& out, const BdsdeSolution& sol, std::size_t max_paths) {
  out << "path,node,t";
  for (int j = 0; j < sol.k; ++j) out << ",Y" << (j + 1);
  for (int j = 0; j < sol.k; ++j) {
    for (int l = 0; l < sol.d; ++l) out << ",Z" << (j + 1) << '_' << (l + 1);
  }
  for (int j = 0; j < sol.k; ++j) out << ",U" << (j + 1);
  for (int j = 0; j < sol.k; ++j) out << ",V" << (j + 1);
  out << '\n';
  fmt::memory_buffer buf;
  const std::size_t paths = std::min(max_paths, sol.n_paths);
  for (std::size_t p = 0; p < paths; ++p) {
    const auto row = static_cast<Eigen::Index>(p);
    for (std::size_t i = 0; i < sol.grid.size(); ++i) {
      buf.clear();
      auto it = std::back_inserter(buf);
      fmt::format_to(it, "{},{},{:.17g}", p, i, sol.grid[i]);
      for (const Matrix* m : {&sol.Y[i], &sol.Z[i], &sol.U[i], &sol.V[i]}) {
        for (Eigen::Index c = 0; c < m->cols(); ++c) fmt::format_to(it, ",{:.17g}", (*m)(row, c));
      }
      buf.push_back('\n');
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
  }
}

}  // namespace bdsgvi
