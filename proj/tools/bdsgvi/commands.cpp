#include "commands.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/core.h>
#include <fmt/ranges.h>

#include <bdsgvi/bdsde.hpp>
#include <bdsgvi/call_spec.hpp>
#include <bdsgvi/coefficients.hpp>
#include <bdsgvi/convex.hpp>
#include <bdsgvi/doss_sussmann.hpp>
#include <bdsgvi/drivers.hpp>
#include <bdsgvi/errors.hpp>
#include <bdsgvi/feynman_kac.hpp>
#include <bdsgvi/reflected.hpp>

namespace bdsgvi::cli {

Report::Report(std::string command, const Scenario& scenario) {
  json_["command"] = command;
  json_["scenario"] = scenario.name;
  json_["seed"] = scenario.seed;
  json_["checks"] = nlohmann::json::array();
  json_["results"] = nlohmann::json::object();
  lines_.push_back(fmt::format("{} on scenario '{}' (seed {})", command, scenario.name, scenario.seed));
}

void Report::check(const std::string& property, bool pass, const std::string& detail) {
  lines_.push_back(fmt::format("{} {}: {}", pass ? "PASS" : "FAIL", property, detail));
  json_["checks"].push_back({{"property", property}, {"status", pass ? "pass" : "fail"}, {"detail", detail}});
  if (!pass) ++failures_;
}

void Report::warn(const std::string& property, const std::string& detail) {
  lines_.push_back(fmt::format("WARN {}: {}", property, detail));
  json_["checks"].push_back({{"property", property}, {"status", "warn"}, {"detail", detail}});
}

void Report::info(const std::string& detail) { lines_.push_back("     " + detail); }

std::string Report::text() const {
  std::string out;
  for (const auto& l : lines_) out += l + '\n';
  return out;
}

namespace {

// ---------------------------------------------------------------------------
// shared plumbing

std::ofstream open_artifact(const Scenario& s, const std::string& name) {
  std::error_code ec;
  std::filesystem::create_directories(s.output, ec);
  if (ec) throw ValidationError(fmt::format("cannot create output directory '{}': {}", s.output.string(), ec.message()));
  const auto path = s.output / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

void close_artifact(std::ofstream& out, const Scenario& s, const std::string& name) {
  out.close();
  if (!out) throw ValidationError(fmt::format("write to '{}' failed", (s.output / name).string()));
}

template <class Writer>
void write_artifact(const Scenario& s, const std::string& name, Writer&& writer) {
  auto out = open_artifact(s, name);
  writer(out);
  close_artifact(out, s, name);
}

std::string g4(double v) { return fmt::format("{:.4g}", v); }

Vector state_x0(const Scenario& s) {
  if (!s.state) return Vector();
  return Eigen::Map<const Vector>(s.state->x0.data(), static_cast<Eigen::Index>(s.state->x0.size()));
}

DomainSpec scenario_domain(const Scenario& s) {
  if (!s.state) throw ValidationError("this command needs a state section (domain, dynamics, x0)");
  return make_domain(s.state->domain, s.state->dim);
}

Dynamics scenario_dynamics(const Scenario& s) {
  if (!s.state) throw ValidationError("this command needs a state section (domain, dynamics, x0)");
  return make_dynamics(s.state->drift, s.state->sigma, s.state->dim);
}

IncreasingSpec increasing_spec(const Scenario& s) {
  if (s.increasing.size() > 4 && s.increasing.ends_with(".csv")) return load_increasing_csv(s.increasing);
  const auto call = parse_call(s.increasing);
  if (call.name == "local_time") return DeferredIncreasing{};
  if (call.name == "linear") {
    const double c = call.args[0];
    return AnalyticIncreasing{[c](double t) { return c * t; }, s.increasing};
  }
  return AnalyticIncreasing{[](double) { return 0.0; }, "zero"};
}

struct Drivers {
  PathBundle noise;
  std::optional<ReflectedEnsemble> state;
};

Drivers make_drivers(const Scenario& s, bool with_backward) {
  PathOptions o;
  o.backward = s.backward;
  o.with_backward = with_backward;
  o.threads = s.solver.threads;
  Drivers d{generate_paths(TimeGrid::uniform(s.t0, s.T, s.steps), s.d, s.paths, s.seed, increasing_spec(s), o), {}};
  if (s.state) {
    d.state = simulate_reflected(scenario_domain(s), scenario_dynamics(s), s.t0, state_x0(s), d.noise,
                                 s.solver.threads);
  }
  return d;
}

CoefficientSet scenario_coefficients(const Scenario& s) {
  auto c = make_coefficients(s.k, s.d, s.f, s.g, s.h, s.terminal);
  c.constants = s.constants;
  return c;
}

void weight_condition(Report& r, const Scenario& s) {
  const auto w = validate_weights(s.constants);
  const auto detail =
      fmt::format("lambda = {} vs threshold {}, mu = {} vs threshold {}", g4(s.constants.lambda), g4(w.lambda_threshold),
                  g4(s.constants.mu), g4(w.mu_threshold));
  if (w.ok) {
    r.check("weight exponents dominate the coefficient constants", true, detail);
  } else {
    // The inequalities are sufficient, not necessary: warn and carry on.
    r.warn("weight exponents dominate the coefficient constants", detail + "; running anyway");
  }
}

// ---------------------------------------------------------------------------
// prox-check

struct LawTally {
  std::size_t checked = 0;
  std::size_t violations = 0;
  double worst = -kInfinity;

  // lhs ≤ rhs up to tol relative to the magnitude of the compared terms.
  void le(double lhs, double rhs, double tol) {
    ++checked;
    if (rhs == kInfinity) return;
    const double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
    const double excess = (lhs - rhs) / scale;
    worst = std::max(worst, excess);
    if (!(excess <= tol)) ++violations;
  }
};

constexpr const char* kLaws[] = {"resolvent is nonexpansive",
                                 "Yosida gradient is (1/eps)-Lipschitz",
                                 "Yosida gradient is monotone",
                                 "mixed-parameter monotonicity of Yosida gradients",
                                 "envelope bounded below by the resolvent distance",
                                 "envelope bounded above by eps times theta",
                                 "Yosida gradient is a subgradient at the resolvent"};
constexpr std::size_t kLawCount = std::size(kLaws);

std::array<LawTally, kLawCount> check_laws(const ConvexFunction& f, std::size_t samples, double tol,
                                           std::mt19937_64 rng) {
  std::array<LawTally, kLawCount> t;
  std::uniform_real_distribution<double> ux(-5.0, 5.0);
  std::uniform_real_distribution<double> ule(-2.0, 1.0);
  const auto draw = [&] {
    Vector v(f.dim);
    for (auto& c : v) c = ux(rng);
    return v;
  };
  for (std::size_t n = 0; n < samples; ++n) {
    const Vector x = draw();
    const Vector y = draw();
    const double e = std::pow(10.0, ule(rng));
    const double d = std::pow(10.0, ule(rng));
    const Vector jx = prox(f, e, x);
    const Vector jy = prox(f, e, y);
    const Vector gx = (x - jx) / e;
    const Vector gy = (y - jy) / e;
    const Vector gyd = yosida_gradient(f, d, y);
    t[0].le((jx - jy).norm(), (x - y).norm(), tol);
    t[1].le((gx - gy).norm(), (x - y).norm() / e, tol);
    t[2].le(0.0, (gx - gy).dot(x - y), tol);
    t[3].le(-(e + d) * gx.dot(gyd), (gx - gyd).dot(x - y), tol);
    const double env = 0.5 * (x - jx).squaredNorm() + e * f(jx);
    t[4].le(0.5 * (x - jx).squaredNorm(), env, tol);
    t[5].le(env, e * f(x), tol);
    t[6].le(f(jx) + gx.dot(y - jx), f(y), tol);
  }
  return t;
}

Report prox_check(const Scenario& s) {
  Report r("prox-check", s);
  std::vector<ConvexFunction> fns{catalog::zero(), catalog::quadratic(1.5), catalog::abs(),
                                  catalog::indicator_box(-0.5, 1.0), catalog::hinge_sq()};
  for (const auto& text : {s.phi, s.psi}) {
    auto f = make_convex(text, s.k);
    if (std::none_of(fns.begin(), fns.end(), [&](const auto& g) { return g.label == f.label && g.dim == f.dim; })) {
      fns.push_back(std::move(f));
    }
  }
  const std::size_t samples = s.check_samples;
  std::ostringstream csv;
  csv << "function,oracle,law,checks,violations,worst_excess\n";
  std::array<LawTally, kLawCount> closed_total{};
  std::array<LawTally, kLawCount> grid_total{};
  const auto merge = [](std::array<LawTally, kLawCount>& into, const std::array<LawTally, kLawCount>& t) {
    for (std::size_t l = 0; l < kLawCount; ++l) {
      into[l].checked += t[l].checked;
      into[l].violations += t[l].violations;
      into[l].worst = std::max(into[l].worst, t[l].worst);
    }
  };
  const auto emit = [&](const ConvexFunction& f, const char* oracle, const std::array<LawTally, kLawCount>& t) {
    for (std::size_t l = 0; l < kLawCount; ++l) {
      csv << fmt::format("\"{}\",{},\"{}\",{},{},{:.6e}\n", f.label, oracle, kLaws[l], t[l].checked,
                         t[l].violations, t[l].worst);
    }
  };
  for (std::size_t i = 0; i < fns.size(); ++i) {
    const auto& f = fns[i];
    if (f.prox_oracle) {
      const auto t = check_laws(f, samples, 1e-9, substream(s.seed, i, 1));
      emit(f, "closed_form", t);
      merge(closed_total, t);
    }
    if (f.dim == 1) {
      ConvexFunction g = f;
      g.prox_oracle.reset();
      const auto t = check_laws(g, std::max<std::size_t>(1, samples / 5), 1e-5, substream(s.seed, i, 2));
      emit(f, "grid", t);
      merge(grid_total, t);
    }
  }
  write_artifact(s, "prox_check.csv", [&](std::ostream& out) { out << csv.str(); });
  std::vector<std::string> labels;
  for (const auto& f : fns) labels.push_back(f.label);
  r.info(fmt::format("functions: {}; {} samples each (closed form, tol 1e-9) and {} on the grid oracle (tol 1e-5)",
                     fmt::join(labels, ", "), samples, std::max<std::size_t>(1, samples / 5)));
  for (std::size_t l = 0; l < kLawCount; ++l) {
    const auto& c = closed_total[l];
    const auto& g = grid_total[l];
    r.check(kLaws[l], c.violations == 0 && g.violations == 0,
            fmt::format("closed form {}/{} violations (worst {:.2e}), grid {}/{} (worst {:.2e})", c.violations,
                        c.checked, c.worst, g.violations, g.checked, g.worst));
    r.data()[kLaws[l]] = {{"closed_form_violations", c.violations}, {"grid_violations", g.violations}};
  }
  return r;
}

// ---------------------------------------------------------------------------
// compat-check

Report compat_check(const Scenario& s) {
  Report r("compat-check", s);
  const auto phi = make_convex(s.phi, s.k);
  const auto psi = make_convex(s.psi, s.k);
  const auto coeffs = scenario_coefficients(s);
  const Vector x0 = state_x0(s);
  weight_condition(r, s);

  const auto cc = spot_check(coeffs, s.check_samples, derive_seed(s.seed, 11));
  r.check("coefficients satisfy the declared monotonicity, Lipschitz and contraction constants", cc.ok,
          cc.ok ? fmt::format("f: {} <= beta1, {} <= K; g: {} <= beta2; h excess {}", g4(cc.f_monotonicity),
                              g4(cc.f_lipschitz_z), g4(cc.g_monotonicity), g4(cc.h_contraction))
                : cc.failure);

  std::mt19937_64 rng = substream(s.seed, 0, 12);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> ut(s.t0, s.T);
  std::vector<CompatibilitySample> samples(s.check_samples);
  std::vector<Vector> points;
  for (auto& smp : samples) {
    smp.t = ut(rng);
    smp.y = Vector(s.k);
    for (auto& c : smp.y) c = u(rng);
    smp.z = Matrix(s.k, s.d);
    for (auto& c : smp.z.reshaped()) c = u(rng);
    points.push_back(smp.y);
  }
  points.push_back(Vector::Zero(s.k));
  for (const auto* f : {&phi, &psi}) {
    const auto sc = spot_check(*f, points);
    r.check(fmt::format("{} is proper, convex, nonnegative and vanishes at 0", f->label), sc.ok,
            sc.ok ? fmt::format("{} points", points.size()) : sc.failure);
  }

  const auto ladder = s.eps_ladder.empty() ? std::vector<double>{s.solver.eps} : s.eps_ladder;
  const DriftField f = [&](double t, const Vector& y, const Matrix& z) { return coeffs.f(t, x0, y, z); };
  const BoundaryField g = [&](double t, const Vector& y) { return coeffs.g(t, x0, y); };
  const auto rep = check_compatibility(phi, psi, f, g, ladder, samples);
  const auto line = [](const CompatibilityViolation& v) {
    return fmt::format("worst excess {:.3e} (eps {}, sample {})", v.amount, g4(v.eps), v.sample);
  };
  const auto ok = [&](const CompatibilityViolation& v) { return v.amount <= rep.tolerance; };
  r.check("Yosida gradients of phi and psi are aligned", ok(rep.gradients_aligned), line(rep.gradients_aligned));
  r.check("boundary coefficient compatible with the penalties", ok(rep.boundary_term), line(rep.boundary_term));
  r.check("drift compatible with the penalties", ok(rep.drift_term), line(rep.drift_term));
  r.info(fmt::format("{} evaluations over eps ladder [{}]", rep.evaluations, fmt::join(ladder, ", ")));

  std::ostringstream csv;
  csv << "condition,worst_excess,eps,sample\n";
  for (const auto& [name, v] : {std::pair{"gradients_aligned", rep.gradients_aligned},
                                std::pair{"boundary_term", rep.boundary_term}, std::pair{"drift_term", rep.drift_term}}) {
    csv << fmt::format("{},{:.9e},{:.9e},{}\n", name, v.amount, v.eps, v.sample);
    r.data()[name] = v.amount;
  }
  write_artifact(s, "compat_check.csv", [&](std::ostream& out) { out << csv.str(); });
  return r;
}

// ---------------------------------------------------------------------------
// sde-sim

Report sde_sim(const Scenario& s) {
  Report r("sde-sim", s);
  const auto domain = scenario_domain(s);
  const auto dyn = scenario_dynamics(s);
  const auto drivers = make_drivers(s, true);
  const auto& ens = *drivers.state;
  write_artifact(s, "ensemble.csv", [&](std::ostream& out) { write_ensemble_csv(out, ens); });

  const double band = default_boundary_band(ens.grid, dyn);
  const auto sup = local_time_support(ens, domain, band);
  r.check("state stays in the closed domain", sup.containment_failures == 0,
          fmt::format("min level over all nodes {:.3e}, {} nodes outside", sup.containment_worst,
                      sup.containment_failures));
  r.check("local time increases only near the boundary", sup.outside_band == 0,
          fmt::format("{} of {} increments land farther than {} from the boundary", sup.outside_band, sup.increments,
                      g4(band)));
  const auto res = local_time_identity_residual(ens, domain, dyn, drivers.noise);
  r.info(fmt::format("local time vs Ito reconstruction of the level function: per-path sup residual mean {}, rms {}, "
                     "max {} (shrinks like sqrt(dt))",
                     g4(res.mean), g4(res.rms), g4(res.max)));
  double mean_A = 0.0;
  for (const auto& a : ens.A) mean_A += a[a.size() - 1];
  mean_A /= static_cast<double>(ens.n_paths);
  r.info(fmt::format("E A_T = {}", g4(mean_A)));
  r.data()["mean_A_T"] = mean_A;
  r.data()["identity_residual_rms"] = res.rms;

  const auto spec = make_flow_spec(s.flow.h, domain.dim);
  if (spec.label != "zero") {
    const auto path = BrownianPath::from_bundle(drivers.noise, 0);
    const Vector x0 = state_x0(s);
    std::vector<FlowRecord> records;
    double worst_round_trip = 0.0;
    double min_dy = kInfinity;
    for (std::size_t i = 0; i < ens.grid.steps(); ++i) {
      const double t = ens.grid[i];
      const std::size_t steps = ens.grid.steps() - i;
      for (double y : s.flow.ys) {
        const auto smp = flow(spec, t, x0, y, path, steps);
        records.push_back({t, y, smp});
        min_dy = std::min(min_dy, smp.d_y_eta);
        worst_round_trip = std::max(worst_round_trip, std::abs(flow_inverse(spec, t, x0, smp.eta, path, steps) - y));
      }
    }
    write_artifact(s, "flow.csv", [&](std::ostream& out) { write_flow_csv(out, records); });
    r.check("stochastic flow is increasing in y", min_dy > 0.0, fmt::format("min D_y eta = {}", g4(min_dy)));
    r.check("flow inverse recovers y", worst_round_trip <= 1e-8,
            fmt::format("worst round trip {:.2e} (tol 1e-8)", worst_round_trip));
  }
  return r;
}

// ---------------------------------------------------------------------------
// solve

std::vector<Vector> inclusion_test_points(int k) {
  std::vector<Vector> pts;
  for (int j = -12; j <= 12; ++j) {
    Vector v = Vector::Constant(k, 0.25 * j);
    pts.push_back(v);
  }
  return pts;
}

Report solve(const Scenario& s) {
  Report r("solve", s);
  weight_condition(r, s);
  const auto coeffs = scenario_coefficients(s);
  const auto phi = make_convex(s.phi, s.k);
  const auto psi = make_convex(s.psi, s.k);
  const auto drivers = make_drivers(s, coeffs.backward_noise);
  const auto sol = solve_penalized(coeffs, phi, psi, s.solver, drivers.noise, drivers.state ? &*drivers.state : nullptr);
  write_artifact(s, "solution.csv", [&](std::ostream& out) { write_solution_csv(out, sol); });

  const std::size_t n = sol.grid.size() - 1;
  std::size_t mismatched = 0;
  std::size_t outside = 0;
  for (std::size_t p = 0; p < sol.n_paths; ++p) {
    const Vector xT = drivers.state ? Vector(drivers.state->X[p].col(static_cast<Eigen::Index>(n))) : Vector();
    const Vector xi = coeffs.terminal_value(xT);
    if (sol.Y[n].row(static_cast<Eigen::Index>(p)).transpose() != xi) ++mismatched;
    if (phi(xi) == kInfinity || psi(xi) == kInfinity) ++outside;
  }
  if (outside > 0) {
    r.warn("terminal value lies in the domains of phi and psi",
           fmt::format("phi(xi) or psi(xi) is infinite on {} of {} paths; Lambda is infinite", outside, sol.n_paths));
  } else {
    r.check("terminal value lies in the domains of phi and psi", true, "phi(xi) and psi(xi) finite on every path");
  }
  r.check("terminal exactness", mismatched == 0,
          fmt::format("Y_T equals the terminal value bit-for-bit on {} of {} paths", sol.n_paths - mismatched,
                      sol.n_paths));

  const Vector y0 = sol.start_mean();
  const Vector se = sol.start_stderr();
  r.info(fmt::format("Y at t0: [{:.6g}] +- [{:.2g}] (Monte-Carlo standard error)", fmt::join(y0, ", "),
                     fmt::join(se, ", ")));
  r.info(fmt::format("regression at the first node: {}; largest condition number {}", sol.regression_used,
                     g4(sol.max_condition_number)));
  r.data()["start_mean"] = std::vector<double>(y0.begin(), y0.end());
  r.data()["start_stderr"] = std::vector<double>(se.begin(), se.end());

  if (s.solver.scheme == Scheme::ExplicitYosida) {
    if (sol.stiffness >= 1.0) {
      r.warn("explicit penalty step is stable", fmt::format("dt/eps = {} >= 1; prefer the implicit scheme", g4(sol.stiffness)));
    } else {
      r.check("explicit penalty step is stable", true, fmt::format("dt/eps = {}", g4(sol.stiffness)));
    }
  }
  const auto inc = verify_vi_inclusion(sol, phi, psi, inclusion_test_points(s.k));
  const auto excess = [](double v) { return v == -kInfinity ? std::string("n/a") : fmt::format("{:.3e}", v); };
  const auto inc_detail = fmt::format("worst subgradient-inequality excess: phi {}, psi {}", excess(inc.worst_phi),
                                      excess(inc.worst_psi));
  if (s.solver.scheme == Scheme::ImplicitProx) {
    r.check("U and V are subgradients of phi and psi at Y", inc.worst() <= 1e-9, inc_detail);
  } else {
    r.info(inc_detail + " (the explicit scheme satisfies the inclusion only as eps -> 0)");
  }

  const auto& c = s.constants;
  const auto norms = weighted_norms(sol, c.lambda, c.mu);
  const auto pen = penalization_diagnostics(sol, coeffs, phi, psi, s.solver.eps, c.lambda, c.mu);
  r.info(fmt::format("weighted norms: E sup w|Y|^2 = {}, E int w|Y|^2 dt = {}, E int w|Y|^2 dA = {}, "
                     "E int w|Z|^2 dt = {}",
                     g4(norms.Y_S), g4(norms.Y_M), g4(norms.Y_Mbar), g4(norms.Z_M)));
  r.info(fmt::format("penalization: E int w|grad phi_eps(Y)|^2 dt = {}, E int w|grad psi_eps(Y)|^2 dA = {}, "
                     "resolvent distance sup = {}, Lambda = {}",
                     g4(pen.grad_phi_energy), g4(pen.grad_psi_energy), g4(pen.resolvent_distance_sup),
                     g4(pen.lambda_functional)));
  r.data()["norm_Y_S"] = norms.Y_S;
  r.data()["lambda_functional"] = pen.lambda_functional;
  return r;
}

// ---------------------------------------------------------------------------
// cauchy

Report cauchy(const Scenario& s) {
  Report r("cauchy", s);
  weight_condition(r, s);
  const auto coeffs = scenario_coefficients(s);
  const auto phi = make_convex(s.phi, s.k);
  const auto psi = make_convex(s.psi, s.k);
  const auto drivers = make_drivers(s, coeffs.backward_noise);
  const auto rep = cauchy_study(coeffs, phi, psi, s.solver, s.eps_ladder, drivers.noise, s.constants.lambda,
                                s.constants.mu, drivers.state ? &*drivers.state : nullptr);
  std::ostringstream csv;
  csv << "eps,next_eps,gap";
  for (int j = 0; j < s.k; ++j) csv << ",Y0_" << (j + 1);
  csv << '\n';
  for (std::size_t j = 0; j < rep.eps.size(); ++j) {
    csv << fmt::format("{:.9e},", rep.eps[j]);
    if (j < rep.gaps.size()) {
      csv << fmt::format("{:.9e},{:.9e}", rep.eps[j + 1], rep.gaps[j]);
    } else {
      csv << ',';
    }
    for (double v : rep.start_values[j]) csv << fmt::format(",{:.17g}", v);
    csv << '\n';
  }
  write_artifact(s, "cauchy.csv", [&](std::ostream& out) { out << csv.str(); });

  r.info(fmt::format("E sup w|Y^eps - Y^delta|^2 along [{}]: [{:.4g}]", fmt::join(rep.eps, ", "),
                     fmt::join(rep.gaps, ", ")));
  if (s.solver.scheme == Scheme::ImplicitProx) {
    r.info("the implicit scheme does not depend on eps; use explicit_yosida for a penalization study");
  }
  const bool in_window = std::isfinite(rep.slope) && rep.slope >= s.rate_lo && rep.slope <= s.rate_hi;
  r.check("Cauchy rate in the penalization parameter", in_window,
          fmt::format("log-log slope against eps + delta = {} (window [{}, {}])", g4(rep.slope), g4(s.rate_lo),
                      g4(s.rate_hi)));
  r.info(fmt::format("start value extrapolated to eps = 0: [{:.6g}]", fmt::join(rep.extrapolated_start, ", ")));
  r.data()["slope"] = rep.slope;
  r.data()["gaps"] = rep.gaps;
  return r;
}

// ---------------------------------------------------------------------------
// field

Report field(const Scenario& s) {
  Report r("field", s);
  weight_condition(r, s);
  const auto domain = scenario_domain(s);
  const auto dyn = scenario_dynamics(s);
  const auto coeffs = scenario_coefficients(s);
  const auto phi = make_convex(s.phi, s.k);
  const auto psi = make_convex(s.psi, s.k);
  FieldConfig cfg;
  cfg.solver = s.solver;
  cfg.T = s.T;
  cfg.steps = s.field.steps.value_or(s.steps);
  cfg.n_paths = s.field.paths.value_or(s.paths);
  cfg.b_draws = s.field.b_draws;
  cfg.seed = s.seed;
  cfg.threads = s.solver.threads;
  const auto grid = make_field_grid(domain, s.field.times, make_lattice(s.field.lattice, domain));
  const auto est = sample_field(domain, dyn, coeffs, phi, psi, cfg, grid);
  write_artifact(s, "field.csv", [&](std::ostream& out) { write_field_csv(out, est); });

  double se = 0.0;
  for (double v : est.std_error) se = std::max(se, v);
  r.info(fmt::format("{} nodes, {} paths per node, dt = {}, largest standard error {}", grid.size(), est.n_paths,
                     g4(est.dt), g4(se)));
  double radius = 0.0;
  for (const auto& p : grid.points) radius = std::max(radius, p.norm());
  const auto pairs = neighbor_pairs(grid, std::max(radius, 1e-3) / 2.0);
  if (!pairs.empty()) {
    const auto cont = continuity_diagnostic(est, pairs);
    r.check("field is continuous across scales", !cont.blow_up,
            fmt::format("difference quotient max {} on fine pairs vs {} on coarse pairs ({} pairs)", g4(cont.fine_max),
                        g4(cont.coarse_max), cont.pairs));
  }
  if (grid.times.size() > 1) {
    const auto in = interior_residual(est, coeffs, dyn, phi, s.solver.eps, domain);
    const auto bd = boundary_residual(est, coeffs, psi, s.solver.eps, domain);
    r.info(fmt::format("PDE residual of the sampled field: interior max {}, boundary max {} (includes Monte-Carlo "
                       "noise, not a pass criterion)",
                       g4(in.max_abs), g4(bd.max_abs)));
  }
  r.data()["u"] = est.u;
  return r;
}

// ---------------------------------------------------------------------------
// report

Report scenario_report(const Scenario& s) {
  Report r("report", s);
  r.info(fmt::format("time [{}, {}] in {} steps, {} paths, noise dimension {}, backward noise {}, increasing process {}",
                     s.t0, s.T, s.steps, s.paths, s.d, s.backward == BackwardNoise::Common ? "common" : "per_path",
                     s.increasing));
  r.info(fmt::format("phi = {}, psi = {}, k = {}, f = {}, g = {}, h = {}, terminal = {}", s.phi, s.psi, s.k, s.f, s.g,
                     s.h, s.terminal));
  r.info(fmt::format("solver {} with eps {}, regression {}, eps ladder [{}]", to_string(s.solver.scheme),
                     s.solver.eps, to_string(s.solver.regression.kind), fmt::join(s.eps_ladder, ", ")));
  weight_condition(r, s);
  const auto coeffs = scenario_coefficients(s);
  const auto cc = spot_check(coeffs, s.check_samples, derive_seed(s.seed, 11));
  r.check("coefficients satisfy the declared monotonicity, Lipschitz and contraction constants", cc.ok,
          cc.ok ? "spot check clean" : cc.failure);
  if (s.state) {
    const auto domain = scenario_domain(s);
    r.info(fmt::format("state: domain {}, drift {}, sigma {}, x0 [{}]", s.state->domain, s.state->drift,
                       s.state->sigma, fmt::join(s.state->x0, ", ")));
    const auto grid = make_field_grid(domain, {s.t0}, make_lattice(s.field.lattice, domain));
    std::vector<Vector> boundary;
    std::vector<Vector> interior;
    for (std::size_t m = 0; m < grid.points.size(); ++m) {
      (grid.on_boundary[m] ? boundary : interior).push_back(grid.points[m]);
    }
    if (!boundary.empty() && !interior.empty()) {
      const auto bi = boundary_inequality_check(domain, boundary, interior);
      r.info(fmt::format("boundary inequality |x - x'|^2 + alpha <x' - x, grad l(x)> >= 0 holds for alpha up to {} "
                         "({} of {} lattice pairs constrain it)",
                         g4(bi.alpha_max), bi.constraining_pairs, bi.pairs));
      r.data()["alpha_max"] = bi.alpha_max;
    }
  }
  write_artifact(s, "report.txt", [&](std::ostream& out) { out << r.text(); });
  return r;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"prox-check", "compat-check", "sde-sim", "solve",
                                              "cauchy",     "field",        "report"};
  return names;
}

Report run_command(const std::string& command, const Scenario& s) {
  Report r = [&] {
    if (command == "prox-check") return prox_check(s);
    if (command == "compat-check") return compat_check(s);
    if (command == "sde-sim") return sde_sim(s);
    if (command == "solve") return solve(s);
    if (command == "cauchy") return cauchy(s);
    if (command == "field") return field(s);
    if (command == "report") return scenario_report(s);
    throw ValidationError(fmt::format("unknown command '{}'", command));
  }();
  std::string stem = command;
  std::replace(stem.begin(), stem.end(), '-', '_');
  if (command != "report") {
    write_artifact(s, stem + "_report.txt", [&](std::ostream& out) { out << r.text(); });
  }
  write_artifact(s, stem + ".json", [&](std::ostream& out) { out << r.json().dump(2) << '\n'; });
  return r;
}

}  // namespace bdsgvi::cli
