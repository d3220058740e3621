#include <doctest.h>

#include <cmath>
#include <sstream>

#include "bdsgvi/errors.hpp"
#include "bdsgvi/feynman_kac.hpp"

using namespace bdsgvi;

namespace {

FieldConfig small_config(std::size_t paths = 20, std::size_t steps = 20) {
  FieldConfig c;
  c.T = 1.0;
  c.steps = steps;
  c.n_paths = paths;
  c.seed = 11;
  c.solver.scheme = Scheme::ImplicitProx;
  c.solver.regression = parse_regression("polynomial(2)");
  return c;
}

FieldGrid ball_grid(std::vector<double> times, std::size_t nr = 2, std::size_t na = 4) {
  return make_field_grid(domains::ball(2), std::move(times), lattices::polar(1.0, nr, na));
}

}  // namespace

TEST_SUITE("feynman_kac") {

TEST_CASE("lattices and field grids") {
  const auto pts = lattices::polar(1.0, 2, 4);
  CHECK(pts.size() == 9);
  const auto g = make_field_grid(domains::ball(2), {0.0, 0.5}, pts);
  std::size_t boundary = 0;
  for (bool b : g.on_boundary) boundary += b ? 1 : 0;
  CHECK(boundary == 4);
  CHECK(g.size() == 18);
  CHECK(make_lattice("uniform(4)", domains::interval(0.0, 1.0)).size() == 5);
  CHECK(make_lattice("polar(3,6)", domains::ball(2)).size() == 19);
  CHECK_THROWS_AS(make_lattice("polar(3,6)", domains::interval(0.0, 1.0)), ValidationError);
  CHECK_THROWS_AS(make_lattice("hex(3)", domains::ball(2)), ValidationError);
  Vector outside(2);
  outside << 1.2, 0.0;
  CHECK_THROWS_AS(make_field_grid(domains::ball(2), {0.0}, {outside}), ValidationError);
  CHECK_THROWS_AS(make_field_grid(domains::ball(2), {0.5, 0.0}, pts), ValidationError);
}

TEST_CASE("constant field is exact") {
  const auto grid = ball_grid({0.0, 0.5, 1.0});
  const auto c = make_coefficients(1, 2, "zero", "zero", "zero", "const(3)");
  const auto f = sample_field(domains::ball(2), make_dynamics("zero", "identity", 2), c, catalog::zero(),
                              catalog::zero(), small_config(), grid);
  for (double u : f.u) CHECK(u == 3.0);
  for (double s : f.std_error) CHECK(std::isfinite(s));
}

TEST_CASE("unit driver field is T - t") {
  const auto grid = ball_grid({0.0, 0.25, 0.5, 1.0});
  const auto c = make_coefficients(1, 2, "const(1)", "zero", "zero", "const(0)");
  const auto cfg = small_config();
  const auto f = sample_field(domains::ball(2), make_dynamics("zero", "identity", 2), c, catalog::zero(),
                              catalog::zero(), cfg, grid);
  for (std::size_t j = 0; j < grid.times.size(); ++j)
    for (std::size_t m = 0; m < grid.points.size(); ++m)
      CHECK(std::abs(f.at(j, m) - (1.0 - grid.times[j])) <= 2.0 * f.dt);
}

TEST_CASE("additive backward noise is reproduced path-exactly for one draw") {
  const auto grid = ball_grid({0.0, 0.5}, 1, 3);
  const auto c = make_coefficients(1, 2, "zero", "zero", "const(0.4)", "const(1)");
  const auto cfg = small_config(10, 20);
  const auto f = sample_field(domains::ball(2), make_dynamics("zero", "identity", 2), c, catalog::zero(),
                              catalog::zero(), cfg, grid);
  PathOptions o;
  o.backward = BackwardNoise::Common;
  const auto b = generate_paths(TimeGrid::uniform(0.0, cfg.T, cfg.steps), 2, cfg.n_paths, derive_seed(cfg.seed, 0),
                                DeferredIncreasing{}, o);
  for (std::size_t j = 0; j < grid.times.size(); ++j) {
    double tail = 0.0;
    // h is 0.4 in both columns, so the backward term is 0.4 (ΔB¹ + ΔB²).
    for (std::size_t i = b.grid.index_of(grid.times[j]); i < b.grid.steps(); ++i) tail += b.db(0, i).sum();
    for (std::size_t m = 0; m < grid.points.size(); ++m) CHECK(std::abs(f.at(j, m) - (1.0 + 0.4 * tail)) <= 1e-12);
  }
}

TEST_CASE("terminal slice and draw invariance without backward noise") {
  const auto grid = ball_grid({0.0, 1.0}, 1, 3);
  const auto c = make_coefficients(1, 2, "const(0.5)", "const(0.2)", "zero", "norm_sq");
  auto cfg = small_config(30, 10);
  cfg.b_draws = 3;
  const auto f = sample_field(domains::ball(2), make_dynamics("zero", "identity", 2), c, catalog::zero(),
                              catalog::zero(), cfg, grid);
  for (std::size_t m = 0; m < grid.points.size(); ++m) CHECK(f.at(1, m) == grid.points[m].squaredNorm());
  // Different draws reseed W as well, so only the terminal slice is draw-invariant here;
  // the standard error is finite everywhere.
  for (double s : f.std_error) CHECK(std::isfinite(s));
  CHECK(f.per_draw.size() == 3);
}

TEST_CASE("deterministic coefficients give a draw-invariant field") {
  const auto grid = ball_grid({0.0, 0.5, 1.0}, 1, 3);
  const auto c = make_coefficients(1, 2, "const(1)", "zero", "zero", "const(2)");
  auto cfg = small_config(10, 10);
  cfg.b_draws = 4;
  const auto f = sample_field(domains::ball(2), make_dynamics("zero", "identity", 2), c, catalog::zero(),
                              catalog::zero(), cfg, grid);
  for (std::size_t node = 0; node < grid.size(); ++node) {
    for (std::size_t b = 1; b < 4; ++b) CHECK(f.per_draw[b][node] == f.per_draw[0][node]);
    CHECK(f.std_error[node] == 0.0);
  }
}

TEST_CASE("standard error shrinks like the square root of the path count") {
  const auto grid = make_field_grid(domains::ball(2), {0.0}, {Vector::Zero(2)});
  const auto c = make_coefficients(1, 2, "zero", "zero", "zero", "norm_sq");
  const auto dyn = make_dynamics("zero", "identity", 2);
  auto cfg = small_config(2000, 20);
  cfg.solver.regression = parse_regression("sample_mean");
  cfg.solver.regression.kind = RegressionSpec::Kind::SampleMean;
  const auto a = sample_field(domains::ball(2), dyn, c, catalog::zero(), catalog::zero(), cfg, grid);
  cfg.n_paths = 4000;
  const auto b = sample_field(domains::ball(2), dyn, c, catalog::zero(), catalog::zero(), cfg, grid);
  const double ratio = a.std_error[0] / b.std_error[0];
  CHECK(ratio >= 1.25);
  CHECK(ratio <= 1.6);
}

TEST_CASE("sampler validation") {
  const auto grid = ball_grid({0.0});
  const auto dyn = make_dynamics("zero", "identity", 2);
  const auto c = make_coefficients(1, 2, "zero", "zero", "zero", "const(0)");
  auto cfg = small_config();
  cfg.n_paths = 0;
  CHECK_THROWS_AS(sample_field(domains::ball(2), dyn, c, catalog::zero(), catalog::zero(), cfg, grid), ValidationError);
  CHECK_THROWS_AS(sample_field(domains::ball(2), dyn, make_coefficients(2, 2, "zero", "zero", "zero", "const(0)"),
                               catalog::zero(2), catalog::zero(2), small_config(), grid),
                  ValidationError);
  const auto off = ball_grid({0.33});
  CHECK_THROWS_AS(sample_field(domains::ball(2), dyn, c, catalog::zero(), catalog::zero(), small_config(), off),
                  ValidationError);
}

TEST_CASE("continuity diagnostic") {
  const auto grid = ball_grid({0.0, 0.25, 0.5, 0.75, 1.0}, 3, 8);
  const auto pairs = neighbor_pairs(grid, 0.5);
  CHECK_FALSE(pairs.empty());
  const auto constant = FieldEstimate::from_function(grid, [](double, const Vector&) { return 2.0; });
  const auto rc = continuity_diagnostic(constant, pairs);
  CHECK(rc.fine_max == 0.0);
  CHECK(rc.coarse_max == 0.0);
  CHECK_FALSE(rc.blow_up);

  // |Δt| / (|Δt|^½ + |Δx|) ≤ |Δt|^½ ≤ T^½.
  const auto decay = FieldEstimate::from_function(grid, [](double t, const Vector&) { return 1.0 - t; });
  const auto rd = continuity_diagnostic(decay, pairs);
  CHECK(std::max(rd.fine_max, rd.coarse_max) <= 1.0);
  CHECK_FALSE(rd.blow_up);

  CHECK_THROWS_AS(continuity_diagnostic(constant, {}), ValidationError);
}

TEST_CASE("continuity diagnostic flags a jump") {
  // Pairs at separations 1e-3 and 0.2 straddling a unit step at x = 0.5.
  const auto iv = domains::interval(0.0, 1.0);
  std::vector<Vector> pts;
  for (double x : {0.3, 0.4995, 0.5005, 0.7}) pts.push_back(Vector::Constant(1, x));
  const auto grid = make_field_grid(iv, {0.0}, pts);
  const auto step = FieldEstimate::from_function(grid, [](double, const Vector& x) { return x[0] < 0.5 ? 0.0 : 1.0; });
  const std::vector<NodePair> pairs{{0, 1}, {1, 2}, {2, 3}, {0, 1}, {1, 2}};
  const auto r = continuity_diagnostic(step, pairs);
  CHECK(r.blow_up);
  const auto smooth = FieldEstimate::from_function(grid, [](double, const Vector& x) { return x[0]; });
  CHECK_FALSE(continuity_diagnostic(smooth, pairs).blow_up);
}

TEST_CASE("residuals of closed-form fields") {
  const auto ball = domains::ball(2);
  const auto grid = make_field_grid(ball, {0.0, 0.5, 1.0}, lattices::polar(1.0, 20, 20));
  const auto dyn = make_dynamics("zero", "identity", 2);

  const auto decay = FieldEstimate::from_function(grid, [](double t, const Vector&) { return 1.0 - t; });
  const auto unit = make_coefficients(1, 2, "const(1)", "zero", "zero", "const(0)");
  CHECK(interior_residual(decay, unit, dyn, catalog::zero(), 0.1, ball).max_abs <= 1e-9);

  const auto flat = FieldEstimate::from_function(grid, [](double, const Vector&) { return 4.0; });
  const auto none = make_coefficients(1, 2, "zero", "zero", "zero", "const(4)");
  CHECK(interior_residual(flat, none, dyn, catalog::zero(), 0.1, ball).max_abs <= 1e-9);
  CHECK(boundary_residual(flat, none, catalog::zero(), 0.1, ball).max_abs <= 1e-9);

  // u = |x|² solves ∂_t u + ½Δu + f = 0 with f = −2 and ⟨∇ℓ, ∇u⟩ + g = 0 with g = 2.
  const auto quad = FieldEstimate::from_function(grid, [](double, const Vector& x) { return x.squaredNorm(); });
  const auto manufactured = make_coefficients(1, 2, "const(-2)", "const(2)", "zero", "norm_sq");
  const auto ri = interior_residual(quad, manufactured, dyn, catalog::zero(), 0.1, ball);
  const auto rb = boundary_residual(quad, manufactured, catalog::zero(), 0.1, ball);
  CHECK(ri.max_abs <= 5e-2);
  CHECK(rb.max_abs <= 5e-2);
  CHECK(rb.nodes == 2 * 20);
  // Wrong boundary data is detected.
  const auto wrong = make_coefficients(1, 2, "const(-2)", "const(1)", "zero", "norm_sq");
  CHECK(boundary_residual(quad, wrong, catalog::zero(), 0.1, ball).max_abs >= 0.9);

  const auto noisy = make_coefficients(1, 2, "zero", "zero", "const(1)", "const(0)");
  CHECK_THROWS_AS(interior_residual(flat, noisy, dyn, catalog::zero(), 0.1, ball), ValidationError);
  const auto coarse = make_field_grid(ball, {0.0, 1.0}, lattices::polar(1.0, 1, 2));
  CHECK_THROWS_AS(interior_residual(FieldEstimate::from_function(coarse, [](double, const Vector&) { return 0.0; }),
                                    none, dyn, catalog::zero(), 0.1, ball),
                  ValidationError);
}

TEST_CASE("field csv") {
  const auto grid = ball_grid({0.0, 1.0}, 1, 2);
  const auto f = FieldEstimate::from_function(grid, [](double t, const Vector&) { return t; });
  std::ostringstream out;
  write_field_csv(out, f);
  const std::string s = out.str();
  CHECK(s.rfind("t,x1,x2,u,stderr,tag\n", 0) == 0);
  CHECK(s.find("boundary") != std::string::npos);
  CHECK(std::count(s.begin(), s.end(), '\n') == 1 + 6);
}

}  // TEST_SUITE
