#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "bdsgvi/bdsde.hpp"
#include "bdsgvi/coefficients.hpp"
#include "bdsgvi/convex.hpp"
#include "bdsgvi/reflected.hpp"

namespace bdsgvi {

/// Space-time evaluation lattice inside the closed domain. Node (j, m) is
/// time index j, point index m.
struct FieldGrid {
  std::vector<double> times;
  std::vector<Vector> points;
  std::vector<bool> on_boundary;

  std::size_t node(std::size_t j, std::size_t m) const { return j * points.size() + m; }
  std::size_t size() const { return times.size() * points.size(); }
};

/// Tags points with |ℓ| ≤ tol as boundary; rejects points with ℓ < −tol.
FieldGrid make_field_grid(const DomainSpec& domain, std::vector<double> times, std::vector<Vector> points,
                          double tol = 1e-9);

namespace lattices {
/// Centre plus nr rings (radius R·i/nr) of na points each.
std::vector<Vector> polar(double radius, std::size_t nr, std::size_t na);
/// n + 1 evenly spaced points on [a, b].
std::vector<Vector> interval(double a, double b, std::size_t n);
}  // namespace lattices

/// `polar(nr,na)` on a ball or `uniform(n)` on an interval.
std::vector<Vector> make_lattice(const std::string& text, const DomainSpec& domain);

struct FieldConfig {
  SolverConfig solver;
  double T = 1.0;
  std::size_t steps = 100;
  std::size_t n_paths = 100;
  std::size_t b_draws = 1;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct FieldEstimate {
  FieldGrid grid;
  std::vector<double> u;
  std::vector<double> std_error;
  /// per_draw[b][node]: the field for one backward-noise draw.
  std::vector<std::vector<double>> per_draw;
  std::size_t n_paths = 0;
  double eps = 0.0;
  double dt = 0.0;
  std::string regression;

  double at(std::size_t j, std::size_t m) const { return u[grid.node(j, m)]; }
  static FieldEstimate from_function(const FieldGrid& grid, const std::function<double(double, const Vector&)>& fn);
};

/// u(t, x) = Y_t^{t,x}: for each lattice node a reflected ensemble started at
/// (t, x) drives the penalized solver; one backward draw is shared by the
/// whole lattice and u is the mean over draws. Requires k = 1.
FieldEstimate sample_field(const DomainSpec& domain, const Dynamics& dyn, const CoefficientSet& coeffs,
                           const ConvexFunction& phi, const ConvexFunction& psi, const FieldConfig& config,
                           const FieldGrid& grid);

struct ContinuityReport {
  double fine_max = 0.0;
  double coarse_max = 0.0;
  double fine_scale = 0.0;  // median separation of the fine half
  double coarse_scale = 0.0;
  std::size_t pairs = 0;
  bool blow_up = false;
};

using NodePair = std::pair<std::size_t, std::size_t>;

/// Ratios |Δu| / (|Δt|^½ + |Δx|), split into two scales at the median
/// separation. Flags blow-up when the fine maximum exceeds 10× the coarse one.
ContinuityReport continuity_diagnostic(const FieldEstimate& field, const std::vector<NodePair>& pairs);

/// Same-time pairs closer than `radius` and same-point pairs at adjacent times.
std::vector<NodePair> neighbor_pairs(const FieldGrid& grid, double radius);

struct ResidualReport {
  double max_abs = 0.0;
  std::size_t nodes = 0;
  std::size_t worst_node = 0;
  std::vector<double> values;  // one per checked node, in lattice order
};

/// max |∂_t u + Lu + f(t,x,u,σ*∇u) − ∇φ_ε(u)| over interior nodes before T.
/// Space derivatives from a local quadratic least-squares fit over nearby
/// lattice points at the same time; ∂_t u by a forward difference.
ResidualReport interior_residual(const FieldEstimate& field, const CoefficientSet& coeffs, const Dynamics& dyn,
                                 const ConvexFunction& phi, double eps, const DomainSpec& domain);

/// max |⟨∇ℓ, ∇u⟩ + g(t,x,u) − ∇ψ_ε(u)| over boundary nodes before T.
ResidualReport boundary_residual(const FieldEstimate& field, const CoefficientSet& coeffs, const ConvexFunction& psi,
                                 double eps, const DomainSpec& domain);

/// Columns: t, x1..xd, u, stderr, tag (interior|boundary).
void write_field_csv(std::ostream& out, const FieldEstimate& field);

}  // namespace bdsgvi
