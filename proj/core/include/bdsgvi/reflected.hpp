#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "bdsgvi/convex.hpp"
#include "bdsgvi/drivers.hpp"
#include "bdsgvi/types.hpp"

namespace bdsgvi {

/// Θ = {ℓ > 0}, ∂Θ = {ℓ = 0}; ∇ℓ is the inward unit normal on ∂Θ.
struct DomainSpec {
  std::string label;
  int dim = 1;
  std::function<double(const Vector&)> level;
  std::function<Vector(const Vector&)> gradient;
  std::function<Matrix(const Vector&)> hessian;
  DomainBox box;

  bool contains(const Vector& x, double tol = 1e-12) const { return level(x) >= -tol; }
};

namespace domains {
/// Ball of radius R centred at 0: ℓ = (R² − |x|²)/(2R).
DomainSpec ball(int dim, double radius = 1.0);
/// Interval (a, b): ℓ = (x − a)(b − x)/(b − a).
DomainSpec interval(double a, double b);
/// Axis-aligned ellipsoid Σ x_j²/a_j² < 1, normalized via `normalized`.
DomainSpec ellipsoid(const Vector& semi_axes);
}  // namespace domains

/// Turns a level function L (Θ = {L > 0}, ∇L ≠ 0 on ∂Θ) into
/// ℓ = L / sqrt(|∇L|² + L²), which has the same zero set and |∇ℓ| = 1 there.
/// The Hessian of ℓ is obtained by central differences of ∇ℓ.
DomainSpec normalized(std::string label, int dim, std::function<double(const Vector&)> L,
                      std::function<Vector(const Vector&)> grad_L,
                      std::function<Matrix(const Vector&)> hess_L, DomainBox box);

/// `ball(R)`, `unit_ball`, `interval(a,b)`, `ellipsoid(a1,...,ad)`.
DomainSpec make_domain(const std::string& text, int dim);

struct Dynamics {
  std::function<Vector(double t, const Vector& x)> drift;
  std::function<Matrix(double t, const Vector& x)> sigma;  // d × d
  /// Upper bound on the operator norm of σ, used for the boundary band.
  double sigma_bound = 1.0;
};

/// drift: `zero`, `const(c1,..,cd)`, `linear(a)` (b = a·x);
/// sigma: `identity`, `zero`, `scaled(s)`.
Dynamics make_dynamics(const std::string& drift, const std::string& sigma, int dim);

struct ReflectedEnsemble {
  TimeGrid grid;
  int dim = 1;
  std::size_t n_paths = 0;
  double start_t = 0.0;
  std::size_t start_index = 0;
  Vector start_x;
  /// X[p] is dim × nodes, A[p] has one entry per node.
  std::vector<Matrix> X;
  std::vector<Vector> A;
  std::uint64_t noise_seed = 0;

  double dA(std::size_t p, std::size_t i) const { return A[p][i + 1] - A[p][i]; }
};

/// Projection-Euler scheme: unconstrained Euler step X*, then if ℓ(X*) < 0
/// move along ∇ℓ(X*) by the smallest δ ≥ 0 restoring ℓ ≥ 0 and add δ to A.
/// Nodes before `start_t` are frozen at x.
ReflectedEnsemble simulate_reflected(const DomainSpec& domain, const Dynamics& dyn, double start_t,
                                     const Vector& x, const PathBundle& noise, unsigned threads = 1);

struct ResidualStats {
  double mean = 0.0;
  double rms = 0.0;
  double max = 0.0;
  std::vector<double> per_path;
};

/// Per-path sup over nodes of |A − [ℓ(X) − ℓ(x) − ∫Lℓ dr − ∫∇ℓ·σ dW]|.
ResidualStats local_time_identity_residual(const ReflectedEnsemble& ens, const DomainSpec& domain,
                                           const Dynamics& dyn, const PathBundle& noise);

struct SupportReport {
  double band = 0.0;
  std::size_t increments = 0;  // steps with ΔA > 0
  std::size_t outside_band = 0;  // of those, landing node with ℓ(X) > band
  double containment_worst = 0.0;  // min over nodes of ℓ(X)
  std::size_t containment_failures = 0;  // nodes with ℓ(X) < −1e-12
};

/// Default band: 2·sqrt(max Δt)·sigma_bound.
SupportReport local_time_support(const ReflectedEnsemble& ens, const DomainSpec& domain, double band);
double default_boundary_band(const TimeGrid& grid, const Dynamics& dyn);

struct BoundaryInequalityReport {
  /// Largest α with |x−x'|² + α⟨x'−x, ∇ℓ(x)⟩ ≥ 0 on every sampled pair;
  /// kInfinity when no pair constrains α.
  double alpha_max = kInfinity;
  std::size_t pairs = 0;
  std::size_t constraining_pairs = 0;
};

/// Pairs every boundary point with every interior point.
BoundaryInequalityReport boundary_inequality_check(const DomainSpec& domain,
                                                   const std::vector<Vector>& boundary,
                                                   const std::vector<Vector>& interior,
                                                   double tol = 1e-9);

/// ½ Tr(σσ* D²v) + ⟨b, ∇v⟩.
double generator_apply(const Matrix& sigma, const Vector& b, const Vector& grad_v, const Matrix& hess_v);

/// ⟨∇ℓ(x), ∇v(x)⟩ for x on the boundary.
double normal_derivative(const DomainSpec& domain, const Vector& grad_v, const Vector& x, double tol = 1e-9);

/// Columns: path, t, x1..xd, A.
void write_ensemble_csv(std::ostream& out, const ReflectedEnsemble& ens);

}  // namespace bdsgvi
