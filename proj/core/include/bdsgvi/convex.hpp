#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bdsgvi/types.hpp"

namespace bdsgvi {

/// Box [lo, hi] (componentwise) known to contain the effective domain.
/// Entries may be infinite.
struct DomainBox {
  Vector lo;
  Vector hi;
};

/// Proper, l.s.c., convex θ: ℝ^k → ℝ ∪ {+∞} with θ(0) = 0 and θ ≥ 0.
struct ConvexFunction {
  using Evaluator = std::function<double(const Vector&)>;
  using ProxOracle = std::function<Vector(double eps, const Vector&)>;

  std::string label;
  int dim = 1;
  Evaluator evaluate;
  /// Closed-form argmin_y ½|x−y|² + εθ(y), when known.
  std::optional<ProxOracle> prox_oracle;
  std::optional<DomainBox> domain_hint;

  double operator()(const Vector& y) const { return evaluate(y); }
  double operator()(double y) const { return evaluate(Vector::Constant(1, y)); }
};

namespace catalog {
ConvexFunction zero(int dim = 1);
/// a·y²/2, a ≥ 0.
ConvexFunction quadratic(double a);
ConvexFunction abs();
/// 0 on [lo, hi] (which must contain 0), +∞ elsewhere.
ConvexFunction indicator_box(double lo, double hi);
/// max(0, y)².
ConvexFunction hinge_sq();
}  // namespace catalog

/// θ(y) = Σ_j base(y_j) for a scalar base function.
ConvexFunction separable(const ConvexFunction& base, int dim);

/// Resolves names such as `quadratic(2)` or `indicator_box(-inf,0.5)` and
/// lifts the result to `dim` components.
ConvexFunction make_convex(const std::string& text, int dim = 1);

Vector prox(const ConvexFunction& theta, double eps, const Vector& x);
double moreau_envelope(const ConvexFunction& theta, double eps, const Vector& x);
Vector yosida_gradient(const ConvexFunction& theta, double eps, const Vector& x);

/// Lattice search for argmin ½|x−y|² + εθ(y); exact to `resolution`. k ≤ 2.
Vector grid_prox_oracle(const ConvexFunction& theta, double eps, const Vector& x,
                        double resolution);

/// Scalar conveniences.
double prox(const ConvexFunction& theta, double eps, double x);
double yosida_gradient(const ConvexFunction& theta, double eps, double x);

struct OneSided {
  double left;
  double right;
};

/// Left/right derivatives of a scalar θ. A side whose difference quotient
/// leaves the domain is reported as ∓kInfinity.
OneSided one_sided_derivatives(const ConvexFunction& theta, double y);

/// Spot check of θ(0) = 0, θ ≥ 0 and midpoint convexity on the supplied points.
struct ConvexitySpotCheck {
  bool ok = true;
  std::string failure;
};
ConvexitySpotCheck spot_check(const ConvexFunction& theta, const std::vector<Vector>& points,
                              double tol = 1e-9);

// ---------------------------------------------------------------------------
// Assumption validators

struct AssumptionConstants {
  double beta1 = 0.0;
  double beta2 = 0.0;
  double K = 1.0;
  double alpha = 0.5;
  double lambda = 12.0;
  double mu = 2.0;
};

struct WeightReport {
  bool ok = false;
  double lambda_threshold = 0.0;
  double mu_threshold = 0.0;
  double lambda_margin = 0.0;  // lambda − threshold, must be > 0
  double mu_margin = 0.0;
};

/// λ > 2 + 2(β1+β2) + K(3−α+2K)/(1−α) and μ > 1 + 2β2.
WeightReport validate_weights(const AssumptionConstants& c);

struct CompatibilitySample {
  double t = 0.0;
  Vector y;
  Matrix z;
};

using DriftField = std::function<Vector(double t, const Vector& y, const Matrix& z)>;
using BoundaryField = std::function<Vector(double t, const Vector& y)>;

struct CompatibilityViolation {
  double amount = 0.0;  // lhs − rhs, ≤ 0 when the inequality holds
  double eps = 0.0;
  std::size_t sample = 0;
};

struct CompatibilityReport {
  bool ok = false;
  double tolerance = 1e-9;
  /// ⟨∇φ_ε, ∇ψ_ε⟩ ≥ 0
  CompatibilityViolation gradients_aligned;
  /// ⟨∇φ_ε, g⟩ ≤ ⟨∇ψ_ε, g⟩⁺
  CompatibilityViolation boundary_term;
  /// ⟨∇ψ_ε, f⟩ ≤ ⟨∇φ_ε, f⟩⁺
  CompatibilityViolation drift_term;
  std::size_t evaluations = 0;
};

CompatibilityReport check_compatibility(const ConvexFunction& phi, const ConvexFunction& psi,
                                        const DriftField& f, const BoundaryField& g,
                                        const std::vector<double>& eps_ladder,
                                        const std::vector<CompatibilitySample>& samples,
                                        double tolerance = 1e-9);

}  // namespace bdsgvi
