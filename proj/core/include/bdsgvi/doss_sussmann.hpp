#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bdsgvi/coefficients.hpp"
#include "bdsgvi/convex.hpp"
#include "bdsgvi/drivers.hpp"
#include "bdsgvi/reflected.hpp"

namespace bdsgvi {

/// Second-order jet of h at (t, x, u) in the variables (u, x1, ..., xd).
struct Jet {
  double value = 0.0;
  Vector gradient;  // 1 + d
  Matrix hessian;   // (1 + d) × (1 + d)
};

/// Scalar noise coefficient h(t, x, u) of the one-dimensional equation.
struct FlowSpec {
  int dim = 1;  // dimension of x
  std::function<double(double t, const Vector& x, double u)> h;
  /// ∂h/∂u; required for D_yη.
  std::function<double(double t, const Vector& x, double u)> h_u;
  /// Full jet; enables variational (rather than finite-difference) derivatives.
  std::optional<std::function<Jet(double t, const Vector& x, double u)>> jet;
  std::string label;
};

/// `zero`, `const(c)`, `linear(a)` (h = a·u), `sine(a,b)` (h = a·sin u + b·Σx).
FlowSpec make_flow_spec(const std::string& text, int dim);

/// One scalar backward Brownian path on a grid.
struct BrownianPath {
  TimeGrid grid;
  std::vector<double> increments;

  static BrownianPath from_bundle(const PathBundle& bundle, std::size_t path, int component = 0);
  /// B_T − B_t for a node time t.
  double increment_from(double t) const;
};

struct FlowSample {
  double eta = 0.0;
  double d_y_eta = 1.0;
};

/// η(t, x, y) = y + ∫_t^T h(s, x, η(s, x, y)) ∘dB_s, integrated from T down
/// to t with a Heun predictor-corrector; D_yη is the exact derivative of the
/// discrete map. `steps` must divide the number of path intervals in [t, T].
FlowSample flow(const FlowSpec& spec, double t, const Vector& x, double y, const BrownianPath& path,
                std::size_t steps);

/// y with |η(t, x, y) − target| ≤ 1e-10.
double flow_inverse(const FlowSpec& spec, double t, const Vector& x, double target, const BrownianPath& path,
                    std::size_t steps);

enum class DerivativeMethod { FiniteDifference, Variational };

struct FlowDerivatives {
  double eta = 0.0;
  double D_y = 1.0;
  double D_yy = 0.0;
  Vector D_x;
  Vector D_xy;
  Matrix D_xx;
};

/// Finite differences use step 1e-4 in x and y; the variational route needs
/// spec.jet.
FlowDerivatives flow_derivatives(const FlowSpec& spec, double t, const Vector& x, double y, const BrownianPath& path,
                                 std::size_t steps, DerivativeMethod method = DerivativeMethod::FiniteDifference);

struct TransformPoint {
  double t = 0.0;
  Vector x;
  double y = 0.0;
  Vector z;  // ℝ^d
};

struct TransformedValues {
  double f_tilde = 0.0;
  double g_tilde = 0.0;
  FlowDerivatives derivatives;
};

/// Coefficients of the equation satisfied by v with u = η(t, x, v):
///   f̃ = [f(t,x,η, σ*D_xη + D_yη z) − ½ h ∂_u h (t,x,η) + L_xη + ⟨σ*D_xyη, z⟩ + ½ D_yyη |z|²] / D_yη
///   g̃ = [g(t,x,η) − ⟨∇ℓ(x), D_xη⟩] / D_yη
/// with L_xη = ½ Tr(σσ* D_xxη) + ⟨b, D_xη⟩. f and g are read from a k = 1
/// coefficient set.
TransformedValues transform_coefficients(const FlowSpec& spec, const CoefficientSet& coeffs, const Dynamics& dyn,
                                         const DomainSpec& domain, const TransformPoint& point,
                                         const BrownianPath& path, std::size_t steps,
                                         DerivativeMethod method = DerivativeMethod::FiniteDifference);

/// f̃_δ = f̃ − ∇φ_δ(η)/D_yη and g̃_δ = g̃ − ∇ψ_δ(η)/D_yη.
TransformedValues transform_penalized(const FlowSpec& spec, const CoefficientSet& coeffs, const Dynamics& dyn,
                                      const DomainSpec& domain, const ConvexFunction& phi, const ConvexFunction& psi,
                                      double delta, const TransformPoint& point, const BrownianPath& path,
                                      std::size_t steps, DerivativeMethod method = DerivativeMethod::FiniteDifference);

struct FlowRecord {
  double t = 0.0;
  double y = 0.0;
  FlowSample sample;
};

/// Columns: t, y, eta, d_y_eta.
void write_flow_csv(std::ostream& out, const std::vector<FlowRecord>& records);

}  // namespace bdsgvi
