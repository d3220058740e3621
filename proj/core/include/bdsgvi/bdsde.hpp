#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "bdsgvi/coefficients.hpp"
#include "bdsgvi/convex.hpp"
#include "bdsgvi/drivers.hpp"
#include "bdsgvi/reflected.hpp"
#include "bdsgvi/regression.hpp"

namespace bdsgvi {

enum class Scheme {
  /// Y = Ỹ − ∇φ_ε(Ỹ)Δt − ∇ψ_ε(Ỹ)ΔA
  ExplicitYosida,
  /// Y = J^ψ_ΔA(J^φ_Δt(Ỹ)), a backward Euler step for the inclusion itself
  ImplicitProx,
};

std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& text);

struct SolverConfig {
  double eps = 1e-2;
  Scheme scheme = Scheme::ExplicitYosida;
  RegressionSpec regression;
  double tolerance = 1e-9;
  unsigned threads = 1;
};

struct BdsdeSolution {
  TimeGrid grid;
  std::size_t n_paths = 0;
  int k = 1;
  int d = 1;
  std::size_t start_index = 0;
  SolverConfig config;

  /// Per node: Y, U, V are n_paths × k; Z is n_paths × (k·d) with entry
  /// (j, l) stored in column j·d + l.
  std::vector<Matrix> Y;
  std::vector<Matrix> Z;
  std::vector<Matrix> U;
  std::vector<Matrix> V;
  /// Increasing process per path, one value per node.
  std::vector<Vector> A;
  /// Markov state per node (n_paths × state_dim); empty without a state.
  std::vector<Matrix> X;

  std::string regression_used;
  double max_condition_number = 1.0;
  /// Per path: ξ plus the path's own driver increments minus the scheme's
  /// decrements Ỹ − Y. Its mean equals start_mean() (projections keep
  /// means); its spread is the Monte-Carlo error, which the projected Y,
  /// shared across paths at the start, cannot show.
  Matrix pathwise_start;
  /// max Δt/ε; the explicit scheme is only stable well below 1.
  double stiffness = 0.0;

  Vector start_mean() const;
  /// Monte-Carlo standard error of start_mean().
  Vector start_stderr() const;
  double dA(std::size_t p, std::size_t i) const { return A[p][i + 1] - A[p][i]; }
};

/// Backward recursion for the penalized equation. The state ensemble, when
/// given, supplies the regression state, the terminal state for χ and the
/// increasing process (its local time); otherwise A comes from the bundle.
BdsdeSolution solve_penalized(const CoefficientSet& coeffs, const ConvexFunction& phi, const ConvexFunction& psi,
                              const SolverConfig& config, const PathBundle& noise,
                              const ReflectedEnsemble* state = nullptr);

struct NormReport {
  double Y_M = 0.0;     // E∫ w|Y|² dt
  double Y_Mbar = 0.0;  // E∫ w|Y|² dA
  double Y_S = 0.0;     // E sup w|Y|²
  double Z_M = 0.0;
  double U_M = 0.0;
  double V_Mbar = 0.0;
};

/// Weighted norms with w = e^{λt+μA_t}, trapezoidal quadrature in t and A.
NormReport weighted_norms(const BdsdeSolution& sol, double lambda, double mu);

struct PenalizationReport {
  double grad_phi_energy = 0.0;      // E∫ w|∇φ_ε(Y)|² dt
  double grad_psi_energy = 0.0;      // E∫ w|∇ψ_ε(Y)|² dA
  double phi_resolvent_integral = 0.0;  // E∫ w φ(J_ε Y) dt
  double psi_resolvent_integral = 0.0;  // E∫ w ψ(J̄_ε Y) dA
  double resolvent_distance_sup = 0.0;  // sup_t E w(|Y−J_εY|² + |Y−J̄_εY|²)
  double resolvent_value_sup = 0.0;     // sup_t E w(φ(J_εY) + ψ(J̄_εY))
  double lambda_functional = 0.0;       // Λ
};

PenalizationReport penalization_diagnostics(const BdsdeSolution& sol, const CoefficientSet& coeffs,
                                            const ConvexFunction& phi, const ConvexFunction& psi, double eps,
                                            double lambda, double mu);

/// Λ: E{w_T(|ξ|² + φ(ξ) + ψ(ξ)) + ∫ w[(|f(t,X,0,0)|² + ‖h(t,X,0,0)‖²)dt + |g(t,X,0)|² dA]}.
double lambda_functional(const BdsdeSolution& sol, const CoefficientSet& coeffs, const ConvexFunction& phi,
                         const ConvexFunction& psi, double lambda, double mu);

struct CauchyReport {
  std::vector<double> eps;
  /// gaps[j] = E sup_t w|Y^{eps[j]} − Y^{eps[j+1]}|²
  std::vector<double> gaps;
  /// Least-squares slope of log gap against log(ε+δ); NaN when undefined.
  double slope = 0.0;
  std::vector<Vector> start_values;
  /// Linear extrapolation in ε of the start value from the two smallest ε.
  Vector extrapolated_start;
  std::vector<BdsdeSolution> runs;
};

CauchyReport cauchy_study(const CoefficientSet& coeffs, const ConvexFunction& phi, const ConvexFunction& psi,
                          const SolverConfig& base, const std::vector<double>& eps_ladder, const PathBundle& noise,
                          double lambda, double mu, const ReflectedEnsemble* state = nullptr,
                          bool keep_runs = false);

struct InclusionReport {
  /// max over nodes, paths, r of ⟨U, r − Y⟩ + φ(Y) − φ(r).
  double worst_phi = -kInfinity;
  /// same with (V, ψ) on steps with ΔA > 0.
  double worst_psi = -kInfinity;
  std::size_t phi_infinite = 0;  // nodes with φ(Y) = +∞
  std::size_t psi_infinite = 0;
  double worst() const { return std::max(worst_phi, worst_psi); }
};

InclusionReport verify_vi_inclusion(const BdsdeSolution& sol, const ConvexFunction& phi, const ConvexFunction& psi,
                                    const std::vector<Vector>& test_points);

/// Columns: path, node, t, Y*, Z*, U*, V* (paths below `max_paths`).
void write_solution_csv(std::ostream& out, const BdsdeSolution& sol, std::size_t max_paths = SIZE_MAX);

}  // namespace bdsgvi
