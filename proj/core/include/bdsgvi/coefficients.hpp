#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <variant>

#include "bdsgvi/convex.hpp"
#include "bdsgvi/types.hpp"

namespace bdsgvi {

/// Coefficients of the generalized BDSDE. y ∈ ℝ^k, z ∈ ℝ^{k×d}; x is the
/// Markov state (empty in the non-Markov setting).
struct CoefficientSet {
  using Drift = std::function<Vector(double t, const Vector& x, const Vector& y, const Matrix& z)>;
  using Boundary = std::function<Vector(double t, const Vector& x, const Vector& y)>;
  using Noise = std::function<Matrix(double t, const Vector& x, const Vector& y, const Matrix& z)>;
  using TerminalMap = std::function<Vector(const Vector& x)>;

  int k = 1;
  int d = 1;
  Drift f;
  Boundary g;
  Noise h;
  /// Fixed ξ or a map χ of the terminal state.
  std::variant<Vector, TerminalMap> terminal;
  AssumptionConstants constants;
  /// Coefficients or terminal value read the state x.
  bool state_dependent = false;
  /// h is not identically zero.
  bool backward_noise = false;
  std::string label;

  bool terminal_is_fixed() const { return std::holds_alternative<Vector>(terminal); }
  Vector terminal_value(const Vector& x) const;
};

/// Catalog names (componentwise in y):
///   f: zero, const(c), linear(a,b,c) = a + b·y_j + c·Σ_l z_jl
///   g: zero, const(c), linear(a,b) = a + b·y_j
///   h: zero, const(c), linear(a,b) = a + b·y_j in every column
///   terminal: const(c), norm_sq (|x|²), coord(j) (x_j)
CoefficientSet make_coefficients(int k, int d, const std::string& f, const std::string& g,
                                 const std::string& h, const std::string& terminal);

struct CoefficientCheck {
  bool ok = true;
  /// Worst observed ratios; each must stay within its declared constant.
  double f_monotonicity = -kInfinity;  // ⟨Δy, Δf⟩/|Δy|² vs β1
  double f_lipschitz_z = 0.0;          // |Δf|/‖Δz‖ vs K
  double g_monotonicity = -kInfinity;  // ⟨Δy, Δg⟩/|Δy|² vs β2
  double h_contraction = -kInfinity;   // ‖Δh‖² − K|Δy|² − α‖Δz‖² vs 0
  std::string failure;
};

/// Random-sample check of the monotonicity, Lipschitz and contraction
/// conditions with the set's declared constants.
CoefficientCheck spot_check(const CoefficientSet& c, std::size_t samples, std::uint64_t seed,
                            double box = 3.0, double tol = 1e-9);

}  // namespace bdsgvi
