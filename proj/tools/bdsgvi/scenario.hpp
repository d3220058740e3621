#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <bdsgvi/bdsde.hpp>
#include <bdsgvi/convex.hpp>
#include <bdsgvi/drivers.hpp>
#include <bdsgvi/reflected.hpp>

namespace bdsgvi::cli {

struct StateSection {
  std::string domain = "unit_ball";
  int dim = 1;
  std::string drift = "zero";
  std::string sigma = "identity";
  std::vector<double> x0;
};

struct FieldSection {
  std::vector<double> times{0.0};
  std::string lattice = "polar(3,8)";
  std::size_t b_draws = 1;
  /// Per-node sample sizes; default to the scenario's.
  std::optional<std::size_t> paths;
  std::optional<std::size_t> steps;
};

struct FlowSection {
  std::string h = "zero";
  std::vector<double> ys{-1.0, 0.0, 1.0};
};

/// One experiment. Everything random is derived from `seed`.
struct Scenario {
  std::string name = "unnamed";
  std::uint64_t seed = 1;
  std::filesystem::path output = "out";

  double t0 = 0.0;
  double T = 1.0;
  std::size_t steps = 100;
  std::size_t paths = 100;
  int d = 1;
  BackwardNoise backward = BackwardNoise::PerPath;
  /// `zero`, `linear(c)` (A = c·t), `local_time` or `csv(<path>)`.
  std::string increasing = "zero";

  std::optional<StateSection> state;

  std::string phi = "zero";
  std::string psi = "zero";
  int k = 1;
  std::string f = "zero";
  std::string g = "zero";
  std::string h = "zero";
  std::string terminal = "const(0)";
  AssumptionConstants constants;

  SolverConfig solver;
  std::vector<double> eps_ladder;
  double rate_lo = 0.75;
  double rate_hi = 1.25;

  FieldSection field;
  FlowSection flow;
  std::size_t check_samples = 2000;
};

/// Reads and validates a YAML scenario. Input files named inside it are
/// resolved against the file's directory, the output directory against the
/// working directory. Unknown keys are rejected.
Scenario load_scenario(const std::filesystem::path& file);

/// Built-in scenario used when a command runs without --scenario.
Scenario default_scenario();

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::size_t> paths;
  std::optional<std::size_t> steps;
  std::optional<std::vector<double>> eps;
};

/// --eps applies to the solver's ε (first entry) and to the Cauchy ladder.
void apply_overrides(Scenario& s, const Overrides& o);

/// Comma-separated list of numbers.
std::vector<double> parse_number_list(const std::string& text);

}  // namespace bdsgvi::cli
