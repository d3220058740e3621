#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "bdsgvi/types.hpp"

namespace bdsgvi {

class TimeGrid {
 public:
  TimeGrid() = default;
  /// Strictly increasing nodes, at least two, nodes[0] ≥ 0.
  explicit TimeGrid(std::vector<double> nodes);
  static TimeGrid uniform(double t0, double T, std::size_t steps);

  std::size_t steps() const { return nodes_.size() - 1; }
  std::size_t size() const { return nodes_.size(); }
  double t0() const { return nodes_.front(); }
  double T() const { return nodes_.back(); }
  double operator[](std::size_t i) const { return nodes_[i]; }
  double dt(std::size_t i) const { return nodes_[i + 1] - nodes_[i]; }
  double max_step() const { return max_step_; }
  const std::vector<double>& nodes() const { return nodes_; }

  /// Node index whose time equals t within `tol`; throws if none.
  std::size_t index_of(double t, double tol = 1e-12) const;
  /// Every `factor`-th node; factor must divide steps().
  TimeGrid coarsen(std::size_t factor) const;

 private:
  std::vector<double> nodes_;
  double max_step_ = 0.0;
};

/// Per-path, per-purpose random engine. Path p of stream `tag` is the same
/// sequence no matter which thread draws it or how many paths exist.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t path, std::uint64_t tag);

/// Mixes a base seed with an index into an independent seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

enum class BackwardNoise {
  PerPath,  // independent B per path
  Common,   // one B draw shared by all paths (a single ω-sample of the B field)
};

struct AnalyticIncreasing {
  std::function<double(double)> A;
  std::string label;
};
struct TabulatedIncreasing {
  std::vector<double> t;
  std::vector<double> A;
};
/// Placeholder: A is supplied later (e.g. boundary local time).
struct DeferredIncreasing {};

using IncreasingSpec = std::variant<AnalyticIncreasing, TabulatedIncreasing, DeferredIncreasing>;

/// Reads a two-column (t, A) CSV with optional header; strictly validated.
TabulatedIncreasing load_increasing_csv(const std::string& path);
void validate_table(const TabulatedIncreasing& table);

struct PathOptions {
  BackwardNoise backward = BackwardNoise::PerPath;
  bool with_backward = true;
  unsigned threads = 1;
};

struct PathBundle {
  TimeGrid grid;
  int d = 1;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  BackwardNoise backward = BackwardNoise::PerPath;
  bool a_deferred = false;

  /// dW[p] and dB[p] are d × steps; in Common mode dB holds a single entry.
  std::vector<Matrix> dW;
  std::vector<Matrix> dB;
  /// A[p] has one value per node, A[p][0] = 0.
  std::vector<Vector> A;

  auto dw(std::size_t p, std::size_t i) const { return dW[p].col(static_cast<Eigen::Index>(i)); }
  auto db(std::size_t p, std::size_t i) const {
    return dB[backward == BackwardNoise::Common ? 0 : p].col(static_cast<Eigen::Index>(i));
  }
  double dA(std::size_t p, std::size_t i) const { return A[p][i + 1] - A[p][i]; }
  bool has_backward() const { return !dB.empty(); }
};

PathBundle generate_paths(const TimeGrid& grid, int d, std::size_t n_paths, std::uint64_t seed,
                          const IncreasingSpec& a_spec, const PathOptions& options = {});

/// Replaces the increasing process, e.g. with boundary local time. Each row
/// must be nondecreasing and start at 0.
PathBundle with_increasing_process(PathBundle bundle, std::vector<Vector> A);

/// Same noise on every `factor`-th node (increments summed).
PathBundle coarsened(const PathBundle& bundle, std::size_t factor);

/// Σ ζ(t_i) dW_i with left-endpoint integrand values.
double forward_ito(std::span<const double> integrand_left, std::span<const double> dW);
/// Σ ζ(t_{i+1}) dB_i with right-endpoint integrand values.
double backward_ito(std::span<const double> integrand_right, std::span<const double> dB);

/// Integrates s' = h(t, s) ∘dB backward from s(T) = terminal down to t0 with
/// a Heun predictor-corrector and returns ∫ h(s, state) ∘dB.
double stratonovich_backward(const std::function<double(double t, double state)>& h,
                             const TimeGrid& grid, std::span<const double> dB, double terminal);

}  // namespace bdsgvi
