#include "bdsgvi/drivers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "bdsgvi/errors.hpp"
#include "bdsgvi/parallel.hpp"

namespace bdsgvi {
namespace {

constexpr std::uint64_t kTagForward = 1;
constexpr std::uint64_t kTagBackward = 2;
constexpr std::uint64_t kTagBackwardCommon = 3;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Matrix gaussian_increments(std::mt19937_64& rng, const TimeGrid& grid, int d) {
  std::normal_distribution<double> normal;
  Matrix out(d, static_cast<Eigen::Index>(grid.steps()));
  for (std::size_t i = 0; i < grid.steps(); ++i) {
    const double s = std::sqrt(grid.dt(i));
    for (int c = 0; c < d; ++c) out(c, static_cast<Eigen::Index>(i)) = s * normal(rng);
  }
  return out;
}

double interpolate(const TabulatedIncreasing& tab, double t) {
  const auto it = std::lower_bound(tab.t.begin(), tab.t.end(), t);
  const auto j = static_cast<std::size_t>(it - tab.t.begin());
  if (j < tab.t.size() && tab.t[j] == t) return tab.A[j];
  if (j == 0 || j == tab.t.size()) {
    throw ValidationError(fmt::format("increasing-process table does not cover t = {}", t));
  }
  const double w = (t - tab.t[j - 1]) / (tab.t[j] - tab.t[j - 1]);
  return tab.A[j - 1] + w * (tab.A[j] - tab.A[j - 1]);
}

Vector sample_increasing(const IncreasingSpec& spec, const TimeGrid& grid) {
  Vector a = Vector::Zero(static_cast<Eigen::Index>(grid.size()));
  if (const auto* an = std::get_if<AnalyticIncreasing>(&spec)) {
    const double base = an->A(grid.t0());
    for (std::size_t i = 0; i < grid.size(); ++i) a[static_cast<Eigen::Index>(i)] = an->A(grid[i]) - base;
  } else if (const auto* tab = std::get_if<TabulatedIncreasing>(&spec)) {
    validate_table(*tab);
    const double base = interpolate(*tab, grid.t0());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      a[static_cast<Eigen::Index>(i)] = interpolate(*tab, grid[i]) - base;
    }
  }
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i])) throw ValidationError("increasing process is not finite on the grid");
    if (i > 0 && a[i] < a[i - 1]) {
      throw ValidationError(fmt::format("increasing process decreases between nodes {} and {}", i - 1, i));
    }
  }
  return a;
}

}  // namespace

TimeGrid::TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 2) throw ValidationError("time grid needs at least two nodes");
  if (!(nodes_.front() >= 0.0)) throw ValidationError("time grid must start at t0 >= 0");
  for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
    const double h = nodes_[i + 1] - nodes_[i];
    if (!(h > 0.0) || !std::isfinite(h)) {
      throw ValidationError(fmt::format("time grid not strictly increasing at node {}", i));
    }
    max_step_ = std::max(max_step_, h);
  }
}

TimeGrid TimeGrid::uniform(double t0, double T, std::size_t steps) {
  if (steps == 0) throw ValidationError("time grid needs at least one step");
  if (!(T > t0)) throw ValidationError(fmt::format("time grid needs T > t0 (t0={}, T={})", t0, T));
  std::vector<double> nodes(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) {
    nodes[i] = t0 + (T - t0) * static_cast<double>(i) / static_cast<double>(steps);
  }
  nodes.back() = T;
  return TimeGrid(std::move(nodes));
}

std::size_t TimeGrid::index_of(double t, double tol) const {
  const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - tol);
  if (it != nodes_.end() && std::abs(*it - t) <= tol) return static_cast<std::size_t>(it - nodes_.begin());
  throw ValidationError(fmt::format("time {} is not a grid node", t));
}

TimeGrid TimeGrid::coarsen(std::size_t factor) const {
  if (factor == 0 || steps() % factor != 0) {
    throw ValidationError(fmt::format("coarsening factor {} does not divide {} steps", factor, steps()));
  }
  std::vector<double> nodes;
  for (std::size_t i = 0; i < nodes_.size(); i += factor) nodes.push_back(nodes_[i]);
  return TimeGrid(std::move(nodes));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix(splitmix(seed) ^ splitmix(index + 0x632BE59BD9B4E019ULL));
}

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t path, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

void validate_table(const TabulatedIncreasing& table) {
  if (table.t.size() != table.A.size() || table.t.size() < 2) {
    throw ValidationError("increasing-process table needs at least two (t, A) rows");
  }
  for (std::size_t i = 0; i < table.t.size(); ++i) {
    if (!std::isfinite(table.t[i]) || !std::isfinite(table.A[i])) {
      throw ValidationError(fmt::format("increasing-process table row {} is not finite", i));
    }
    if (i > 0 && !(table.t[i] > table.t[i - 1])) {
      throw ValidationError(fmt::format("increasing-process table times not increasing at row {}", i));
    }
    if (i > 0 && table.A[i] < table.A[i - 1]) {
      throw ValidationError(fmt::format("increasing-process table decreases at row {}", i));
    }
  }
}

TabulatedIncreasing load_increasing_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open increasing-process table '{}'", path));
  TabulatedIncreasing tab;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double t = 0.0;
    double a = 0.0;
    if (!(ss >> t >> a)) {
      if (tab.t.empty() && row == 1) continue;  // header
      throw ValidationError(fmt::format("{}:{}: expected two numeric columns", path, row));
    }
    tab.t.push_back(t);
    tab.A.push_back(a);
  }
  validate_table(tab);
  return tab;
}

PathBundle generate_paths(const TimeGrid& grid, int d, std::size_t n_paths, std::uint64_t seed,
                          const IncreasingSpec& a_spec, const PathOptions& options) {
  if (n_paths == 0) throw ValidationError("generate_paths: need at least one path");
  if (d < 1) throw ValidationError("generate_paths: dimension must be >= 1");
  PathBundle b;
  b.grid = grid;
  b.d = d;
  b.n_paths = n_paths;
  b.seed = seed;
  b.backward = options.backward;
  b.a_deferred = std::holds_alternative<DeferredIncreasing>(a_spec);
  const Vector a = sample_increasing(a_spec, grid);
  b.A.assign(n_paths, a);
  b.dW.resize(n_paths);
  const bool per_path_b = options.with_backward && options.backward == BackwardNoise::PerPath;
  if (per_path_b) b.dB.resize(n_paths);
  parallel_for(n_paths, options.threads, [&](std::size_t p) {
    auto rw = substream(seed, p, kTagForward);
    b.dW[p] = gaussian_increments(rw, grid, d);
    if (per_path_b) {
      auto rb = substream(seed, p, kTagBackward);
      b.dB[p] = gaussian_increments(rb, grid, d);
    }
  });
  if (options.with_backward && options.backward == BackwardNoise::Common) {
    auto rb = substream(seed, 0, kTagBackwardCommon);
    b.dB.push_back(gaussian_increments(rb, grid, d));
  }
  return b;
}

PathBundle with_increasing_process(PathBundle bundle, std::vector<Vector> A) {
  if (A.size() != bundle.n_paths) {
    throw ValidationError(fmt::format("increasing process has {} paths, bundle has {}", A.size(), bundle.n_paths));
  }
  for (std::size_t p = 0; p < A.size(); ++p) {
    const Vector& a = A[p];
    if (a.size() != static_cast<Eigen::Index>(bundle.grid.size())) {
      throw ValidationError(fmt::format("increasing process path {} has wrong length", p));
    }
    if (a[0] != 0.0) throw ValidationError(fmt::format("increasing process path {} does not start at 0", p));
    for (Eigen::Index i = 1; i < a.size(); ++i) {
      if (!(a[i] >= a[i - 1])) {
        throw ValidationError(fmt::format("increasing process path {} decreases at node {}", p, i));
      }
    }
  }
  bundle.A = std::move(A);
  bundle.a_deferred = false;
  return bundle;
}

PathBundle coarsened(const PathBundle& bundle, std::size_t factor) {
  PathBundle out;
  out.grid = bundle.grid.coarsen(factor);
  out.d = bundle.d;
  out.n_paths = bundle.n_paths;
  out.seed = bundle.seed;
  out.backward = bundle.backward;
  out.a_deferred = bundle.a_deferred;
  const auto coarse_steps = static_cast<Eigen::Index>(out.grid.steps());
  const auto f = static_cast<Eigen::Index>(factor);
  auto sum_cols = [&](const Matrix& m) {
    Matrix c = Matrix::Zero(m.rows(), coarse_steps);
    for (Eigen::Index j = 0; j < coarse_steps; ++j) c.col(j) = m.middleCols(j * f, f).rowwise().sum();
    return c;
  };
  out.dW.reserve(bundle.dW.size());
  for (const auto& m : bundle.dW) out.dW.push_back(sum_cols(m));
  out.dB.reserve(bundle.dB.size());
  for (const auto& m : bundle.dB) out.dB.push_back(sum_cols(m));
  out.A.reserve(bundle.A.size());
  for (const auto& a : bundle.A) {
    Vector c(coarse_steps + 1);
    for (Eigen::Index j = 0; j <= coarse_steps; ++j) c[j] = a[j * f];
    out.A.push_back(std::move(c));
  }
  return out;
}

double forward_ito(std::span<const double> integrand_left, std::span<const double> dW) {
  if (integrand_left.size() != dW.size()) {
    throw ValidationError(fmt::format("forward_ito: {} integrand values for {} increments",
                                      integrand_left.size(), dW.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < dW.size(); ++i) s += integrand_left[i] * dW[i];
  return s;
}

double backward_ito(std::span<const double> integrand_right, std::span<const double> dB) {
  if (integrand_right.size() != dB.size()) {
    throw ValidationError(fmt::format("backward_ito: {} integrand values for {} increments",
                                      integrand_right.size(), dB.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < dB.size(); ++i) s += integrand_right[i] * dB[i];
  return s;
}

double stratonovich_backward(const std::function<double(double t, double state)>& h,
                             const TimeGrid& grid, std::span<const double> dB, double terminal) {
  if (dB.size() != grid.steps()) {
    throw ValidationError(fmt::format("stratonovich_backward: {} increments for {} steps", dB.size(), grid.steps()));
  }
  double s = terminal;
  for (std::size_t i = grid.steps(); i-- > 0;) {
    const double k1 = h(grid[i + 1], s);
    const double pred = s + k1 * dB[i];
    const double k2 = h(grid[i], pred);
    s += 0.5 * (k1 + k2) * dB[i];
  }
  if (!std::isfinite(s)) throw NumericalError("stratonovich_backward: integral is not finite");
  return s - terminal;
}

}  // namespace bdsgvi
