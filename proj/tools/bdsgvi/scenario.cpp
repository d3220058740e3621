#include "scenario.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <fmt/core.h>
#include <fmt/ranges.h>
#include <yaml-cpp/yaml.h>

#include <bdsgvi/call_spec.hpp>
#include <bdsgvi/coefficients.hpp>
#include <bdsgvi/doss_sussmann.hpp>
#include <bdsgvi/errors.hpp>
#include <bdsgvi/feynman_kac.hpp>

namespace bdsgvi::cli {
namespace {

void reject_unknown(const YAML::Node& node, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!node.IsMap()) throw ValidationError(fmt::format("scenario: '{}' must be a mapping", where));
  const std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!known.count(key)) {
      throw ValidationError(fmt::format("scenario: unknown key '{}' in {} (known: {})", key, where,
                                        fmt::join(known, ", ")));
    }
  }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& target, const std::string& where) {
  const auto v = node[key];
  if (!v) return;
  try {
    target = v.as<T>();
  } catch (const YAML::Exception&) {
    throw ValidationError(fmt::format("scenario: {}.{} has the wrong type", where, key));
  }
}

// Counts must be positive integers; yaml-cpp would wrap negatives silently.
void read_count(const YAML::Node& node, const char* key, std::size_t& target, const std::string& where) {
  long long v = static_cast<long long>(target);
  read(node, key, v, where);
  if (v <= 0) throw ValidationError(fmt::format("scenario: {}.{} must be a positive integer, got {}", where, key, v));
  target = static_cast<std::size_t>(v);
}

BackwardNoise parse_backward(const std::string& text) {
  if (text == "per_path") return BackwardNoise::PerPath;
  if (text == "common") return BackwardNoise::Common;
  throw ValidationError(fmt::format("scenario: noise.backward must be per_path or common, got '{}'", text));
}

bool is_csv_reference(const std::string& text) {
  return text.size() > 4 && text.compare(text.size() - 4, 4, ".csv") == 0;
}

void validate_increasing(const std::string& text, bool has_state) {
  if (is_csv_reference(text)) {
    load_increasing_csv(text);
    return;
  }
  const auto call = parse_call(text);
  if (call.name == "zero") {
    expect_arity(call, 0, 0);
  } else if (call.name == "linear") {
    expect_arity(call, 1, 1);
    if (call.args[0] < 0.0) throw ValidationError("increasing process linear(c) needs c >= 0");
  } else if (call.name == "local_time") {
    expect_arity(call, 0, 0);
    if (!has_state) throw ValidationError("increasing process local_time needs a state section");
  } else {
    throw ValidationError(
        fmt::format("unknown increasing process '{}' (known: zero, linear(c), local_time, <file>.csv)", text));
  }
}

// Resolves every catalog reference once so that a bad name fails before any
// work starts.
void validate(const Scenario& s) {
  if (!(s.T > s.t0) || s.t0 < 0.0) throw ValidationError(fmt::format("scenario: need 0 <= t0 < T, got [{}, {}]", s.t0, s.T));
  if (s.d < 1 || s.k < 1) throw ValidationError("scenario: dimensions must be at least 1");
  if (s.state) {
    if (s.state->dim != s.d) {
      throw ValidationError(fmt::format("scenario: state.dim {} differs from noise.dimension {}", s.state->dim, s.d));
    }
    if (s.state->x0.size() != static_cast<std::size_t>(s.state->dim)) {
      throw ValidationError("scenario: state.x0 length differs from state.dim");
    }
    const auto domain = make_domain(s.state->domain, s.state->dim);
    Vector x0 = Eigen::Map<const Vector>(s.state->x0.data(), s.state->dim);
    if (!domain.contains(x0, 1e-9)) throw ValidationError("scenario: state.x0 lies outside the domain");
    make_dynamics(s.state->drift, s.state->sigma, s.state->dim);
    make_lattice(s.field.lattice, domain);
    make_flow_spec(s.flow.h, s.state->dim);
  } else {
    make_flow_spec(s.flow.h, 1);
  }
  validate_increasing(s.increasing, s.state.has_value());
  // With a state the solver always reads the state's local time.
  if (s.state && s.increasing != "local_time") {
    throw ValidationError("scenario: with a state section the increasing process is its local_time");
  }
  make_convex(s.phi, s.k);
  make_convex(s.psi, s.k);
  const auto coeffs = make_coefficients(s.k, s.d, s.f, s.g, s.h, s.terminal);
  if (coeffs.state_dependent && !s.state) {
    throw ValidationError("scenario: coefficients read the state x but there is no state section");
  }
  if (s.solver.scheme == Scheme::ExplicitYosida && !(s.solver.eps > 0.0)) {
    throw ValidationError("scenario: solver.eps must be positive for the explicit scheme");
  }
  for (std::size_t j = 0; j < s.eps_ladder.size(); ++j) {
    if (!(s.eps_ladder[j] > 0.0) || (j > 0 && !(s.eps_ladder[j] < s.eps_ladder[j - 1]))) {
      throw ValidationError("scenario: cauchy.ladder must be positive and strictly decreasing");
    }
  }
  if (!(s.rate_lo < s.rate_hi)) throw ValidationError("scenario: cauchy.window must be [lo, hi] with lo < hi");
  for (double t : s.field.times) {
    if (t < s.t0 || t >= s.T) throw ValidationError(fmt::format("scenario: field time {} outside [t0, T)", t));
  }
  const auto& c = s.constants;
  if (!(c.K >= 0.0) || !(c.alpha >= 0.0 && c.alpha < 1.0) || !std::isfinite(c.lambda) || !std::isfinite(c.mu)) {
    throw ValidationError("scenario: constants need K >= 0, 0 <= alpha < 1 and finite lambda, mu");
  }
}

}  // namespace

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used == 0 || used != item.size()) throw ValidationError(fmt::format("not a number: '{}'", item));
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("empty number list");
  return out;
}

Scenario default_scenario() {
  Scenario s;
  s.name = "default";
  s.eps_ladder = {1e-1, 1e-2, 1e-3};
  return s;
}

Scenario load_scenario(const std::filesystem::path& file) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(file.string());
  } catch (const YAML::BadFile&) {
    throw ValidationError(fmt::format("cannot read scenario file '{}'", file.string()));
  } catch (const YAML::Exception& e) {
    throw ValidationError(fmt::format("scenario '{}' does not parse: {}", file.string(), e.what()));
  }
  Scenario s = default_scenario();
  s.name = file.stem().string();
  reject_unknown(root, "the top level",
                 {"name", "seed", "output", "time", "paths", "noise", "state", "convex", "coefficients", "constants",
                  "solver", "cauchy", "field", "flow", "checks"});
  read(root, "name", s.name, "scenario");
  read(root, "seed", s.seed, "scenario");
  std::string output = s.output.string();
  read(root, "output", output, "scenario");
  s.output = output;
  read_count(root, "paths", s.paths, "scenario");

  if (const auto t = root["time"]) {
    reject_unknown(t, "time", {"t0", "T", "steps"});
    read(t, "t0", s.t0, "time");
    read(t, "T", s.T, "time");
    read_count(t, "steps", s.steps, "time");
  }
  if (const auto n = root["noise"]) {
    reject_unknown(n, "noise", {"dimension", "backward", "increasing"});
    read(n, "dimension", s.d, "noise");
    std::string backward = "per_path";
    read(n, "backward", backward, "noise");
    s.backward = parse_backward(backward);
    read(n, "increasing", s.increasing, "noise");
    if (is_csv_reference(s.increasing)) {
      const std::filesystem::path p(s.increasing);
      if (p.is_relative()) s.increasing = (file.parent_path() / p).lexically_normal().string();
    }
  }
  if (const auto st = root["state"]) {
    reject_unknown(st, "state", {"domain", "dim", "drift", "sigma", "x0"});
    StateSection state;
    read(st, "domain", state.domain, "state");
    read(st, "dim", state.dim, "state");
    read(st, "drift", state.drift, "state");
    read(st, "sigma", state.sigma, "state");
    state.x0.assign(static_cast<std::size_t>(std::max(state.dim, 1)), 0.0);
    read(st, "x0", state.x0, "state");
    s.state = state;
    if (!root["noise"] || !root["noise"]["dimension"]) s.d = state.dim;
    if (!root["noise"] || !root["noise"]["increasing"]) s.increasing = "local_time";
  }
  if (const auto c = root["convex"]) {
    reject_unknown(c, "convex", {"phi", "psi"});
    read(c, "phi", s.phi, "convex");
    read(c, "psi", s.psi, "convex");
  }
  if (const auto c = root["coefficients"]) {
    reject_unknown(c, "coefficients", {"k", "f", "g", "h", "terminal"});
    read(c, "k", s.k, "coefficients");
    read(c, "f", s.f, "coefficients");
    read(c, "g", s.g, "coefficients");
    read(c, "h", s.h, "coefficients");
    read(c, "terminal", s.terminal, "coefficients");
  }
  if (const auto c = root["constants"]) {
    reject_unknown(c, "constants", {"beta1", "beta2", "K", "alpha", "lambda", "mu"});
    read(c, "beta1", s.constants.beta1, "constants");
    read(c, "beta2", s.constants.beta2, "constants");
    read(c, "K", s.constants.K, "constants");
    read(c, "alpha", s.constants.alpha, "constants");
    read(c, "lambda", s.constants.lambda, "constants");
    read(c, "mu", s.constants.mu, "constants");
  }
  if (const auto c = root["solver"]) {
    reject_unknown(c, "solver", {"scheme", "eps", "regression", "threads"});
    std::string scheme = to_string(s.solver.scheme);
    read(c, "scheme", scheme, "solver");
    s.solver.scheme = parse_scheme(scheme);
    read(c, "eps", s.solver.eps, "solver");
    std::string regression = "auto";
    read(c, "regression", regression, "solver");
    s.solver.regression = parse_regression(regression);
    read(c, "threads", s.solver.threads, "solver");
  }
  if (const auto c = root["cauchy"]) {
    reject_unknown(c, "cauchy", {"ladder", "window"});
    read(c, "ladder", s.eps_ladder, "cauchy");
    std::vector<double> window{s.rate_lo, s.rate_hi};
    read(c, "window", window, "cauchy");
    if (window.size() != 2) throw ValidationError("scenario: cauchy.window needs two entries");
    s.rate_lo = window[0];
    s.rate_hi = window[1];
  }
  if (const auto c = root["field"]) {
    reject_unknown(c, "field", {"times", "lattice", "b_draws", "paths", "steps"});
    read(c, "times", s.field.times, "field");
    read(c, "lattice", s.field.lattice, "field");
    read_count(c, "b_draws", s.field.b_draws, "field");
    if (c["paths"]) {
      std::size_t v = 1;
      read_count(c, "paths", v, "field");
      s.field.paths = v;
    }
    if (c["steps"]) {
      std::size_t v = 1;
      read_count(c, "steps", v, "field");
      s.field.steps = v;
    }
  }
  if (const auto c = root["flow"]) {
    reject_unknown(c, "flow", {"h", "y"});
    read(c, "h", s.flow.h, "flow");
    read(c, "y", s.flow.ys, "flow");
  }
  if (const auto c = root["checks"]) {
    reject_unknown(c, "checks", {"samples"});
    read_count(c, "samples", s.check_samples, "checks");
  }
  validate(s);
  return s;
}

void apply_overrides(Scenario& s, const Overrides& o) {
  if (o.seed) s.seed = *o.seed;
  if (o.out) s.output = *o.out;
  if (o.paths) {
    if (*o.paths == 0) throw ValidationError("--paths must be positive");
    s.paths = *o.paths;
  }
  if (o.steps) {
    if (*o.steps == 0) throw ValidationError("--steps must be positive");
    s.steps = *o.steps;
  }
  if (o.eps) {
    s.solver.eps = o.eps->front();
    s.eps_ladder = *o.eps;
  }
  validate(s);
}

}  // namespace bdsgvi::cli
