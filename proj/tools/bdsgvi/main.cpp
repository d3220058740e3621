// bdsgvi: scenario-driven front end. Exit codes: 0 success, 2 invalid input
// (including I/O), 3 numerical failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include <bdsgvi/errors.hpp>

#include "commands.hpp"
#include "scenario.hpp"

namespace {

constexpr int kValidation = 2;
constexpr int kNumerical = 3;

int fail(int code, const char* kind, const std::string& command, const std::string& message,
         const std::optional<std::filesystem::path>& out_dir) {
  const nlohmann::json record{
      {"status", "error"}, {"kind", kind}, {"exit_code", code}, {"command", command}, {"message", message}};
  std::cerr << record.dump() << '\n';
  if (out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*out_dir, ec);
    std::ofstream f(*out_dir / "error.json", std::ios::binary);
    if (f) f << record.dump(2) << '\n';
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace bdsgvi;
  CLI::App app{"Penalized BDSDE solver, reflected-diffusion sampler and convergence studies"};
  std::string command;
  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> paths;
  std::optional<std::size_t> steps;
  std::optional<std::string> eps;
  bool quiet = false;

  app.add_option("command", command, "prox-check | compat-check | sde-sim | solve | cauchy | field | report")
      ->required()
      ->check(CLI::IsMember(cli::command_names()));
  app.add_option("--scenario", scenario_path, "scenario file (YAML); a built-in default is used without it");
  app.add_option("--seed", seed, "override the scenario seed");
  app.add_option("--out", out, "override the output directory");
  app.add_option("--paths", paths, "override the number of Monte-Carlo paths");
  app.add_option("--steps", steps, "override the number of time steps");
  app.add_option("--eps", eps, "comma-separated eps list: solver eps is the first entry, the Cauchy ladder all");
  app.add_flag("--quiet", quiet, "print nothing on success");

  std::optional<std::filesystem::path> out_dir;
  if (out) out_dir = *out;
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (out) out_dir = *out;
    return fail(kValidation, "validation", command, e.what(), out_dir);
  }
  if (out) out_dir = *out;

  try {
    cli::Scenario s = scenario_path.empty() ? cli::default_scenario() : cli::load_scenario(scenario_path);
    if (!out_dir) out_dir = s.output;
    cli::Overrides o;
    o.seed = seed;
    if (out) o.out = std::filesystem::path(*out);
    o.paths = paths;
    o.steps = steps;
    if (eps) o.eps = cli::parse_number_list(*eps);
    cli::apply_overrides(s, o);
    const auto report = cli::run_command(command, s);
    std::filesystem::remove(s.output / "error.json");
    if (!quiet) std::cout << report.text();
    return 0;
  } catch (const ValidationError& e) {
    return fail(kValidation, "validation", command, e.what(), out_dir);
  } catch (const NumericalError& e) {
    return fail(kNumerical, "numerical", command, e.what(), out_dir);
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(kValidation, "io", command, e.what(), out_dir);
  } catch (const std::exception& e) {
    return fail(kNumerical, "numerical", command, e.what(), out_dir);
  }
}
