#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "scenario.hpp"

namespace bdsgvi::cli {

/// Human-readable report plus a machine-readable mirror. Every check is
/// named after the property it verifies.
class Report {
 public:
  explicit Report(std::string command, const Scenario& scenario);

  void check(const std::string& property, bool pass, const std::string& detail);
  void warn(const std::string& property, const std::string& detail);
  void info(const std::string& detail);

  nlohmann::json& data() { return json_["results"]; }
  std::size_t failures() const { return failures_; }
  std::string text() const;
  const nlohmann::json& json() const { return json_; }

 private:
  std::vector<std::string> lines_;
  nlohmann::json json_;
  std::size_t failures_ = 0;
};

const std::vector<std::string>& command_names();

/// Runs one command, writes its artifacts into s.output and returns the
/// report. Throws ValidationError / NumericalError.
Report run_command(const std::string& command, const Scenario& s);

}  // namespace bdsgvi::cli
