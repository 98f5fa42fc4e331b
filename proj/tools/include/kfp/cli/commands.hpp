#pragma once

#include <exception>
#include <filesystem>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "kfp/cli/config.hpp"

namespace kfp::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kInfeasible = 2, kUsage = 64, kInternal = 70 };

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);
/// Short name of the error class ("grid-too-small", "usage", ...).
std::string error_kind(const std::exception& e);

/// Plain-text report: free-form body lines followed by a `KEY: value` tail.
class Report {
 public:
  void line(std::string text) { body_.push_back(std::move(text)); }
  void value(const std::string& key, const std::string& v) { tail_.emplace_back(key, v); }
  void value(const std::string& key, double v);
  void value(const std::string& key, long long v) { value(key, std::to_string(v)); }
  void value(const std::string& key, int v) { value(key, std::to_string(v)); }
  void value(const std::string& key, bool v) { value(key, std::string(v ? "true" : "false")); }

  std::string text() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> body_;
  std::vector<std::pair<std::string, std::string>> tail_;
};

const std::vector<std::string>& command_names();

/// Runs one command into cfg.output_dir (created if needed): config echo, CSV files and
/// report.txt. The report is also written to `out`. Returns the exit code.
int run_command(const std::string& name, const RunConfig& cfg, std::ostream& out);

/// Entry point of the `kfp` binary.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kfp::cli
