#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace belieffit::app {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitError = 1,
  kExitConfig = 2,
  kExitOptimization = 3,
  kExitUnknownTrial = 4,
};

struct CommandOptions {
  /// Empty means built-in defaults.
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  int trials = 0;
  std::filesystem::path out;
  std::vector<std::string> variants;
  std::optional<int> generate;
  std::filesystem::path dataset;
};

int cmd_calibrate(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_train(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_experiment(const std::string& kind, const CommandOptions& opts, std::ostream& out, std::ostream& err);
/// Prints one line per high-level step of every episode of `trial`.
int cmd_replay(const std::filesystem::path& dir, int trial, const std::vector<std::string>& variants,
               std::ostream& out, std::ostream& err);

}  // namespace belieffit::app
