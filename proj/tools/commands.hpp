#pragma once

#include <memory>
#include <string>
#include <vector>

#include "options.hpp"
#include "output_dir.hpp"

namespace demoe::cli {

class Command {
 public:
  virtual ~Command() = default;

  virtual std::string name() const = 0;
  virtual std::string description() const = 0;
  virtual void setup(Options& opts) = 0;
  /// Cross-flag validation; throws UsageError.
  virtual void check() const {}
  /// Returns 0, or 2 when the run finished with per-item failures.
  virtual int execute(OutputDir& out) = 0;
};

std::vector<std::unique_ptr<Command>> make_commands();

/// Parses argv, runs one subcommand and returns the process exit code.
int run(int argc, char** argv);

}  // namespace demoe::cli
