#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "qfe/cli/config.hpp"

namespace qfe::cli {

enum ExitCode : int { kOk = 0, kAssertionFailed = 1, kConfigError = 2, kNumericalError = 3 };

struct Assertion {
    std::string name;
    bool pass = false;
    double value = 0.0;
    std::string expected;
};

struct RunResult {
    int exit_code = kOk;
    std::vector<Assertion> assertions;
    // Paths relative to the output directory, sorted.
    std::vector<std::string> files;
};

// simulate | solve | axioms | domination | decompose | recover | all.
// "all" runs every block present in the config; a single subcommand runs its
// block with defaults when absent. Writes CSVs, plots, assertions.csv,
// config.resolved.json and manifest.json under c.output. Numerical and
// configuration errors propagate as exceptions.
RunResult run_experiment(const ExperimentConfig& c, const std::string& subcommand, std::ostream& log);

const std::vector<std::string>& subcommands();

// Maps the exception in flight to an exit code and prints it.
int exit_code_for_current_exception(std::ostream& err);

}  // namespace qfe::cli
