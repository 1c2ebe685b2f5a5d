#pragma once

// Scenario runner behind the command-line tool: reads a config, runs one
// controller, writes CSV artifacts, metadata.json and summary.json.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace adrctl {

/// Process exit codes of run_scenario.
enum ExitCode : int {
    kExitPass = 0,
    kExitNumericalFailure = 1,
    kExitUsage = 2,
    kExitChecksFailed = 3,
};

struct RunOptions {
    std::filesystem::path config;
    std::optional<std::filesystem::path> out_dir;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

const std::vector<std::string>& scenario_subcommands();

/// Runs `subcommand` and returns its exit code. Errors are reported on
/// `err` with the raising module.
int run_scenario(const std::string& subcommand, const RunOptions& opts, std::ostream& log,
                 std::ostream& err);

}  // namespace adrctl
