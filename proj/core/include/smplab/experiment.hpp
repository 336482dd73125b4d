#pragma once

#include <filesystem>
#include <string>

#include "smplab/config.hpp"

namespace smplab {

/// Version string baked in at configure time (project version plus git
/// revision when available).
[[nodiscard]] const char* code_version() noexcept;

struct RunOptions {
    std::filesystem::path base_dir;  ///< resolves a relative experiment.output and control.file
};

struct RunResult {
    int exit_status = 0;  ///< 0 all checks pass, 1 a threshold failed, 2 error
    std::filesystem::path directory;
    std::string summary;
};

/// Writes into cfg.output, created if needed:
///   manifest.txt   version, experiment, seed, wall time, then the config echo
///   <name>.csv     per experiment, see README
///   summary.txt    one line per check with PASS/FAIL, then the verdict
///   error.txt      only when a module throws (exit status 2)
/// Everything except the manifest's wall_time line is a pure function of
/// (config, build).
RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

}  // namespace smplab
