#pragma once

#include <iostream>
#include <string>
#include <vector>

#include "scmbrl/experiment.hpp"

namespace scmbrl {

// Fully resolved invocation: experiment settings plus I/O choices.
struct CliConfig {
  ExperimentConfig exp;
  std::string out_dir;           // SC_MBRL_OUT env var overrides the default
  std::string format = "both";   // jsonl | csv | both
  bool checkpoint = false;
  std::string mdp_in;            // optional MDP to load (shared by replicas)
  std::string mdp_out;           // target path for the generate subcommand
  std::vector<double> sigma_grid = {0.0, 0.25, 0.5, 1.0, 2.0};
  NoiseTarget target = NoiseTarget::kRewardInit;
  LrGrids grids = {{0.01, 0.03, 0.1, 0.3},
                   {0.1, 0.3, 1.0, 3.0},
                   {0.1, 0.3, 1.0, 3.0, 10.0}};
};

// Entry point behind the binary: parses arguments (flags override config-file
// values override defaults), dispatches the subcommand, writes outputs under
// the output directory. Returns the process exit code: 0 success, 2
// configuration error, 3 numerical failure at runtime.
int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
            std::ostream& err = std::cerr);

// JSON echo of a fully resolved configuration (learning rates and epsilon
// shown post-resolution).
std::string resolved_config_json(const CliConfig& config);

}  // namespace scmbrl
