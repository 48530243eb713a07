#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "diffddp/config.hpp"
#include "diffddp/plants.hpp"
#include "diffddp/upper_level.hpp"
#include "diffddp/validation.hpp"

namespace diffddp {

inline constexpr const char* kVersion = "0.1.0";

/// Plant, parameters, upper-level cost and oracle settings resolved from a config.
struct ExperimentSetup {
  Plant plant;
  ParamVector theta;
  /// Null for `solve` experiments.
  std::shared_ptr<const UpperLevelCost> ul_cost;
  OracleOptions oracle;
};

/// Throws ConfigError for parameter names the plant does not have.
/// `reference_threshold` is the convergence threshold used to generate the
/// imitation reference, so it matches the solves it is compared against.
ExperimentSetup build_setup(const ExperimentConfig& c, double reference_threshold);

struct RunSummary {
  std::vector<std::filesystem::path> files;
  std::string message;
};

/// Runs the configured experiment and writes manifest.json plus the
/// experiment's CSV files into `out_dir`. Throws ConfigError on bad
/// configuration, NotConvergedError when a `solve`/`gradcheck` inner solve
/// fails to converge (after writing its artifacts) and OracleRefusal when
/// the FD oracle cannot be evaluated.
RunSummary run_experiment(const ExperimentConfig& c, const std::filesystem::path& out_dir);

/// CLI exit code for an exception thrown by load_config/run_experiment.
int exit_code_for(const std::exception& e);

}  // namespace diffddp
