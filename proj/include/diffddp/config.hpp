#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "diffddp/plants.hpp"
#include "diffddp/solver.hpp"
#include "diffddp/types.hpp"

namespace diffddp {

/// Malformed or unknown configuration entries. The message names the key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { kSolve, kGradcheck, kSlice, kSweep, kOptimize };
enum class UpperLevelKind { kImitation, kVelocityImitation, kCoDesign };

std::string_view to_string(ExperimentKind k);
std::string_view to_string(UpperLevelKind k);

/// Fully resolved experiment description. Every field has a default, so a
/// config file only lists what differs.
struct ExperimentConfig {
  // [experiment]
  ExperimentKind kind = ExperimentKind::kSolve;
  PlantKind plant = PlantKind::kPendulum;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  int workers = 1;

  // [problem]
  int horizon = 50;
  double dt = 0.01;
  double control_weight = 1e-2;
  std::vector<double> x1;    // empty: plant default
  std::vector<double> goal;  // empty: plant default

  // [theta]: overrides of the plant's nominal parameters
  std::map<std::string, double> theta;

  // [solver]
  Method solve_mode = Method::kDdp;
  SolverOptions solver;

  // [sensitivity]
  Method derivative_mode = Method::kDdp;

  // [upper_level] and [reference]
  UpperLevelKind upper_level = UpperLevelKind::kImitation;
  double imitation_eps = 1e-9;
  double reach = 0.6;
  double hinge_weight = 1e3;
  /// Parameters generating the imitation reference; missing names use theta.
  std::map<std::string, double> reference;

  // [oracle]
  double oracle_step = 1e-5;
  double oracle_threshold = 1e-14;

  // [sweep] and [ranges]
  int samples = 100;
  bool inject_nominal = false;
  bool resample = true;
  std::map<std::string, Interval> ranges;

  // [slice]
  std::string slice_component;
  double slice_lower = 0.0;
  double slice_upper = 0.0;
  int slice_points = 21;

  // [optimize], [initial] and [initial_ranges]
  double eta = 1e-6;
  std::vector<std::string> free;
  int outer_max_iters = 500;
  double grad_tol = 1e-6;
  double divergence_factor = 10.0;
  int runs = 1;
  std::map<std::string, double> initial;
  std::map<std::string, Interval> initial_ranges;

  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

/// INI text listing every field; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& c);

}  // namespace diffddp
