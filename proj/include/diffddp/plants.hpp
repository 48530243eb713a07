#pragma once

#include <memory>
#include <string_view>
#include <vector>

#include "diffddp/cost.hpp"
#include "diffddp/dynamics.hpp"
#include "diffddp/solver.hpp"
#include "diffddp/types.hpp"

namespace diffddp {

enum class PlantKind { kPendulum, kDoublePendulum, kLinear };

std::string_view to_string(PlantKind k);
PlantKind parse_plant(std::string_view s);

struct PlantOptions {
  int horizon = 50;
  double dt = 0.01;
  double control_weight = 1e-2;
  /// Empty means the plant default (hanging at rest / upright goal).
  VectorXd x1;
  VectorXd goal;
};

/// A swing-up (or regulation) problem together with its parameter layout.
struct Plant {
  PlantKind kind = PlantKind::kPendulum;
  Problem problem;
  std::shared_ptr<const QuadraticGoalCost> cost;
  /// Nominal parameters with names and bounds.
  ParamVector theta;
  /// Finite-difference step for component i is h * |theta_i| when true, h otherwise.
  std::vector<bool> relative_step;
  /// Number of generalized coordinates (velocity block is the state's tail).
  int dof = 1;
  /// Indices of link-length components; empty for the linear plant.
  std::vector<int> length_indices;
};

/// theta = {rho, qf}; x1 = [0, 0], goal = [pi, 0].
Plant make_pendulum(double rho = 0.5, double qf = 1e3, const PlantOptions& opts = {});

/// theta = {l1, l2, qf}; x1 = 0, goal = [pi, 0, 0, 0].
Plant make_double_pendulum(double l1 = 0.375, double l2 = 0.375, double qf = 1e3,
                           const PlantOptions& opts = {});

/// Double integrator [q, qdot] with theta = {qf}; x1 = [1, 0], goal = 0.
Plant make_linear(double qf = 1e3, const PlantOptions& opts = {});

Plant make_plant(PlantKind kind, const PlantOptions& opts = {});

/// Optimal controls at `theta`; the reference for imitation costs.
/// Throws SolverError if the solve does not converge.
std::vector<VectorXd> reference_controls(const Plant& plant, const VectorXd& theta,
                                         Method mode = Method::kDdp,
                                         const SolverOptions& opts = {});

}  // namespace diffddp
