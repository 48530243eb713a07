#pragma once

#include <string_view>
#include <vector>

#include "diffddp/sensitivity.hpp"
#include "diffddp/solver.hpp"
#include "diffddp/types.hpp"
#include "diffddp/upper_level.hpp"

namespace diffddp {

enum class StopReason { kGradTol, kMaxIters, kInnerFailure, kDiverged };

std::string_view to_string(StopReason r);

struct BilevelIterate {
  VectorXd theta;
  double ul_cost = 0.0;
  /// Largest |grad_i| over components with nonzero learning rate.
  double grad_inf = 0.0;
  VectorXd grad;
  int inner_iterations = 0;
  bool converged = false;
};

struct BilevelRun {
  std::vector<BilevelIterate> history;
  VectorXd final_theta;
  StopReason stop = StopReason::kMaxIters;
};

struct BilevelOptions {
  double grad_tol = 1e-6;
  /// Number of parameter updates before giving up.
  int max_iters = 500;
  /// Stop as diverged once J_UL exceeds this multiple of its initial value.
  double divergence_factor = 10.0;
  Method derivative_mode = Method::kDdp;
  Method solve_mode = Method::kDdp;
  SolverOptions solver;
};

/// Per-component learning rates: eta on the components named in `free`, 0 elsewhere.
VectorXd masked_learning_rate(const ParamVector& theta, double eta,
                              const std::vector<std::string>& free);

/// Projected gradient descent theta <- clamp(theta - eta .* grad). Each
/// inner solve is warm-started from the previous optimum and retried cold
/// when that fails. Components with eta_i == 0 never move.
BilevelRun optimize(const Problem& problem, const UpperLevelCost& ul_cost,
                    const ParamVector& theta0, const VectorXd& eta,
                    const BilevelOptions& opts = {});

}  // namespace diffddp
