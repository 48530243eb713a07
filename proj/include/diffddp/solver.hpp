#pragma once

#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "diffddp/cost.hpp"
#include "diffddp/dynamics.hpp"
#include "diffddp/types.hpp"

namespace diffddp {

/// DDP keeps the V'_x . f_** tensor contractions in the Q expansion; iLQR drops them.
enum class Method { kDdp, kIlqr };

std::string_view to_string(Method m);
Method parse_method(std::string_view s);

/// Raised when the backward pass keeps rejecting after reg exceeds reg_max.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QExpansion {
  VectorXd Qx;
  VectorXd Qu;
  MatrixXd Qxx;
  MatrixXd Quu;
  MatrixXd Qux;
};

struct ValueExpansion {
  VectorXd Vx;
  MatrixXd Vxx;
};

/// Control update du_t = -k_t - K_t dx_t.
struct GainSchedule {
  std::vector<VectorXd> k;
  std::vector<MatrixXd> K;
};

/// A trajectory optimization problem with fixed initial state. The
/// timestep comes from the model.
struct Problem {
  std::shared_ptr<const DynamicsModel> model;
  std::shared_ptr<const CostModel> cost;
  VectorXd x1;
  int horizon = 0;

  void check() const;
};

struct SolverOptions {
  int max_iters = 200;
  double conv_threshold = 1e-12;
  double reg_init = 0.0;
  /// First nonzero regularization used after a rejection at reg == 0.
  double reg_min = 1e-8;
  double reg_max = 1e6;
  double reg_increase = 10.0;
  double reg_decrease = 2.0;
  /// Backtracking schedule alpha = 1, 1/2, ..., 2^-(line_search_steps - 1).
  int line_search_steps = 7;

  bool operator==(const SolverOptions&) const = default;
};

struct SolveResult {
  Trajectory trajectory;
  VectorXd theta;
  /// Tapes from the final backward pass, evaluated at `trajectory`.
  std::vector<ValueExpansion> value_tape;  // T entries
  std::vector<QExpansion> q_tape;          // T-1 entries
  GainSchedule gains;
  /// Full-order dynamics derivatives (T-1 knots) and cost derivatives
  /// (T knots) at `trajectory`, regardless of `mode`.
  std::vector<DerivativeBundle> derivative_tape;
  std::vector<CostDerivatives> cost_tape;
  double cost = 0.0;
  bool converged = false;
  double conv_metric = 0.0;
  int iterations = 0;
  double final_reg = 0.0;
  Method mode = Method::kDdp;
  /// Total cost after each accepted step, starting with the initial rollout.
  std::vector<double> cost_history;
};

struct BackwardPassResult {
  std::vector<QExpansion> q_tape;
  std::vector<ValueExpansion> value_tape;
  GainSchedule gains;
  /// sum_t Qu' (Quu + reg I)^-1 Qu
  double conv_metric = 0.0;
};

/// Riccati sweep from knot T-1 down to 0. Returns nullopt when some
/// Quu + reg I is not positive definite.
std::optional<BackwardPassResult> backward_pass(const Trajectory& traj,
                                                std::span<const DerivativeBundle> dynamics_tape,
                                                std::span<const CostDerivatives> cost_tape,
                                                Method mode, double reg);

/// Closed-loop nonlinear rollout of the gains around `ref`. Returns nullopt
/// if the rollout leaves the finite range.
std::optional<Trajectory> forward_pass(const DynamicsModel& model, const VectorXd& theta,
                                       const Trajectory& ref, const GainSchedule& gains,
                                       double alpha);

/// Open-loop rollout of `controls` from x1. Throws NonFiniteError with the knot.
Trajectory rollout(const DynamicsModel& model, const VectorXd& theta, const VectorXd& x1,
                   std::span<const VectorXd> controls);

double total_cost(const CostModel& cost, const Trajectory& traj, const VectorXd& theta);

std::vector<DerivativeBundle> compute_derivative_tape(const DynamicsModel& model,
                                                      const Trajectory& traj,
                                                      const VectorXd& theta,
                                                      DerivativeOrder order);
std::vector<CostDerivatives> compute_cost_tape(const CostModel& cost, const Trajectory& traj,
                                               const VectorXd& theta);

/// max_t |f(x_t, u_t) - x_{t+1}|_inf
double max_gap(const DynamicsModel& model, const Trajectory& traj, const VectorXd& theta);

/// Alternates backward and forward passes until sum_t Qu' Quu^-1 Qu falls
/// below opts.conv_threshold. `initial_controls` warm-starts the first
/// rollout; empty means zero controls.
SolveResult solve(const Problem& problem, const VectorXd& theta, Method mode,
                  const SolverOptions& opts = {},
                  std::span<const VectorXd> initial_controls = {});

}  // namespace diffddp
