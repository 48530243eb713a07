#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "diffddp/solver.hpp"
#include "diffddp/types.hpp"
#include "diffddp/upper_level.hpp"

namespace diffddp {

/// Raised when the auxiliary LQR or the dense KKT system cannot be solved.
class SensitivityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when asked to differentiate through a solve that did not converge.
class NotConvergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solution of the differential KKT system
///   K [d_x; d_u; d_lambda] = -[dJ/dx; dJ/du; 0]
/// around a converged trajectory. Multipliers are indexed by the state
/// they constrain: lambda[0] belongs to the initial condition x_0 = x1 and
/// lambda[t + 1] to x_{t+1} = f(x_t, u_t).
struct SensitivitySolution {
  std::vector<VectorXd> dx;           // T entries, dx[0] == 0
  std::vector<VectorXd> du;           // T-1 entries
  std::vector<VectorXd> dlambda;      // T entries, dlambda[0] = dJ/dx1
  std::vector<VectorXd> lambda_star;  // T entries
};

struct GradientResult {
  VectorXd grad;
  Method method = Method::kDdp;
  /// Row t holds knot t's share of the chain-rule sum (T rows, n_theta columns).
  MatrixXd knot_contributions;
};

/// Optimal multipliers by the backward recursion
///   lambda_{T-1} = h_x,  lambda_t = l_x + f_x' lambda_{t+1}.
std::vector<VectorXd> multipliers(const SolveResult& result);

/// Riccati solve of the auxiliary LQR whose Hessian is the Lagrangian
/// Hessian (with lambda . f_** contractions iff derivative_mode == kDdp)
/// and whose linear terms are the upper-level gradients. Never regularized.
SensitivitySolution differential_lqr(const SolveResult& result,
                                     const UpperLevelGradients& ul_grads,
                                     Method derivative_mode);

struct KktSystem {
  MatrixXd matrix;
  VectorXd rhs;
};

/// Explicit KKT matrix and right-hand side. Unknowns are ordered
/// [x_0, u_0, x_1, u_1, ..., x_{T-1}, lambda_0, ..., lambda_{T-1}].
KktSystem assemble_kkt(const SolveResult& result, const UpperLevelGradients& ul_grads,
                       Method derivative_mode);

/// Same system as differential_lqr, solved by dense LU. Reference for small T.
SensitivitySolution dense_kkt_oracle(const SolveResult& result,
                                     const UpperLevelGradients& ul_grads,
                                     Method derivative_mode);

struct GradThetaOptions {
  /// Adds f_xx . dx_t/dtheta and f_ux . dx_t/dtheta to the parameter
  /// derivatives of f_x and f_u, with dx_t/dtheta propagated open-loop.
  /// Off by default: these terms do not belong in the implicit gradient.
  bool rollout_state_sensitivity = false;
};

/// dJ/dtheta_i = dJ/dtheta_i (explicit) + sum_t <lambda_{t+1} (x) d_tau_t, [f_xtheta_i; f_utheta_i]>
///               + <dlambda_{t+1}, f_theta_i> + <d_tau_t, [l_xtheta_i; l_utheta_i]>.
GradientResult grad_theta(const SolveResult& result, const UpperLevelGradients& ul_grads,
                          const SensitivitySolution& sens,
                          std::span<const DerivativeBundle> full_tape,
                          GradThetaOptions opts = {});

/// multipliers -> differential_lqr -> grad_theta on an existing solve.
GradientResult differentiate(const Problem& problem, const SolveResult& result,
                             const UpperLevelCost& ul_cost, Method derivative_mode);

/// End-to-end: solve at theta, then differentiate. Throws NotConvergedError
/// if the inner solve does not converge.
GradientResult diff_ddp(const Problem& problem, const UpperLevelCost& ul_cost,
                        const ParamVector& theta, Method derivative_mode,
                        const SolverOptions& solver_opts = {}, Method solve_mode = Method::kDdp);

}  // namespace diffddp
