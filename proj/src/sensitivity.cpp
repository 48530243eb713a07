#include "diffddp/sensitivity.hpp"

#include <fmt/format.h>

namespace diffddp {

namespace {

void check_shapes(const SolveResult& r, const UpperLevelGradients& g) {
  const int T = r.trajectory.horizon();
  if (static_cast<int>(r.derivative_tape.size()) != T - 1 ||
      static_cast<int>(r.cost_tape.size()) != T) {
    throw DimensionError(fmt::format("sensitivity: solve result has {} dynamics / {} cost knots "
                                     "for horizon {}",
                                     r.derivative_tape.size(), r.cost_tape.size(), T));
  }
  if (static_cast<int>(g.dx.size()) != T || static_cast<int>(g.du.size()) != T - 1) {
    throw DimensionError(fmt::format("sensitivity: upper-level gradients have {} state / {} "
                                     "control entries for horizon {}",
                                     g.dx.size(), g.du.size(), T));
  }
  for (const auto& d : r.derivative_tape) {
    if (d.order == DerivativeOrder::kFirst) {
      throw PreconditionError("sensitivity: derivative tape lacks second-order tensors");
    }
  }
}

// Lagrangian Hessian blocks at one knot.
struct HessianBlocks {
  MatrixXd xx, xu, uu;
};

HessianBlocks lagrangian_hessian(const SolveResult& r, const std::vector<VectorXd>& lambda,
                                 int t, Method mode) {
  const CostDerivatives& l = r.cost_tape[t];
  HessianBlocks h{l.lxx, l.lxu, l.luu};
  const int T = r.trajectory.horizon();
  if (t < T - 1 && mode == Method::kDdp) {
    const DerivativeBundle& f = r.derivative_tape[t];
    h.xx += tensor_contract_left(lambda[t + 1], f.fxx);
    h.xu += tensor_contract_left(lambda[t + 1], f.fxu);
    h.uu += tensor_contract_left(lambda[t + 1], f.fuu);
  }
  return h;
}

}  // namespace

std::vector<VectorXd> multipliers(const SolveResult& result) {
  const int T = result.trajectory.horizon();
  if (static_cast<int>(result.cost_tape.size()) != T ||
      static_cast<int>(result.derivative_tape.size()) != T - 1) {
    throw DimensionError("multipliers: tapes do not match the trajectory horizon");
  }
  // Written in absolute coordinates the recursion carries l_xx x* + l_xu u*
  // and an affine offset; at the expansion point those cancel to l_x.
  std::vector<VectorXd> lambda(T);
  lambda[T - 1] = result.cost_tape[T - 1].lx;
  for (int t = T - 2; t >= 0; --t) {
    lambda[t] = result.cost_tape[t].lx + result.derivative_tape[t].fx.transpose() * lambda[t + 1];
  }
  return lambda;
}

SensitivitySolution differential_lqr(const SolveResult& result,
                                     const UpperLevelGradients& ul_grads,
                                     Method derivative_mode) {
  check_shapes(result, ul_grads);
  const int T = result.trajectory.horizon();
  SensitivitySolution s;
  s.lambda_star = multipliers(result);

  std::vector<VectorXd> Vx(T);
  std::vector<MatrixXd> Vxx(T);
  std::vector<VectorXd> k(T - 1);
  std::vector<MatrixXd> K(T - 1);

  Vx[T - 1] = ul_grads.dx[T - 1];
  Vxx[T - 1] = result.cost_tape[T - 1].lxx;
  for (int t = T - 2; t >= 0; --t) {
    const DerivativeBundle& f = result.derivative_tape[t];
    const HessianBlocks H = lagrangian_hessian(result, s.lambda_star, t, derivative_mode);
    const VectorXd Qx = ul_grads.dx[t] + f.fx.transpose() * Vx[t + 1];
    const VectorXd Qu = ul_grads.du[t] + f.fu.transpose() * Vx[t + 1];
    const MatrixXd Qxx = H.xx + f.fx.transpose() * Vxx[t + 1] * f.fx;
    MatrixXd Quu = H.uu + f.fu.transpose() * Vxx[t + 1] * f.fu;
    const MatrixXd Qux = H.xu.transpose() + f.fu.transpose() * Vxx[t + 1] * f.fx;
    Quu = 0.5 * (Quu + Quu.transpose());

    Eigen::LLT<MatrixXd> llt(Quu);
    if (llt.info() != Eigen::Success) {
      throw SensitivityError(fmt::format(
          "differential_lqr: auxiliary Quu is not positive definite at knot {} ({} derivatives)",
          t, to_string(derivative_mode)));
    }
    k[t] = llt.solve(Qu);
    K[t] = llt.solve(Qux);
    Vx[t] = Qx - K[t].transpose() * Qu;
    Vxx[t] = Qxx - Qux.transpose() * K[t];
    Vxx[t] = 0.5 * (Vxx[t] + Vxx[t].transpose());
  }

  const int nx = static_cast<int>(result.trajectory.states[0].size());
  s.dx.resize(T);
  s.du.resize(T - 1);
  s.dlambda.resize(T);
  s.dx[0] = VectorXd::Zero(nx);
  for (int t = 0; t < T - 1; ++t) {
    const DerivativeBundle& f = result.derivative_tape[t];
    s.du[t] = -k[t] - K[t] * s.dx[t];
    s.dx[t + 1] = f.fx * s.dx[t] + f.fu * s.du[t];
  }
  for (int t = 0; t < T; ++t) s.dlambda[t] = Vx[t] + Vxx[t] * s.dx[t];
  return s;
}

KktSystem assemble_kkt(const SolveResult& result, const UpperLevelGradients& ul_grads,
                       Method derivative_mode) {
  check_shapes(result, ul_grads);
  const int T = result.trajectory.horizon();
  const int nx = static_cast<int>(result.trajectory.states[0].size());
  const int nu = static_cast<int>(result.trajectory.controls[0].size());
  const int primal = T * nx + (T - 1) * nu;
  const int n = primal + T * nx;
  auto xo = [&](int t) { return t * (nx + nu); };
  auto uo = [&](int t) { return t * (nx + nu) + nx; };
  auto mo = [&](int t) { return primal + t * nx; };

  const std::vector<VectorXd> lambda = multipliers(result);
  KktSystem sys{MatrixXd::Zero(n, n), VectorXd::Zero(n)};
  MatrixXd& K = sys.matrix;
  const MatrixXd I = MatrixXd::Identity(nx, nx);

  for (int t = 0; t < T; ++t) {
    const HessianBlocks H = lagrangian_hessian(result, lambda, t, derivative_mode);
    K.block(xo(t), xo(t), nx, nx) = H.xx;
    K.block(xo(t), mo(t), nx, nx) = -I;
    K.block(mo(t), xo(t), nx, nx) = -I;
    sys.rhs.segment(xo(t), nx) = -ul_grads.dx[t];
    if (t == T - 1) break;

    const DerivativeBundle& f = result.derivative_tape[t];
    K.block(xo(t), uo(t), nx, nu) = H.xu;
    K.block(uo(t), xo(t), nu, nx) = H.xu.transpose();
    K.block(uo(t), uo(t), nu, nu) = H.uu;
    K.block(xo(t), mo(t + 1), nx, nx) = f.fx.transpose();
    K.block(uo(t), mo(t + 1), nu, nx) = f.fu.transpose();
    K.block(mo(t + 1), xo(t), nx, nx) = f.fx;
    K.block(mo(t + 1), uo(t), nx, nu) = f.fu;
    sys.rhs.segment(uo(t), nu) = -ul_grads.du[t];
  }
  return sys;
}

SensitivitySolution dense_kkt_oracle(const SolveResult& result,
                                     const UpperLevelGradients& ul_grads,
                                     Method derivative_mode) {
  const KktSystem sys = assemble_kkt(result, ul_grads, derivative_mode);
  Eigen::FullPivLU<MatrixXd> lu(sys.matrix);
  if (!lu.isInvertible()) {
    throw SensitivityError(
        fmt::format("dense_kkt_oracle: KKT matrix is singular (rank {} of {})", lu.rank(),
                    sys.matrix.rows()));
  }
  const VectorXd sol = lu.solve(sys.rhs);

  const int T = result.trajectory.horizon();
  const int nx = static_cast<int>(result.trajectory.states[0].size());
  const int nu = static_cast<int>(result.trajectory.controls[0].size());
  const int primal = T * nx + (T - 1) * nu;
  SensitivitySolution s;
  s.lambda_star = multipliers(result);
  for (int t = 0; t < T; ++t) {
    s.dx.push_back(sol.segment(t * (nx + nu), nx));
    if (t < T - 1) s.du.push_back(sol.segment(t * (nx + nu) + nx, nu));
    s.dlambda.push_back(sol.segment(primal + t * nx, nx));
  }
  return s;
}

GradientResult grad_theta(const SolveResult& result, const UpperLevelGradients& ul_grads,
                          const SensitivitySolution& sens,
                          std::span<const DerivativeBundle> full_tape, GradThetaOptions opts) {
  const int T = result.trajectory.horizon();
  if (static_cast<int>(full_tape.size()) != T - 1) {
    throw DimensionError(fmt::format("grad_theta: tape has {} knots, horizon needs {}",
                                     full_tape.size(), T - 1));
  }
  for (std::size_t t = 0; t < full_tape.size(); ++t) {
    if (full_tape[t].order != DerivativeOrder::kFull) {
      throw PreconditionError(fmt::format(
          "grad_theta: knot {} is missing f_theta, f_xtheta and f_utheta blocks", t));
    }
  }
  const int np = static_cast<int>(ul_grads.dtheta.size());
  if (full_tape.front().ftheta.cols() != np) {
    throw DimensionError(fmt::format("grad_theta: tape has {} theta columns, gradient needs {}",
                                     full_tape.front().ftheta.cols(), np));
  }
  const int nx = static_cast<int>(result.trajectory.states[0].size());

  GradientResult out;
  out.knot_contributions = MatrixXd::Zero(T, np);
  for (int i = 0; i < np; ++i) {
    VectorXd state_sens = VectorXd::Zero(nx);  // dx_t/dtheta_i along the open-loop rollout
    for (int t = 0; t < T - 1; ++t) {
      const DerivativeBundle& f = full_tape[t];
      const CostDerivatives& l = result.cost_tape[t];
      MatrixXd dfx = f.fxtheta.column_slice(i);
      MatrixXd dfu = f.futheta.column_slice(i);
      if (opts.rollout_state_sensitivity) {
        for (int o = 0; o < nx; ++o) {
          dfx.row(o) += (f.fxx.slice(o) * state_sens).transpose();
          dfu.row(o) += (f.fxu.slice(o).transpose() * state_sens).transpose();
        }
      }
      const VectorXd& lam_next = sens.lambda_star[t + 1];
      double c = lam_next.dot(dfx * sens.dx[t] + dfu * sens.du[t]);
      c += sens.dlambda[t + 1].dot(f.ftheta.col(i));
      c += sens.dx[t].dot(l.lxtheta.col(i)) + sens.du[t].dot(l.lutheta.col(i));
      out.knot_contributions(t, i) = c;
      if (opts.rollout_state_sensitivity) state_sens = f.ftheta.col(i) + f.fx * state_sens;
    }
    out.knot_contributions(T - 1, i) = sens.dx[T - 1].dot(result.cost_tape[T - 1].lxtheta.col(i));
  }
  out.grad = ul_grads.dtheta + out.knot_contributions.colwise().sum().transpose();
  return out;
}

GradientResult differentiate(const Problem& problem, const SolveResult& result,
                             const UpperLevelCost& ul_cost, Method derivative_mode) {
  if (!result.converged) {
    throw NotConvergedError(fmt::format("refusing to differentiate a non-converged solve "
                                        "(metric {:.3e} after {} iterations)",
                                        result.conv_metric, result.iterations));
  }
  const double gap = max_gap(*problem.model, result.trajectory, result.theta);
  if (gap > 1e-12) {
    throw SensitivityError(fmt::format("differentiate: dynamics gap {:.3e} is not closed", gap));
  }
  const UpperLevelGradients g = ul_cost.gradients(result.trajectory, result.theta);
  const SensitivitySolution sens = differential_lqr(result, g, derivative_mode);
  GradientResult out = grad_theta(result, g, sens, result.derivative_tape);
  out.method = derivative_mode;
  return out;
}

GradientResult diff_ddp(const Problem& problem, const UpperLevelCost& ul_cost,
                        const ParamVector& theta, Method derivative_mode,
                        const SolverOptions& solver_opts, Method solve_mode) {
  const SolveResult result = solve(problem, theta.values(), solve_mode, solver_opts);
  return differentiate(problem, result, ul_cost, derivative_mode);
}

}  // namespace diffddp
