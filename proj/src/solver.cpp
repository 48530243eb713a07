#include "diffddp/solver.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>

namespace diffddp {

std::string_view to_string(Method m) { return m == Method::kDdp ? "ddp" : "ilqr"; }

Method parse_method(std::string_view s) {
  if (s == "ddp") return Method::kDdp;
  if (s == "ilqr") return Method::kIlqr;
  throw PreconditionError(fmt::format("unknown method '{}' (expected ddp or ilqr)", s));
}

void Problem::check() const {
  if (!model || !cost) throw PreconditionError("Problem: model and cost must be set");
  if (horizon < 2) throw PreconditionError(fmt::format("Problem: horizon {} < 2", horizon));
  if (x1.size() != model->state_dim()) {
    throw DimensionError(fmt::format("Problem: x1 has {} entries, model state has {}", x1.size(),
                                     model->state_dim()));
  }
}

namespace {

MatrixXd symmetrized(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

std::optional<BackwardPassResult> backward_pass(const Trajectory& traj,
                                                std::span<const DerivativeBundle> dynamics_tape,
                                                std::span<const CostDerivatives> cost_tape,
                                                Method mode, double reg) {
  const int T = traj.horizon();
  if (static_cast<int>(dynamics_tape.size()) != T - 1 ||
      static_cast<int>(cost_tape.size()) != T) {
    throw DimensionError(fmt::format("backward_pass: horizon {} with {} dynamics and {} cost knots",
                                     T, dynamics_tape.size(), cost_tape.size()));
  }
  if (reg < 0.0) throw PreconditionError("backward_pass: reg must be >= 0");
  const bool second_order = mode == Method::kDdp;
  if (second_order) {
    for (const auto& d : dynamics_tape) {
      if (d.order == DerivativeOrder::kFirst) {
        throw PreconditionError("backward_pass: ddp mode needs second-order dynamics tensors");
      }
    }
  }

  BackwardPassResult out;
  out.value_tape.resize(T);
  out.q_tape.resize(T - 1);
  out.gains.k.resize(T - 1);
  out.gains.K.resize(T - 1);

  out.value_tape[T - 1].Vx = cost_tape[T - 1].lx;
  out.value_tape[T - 1].Vxx = cost_tape[T - 1].lxx;

  for (int t = T - 2; t >= 0; --t) {
    const DerivativeBundle& f = dynamics_tape[t];
    const CostDerivatives& l = cost_tape[t];
    const VectorXd& Vx = out.value_tape[t + 1].Vx;
    const MatrixXd& Vxx = out.value_tape[t + 1].Vxx;
    QExpansion& q = out.q_tape[t];

    q.Qx = l.lx + f.fx.transpose() * Vx;
    q.Qu = l.lu + f.fu.transpose() * Vx;
    q.Qxx = l.lxx + f.fx.transpose() * Vxx * f.fx;
    q.Quu = l.luu + f.fu.transpose() * Vxx * f.fu;
    q.Qux = l.lxu.transpose() + f.fu.transpose() * Vxx * f.fx;
    if (second_order) {
      q.Qxx += tensor_contract_left(Vx, f.fxx);
      q.Quu += tensor_contract_left(Vx, f.fuu);
      q.Qux += tensor_contract_left(Vx, f.fxu).transpose();
    }
    q.Qxx = symmetrized(q.Qxx);
    q.Quu = symmetrized(q.Quu);

    const int nu = static_cast<int>(q.Quu.rows());
    const MatrixXd Quu_reg = q.Quu + reg * MatrixXd::Identity(nu, nu);
    Eigen::LLT<MatrixXd> llt(Quu_reg);
    if (llt.info() != Eigen::Success) return std::nullopt;

    VectorXd& k = out.gains.k[t];
    MatrixXd& K = out.gains.K[t];
    k = llt.solve(q.Qu);
    K = llt.solve(q.Qux);
    if (!k.allFinite() || !K.allFinite()) return std::nullopt;

    out.conv_metric += q.Qu.dot(k);

    ValueExpansion& v = out.value_tape[t];
    v.Vx = q.Qx - K.transpose() * q.Qu - q.Qux.transpose() * k + K.transpose() * (q.Quu * k);
    v.Vxx = q.Qxx - K.transpose() * q.Qux - q.Qux.transpose() * K + K.transpose() * q.Quu * K;
    v.Vxx = symmetrized(v.Vxx);
  }
  return out;
}

std::optional<Trajectory> forward_pass(const DynamicsModel& model, const VectorXd& theta,
                                       const Trajectory& ref, const GainSchedule& gains,
                                       double alpha) {
  const int T = ref.horizon();
  Trajectory out;
  out.dt = ref.dt;
  out.states.resize(T);
  out.controls.resize(T - 1);
  out.states[0] = ref.states[0];
  try {
    for (int t = 0; t < T - 1; ++t) {
      out.controls[t] = ref.controls[t] - alpha * gains.k[t] -
                        gains.K[t] * (out.states[t] - ref.states[t]);
      out.states[t + 1] = model.step(out.states[t], out.controls[t], theta);
    }
  } catch (const NonFiniteError&) {
    return std::nullopt;
  }
  return out;
}

Trajectory rollout(const DynamicsModel& model, const VectorXd& theta, const VectorXd& x1,
                   std::span<const VectorXd> controls) {
  Trajectory out;
  out.dt = model.dt();
  out.states.reserve(controls.size() + 1);
  out.states.push_back(x1);
  out.controls.assign(controls.begin(), controls.end());
  for (std::size_t t = 0; t < controls.size(); ++t) {
    try {
      out.states.push_back(model.step(out.states[t], controls[t], theta));
    } catch (const NonFiniteError& e) {
      throw NonFiniteError(fmt::format("rollout: {} at knot {}", e.what(), t),
                           static_cast<int>(t));
    }
  }
  return out;
}

double total_cost(const CostModel& cost, const Trajectory& traj, const VectorXd& theta) {
  const int T = traj.horizon();
  double j = 0.0;
  for (int t = 0; t < T - 1; ++t) j += cost.eval(traj.states[t], traj.controls[t], theta, t, T);
  j += cost.eval(traj.states[T - 1], VectorXd(), theta, T - 1, T);
  return j;
}

std::vector<DerivativeBundle> compute_derivative_tape(const DynamicsModel& model,
                                                      const Trajectory& traj,
                                                      const VectorXd& theta,
                                                      DerivativeOrder order) {
  std::vector<DerivativeBundle> tape;
  tape.reserve(traj.controls.size());
  for (std::size_t t = 0; t < traj.controls.size(); ++t) {
    try {
      tape.push_back(model.derivatives(traj.states[t], traj.controls[t], theta, order));
    } catch (const NonFiniteError& e) {
      throw NonFiniteError(fmt::format("{} at knot {}", e.what(), t), static_cast<int>(t));
    }
  }
  return tape;
}

std::vector<CostDerivatives> compute_cost_tape(const CostModel& cost, const Trajectory& traj,
                                               const VectorXd& theta) {
  const int T = traj.horizon();
  std::vector<CostDerivatives> tape;
  tape.reserve(T);
  for (int t = 0; t < T - 1; ++t) {
    tape.push_back(cost.derivatives(traj.states[t], traj.controls[t], theta, t, T));
  }
  tape.push_back(cost.derivatives(traj.states[T - 1], VectorXd(), theta, T - 1, T));
  return tape;
}

double max_gap(const DynamicsModel& model, const Trajectory& traj, const VectorXd& theta) {
  double gap = 0.0;
  for (std::size_t t = 0; t < traj.controls.size(); ++t) {
    const VectorXd next = model.step(traj.states[t], traj.controls[t], theta);
    gap = std::max(gap, (next - traj.states[t + 1]).lpNorm<Eigen::Infinity>());
  }
  return gap;
}

namespace {

double increased(double reg, const SolverOptions& opts) {
  return reg <= 0.0 ? opts.reg_min : reg * opts.reg_increase;
}

double decreased(double reg, const SolverOptions& opts) {
  const double r = reg / opts.reg_decrease;
  return r < opts.reg_min ? 0.0 : r;
}

}  // namespace

SolveResult solve(const Problem& problem, const VectorXd& theta, Method mode,
                  const SolverOptions& opts, std::span<const VectorXd> initial_controls) {
  problem.check();
  const DynamicsModel& model = *problem.model;
  const CostModel& cost = *problem.cost;
  const int T = problem.horizon;

  std::vector<VectorXd> controls;
  if (initial_controls.empty()) {
    controls.assign(T - 1, VectorXd::Zero(model.control_dim()));
  } else {
    if (static_cast<int>(initial_controls.size()) != T - 1) {
      throw DimensionError(fmt::format("solve: warm start has {} controls, horizon needs {}",
                                       initial_controls.size(), T - 1));
    }
    controls.assign(initial_controls.begin(), initial_controls.end());
  }

  SolveResult res;
  res.mode = mode;
  res.theta = theta;
  res.trajectory = rollout(model, theta, problem.x1, controls);
  res.cost = total_cost(cost, res.trajectory, theta);
  res.cost_history.push_back(res.cost);

  const DerivativeOrder order =
      mode == Method::kDdp ? DerivativeOrder::kSecond : DerivativeOrder::kFirst;
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  double reg = opts.reg_init;

  for (;;) {
    const auto dtape = compute_derivative_tape(model, res.trajectory, theta, order);
    res.cost_tape = compute_cost_tape(cost, res.trajectory, theta);

    std::optional<BackwardPassResult> bp;
    while (!(bp = backward_pass(res.trajectory, dtape, res.cost_tape, mode, reg))) {
      reg = increased(reg, opts);
      if (reg > opts.reg_max) {
        throw SolverError(fmt::format(
            "backward pass rejected with regularization above {} (iteration {})", opts.reg_max,
            res.iterations));
      }
    }
    res.q_tape = std::move(bp->q_tape);
    res.value_tape = std::move(bp->value_tape);
    res.gains = std::move(bp->gains);
    res.conv_metric = bp->conv_metric;
    res.final_reg = reg;

    if (res.conv_metric < opts.conv_threshold) {
      res.converged = true;
      break;
    }
    if (res.iterations >= opts.max_iters) break;
    ++res.iterations;

    // Once the predicted decrease is at the rounding level of the cost, a
    // step that leaves the cost unchanged up to that level is accepted too.
    const double noise = 64.0 * kEps * (1.0 + std::abs(res.cost));
    const bool near_optimum = res.conv_metric < 100.0 * noise;
    bool accepted = false;
    double alpha = 1.0;
    for (int i = 0; i < opts.line_search_steps; ++i, alpha *= 0.5) {
      auto candidate = forward_pass(model, theta, res.trajectory, res.gains, alpha);
      if (!candidate) continue;
      const double c = total_cost(cost, *candidate, theta);
      if (c < res.cost || (near_optimum && c <= res.cost + noise)) {
        res.trajectory = std::move(*candidate);
        res.cost = c;
        res.cost_history.push_back(c);
        accepted = true;
        break;
      }
    }
    if (accepted) {
      reg = decreased(reg, opts);
    } else {
      reg = increased(reg, opts);
      if (reg > opts.reg_max) break;
    }
  }

  res.derivative_tape =
      compute_derivative_tape(model, res.trajectory, theta, DerivativeOrder::kFull);
  return res;
}

}  // namespace diffddp
