#include "diffddp/bilevel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace diffddp {

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::kGradTol:
      return "grad_tol";
    case StopReason::kMaxIters:
      return "max_iters";
    case StopReason::kInnerFailure:
      return "inner_failure";
    case StopReason::kDiverged:
      return "diverged";
  }
  return "?";
}

VectorXd masked_learning_rate(const ParamVector& theta, double eta,
                              const std::vector<std::string>& free) {
  VectorXd out = VectorXd::Zero(theta.size());
  for (const auto& name : free) out[theta.index_of(name)] = eta;
  return out;
}

namespace {

std::optional<SolveResult> try_solve(const Problem& problem, const VectorXd& theta, Method mode,
                                     const SolverOptions& opts,
                                     std::span<const VectorXd> warm) {
  try {
    SolveResult r = solve(problem, theta, mode, opts, warm);
    if (r.converged) return r;
  } catch (const SolverError&) {
  } catch (const NonFiniteError&) {
  }
  return std::nullopt;
}

}  // namespace

BilevelRun optimize(const Problem& problem, const UpperLevelCost& ul_cost,
                    const ParamVector& theta0, const VectorXd& eta, const BilevelOptions& opts) {
  if (eta.size() != theta0.size()) {
    throw DimensionError(fmt::format("optimize: {} learning rates for {} parameters", eta.size(),
                                     theta0.size()));
  }
  if ((eta.array() < 0.0).any() || !(eta.array() > 0.0).any()) {
    throw PreconditionError("optimize: learning rates must be >= 0 with at least one > 0");
  }
  for (int i = 0; i < theta0.size(); ++i) {
    if (!theta0.bounds()[i].contains(theta0[i])) {
      throw PreconditionError(fmt::format("optimize: initial {} = {} is outside its bounds",
                                          theta0.names()[i], theta0[i]));
    }
  }

  BilevelRun run;
  VectorXd theta = theta0.values();
  std::vector<VectorXd> warm;
  double initial_cost = 0.0;

  for (int k = 0;; ++k) {
    std::optional<SolveResult> res;
    if (!warm.empty()) res = try_solve(problem, theta, opts.solve_mode, opts.solver, warm);
    if (!res) res = try_solve(problem, theta, opts.solve_mode, opts.solver, {});

    BilevelIterate it;
    it.theta = theta;
    if (!res) {
      it.ul_cost = std::numeric_limits<double>::quiet_NaN();
      it.grad_inf = std::numeric_limits<double>::quiet_NaN();
      run.history.push_back(std::move(it));
      run.stop = StopReason::kInnerFailure;
      break;
    }
    it.converged = true;
    it.inner_iterations = res->iterations;
    it.ul_cost = ul_cost.eval(res->trajectory, theta);
    it.grad = differentiate(problem, *res, ul_cost, opts.derivative_mode).grad;
    for (int i = 0; i < theta.size(); ++i) {
      if (eta[i] > 0.0) it.grad_inf = std::max(it.grad_inf, std::abs(it.grad[i]));
    }
    if (k == 0) initial_cost = it.ul_cost;
    const VectorXd grad = it.grad;
    const double ul = it.ul_cost;
    const double grad_inf = it.grad_inf;
    run.history.push_back(std::move(it));

    if (!std::isfinite(ul) || !grad.allFinite() ||
        (k > 0 && ul > opts.divergence_factor * initial_cost && ul > initial_cost)) {
      run.stop = StopReason::kDiverged;
      break;
    }
    if (grad_inf < opts.grad_tol) {
      run.stop = StopReason::kGradTol;
      break;
    }
    if (k >= opts.max_iters) {
      run.stop = StopReason::kMaxIters;
      break;
    }
    const VectorXd stepped = theta - eta.cwiseProduct(grad);
    theta = theta0.clamped(stepped).values();
    warm = std::move(res->trajectory.controls);
  }
  run.final_theta = run.history.back().theta;
  return run;
}

}  // namespace diffddp
