#include "diffddp/cost.hpp"

#include <fmt/format.h>

namespace diffddp {

QuadraticGoalCost::QuadraticGoalCost(VectorXd goal, double control_weight, int qf_index,
                                     int control_dim)
    : goal_(std::move(goal)), r_(control_weight), qf_index_(qf_index), nu_(control_dim) {
  if (!(r_ > 0.0)) throw PreconditionError(fmt::format("control weight must be > 0, got {}", r_));
}

double QuadraticGoalCost::terminal_weight(const VectorXd& theta) const {
  if (qf_index_ >= theta.size()) {
    throw DimensionError(
        fmt::format("cost reads theta[{}] but theta has {} entries", qf_index_, theta.size()));
  }
  const double qf = theta[qf_index_];
  if (!(qf > 0.0)) throw PreconditionError(fmt::format("q_f must be > 0, got {}", qf));
  return qf;
}

void QuadraticGoalCost::check(int knot, int horizon) const {
  if (knot < 0 || knot >= horizon) {
    throw PreconditionError(fmt::format("knot {} outside [0, {})", knot, horizon));
  }
}

double QuadraticGoalCost::eval(const VectorXd& x, const VectorXd& u, const VectorXd& theta,
                               int knot, int horizon) const {
  check(knot, horizon);
  if (knot == horizon - 1) return terminal_weight(theta) * (x - goal_).squaredNorm();
  return r_ * u.squaredNorm();
}

CostDerivatives QuadraticGoalCost::derivatives(const VectorXd& x, const VectorXd& u,
                                               const VectorXd& theta, int knot,
                                               int horizon) const {
  check(knot, horizon);
  const int nx = static_cast<int>(goal_.size());
  const int np = static_cast<int>(theta.size());
  const double qf = terminal_weight(theta);
  const bool terminal = knot == horizon - 1;
  const int nu = terminal ? 0 : nu_;

  CostDerivatives d;
  d.lx = VectorXd::Zero(nx);
  d.lu = VectorXd::Zero(nu);
  d.lxx = MatrixXd::Zero(nx, nx);
  d.lxu = MatrixXd::Zero(nx, nu);
  d.luu = MatrixXd::Zero(nu, nu);
  d.lxtheta = MatrixXd::Zero(nx, np);
  d.lutheta = MatrixXd::Zero(nu, np);
  if (terminal) {
    const VectorXd e = x - goal_;
    d.lx = 2.0 * qf * e;
    d.lxx = 2.0 * qf * MatrixXd::Identity(nx, nx);
    d.lxtheta.col(qf_index_) = 2.0 * e;
  } else {
    d.lu = 2.0 * r_ * u;
    d.luu = 2.0 * r_ * MatrixXd::Identity(nu, nu);
  }
  return d;
}

}  // namespace diffddp
