#include "diffddp/upper_level.hpp"

#include <fmt/format.h>

#include <cmath>

namespace diffddp {

namespace {

UpperLevelGradients zero_gradients(const Trajectory& traj, const VectorXd& theta) {
  UpperLevelGradients g;
  for (const auto& x : traj.states) g.dx.push_back(VectorXd::Zero(x.size()));
  for (const auto& u : traj.controls) g.du.push_back(VectorXd::Zero(u.size()));
  g.dtheta = VectorXd::Zero(theta.size());
  return g;
}

double velocity_energy(const Trajectory& traj, int dof) {
  double j = 0.0;
  for (const auto& x : traj.states) j += x.tail(dof).squaredNorm();
  return j;
}

void add_velocity_energy_gradient(const Trajectory& traj, int dof, UpperLevelGradients& g) {
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    g.dx[t].tail(dof) += 2.0 * traj.states[t].tail(dof);
  }
}

}  // namespace

ImitationCost::ImitationCost(std::vector<VectorXd> reference_controls, double eps)
    : reference_(std::move(reference_controls)), eps_(eps) {}

double ImitationCost::eval(const Trajectory& traj, const VectorXd& /*theta*/) const {
  if (traj.controls.size() != reference_.size()) {
    throw DimensionError(fmt::format("imitation cost: {} controls vs {} reference controls",
                                     traj.controls.size(), reference_.size()));
  }
  double j = 0.0;
  for (std::size_t t = 0; t < reference_.size(); ++t) {
    j += std::sqrt((traj.controls[t] - reference_[t]).squaredNorm() + eps_ * eps_);
  }
  return j;
}

UpperLevelGradients ImitationCost::gradients(const Trajectory& traj,
                                             const VectorXd& theta) const {
  if (traj.controls.size() != reference_.size()) {
    throw DimensionError(fmt::format("imitation cost: {} controls vs {} reference controls",
                                     traj.controls.size(), reference_.size()));
  }
  UpperLevelGradients g = zero_gradients(traj, theta);
  for (std::size_t t = 0; t < reference_.size(); ++t) {
    const VectorXd e = traj.controls[t] - reference_[t];
    g.du[t] = e / std::sqrt(e.squaredNorm() + eps_ * eps_);
  }
  return g;
}

VelocityImitationCost::VelocityImitationCost(std::vector<VectorXd> reference_controls, int dof,
                                             double eps)
    : imitation_(std::move(reference_controls), eps), dof_(dof) {}

double VelocityImitationCost::eval(const Trajectory& traj, const VectorXd& theta) const {
  return imitation_.eval(traj, theta) + velocity_energy(traj, dof_);
}

UpperLevelGradients VelocityImitationCost::gradients(const Trajectory& traj,
                                                     const VectorXd& theta) const {
  UpperLevelGradients g = imitation_.gradients(traj, theta);
  add_velocity_energy_gradient(traj, dof_, g);
  return g;
}

CoDesignCost::CoDesignCost(int dof, std::vector<int> length_indices, double reach_distance,
                           double hinge_weight)
    : dof_(dof),
      length_indices_(std::move(length_indices)),
      reach_distance_(reach_distance),
      hinge_weight_(hinge_weight) {}

double CoDesignCost::reach(const VectorXd& theta) const {
  double s = 0.0;
  for (int i : length_indices_) s += theta[i] * theta[i];
  return std::sqrt(s);
}

double CoDesignCost::eval(const Trajectory& traj, const VectorXd& theta) const {
  const double shortfall = std::max(0.0, reach_distance_ - reach(theta));
  return velocity_energy(traj, dof_) + hinge_weight_ * shortfall * shortfall;
}

UpperLevelGradients CoDesignCost::gradients(const Trajectory& traj,
                                            const VectorXd& theta) const {
  UpperLevelGradients g = zero_gradients(traj, theta);
  add_velocity_energy_gradient(traj, dof_, g);
  const double r = reach(theta);
  const double shortfall = std::max(0.0, reach_distance_ - r);
  if (shortfall > 0.0) {
    for (int i : length_indices_) {
      g.dtheta[i] += -2.0 * hinge_weight_ * shortfall * theta[i] / r;
    }
  }
  return g;
}

UpperLevelGradients fd_upper_level_gradients(const UpperLevelCost& cost, const Trajectory& traj,
                                             const VectorXd& theta, double h) {
  UpperLevelGradients g = zero_gradients(traj, theta);
  Trajectory tr = traj;
  VectorXd th = theta;
  auto central = [&](double& slot, auto&& evaluate) {
    const double saved = slot;
    slot = saved + h;
    const double plus = evaluate();
    slot = saved - h;
    const double minus = evaluate();
    slot = saved;
    return (plus - minus) / (2.0 * h);
  };
  auto j = [&] { return cost.eval(tr, th); };
  for (std::size_t t = 0; t < tr.states.size(); ++t)
    for (int i = 0; i < tr.states[t].size(); ++i) g.dx[t][i] = central(tr.states[t][i], j);
  for (std::size_t t = 0; t < tr.controls.size(); ++t)
    for (int i = 0; i < tr.controls[t].size(); ++i) g.du[t][i] = central(tr.controls[t][i], j);
  for (int i = 0; i < th.size(); ++i) g.dtheta[i] = central(th[i], j);
  return g;
}

}  // namespace diffddp
