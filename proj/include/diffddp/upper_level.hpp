#pragma once

#include <vector>

#include "diffddp/types.hpp"

namespace diffddp {

/// Partial derivatives of an upper-level cost along a trajectory.
struct UpperLevelGradients {
  std::vector<VectorXd> dx;  // T entries
  std::vector<VectorXd> du;  // T-1 entries
  VectorXd dtheta;           // explicit partial
};

/// Outer objective J_UL(X, U; theta) of a bi-level problem.
class UpperLevelCost {
 public:
  virtual ~UpperLevelCost() = default;
  virtual double eval(const Trajectory& traj, const VectorXd& theta) const = 0;
  virtual UpperLevelGradients gradients(const Trajectory& traj, const VectorXd& theta) const = 0;
};

/// sum_t sqrt(|u_t - u_t^ref|^2 + eps^2). The smoothing keeps the gradient
/// defined (and zero) where the controls match the reference.
class ImitationCost : public UpperLevelCost {
 public:
  explicit ImitationCost(std::vector<VectorXd> reference_controls, double eps = 1e-9);

  double eval(const Trajectory& traj, const VectorXd& theta) const override;
  UpperLevelGradients gradients(const Trajectory& traj, const VectorXd& theta) const override;

  const std::vector<VectorXd>& reference() const { return reference_; }

 private:
  std::vector<VectorXd> reference_;
  double eps_;
};

/// Imitation cost plus sum_{t=0}^{T-1} qdot_t' qdot_t.
class VelocityImitationCost final : public UpperLevelCost {
 public:
  VelocityImitationCost(std::vector<VectorXd> reference_controls, int dof, double eps = 1e-9);

  double eval(const Trajectory& traj, const VectorXd& theta) const override;
  UpperLevelGradients gradients(const Trajectory& traj, const VectorXd& theta) const override;

 private:
  ImitationCost imitation_;
  int dof_;
};

/// Joint-velocity energy plus a reachability hinge on the link lengths:
/// sum_t qdot_t' qdot_t + w max(0, d - sqrt(sum_i l_i^2))^2.
class CoDesignCost final : public UpperLevelCost {
 public:
  CoDesignCost(int dof, std::vector<int> length_indices, double reach_distance,
               double hinge_weight = 1e3);

  double eval(const Trajectory& traj, const VectorXd& theta) const override;
  UpperLevelGradients gradients(const Trajectory& traj, const VectorXd& theta) const override;

 private:
  double reach(const VectorXd& theta) const;

  int dof_;
  std::vector<int> length_indices_;
  double reach_distance_;
  double hinge_weight_;
};

/// Central differences of eval with respect to every state, control and
/// theta entry; used to self-check gradients().
UpperLevelGradients fd_upper_level_gradients(const UpperLevelCost& cost, const Trajectory& traj,
                                             const VectorXd& theta, double h = 1e-6);

}  // namespace diffddp
