#pragma once

#include <memory>

#include "diffddp/types.hpp"

namespace diffddp {

/// Derivatives of the stage cost at one knot. At the terminal knot the
/// control blocks have zero columns (there is no control there).
struct CostDerivatives {
  VectorXd lx;
  VectorXd lu;
  MatrixXd lxx;
  MatrixXd lxu;  // n_x x n_u
  MatrixXd luu;
  MatrixXd lxtheta;  // n_x x n_theta
  MatrixXd lutheta;  // n_u x n_theta
};

/// Stage cost l(x, u; theta) on knots 0..T-2 and terminal cost h(x; theta)
/// on knot T-1. The terminal knot is treated as a stage with no control.
class CostModel {
 public:
  virtual ~CostModel() = default;

  /// l for knot < horizon - 1, h for knot == horizon - 1.
  virtual double eval(const VectorXd& x, const VectorXd& u, const VectorXd& theta, int knot,
                      int horizon) const = 0;
  virtual CostDerivatives derivatives(const VectorXd& x, const VectorXd& u,
                                      const VectorXd& theta, int knot, int horizon) const = 0;
};

/// l = r u'u,  h = q_f (x - x*)'(x - x*), with q_f read from theta.
class QuadraticGoalCost final : public CostModel {
 public:
  QuadraticGoalCost(VectorXd goal, double control_weight, int qf_index, int control_dim);

  double eval(const VectorXd& x, const VectorXd& u, const VectorXd& theta, int knot,
              int horizon) const override;
  CostDerivatives derivatives(const VectorXd& x, const VectorXd& u, const VectorXd& theta,
                              int knot, int horizon) const override;

  const VectorXd& goal() const { return goal_; }
  double control_weight() const { return r_; }
  int qf_index() const { return qf_index_; }

 private:
  double terminal_weight(const VectorXd& theta) const;
  void check(int knot, int horizon) const;

  VectorXd goal_;
  double r_;
  int qf_index_;
  int nu_;
};

}  // namespace diffddp
