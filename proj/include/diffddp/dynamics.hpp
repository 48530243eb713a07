#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffddp/types.hpp"

namespace diffddp {

/// Raised when a dynamics evaluation or rollout produces NaN/Inf.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& what, int knot = -1)
      : std::runtime_error(what), knot_(knot) {}
  int knot() const { return knot_; }

 private:
  int knot_;
};

enum class DerivativeOrder { kFirst, kSecond, kFull };

/// Derivatives of the discrete map x' = f(x, u; theta) at one point.
///
/// Tensor layout follows the output-first convention: fxx(o, a, b) is
/// d^2 f_o / dx_a dx_b, fxu(o, a, b) is d^2 f_o / dx_a du_b, and the theta
/// tensors carry the full theta vector in their last index. All blocks are
/// allocated for every order; `order` says which of them are meaningful
/// (the rest are zero).
struct DerivativeBundle {
  DerivativeOrder order = DerivativeOrder::kFirst;
  MatrixXd fx;
  MatrixXd fu;
  Tensor3 fxx;
  Tensor3 fxu;
  Tensor3 fuu;
  MatrixXd ftheta;
  Tensor3 fxtheta;
  Tensor3 futheta;

  static DerivativeBundle zeros(int nx, int nu, int ntheta, DerivativeOrder order);
};

/// Discrete-time dynamics x_{t+1} = f(x_t, u_t; theta).
///
/// Models read a subset of the shared theta vector (parameter_indices());
/// derivative columns for every other component are exactly zero.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;

  virtual int state_dim() const = 0;
  virtual int control_dim() const = 0;
  virtual double dt() const = 0;
  virtual std::vector<int> parameter_indices() const = 0;

  virtual VectorXd step(const VectorXd& x, const VectorXd& u, const VectorXd& theta) const = 0;
  virtual DerivativeBundle derivatives(const VectorXd& x, const VectorXd& u,
                                       const VectorXd& theta, DerivativeOrder order) const = 0;

 protected:
  void check_dims(const VectorXd& x, const VectorXd& u, const VectorXd& theta) const;
};

/// Mechanical system with state [q, qdot] integrated by explicit Euler:
/// x' = x + dt * [qdot, qddot(x, u; theta)].
class EulerMechanicalModel : public DynamicsModel {
 public:
  explicit EulerMechanicalModel(double dt);

  virtual int dof() const = 0;
  int state_dim() const override { return 2 * dof(); }
  double dt() const override { return dt_; }

  /// Continuous-time accelerations qddot.
  virtual VectorXd acceleration(const VectorXd& x, const VectorXd& u,
                                const VectorXd& theta) const = 0;

  VectorXd step(const VectorXd& x, const VectorXd& u, const VectorXd& theta) const final;
  DerivativeBundle derivatives(const VectorXd& x, const VectorXd& u, const VectorXd& theta,
                               DerivativeOrder order) const final;

 protected:
  /// Derivatives of qddot; same layout as DerivativeBundle with d_out = dof.
  struct AccelerationDerivatives {
    MatrixXd ax, au, atheta;
    Tensor3 axx, axu, auu, axtheta, autheta;
  };
  virtual AccelerationDerivatives acceleration_derivatives(const VectorXd& x,
                                                           const VectorXd& u,
                                                           const VectorXd& theta,
                                                           DerivativeOrder order) const = 0;

 private:
  double dt_;
};

/// Point mass m on a massless rod of length rho, torque-actuated, undamped:
/// qddot = (u - m g rho sin q) / (m rho^2). q = 0 hangs down.
class PendulumModel final : public EulerMechanicalModel {
 public:
  PendulumModel(double dt, int rho_index, double mass = 1.0, double gravity = 9.81);

  int dof() const override { return 1; }
  int control_dim() const override { return 1; }
  std::vector<int> parameter_indices() const override { return {rho_index_}; }

  VectorXd acceleration(const VectorXd& x, const VectorXd& u,
                        const VectorXd& theta) const override;

  double mass() const { return mass_; }
  double gravity() const { return gravity_; }

 protected:
  AccelerationDerivatives acceleration_derivatives(const VectorXd& x, const VectorXd& u,
                                                   const VectorXd& theta,
                                                   DerivativeOrder order) const override;

 private:
  double length(const VectorXd& theta) const;

  int rho_index_;
  double mass_;
  double gravity_;
};

/// Two point masses at the ends of links l1, l2; both joints actuated.
/// q1 is measured from hanging down, q2 relative to link 1, so [pi, 0] is
/// straight up. M(q) qddot + C(q, qdot) qdot = tau_g(q) + u.
///
/// Second-order and parameter derivatives come from Jet evaluation of the
/// acceleration map.
class DoublePendulumModel final : public EulerMechanicalModel {
 public:
  DoublePendulumModel(double dt, int l1_index, int l2_index, double m1 = 1.0, double m2 = 1.0,
                      double gravity = 9.81);

  int dof() const override { return 2; }
  int control_dim() const override { return 2; }
  std::vector<int> parameter_indices() const override { return {l1_index_, l2_index_}; }

  VectorXd acceleration(const VectorXd& x, const VectorXd& u,
                        const VectorXd& theta) const override;

  Eigen::Matrix2d mass_matrix(const Eigen::Vector2d& q, const VectorXd& theta) const;

  double m1() const { return m1_; }
  double m2() const { return m2_; }
  double gravity() const { return gravity_; }

 protected:
  AccelerationDerivatives acceleration_derivatives(const VectorXd& x, const VectorXd& u,
                                                   const VectorXd& theta,
                                                   DerivativeOrder order) const override;

 private:
  template <typename S>
  void accelerations(const S& q1, const S& q2, const S& v1, const S& v2, const S& u1,
                     const S& u2, const S& l1, const S& l2, S& a1, S& a2) const;

  void check_lengths(const VectorXd& theta) const;

  int l1_index_;
  int l2_index_;
  double m1_;
  double m2_;
  double gravity_;
};

/// x' = A x + B u; all second-order blocks are zero and nothing depends on theta.
class LinearModel final : public DynamicsModel {
 public:
  LinearModel(MatrixXd A, MatrixXd B, double dt = 1.0);

  int state_dim() const override { return static_cast<int>(A_.rows()); }
  int control_dim() const override { return static_cast<int>(B_.cols()); }
  double dt() const override { return dt_; }
  std::vector<int> parameter_indices() const override { return {}; }

  VectorXd step(const VectorXd& x, const VectorXd& u, const VectorXd& theta) const override;
  DerivativeBundle derivatives(const VectorXd& x, const VectorXd& u, const VectorXd& theta,
                               DerivativeOrder order) const override;

  const MatrixXd& A() const { return A_; }
  const MatrixXd& B() const { return B_; }

 private:
  MatrixXd A_;
  MatrixXd B_;
  double dt_;
};

std::shared_ptr<const DynamicsModel> lqr_test_model(const MatrixXd& A, const MatrixXd& B,
                                                    double dt = 1.0);

struct FdSteps {
  double first = 1e-6;
  double second = 1e-4;
};

/// Every block of the bundle by central differences of model.step.
/// Second-order blocks are symmetrized where the exact block is symmetric.
DerivativeBundle fd_derivatives(const DynamicsModel& model, const VectorXd& x,
                                const VectorXd& u, const VectorXd& theta,
                                FdSteps steps = {});

}  // namespace diffddp
