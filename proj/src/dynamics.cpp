#include "diffddp/dynamics.hpp"

#include <fmt/format.h>

#include <cmath>

#include "diffddp/jet.hpp"

namespace diffddp {

DerivativeBundle DerivativeBundle::zeros(int nx, int nu, int ntheta, DerivativeOrder order) {
  DerivativeBundle b;
  b.order = order;
  b.fx = MatrixXd::Zero(nx, nx);
  b.fu = MatrixXd::Zero(nx, nu);
  b.fxx = Tensor3(nx, nx, nx);
  b.fxu = Tensor3(nx, nx, nu);
  b.fuu = Tensor3(nx, nu, nu);
  b.ftheta = MatrixXd::Zero(nx, ntheta);
  b.fxtheta = Tensor3(nx, nx, ntheta);
  b.futheta = Tensor3(nx, nu, ntheta);
  return b;
}

void DynamicsModel::check_dims(const VectorXd& x, const VectorXd& u,
                               const VectorXd& theta) const {
  if (x.size() != state_dim() || u.size() != control_dim()) {
    throw DimensionError(fmt::format("dynamics: expected x[{}], u[{}]; got x[{}], u[{}]",
                                     state_dim(), control_dim(), x.size(), u.size()));
  }
  for (int idx : parameter_indices()) {
    if (idx >= theta.size()) {
      throw DimensionError(
          fmt::format("dynamics: reads theta[{}] but theta has {} entries", idx, theta.size()));
    }
  }
}

EulerMechanicalModel::EulerMechanicalModel(double dt) : dt_(dt) {
  if (!(dt > 0.0)) throw PreconditionError(fmt::format("timestep must be > 0, got {}", dt));
}

VectorXd EulerMechanicalModel::step(const VectorXd& x, const VectorXd& u,
                                    const VectorXd& theta) const {
  check_dims(x, u, theta);
  const int n = dof();
  const VectorXd a = acceleration(x, u, theta);
  VectorXd next(2 * n);
  next.head(n) = x.head(n) + dt_ * x.tail(n);
  next.tail(n) = x.tail(n) + dt_ * a;
  if (!next.allFinite()) throw NonFiniteError("dynamics step produced a non-finite state");
  return next;
}

DerivativeBundle EulerMechanicalModel::derivatives(const VectorXd& x, const VectorXd& u,
                                                   const VectorXd& theta,
                                                   DerivativeOrder order) const {
  check_dims(x, u, theta);
  const int n = dof();
  const int nx = 2 * n;
  const int nu = control_dim();
  const int np = static_cast<int>(theta.size());
  const AccelerationDerivatives ad = acceleration_derivatives(x, u, theta, order);

  DerivativeBundle b = DerivativeBundle::zeros(nx, nu, np, order);
  b.fx.setIdentity();
  for (int i = 0; i < n; ++i) b.fx(i, n + i) += dt_;
  b.fx.bottomRows(n) += dt_ * ad.ax;
  b.fu.bottomRows(n) = dt_ * ad.au;
  if (!b.fx.allFinite() || !b.fu.allFinite()) {
    throw NonFiniteError("dynamics derivatives are non-finite");
  }
  if (order == DerivativeOrder::kFirst) return b;

  for (int i = 0; i < n; ++i) {
    b.fxx.slice(n + i) = dt_ * ad.axx.slice(i);
    b.fxu.slice(n + i) = dt_ * ad.axu.slice(i);
    b.fuu.slice(n + i) = dt_ * ad.auu.slice(i);
  }
  if (order == DerivativeOrder::kSecond) return b;

  b.ftheta.bottomRows(n) = dt_ * ad.atheta;
  for (int i = 0; i < n; ++i) {
    b.fxtheta.slice(n + i) = dt_ * ad.axtheta.slice(i);
    b.futheta.slice(n + i) = dt_ * ad.autheta.slice(i);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Pendulum

PendulumModel::PendulumModel(double dt, int rho_index, double mass, double gravity)
    : EulerMechanicalModel(dt), rho_index_(rho_index), mass_(mass), gravity_(gravity) {}

double PendulumModel::length(const VectorXd& theta) const {
  const double rho = theta[rho_index_];
  if (!(rho > 0.0)) throw PreconditionError(fmt::format("pendulum length must be > 0, got {}", rho));
  return rho;
}

VectorXd PendulumModel::acceleration(const VectorXd& x, const VectorXd& u,
                                     const VectorXd& theta) const {
  const double rho = length(theta);
  VectorXd a(1);
  a[0] = (u[0] - mass_ * gravity_ * rho * std::sin(x[0])) / (mass_ * rho * rho);
  return a;
}

PendulumModel::AccelerationDerivatives PendulumModel::acceleration_derivatives(
    const VectorXd& x, const VectorXd& u, const VectorXd& theta, DerivativeOrder order) const {
  const double rho = length(theta);
  const double m = mass_;
  const double g = gravity_;
  const double s = std::sin(x[0]);
  const double c = std::cos(x[0]);
  const int np = static_cast<int>(theta.size());

  // qddot = u / (m rho^2) - (g / rho) sin q
  AccelerationDerivatives d;
  d.ax = MatrixXd::Zero(1, 2);
  d.ax(0, 0) = -(g / rho) * c;
  d.au = MatrixXd::Constant(1, 1, 1.0 / (m * rho * rho));
  d.axx = Tensor3(1, 2, 2);
  d.axu = Tensor3(1, 2, 1);
  d.auu = Tensor3(1, 1, 1);
  d.atheta = MatrixXd::Zero(1, np);
  d.axtheta = Tensor3(1, 2, np);
  d.autheta = Tensor3(1, 1, np);
  if (order == DerivativeOrder::kFirst) return d;

  d.axx(0, 0, 0) = (g / rho) * s;
  if (order == DerivativeOrder::kSecond) return d;

  d.atheta(0, rho_index_) = -2.0 * u[0] / (m * rho * rho * rho) + (g / (rho * rho)) * s;
  d.axtheta(0, 0, rho_index_) = (g / (rho * rho)) * c;
  d.autheta(0, 0, rho_index_) = -2.0 / (m * rho * rho * rho);
  return d;
}

// ---------------------------------------------------------------------------
// Double pendulum

DoublePendulumModel::DoublePendulumModel(double dt, int l1_index, int l2_index, double m1,
                                         double m2, double gravity)
    : EulerMechanicalModel(dt),
      l1_index_(l1_index),
      l2_index_(l2_index),
      m1_(m1),
      m2_(m2),
      gravity_(gravity) {
  if (l1_index == l2_index) {
    throw PreconditionError("double pendulum: l1 and l2 must be distinct theta components");
  }
}

void DoublePendulumModel::check_lengths(const VectorXd& theta) const {
  if (!(theta[l1_index_] > 0.0) || !(theta[l2_index_] > 0.0)) {
    throw PreconditionError(fmt::format("double pendulum lengths must be > 0, got ({}, {})",
                                        theta[l1_index_], theta[l2_index_]));
  }
}

template <typename S>
void DoublePendulumModel::accelerations(const S& q1, const S& q2, const S& v1, const S& v2,
                                        const S& u1, const S& u2, const S& l1, const S& l2,
                                        S& a1, S& a2) const {
  using std::cos;
  using std::sin;
  const double g = gravity_;
  const S c2 = cos(q2);
  const S s2 = sin(q2);
  const S s1 = sin(q1);
  const S s12 = sin(q1 + q2);
  const S l1l2 = l1 * l2;

  const S m11 = (m1_ + m2_) * (l1 * l1) + m2_ * (l2 * l2) + (2.0 * m2_) * (l1l2 * c2);
  const S m12 = m2_ * (l2 * l2) + m2_ * (l1l2 * c2);
  const S m22 = m2_ * (l2 * l2);

  // Coriolis/centrifugal C(q, qdot) qdot and gravity torque tau_g(q).
  const S h = m2_ * (l1l2 * s2);
  const S bias1 = -2.0 * (h * (v1 * v2)) - h * (v2 * v2);
  const S bias2 = h * (v1 * v1);
  const S tg1 = -(m1_ * g) * (l1 * s1) - (m2_ * g) * (l1 * s1 + l2 * s12);
  const S tg2 = -(m2_ * g) * (l2 * s12);

  const S r1 = tg1 + u1 - bias1;
  const S r2 = tg2 + u2 - bias2;
  const S inv_det = 1.0 / (m11 * m22 - m12 * m12);
  a1 = (m22 * r1 - m12 * r2) * inv_det;
  a2 = (m11 * r2 - m12 * r1) * inv_det;
}

Eigen::Matrix2d DoublePendulumModel::mass_matrix(const Eigen::Vector2d& q,
                                                 const VectorXd& theta) const {
  check_lengths(theta);
  const double l1 = theta[l1_index_];
  const double l2 = theta[l2_index_];
  const double c2 = std::cos(q[1]);
  Eigen::Matrix2d m;
  m(0, 0) = (m1_ + m2_) * l1 * l1 + m2_ * l2 * l2 + 2.0 * m2_ * l1 * l2 * c2;
  m(0, 1) = m2_ * l2 * l2 + m2_ * l1 * l2 * c2;
  m(1, 0) = m(0, 1);
  m(1, 1) = m2_ * l2 * l2;
  return m;
}

VectorXd DoublePendulumModel::acceleration(const VectorXd& x, const VectorXd& u,
                                           const VectorXd& theta) const {
  check_lengths(theta);
  double a1 = 0.0;
  double a2 = 0.0;
  accelerations<double>(x[0], x[1], x[2], x[3], u[0], u[1], theta[l1_index_], theta[l2_index_],
                        a1, a2);
  VectorXd a(2);
  a << a1, a2;
  return a;
}

DoublePendulumModel::AccelerationDerivatives DoublePendulumModel::acceleration_derivatives(
    const VectorXd& x, const VectorXd& u, const VectorXd& theta, DerivativeOrder order) const {
  check_lengths(theta);
  // Seeds: [q1, q2, v1, v2, u1, u2, l1, l2].
  using J = Jet<8>;
  const J q1 = J::variable(x[0], 0);
  const J q2 = J::variable(x[1], 1);
  const J v1 = J::variable(x[2], 2);
  const J v2 = J::variable(x[3], 3);
  const J u1 = J::variable(u[0], 4);
  const J u2 = J::variable(u[1], 5);
  const J l1 = J::variable(theta[l1_index_], 6);
  const J l2 = J::variable(theta[l2_index_], 7);
  J a[2];
  accelerations<J>(q1, q2, v1, v2, u1, u2, l1, l2, a[0], a[1]);

  const int np = static_cast<int>(theta.size());
  const int pidx[2] = {l1_index_, l2_index_};
  AccelerationDerivatives d;
  d.ax = MatrixXd::Zero(2, 4);
  d.au = MatrixXd::Zero(2, 2);
  d.atheta = MatrixXd::Zero(2, np);
  d.axx = Tensor3(2, 4, 4);
  d.axu = Tensor3(2, 4, 2);
  d.auu = Tensor3(2, 2, 2);
  d.axtheta = Tensor3(2, 4, np);
  d.autheta = Tensor3(2, 2, np);
  for (int i = 0; i < 2; ++i) {
    d.ax.row(i) = a[i].g.segment<4>(0).transpose();
    d.au.row(i) = a[i].g.segment<2>(4).transpose();
    if (order == DerivativeOrder::kFirst) continue;
    const auto& H = a[i].h;
    d.axx.slice(i) = H.block<4, 4>(0, 0);
    d.axu.slice(i) = H.block<4, 2>(0, 4);
    d.auu.slice(i) = H.block<2, 2>(4, 4);
    if (order == DerivativeOrder::kSecond) continue;
    for (int k = 0; k < 2; ++k) {
      d.atheta(i, pidx[k]) = a[i].g[6 + k];
      for (int r = 0; r < 4; ++r) d.axtheta(i, r, pidx[k]) = H(r, 6 + k);
      for (int r = 0; r < 2; ++r) d.autheta(i, r, pidx[k]) = H(4 + r, 6 + k);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Linear

LinearModel::LinearModel(MatrixXd A, MatrixXd B, double dt)
    : A_(std::move(A)), B_(std::move(B)), dt_(dt) {
  if (A_.rows() != A_.cols() || B_.rows() != A_.rows()) {
    throw DimensionError(fmt::format("LinearModel: A is {}x{}, B is {}x{}", A_.rows(), A_.cols(),
                                     B_.rows(), B_.cols()));
  }
  if (!(dt > 0.0)) throw PreconditionError(fmt::format("timestep must be > 0, got {}", dt));
}

VectorXd LinearModel::step(const VectorXd& x, const VectorXd& u, const VectorXd& theta) const {
  check_dims(x, u, theta);
  VectorXd next = A_ * x + B_ * u;
  if (!next.allFinite()) throw NonFiniteError("linear step produced a non-finite state");
  return next;
}

DerivativeBundle LinearModel::derivatives(const VectorXd& x, const VectorXd& u,
                                          const VectorXd& theta, DerivativeOrder order) const {
  check_dims(x, u, theta);
  DerivativeBundle b =
      DerivativeBundle::zeros(state_dim(), control_dim(), static_cast<int>(theta.size()), order);
  b.fx = A_;
  b.fu = B_;
  return b;
}

std::shared_ptr<const DynamicsModel> lqr_test_model(const MatrixXd& A, const MatrixXd& B,
                                                    double dt) {
  return std::make_shared<LinearModel>(A, B, dt);
}

// ---------------------------------------------------------------------------
// Finite differences

DerivativeBundle fd_derivatives(const DynamicsModel& model, const VectorXd& x,
                                const VectorXd& u, const VectorXd& theta, FdSteps steps) {
  if (!(steps.first > 0.0) || !(steps.second > 0.0)) {
    throw PreconditionError("fd_derivatives: step sizes must be > 0");
  }
  const int nx = model.state_dim();
  const int nu = model.control_dim();
  const int np = static_cast<int>(theta.size());
  const int nw = nx + nu + np;

  VectorXd w(nw);
  w << x, u, theta;
  auto eval = [&](const VectorXd& wv) {
    return model.step(wv.head(nx), wv.segment(nx, nu), wv.tail(np));
  };
  auto unit = [&](int i) { return VectorXd::Unit(nw, i); };

  MatrixXd jac(nx, nw);
  for (int j = 0; j < nw; ++j) {
    const double h = steps.first;
    jac.col(j) = (eval(w + h * unit(j)) - eval(w - h * unit(j))) / (2.0 * h);
  }
  auto mixed = [&](int a, int b) -> VectorXd {
    const double h = steps.second;
    const VectorXd ea = h * unit(a);
    const VectorXd eb = h * unit(b);
    return (eval(w + ea + eb) - eval(w + ea - eb) - eval(w - ea + eb) + eval(w - ea - eb)) /
           (4.0 * h * h);
  };

  DerivativeBundle b = DerivativeBundle::zeros(nx, nu, np, DerivativeOrder::kFull);
  b.fx = jac.leftCols(nx);
  b.fu = jac.middleCols(nx, nu);
  b.ftheta = jac.rightCols(np);

  // Row-variable offsets into w: x at 0, u at nx, theta at nx + nu.
  auto fill = [&](Tensor3& t, int off_a, int na, int off_b, int nb, bool symmetric) {
    for (int a = 0; a < na; ++a) {
      for (int c = symmetric ? a : 0; c < nb; ++c) {
        const VectorXd d = mixed(off_a + a, off_b + c);
        for (int o = 0; o < nx; ++o) {
          t(o, a, c) = d[o];
          if (symmetric) t(o, c, a) = d[o];
        }
      }
    }
  };
  fill(b.fxx, 0, nx, 0, nx, true);
  fill(b.fxu, 0, nx, nx, nu, false);
  fill(b.fuu, nx, nu, nx, nu, true);
  fill(b.fxtheta, 0, nx, nx + nu, np, false);
  fill(b.futheta, nx, nu, nx + nu, np, false);
  return b;
}

}  // namespace diffddp
