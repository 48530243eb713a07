#include <gtest/gtest.h>

#include <numbers>

#include "diffddp/cost.hpp"
#include "diffddp/upper_level.hpp"
#include "test_support.hpp"

namespace diffddp {
namespace {

using testing::all_close;
using testing::fd_gradient;
using testing::fd_jacobian;
using testing::Gen;
using testing::vec;

const VectorXd kGoal = vec({std::numbers::pi, 0.0});

TEST(QuadraticGoalCost, EvaluatesStageAndTerminal) {
  const QuadraticGoalCost c(kGoal, 1e-2, 1, 1);
  const VectorXd th = vec({0.5, 1e3});
  EXPECT_DOUBLE_EQ(c.eval(vec({0.3, 1.0}), vec({2.0}), th, 0, 50), 1e-2 * 4.0);
  const VectorXd x = vec({3.0, 0.5});
  EXPECT_DOUBLE_EQ(c.eval(x, VectorXd(), th, 49, 50), 1e3 * (x - kGoal).squaredNorm());
  EXPECT_THROW(c.eval(x, vec({1.0}), th, 50, 50), PreconditionError);
}

TEST(QuadraticGoalCost, DerivativesMatchFiniteDifferences) {
  const QuadraticGoalCost c(kGoal, 1e-2, 1, 1);
  Gen g(21);
  for (int i = 0; i < 20; ++i) {
    const VectorXd x = g.vector(2, -4, 4), u = g.vector(1, -5, 5);
    const VectorXd th = vec({0.5, g.uniform(1, 1e4)});
    for (int knot : {0, 17, 49}) {
      SCOPED_TRACE(knot);
      const bool terminal = knot == 49;
      const VectorXd uu = terminal ? VectorXd() : u;
      const CostDerivatives d = c.derivatives(x, uu, th, knot, 50);
      auto l = [&](const VectorXd& xx, const VectorXd& u2, const VectorXd& t2) {
        return c.eval(xx, u2, t2, knot, 50);
      };
      auto lx = [&](const VectorXd& xx, const VectorXd& u2, const VectorXd& t2) {
        return c.derivatives(xx, u2, t2, knot, 50).lx;
      };
      const double rtol = 1e-6, atol = 1e-6;
      EXPECT_TRUE(all_close(d.lx, fd_gradient([&](const VectorXd& z) { return l(z, uu, th); }, x),
                            rtol, atol));
      EXPECT_TRUE(all_close(d.lxx, fd_jacobian([&](const VectorXd& z) { return lx(z, uu, th); }, x),
                            rtol, atol));
      EXPECT_TRUE(all_close(d.lxtheta,
                            fd_jacobian([&](const VectorXd& z) { return lx(x, uu, z); }, th), rtol,
                            atol));
      if (terminal) {
        EXPECT_EQ(d.lu.size(), 0);
        EXPECT_EQ(d.luu.size(), 0);
        EXPECT_EQ(d.lxu.cols(), 0);
        continue;
      }
      auto lu = [&](const VectorXd& xx, const VectorXd& u2, const VectorXd& t2) {
        return c.derivatives(xx, u2, t2, knot, 50).lu;
      };
      EXPECT_TRUE(all_close(d.lu, fd_gradient([&](const VectorXd& z) { return l(x, z, th); }, u),
                            rtol, atol));
      EXPECT_TRUE(all_close(d.luu, fd_jacobian([&](const VectorXd& z) { return lu(x, z, th); }, u),
                            rtol, atol));
      EXPECT_TRUE(all_close(d.lxu, fd_jacobian([&](const VectorXd& z) { return lx(x, z, th); }, u),
                            rtol, atol));
      EXPECT_TRUE(all_close(d.lutheta,
                            fd_jacobian([&](const VectorXd& z) { return lu(x, u, z); }, th), rtol,
                            atol));
    }
  }
}

Trajectory random_trajectory(Gen& g, int horizon, int nx, int nu) {
  Trajectory t;
  t.dt = 0.01;
  for (int i = 0; i < horizon; ++i) t.states.push_back(g.vector(nx, -3, 3));
  for (int i = 0; i + 1 < horizon; ++i) t.controls.push_back(g.vector(nu, -3, 3));
  return t;
}

// Flattens the trajectory and theta into one vector so a scalar FD covers
// every partial at once.
struct Packed {
  int horizon, nx, nu, ntheta;

  VectorXd pack(const Trajectory& t, const VectorXd& th) const {
    VectorXd z(horizon * nx + (horizon - 1) * nu + ntheta);
    int k = 0;
    for (const auto& x : t.states) z.segment(k, nx) = x, k += nx;
    for (const auto& u : t.controls) z.segment(k, nu) = u, k += nu;
    z.tail(ntheta) = th;
    return z;
  }

  std::pair<Trajectory, VectorXd> unpack(const VectorXd& z) const {
    Trajectory t;
    t.dt = 0.01;
    int k = 0;
    for (int i = 0; i < horizon; ++i) t.states.push_back(z.segment(k, nx)), k += nx;
    for (int i = 0; i + 1 < horizon; ++i) t.controls.push_back(z.segment(k, nu)), k += nu;
    return {t, z.tail(ntheta)};
  }

  VectorXd pack(const UpperLevelGradients& g) const {
    Trajectory t;
    t.states = g.dx;
    t.controls = g.du;
    return pack(t, g.dtheta);
  }
};

void expect_ul_gradients_match_fd(const UpperLevelCost& cost, const Trajectory& traj,
                                  const VectorXd& th) {
  const Packed p{traj.horizon(), static_cast<int>(traj.states[0].size()),
                 static_cast<int>(traj.controls[0].size()), static_cast<int>(th.size())};
  const VectorXd fd = fd_gradient(
      [&](const VectorXd& z) {
        auto [t, t2] = p.unpack(z);
        return cost.eval(t, t2);
      },
      p.pack(traj, th));
  EXPECT_TRUE(all_close(p.pack(cost.gradients(traj, th)), fd, 1e-6, 1e-7));
  const UpperLevelGradients lib = fd_upper_level_gradients(cost, traj, th);
  EXPECT_TRUE(all_close(p.pack(lib), fd, 1e-6, 1e-7));
}

TEST(UpperLevelCost, ImitationGradientsMatchFiniteDifferences) {
  Gen g(22);
  for (int i = 0; i < 5; ++i) {
    const Trajectory traj = random_trajectory(g, 8, 4, 2);
    std::vector<VectorXd> ref;
    for (int t = 0; t < 7; ++t) ref.push_back(g.vector(2, -3, 3));
    expect_ul_gradients_match_fd(ImitationCost(ref), traj, vec({0.3, 0.4, 1e3}));
    expect_ul_gradients_match_fd(VelocityImitationCost(ref, 2), traj, vec({0.3, 0.4, 1e3}));
  }
}

TEST(UpperLevelCost, CoDesignGradientsMatchFiniteDifferences) {
  Gen g(23);
  const CoDesignCost cost(2, {0, 1}, 0.6);
  for (int i = 0; i < 5; ++i) {
    const Trajectory traj = random_trajectory(g, 8, 4, 2);
    // Reach below d (hinge active) and above d (hinge inactive).
    expect_ul_gradients_match_fd(cost, traj, vec({g.uniform(0.1, 0.3), g.uniform(0.1, 0.3), 1e3}));
    expect_ul_gradients_match_fd(cost, traj, vec({g.uniform(0.5, 0.9), g.uniform(0.5, 0.9), 1e3}));
  }
}

TEST(UpperLevelCost, ImitationIsSmoothAtTheReference) {
  std::vector<VectorXd> ref = {vec({0.5}), vec({-0.2}), vec({1.5})};
  const ImitationCost cost(ref);
  Trajectory traj;
  traj.dt = 0.01;
  traj.states.assign(4, VectorXd::Zero(2));
  traj.controls = ref;
  EXPECT_NEAR(cost.eval(traj, vec({0.5, 1e3})), 3e-9, 1e-20);
  for (const auto& du : cost.gradients(traj, vec({0.5, 1e3})).du) EXPECT_EQ(du[0], 0.0);
  traj.controls.pop_back();
  EXPECT_THROW(cost.eval(traj, vec({0.5, 1e3})), DimensionError);
}

TEST(UpperLevelCost, VelocityTermCoversEveryKnot) {
  Trajectory traj;
  traj.dt = 0.01;
  traj.states = {vec({0, 0, 1, 2}), vec({0, 0, 0, 0}), vec({9, 9, 3, 0})};
  traj.controls = {vec({0, 0}), vec({0, 0})};
  const CoDesignCost cost(2, {0, 1}, 0.0);
  EXPECT_DOUBLE_EQ(cost.eval(traj, vec({0.3, 0.3, 1e3})), 1 + 4 + 9);
}

}  // namespace
}  // namespace diffddp
