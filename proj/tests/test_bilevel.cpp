#include <gtest/gtest.h>

#include "diffddp/bilevel.hpp"
#include "diffddp/plants.hpp"
#include "test_support.hpp"

namespace diffddp {
namespace {

using testing::vec;

struct SysId {
  Plant plant = make_pendulum();
  ImitationCost ul;
  SysId() : ul(reference_controls(plant, plant.theta.values())) {}
};

BilevelOptions options(int iters) {
  BilevelOptions o;
  o.max_iters = iters;
  return o;
}

void expect_within_bounds(const BilevelRun& run, const ParamVector& p) {
  for (const auto& it : run.history)
    for (int i = 0; i < p.size(); ++i) EXPECT_TRUE(p.bounds()[i].contains(it.theta[i]));
  for (int i = 0; i < p.size(); ++i) EXPECT_TRUE(p.bounds()[i].contains(run.final_theta[i]));
}

TEST(Bilevel, StopReasonNames) {
  EXPECT_EQ(to_string(StopReason::kGradTol), "grad_tol");
  EXPECT_EQ(to_string(StopReason::kMaxIters), "max_iters");
  EXPECT_EQ(to_string(StopReason::kInnerFailure), "inner_failure");
  EXPECT_EQ(to_string(StopReason::kDiverged), "diverged");
}

TEST(Bilevel, MaskedLearningRate) {
  const Plant p = make_double_pendulum();
  const VectorXd eta = masked_learning_rate(p.theta, 1e-3, {"l2", "qf"});
  EXPECT_EQ(eta, vec({0.0, 1e-3, 1e-3}));
  EXPECT_THROW(masked_learning_rate(p.theta, 1e-3, {"l3"}), PreconditionError);
}

TEST(Bilevel, StopsImmediatelyAtTheKnownOptimum) {
  const SysId s;
  const BilevelRun run =
      optimize(s.plant.problem, s.ul, s.plant.theta, masked_learning_rate(s.plant.theta, 1e-6, {"rho"}),
               options(500));
  EXPECT_EQ(run.stop, StopReason::kGradTol);
  ASSERT_EQ(run.history.size(), 1u);
  EXPECT_EQ(run.final_theta, s.plant.theta.values());
}

TEST(Bilevel, MaskedComponentsNeverMove) {
  const SysId s;
  const ParamVector th0 = s.plant.theta.with_value("rho", 0.3);
  const BilevelRun run = optimize(s.plant.problem, s.ul, th0,
                                  masked_learning_rate(th0, 1e-6, {"rho"}), options(20));
  ASSERT_FALSE(run.history.empty());
  for (const auto& it : run.history) EXPECT_EQ(it.theta[1], 1e3);
  EXPECT_EQ(run.final_theta[1], 1e3);
  EXPECT_NE(run.final_theta[0], 0.3);
}

TEST(Bilevel, SmallStepsDescendMonotonically) {
  const SysId s;
  const ParamVector th0 = s.plant.theta.with_value("rho", 0.3);
  const BilevelRun run = optimize(s.plant.problem, s.ul, th0,
                                  masked_learning_rate(th0, 1e-7, {"rho"}), options(100));
  EXPECT_EQ(run.stop, StopReason::kMaxIters);
  ASSERT_EQ(run.history.size(), 101u);
  for (std::size_t k = 2; k < run.history.size(); ++k) {
    EXPECT_LE(run.history[k].ul_cost, run.history[k - 1].ul_cost) << "iteration " << k;
  }
  for (const auto& it : run.history) {
    EXPECT_TRUE(it.converged);
    EXPECT_EQ(it.grad_inf, std::abs(it.grad[0]));
  }
}

TEST(Bilevel, ProjectionKeepsIteratesInBounds) {
  const SysId s;
  const ParamVector th0 = s.plant.theta.with_value("rho", 0.3);
  // Huge steps throw rho against both ends of its box.
  const BilevelRun run =
      optimize(s.plant.problem, s.ul, th0, masked_learning_rate(th0, 1.0, {"rho"}), options(5));
  expect_within_bounds(run, s.plant.theta);
  bool hit = false;
  for (const auto& it : run.history) {
    hit = hit || it.theta[0] == s.plant.theta.bounds()[0].lower ||
          it.theta[0] == s.plant.theta.bounds()[0].upper;
  }
  EXPECT_TRUE(hit);
}

TEST(Bilevel, InnerFailureAtStartStopsImmediately) {
  const SysId s;
  BilevelOptions o = options(10);
  o.solver.max_iters = 1;
  const ParamVector th0 = s.plant.theta.with_value("rho", 0.3);
  const BilevelRun run =
      optimize(s.plant.problem, s.ul, th0, masked_learning_rate(th0, 1e-6, {"rho"}), o);
  EXPECT_EQ(run.stop, StopReason::kInnerFailure);
  ASSERT_EQ(run.history.size(), 1u);
  EXPECT_FALSE(run.history[0].converged);
  EXPECT_EQ(run.final_theta, th0.values());
}

TEST(Bilevel, DivergenceCeilingStopsTheRun) {
  const SysId s;
  BilevelOptions o = options(50);
  o.divergence_factor = 1.0 + 1e-12;
  // Start close to the optimum so the overshooting first step costs more.
  const ParamVector th0 = s.plant.theta.with_value("rho", 0.49);
  const BilevelRun run =
      optimize(s.plant.problem, s.ul, th0, masked_learning_rate(th0, 1e-3, {"rho"}), o);
  EXPECT_EQ(run.stop, StopReason::kDiverged);
  EXPECT_GT(run.history.back().ul_cost, run.history.front().ul_cost);
}

TEST(Bilevel, RejectsBadLearningRates) {
  const SysId s;
  EXPECT_THROW(optimize(s.plant.problem, s.ul, s.plant.theta, vec({-1.0, 0.0})), PreconditionError);
  EXPECT_THROW(optimize(s.plant.problem, s.ul, s.plant.theta, vec({1.0})), DimensionError);
}

}  // namespace
}  // namespace diffddp
