#include "diffddp/plants.hpp"

#include <fmt/format.h>

#include <numbers>

namespace diffddp {

std::string_view to_string(PlantKind k) {
  switch (k) {
    case PlantKind::kPendulum:
      return "pendulum";
    case PlantKind::kDoublePendulum:
      return "double_pendulum";
    case PlantKind::kLinear:
      return "linear";
  }
  return "?";
}

PlantKind parse_plant(std::string_view s) {
  if (s == "pendulum") return PlantKind::kPendulum;
  if (s == "double_pendulum") return PlantKind::kDoublePendulum;
  if (s == "linear") return PlantKind::kLinear;
  throw PreconditionError(
      fmt::format("unknown plant '{}' (expected pendulum, double_pendulum or linear)", s));
}

namespace {

VectorXd or_default(const VectorXd& v, VectorXd fallback, std::string_view what) {
  if (v.size() == 0) return fallback;
  if (v.size() != fallback.size()) {
    throw DimensionError(
        fmt::format("{} has {} entries, plant state has {}", what, v.size(), fallback.size()));
  }
  return v;
}

}  // namespace

Plant make_pendulum(double rho, double qf, const PlantOptions& opts) {
  Plant p;
  p.kind = PlantKind::kPendulum;
  p.dof = 1;
  p.theta = ParamVector({"rho", "qf"}, Eigen::Vector2d(rho, qf),
                        {Interval{0.05, 2.0}, Interval{1e-2, 1e6}});
  p.relative_step = {false, true};
  p.length_indices = {0};
  const VectorXd goal = or_default(opts.goal, Eigen::Vector2d(std::numbers::pi, 0.0), "goal");
  p.cost = std::make_shared<QuadraticGoalCost>(goal, opts.control_weight, 1, 1);
  p.problem.model = std::make_shared<PendulumModel>(opts.dt, 0);
  p.problem.cost = p.cost;
  p.problem.x1 = or_default(opts.x1, Eigen::Vector2d::Zero(), "x1");
  p.problem.horizon = opts.horizon;
  return p;
}

Plant make_double_pendulum(double l1, double l2, double qf, const PlantOptions& opts) {
  Plant p;
  p.kind = PlantKind::kDoublePendulum;
  p.dof = 2;
  p.theta = ParamVector({"l1", "l2", "qf"}, Eigen::Vector3d(l1, l2, qf),
                        {Interval{0.1, 1.0}, Interval{0.1, 1.0}, Interval{1e-2, 1e6}});
  p.relative_step = {false, false, true};
  p.length_indices = {0, 1};
  VectorXd up = VectorXd::Zero(4);
  up[0] = std::numbers::pi;
  const VectorXd goal = or_default(opts.goal, up, "goal");
  p.cost = std::make_shared<QuadraticGoalCost>(goal, opts.control_weight, 2, 2);
  p.problem.model = std::make_shared<DoublePendulumModel>(opts.dt, 0, 1);
  p.problem.cost = p.cost;
  p.problem.x1 = or_default(opts.x1, VectorXd::Zero(4), "x1");
  p.problem.horizon = opts.horizon;
  return p;
}

Plant make_linear(double qf, const PlantOptions& opts) {
  Plant p;
  p.kind = PlantKind::kLinear;
  p.dof = 1;
  p.theta = ParamVector({"qf"}, Eigen::VectorXd::Constant(1, qf), {Interval{1e-2, 1e6}});
  p.relative_step = {true};
  const double dt = opts.dt;
  Eigen::Matrix2d A;
  A << 1.0, dt, 0.0, 1.0;
  Eigen::Vector2d B(0.0, dt);
  const VectorXd goal = or_default(opts.goal, Eigen::Vector2d::Zero(), "goal");
  p.cost = std::make_shared<QuadraticGoalCost>(goal, opts.control_weight, 0, 1);
  p.problem.model = std::make_shared<LinearModel>(A, B, dt);
  p.problem.cost = p.cost;
  p.problem.x1 = or_default(opts.x1, Eigen::Vector2d(1.0, 0.0), "x1");
  p.problem.horizon = opts.horizon;
  return p;
}

Plant make_plant(PlantKind kind, const PlantOptions& opts) {
  switch (kind) {
    case PlantKind::kPendulum:
      return make_pendulum(0.5, 1e3, opts);
    case PlantKind::kDoublePendulum:
      return make_double_pendulum(0.375, 0.375, 1e3, opts);
    case PlantKind::kLinear:
      return make_linear(1e3, opts);
  }
  throw PreconditionError("make_plant: unknown kind");
}

std::vector<VectorXd> reference_controls(const Plant& plant, const VectorXd& theta, Method mode,
                                         const SolverOptions& opts) {
  SolveResult r = solve(plant.problem, theta, mode, opts);
  if (!r.converged) {
    throw SolverError(fmt::format("reference solve did not converge (metric {:.3e})",
                                  r.conv_metric));
  }
  return std::move(r.trajectory.controls);
}

}  // namespace diffddp
