// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <fmt/format.h>
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "diffddp/bilevel.hpp"
#include "diffddp/plants.hpp"
#include "diffddp/sensitivity.hpp"
#include "diffddp/validation.hpp"

namespace diffddp {
namespace {

struct Check {
  bool pass = false;
  std::string detail;
};

SolverOptions with_threshold(double threshold) {
  SolverOptions o;
  o.conv_threshold = threshold;
  return o;
}

int workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

bool same_tapes(const SolveResult& a, const SolveResult& b) {
  if (a.value_tape.size() != b.value_tape.size() || a.q_tape.size() != b.q_tape.size()) return false;
  for (std::size_t t = 0; t < a.value_tape.size(); ++t) {
    if (a.value_tape[t].Vx != b.value_tape[t].Vx || a.value_tape[t].Vxx != b.value_tape[t].Vxx) {
      return false;
    }
  }
  for (std::size_t t = 0; t < a.q_tape.size(); ++t) {
    const QExpansion& p = a.q_tape[t];
    const QExpansion& q = b.q_tape[t];
    if (p.Qx != q.Qx || p.Qu != q.Qu || p.Qxx != q.Qxx || p.Quu != q.Quu || p.Qux != q.Qux ||
        a.gains.k[t] != b.gains.k[t] || a.gains.K[t] != b.gains.K[t]) {
      return false;
    }
  }
  return true;
}

Check lqr_single_iteration() {
  const Plant p = make_linear();
  const SolveResult d = solve(p.problem, p.theta.values(), Method::kDdp);
  const SolveResult i = solve(p.problem, p.theta.values(), Method::kIlqr);
  const bool identical = same_tapes(d, i);
  const bool pass = d.converged && i.converged && d.iterations == 1 && i.iterations == 1 &&
                    d.conv_metric < 1e-12 && i.conv_metric < 1e-12 && identical;
  return {pass, fmt::format("iterations ddp {} ilqr {}, conv_metric {:.2e}/{:.2e}, tapes {}",
                            d.iterations, i.iterations, d.conv_metric, i.conv_metric,
                            identical ? "identical" : "differ")};
}

Check pendulum_swing_up() {
  const Plant p = make_pendulum(0.5, 1e3);
  const SolveResult d = solve(p.problem, p.theta.values(), Method::kDdp);
  const SolveResult i = solve(p.problem, p.theta.values(), Method::kIlqr);
  const double gap = std::abs(d.cost - i.cost);
  bool pass = gap < 1e-8;
  for (const SolveResult* r : {&d, &i}) {
    pass = pass && r->converged && r->conv_metric < 1e-12 && r->iterations < 200;
  }
  return {pass, fmt::format("iterations ddp {} ilqr {}, cost {:.12g} vs {:.12g} (|diff| {:.1e})",
                            d.iterations, i.iterations, d.cost, i.cost, gap)};
}

double max_diff(const std::vector<VectorXd>& a, const std::vector<VectorXd>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].size() != b[t].size()) return std::numeric_limits<double>::infinity();
    if (a[t].size() > 0) m = std::max(m, (a[t] - b[t]).cwiseAbs().maxCoeff());
  }
  return m;
}

Check dense_kkt_equivalence() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto random = [&](Eigen::Index n) {
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = unit(rng);
    return v;
  };
  double worst = 0.0;
  int cases = 0;
  for (bool dp : {false, true}) {
    for (int T : {2, 3, 5, 10}) {
      PlantOptions o;
      o.horizon = T;
      const Plant p = dp ? make_double_pendulum(0.3, 0.45, 500, o) : make_pendulum(0.37, 300, o);
      const SolveResult r = solve(p.problem, p.theta.values(), Method::kDdp, with_threshold(1e-14));
      if (!r.converged) return {false, fmt::format("T={} solve did not converge", T)};
      UpperLevelGradients g;
      for (const auto& x : r.trajectory.states) g.dx.push_back(random(x.size()));
      for (const auto& u : r.trajectory.controls) g.du.push_back(random(u.size()));
      g.dtheta = random(r.theta.size());
      for (Method m : {Method::kDdp, Method::kIlqr}) {
        const SensitivitySolution a = differential_lqr(r, g, m);
        const SensitivitySolution b = dense_kkt_oracle(r, g, m);
        worst = std::max({worst, max_diff(a.dx, b.dx), max_diff(a.du, b.du),
                          max_diff(a.dlambda, b.dlambda)});
        ++cases;
      }
    }
  }
  return {worst < 1e-8, fmt::format("{} cases, max |riccati - dense| {:.2e}", cases, worst)};
}

OracleOptions oracle_for(const Plant& p) {
  OracleOptions o;
  o.relative = p.relative_step;
  o.conv_threshold = 1e-14;
  return o;
}

std::string stats_line(const char* name, const ErrorStats& s) {
  return fmt::format("{} mean {:.3e} (min {:.2e}, max {:.2e}) sign errors {}/{}", name, s.mean,
                     s.min, s.max, s.sign_errors, s.count);
}

Check pendulum_sweep() {
  const Plant p = make_pendulum(0.5, 1e3);
  const ImitationCost ul(reference_controls(p, p.theta.values(), Method::kDdp, with_threshold(1e-14)));
  SweepSpec spec;
  spec.samples = 100;
  spec.seed = 1;
  spec.ranges = {Interval{0.1, 1.0}, Interval{1.0, 1e4}};
  spec.inject_nominal = true;
  spec.workers = workers();
  const GradReport r = gradient_error_sweep(p.problem, ul, p.theta, spec, oracle_for(p));
  const double rtol = r.ddp.mean / r.ddp.oracle_mean;
  const bool pass = rtol < 1e-3 && r.ddp.sign_errors == 0 && r.ilqr.mean >= 100.0 * r.ddp.mean &&
                    r.ilqr.sign_errors == 0;
  return {pass,
          fmt::format("{} samples ({} oracle-inconsistent, {} resamples); ddp mean rtol {:.2e}; "
                      "{}; {}; ilqr/ddp {:.1e}; all samples: ddp mean {:.3e}, ilqr mean {:.3e}",
                      r.samples.size(), r.inconsistent, r.total_resamples, rtol,
                      stats_line("ddp", r.ddp), stats_line("ilqr", r.ilqr), r.ilqr.mean / r.ddp.mean,
                      r.ddp_all.mean, r.ilqr_all.mean)};
}

const VectorXd kDoublePendulumReference = (VectorXd(3) << 0.375, 0.375, 1e3).finished();

Check double_pendulum_sweep() {
  const Plant p = make_double_pendulum();
  const VelocityImitationCost ul(
      reference_controls(p, kDoublePendulumReference, Method::kDdp, with_threshold(1e-14)), 2);
  SweepSpec spec;
  spec.samples = 100;
  spec.seed = 2;
  spec.ranges = {Interval{0.25, 0.5}, Interval{0.25, 0.5}, Interval{1e2, 1e4}};
  spec.workers = workers();
  const GradReport r = gradient_error_sweep(p.problem, ul, p.theta, spec, oracle_for(p));
  const bool pass = r.ddp.sign_errors == 0 && r.ilqr.sign_errors >= 1;
  return {pass, fmt::format("{} samples ({} oracle-inconsistent, {} resamples); {}; {}",
                            r.samples.size(), r.inconsistent, r.total_resamples,
                            stats_line("ddp", r.ddp), stats_line("ilqr", r.ilqr))};
}

// Zero crossings of a sampled curve by linear interpolation.
std::vector<double> crossings(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    if (y[i] == 0.0) {
      out.push_back(x[i]);
    } else if ((y[i] < 0.0) != (y[i + 1] < 0.0) && y[i + 1] != 0.0) {
      out.push_back(x[i] - y[i] * (x[i + 1] - x[i]) / (y[i + 1] - y[i]));
    }
  }
  if (!y.empty() && y.back() == 0.0) out.push_back(x.back());
  return out;
}

bool changes_sign(const std::vector<double>& y) {
  bool pos = false, neg = false, zero = false;
  for (double v : y) {
    pos = pos || v > 0.0;
    neg = neg || v < 0.0;
    zero = zero || v == 0.0;
  }
  return (pos && neg) || zero;
}

struct Curves {
  std::vector<double> x, ddp, ilqr, oracle;
  int missing = 0;
};

Curves slice(const Problem& problem, const UpperLevelCost& ul, const VectorXd& theta, int component,
             const std::vector<double>& grid, const OracleOptions& o) {
  Curves c;
  for (const SlicePoint& p : gradient_slice(problem, ul, theta, component, grid, o, workers())) {
    if (!p.ok) {
      ++c.missing;
      continue;
    }
    c.x.push_back(p.value);
    c.ddp.push_back(p.grad_ddp);
    c.ilqr.push_back(p.grad_ilqr);
    c.oracle.push_back(p.grad_oracle);
  }
  return c;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (double d : v) s += fmt::format("{}{:.4g}", s.empty() ? "" : " ", d);
  return "[" + s + "]";
}

Check gradient_slices() {
  const Plant p = make_pendulum(0.5, 1e3);
  const ImitationCost ul(reference_controls(p, p.theta.values(), Method::kDdp, with_threshold(1e-14)));
  std::vector<double> grid;
  const double cell = 0.05;
  for (int i = 0; i < 19; ++i) grid.push_back(0.1 + cell * i);
  const Curves a = slice(p.problem, ul, p.theta.values(), 0, grid, oracle_for(p));
  bool pendulum_ok = a.missing == 0;
  std::string detail = "pendulum rho crossings:";
  for (const auto& [name, y] : {std::pair{"ddp", &a.ddp}, {"ilqr", &a.ilqr}, {"oracle", &a.oracle}}) {
    const std::vector<double> z = crossings(a.x, *y);
    bool near = !z.empty();
    for (double c : z) near = near && std::abs(c - 0.5) <= cell + 1e-12;
    pendulum_ok = pendulum_ok && near;
    detail += fmt::format(" {} {}", name, fmt_list(z));
  }

  const Plant dp = make_double_pendulum(0.45, 0.375, 5e3);
  const VelocityImitationCost vul(
      reference_controls(dp, kDoublePendulumReference, Method::kDdp, with_threshold(1e-14)), 2);
  std::vector<double> g2;
  for (int i = 0; i < 21; ++i) g2.push_back(0.25 + 0.0125 * i);
  const Curves b = slice(dp.problem, vul, dp.theta.values(), 1, g2, oracle_for(dp));
  const bool dp_ok =
      b.missing == 0 && !changes_sign(b.ilqr) && changes_sign(b.ddp) && changes_sign(b.oracle);
  detail += fmt::format("; double pendulum l2 sign change: ddp {} oracle {} ilqr {} (ilqr range "
                        "[{:.4g}, {:.4g}]), missing {}",
                        changes_sign(b.ddp), changes_sign(b.oracle), changes_sign(b.ilqr),
                        *std::min_element(b.ilqr.begin(), b.ilqr.end()),
                        *std::max_element(b.ilqr.begin(), b.ilqr.end()), a.missing + b.missing);
  return {pendulum_ok && dp_ok, detail};
}

Check known_optimum() {
  const Plant p = make_pendulum(0.5, 1e3);
  const ImitationCost ul(reference_controls(p, p.theta.values()));
  const VectorXd gd = diff_ddp(p.problem, ul, p.theta, Method::kDdp).grad;
  const VectorXd gi = diff_ddp(p.problem, ul, p.theta, Method::kIlqr).grad;
  const double a = gd.lpNorm<Eigen::Infinity>(), b = gi.lpNorm<Eigen::Infinity>();
  return {a < 1e-5 && b < 1e-5, fmt::format("|grad|_inf ddp {:.2e}, ilqr {:.2e}", a, b)};
}

Check sysid_recovery() {
  const Plant p = make_pendulum(0.5, 1e3);
  const ImitationCost ul(reference_controls(p, p.theta.values()));
  const ParamVector start = p.theta.with_value("rho", 0.3);
  BilevelOptions o;
  o.max_iters = 500;
  const BilevelRun run = optimize(p.problem, ul, start, masked_learning_rate(start, 1e-6, {"rho"}), o);
  const double rho = run.final_theta[0];
  const double j = run.history.back().ul_cost;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& it : run.history) best = std::min(best, it.ul_cost);
  const bool pass = std::abs(rho - 0.5) < 1e-2 && j < 1e-3;
  return {pass, fmt::format("stop {} after {} iterations, rho {:.6f} (|err| {:.1e}), J_UL {:.3e} "
                            "(needs < 1e-3; lowest along the run {:.3e})",
                            to_string(run.stop), run.history.size() - 1, rho, std::abs(rho - 0.5),
                            j, best)};
}

double last_finite_cost(const BilevelRun& r) {
  for (auto it = r.history.rbegin(); it != r.history.rend(); ++it) {
    if (std::isfinite(it->ul_cost)) return it->ul_cost;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

Check codesign_contrast() {
  PlantOptions po;
  po.x1 = po.goal = (VectorXd(4) << std::numbers::pi / 2, 0, 0, 0).finished();
  const Plant p = make_double_pendulum(0.375, 0.375, 1e3, po);
  const CoDesignCost ul(p.dof, p.length_indices, 0.6, 1e3);
  const VectorXd eta = masked_learning_rate(p.theta, 1e-6, {"l1", "l2"});

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> len(0.25, 0.5);
  std::vector<ParamVector> starts;
  for (int k = 0; k < 10; ++k) {
    const double l1 = len(rng);
    const double l2 = len(rng);
    starts.push_back(p.theta.with_value("l1", l1).with_value("l2", l2));
  }

  std::vector<BilevelRun> ddp(10), ilqr(10);
  parallel_for(20, workers(), [&](int k) {
    BilevelOptions o;
    o.max_iters = 100;
    o.solve_mode = Method::kIlqr;
    o.derivative_mode = k < 10 ? Method::kDdp : Method::kIlqr;
    (k < 10 ? ddp[k] : ilqr[k - 10]) = optimize(p.problem, ul, starts[k % 10], eta, o);
  });

  bool ddp_ok = true;
  std::string ddp_stops, ilqr_stops;
  int worse = 0;
  for (int k = 0; k < 10; ++k) {
    const BilevelRun& d = ddp[k];
    const bool stop_ok = d.stop == StopReason::kGradTol || d.stop == StopReason::kMaxIters;
    ddp_ok = ddp_ok && stop_ok && d.history.back().ul_cost <= d.history.front().ul_cost;
    ddp_stops += fmt::format("{}{}", k ? " " : "", to_string(d.stop));
    const BilevelRun& i = ilqr[k];
    ilqr_stops += fmt::format("{}{}", k ? " " : "", to_string(i.stop));
    if (i.stop == StopReason::kDiverged || last_finite_cost(i) > d.history.back().ul_cost) ++worse;
  }
  return {ddp_ok && worse >= 1,
          fmt::format("ddp stops [{}]; ilqr stops [{}]; ilqr runs diverged or ending above ddp: {}",
                      ddp_stops, ilqr_stops, worse)};
}

Check property_suites() {
  const std::string filter =
      "Tensor3.*:PendulumModel.*:DoublePendulumModel.*:DynamicsModel.*:QuadraticGoalCost.*:"
      "UpperLevelCost.*:Solver.ConvergedTapesAreSymmetricAndGapFree:"
      "Solver.MultipliersAgreeWithValueGradient:GradientSweep.DeterministicAcrossRunsAndWorkerCounts";
  const std::string cmd =
      fmt::format("{} --gtest_brief=1 --gtest_filter='{}' > /dev/null 2>&1", DIFFDDP_TESTS, filter);
  const int status = std::system(cmd.c_str());
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return {code == 0, fmt::format("unit test binary exit code {} for {}", code, filter)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Check()> run;
};

}  // namespace
}  // namespace diffddp

int main() {
  using namespace diffddp;
  const std::vector<Criterion> criteria = {
      {1, "LQR single iteration", 1, lqr_single_iteration},
      {2, "pendulum swing-up, both modes", 5, pendulum_swing_up},
      {3, "dense KKT equivalence", 10, dense_kkt_equivalence},
      {4, "pendulum gradient sweep", 300, pendulum_sweep},
      {5, "double pendulum sign errors", 900, double_pendulum_sweep},
      {6, "gradient slices", 120, gradient_slices},
      {7, "zero gradient at the known optimum", 5, known_optimum},
      {8, "pendulum SysID recovery", 600, sysid_recovery},
      {9, "co-design divergence contrast", 1200, codesign_contrast},
      {10, "property suites", 120, property_suites},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Check r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = {false, fmt::format("threw: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      r.pass = false;
      r.detail += fmt::format("; over the {:.0f} s budget", c.budget_s);
    }
    failed += !r.pass;
    fmt::print("AC{:<2} {} {} [{:.2f} s]: {}\n", c.id, r.pass ? "PASS" : "FAIL", c.name, secs,
               r.detail);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
