#include "diffddp/validation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

namespace diffddp {

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::clamp(workers, 1, std::max(n, 1));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

SolverOptions oracle_solver(const OracleOptions& o) {
  SolverOptions s;
  s.conv_threshold = o.conv_threshold;
  s.max_iters = o.max_iters;
  return s;
}

double step_for(const OracleOptions& o, const VectorXd& theta, int i, double scale) {
  const bool rel = i < static_cast<int>(o.relative.size()) && o.relative[i];
  const double h = o.step * scale;
  return rel && theta[i] != 0.0 ? h * std::abs(theta[i]) : h;
}

double perturbed_cost(const Problem& problem, const UpperLevelCost& ul_cost,
                      const VectorXd& theta, const OracleOptions& o,
                      std::span<const VectorXd> warm, int component, int direction) {
  auto refuse = [&](const std::string& why) {
    return OracleRefusal(fmt::format("oracle: solve at theta {} h e_{} {}",
                                     direction > 0 ? "+" : "-", component, why),
                         component, direction);
  };
  try {
    const SolveResult r = solve(problem, theta, o.solve_mode, oracle_solver(o), warm);
    if (!r.converged) {
      throw refuse(fmt::format("did not converge (metric {:.3e})", r.conv_metric));
    }
    return ul_cost.eval(r.trajectory, theta);
  } catch (const SolverError& e) {
    throw refuse(e.what());
  } catch (const NonFiniteError& e) {
    throw refuse(e.what());
  } catch (const PreconditionError& e) {
    throw refuse(e.what());
  }
}

std::vector<VectorXd> nominal_controls(const Problem& problem, const VectorXd& theta,
                                       const OracleOptions& o) {
  try {
    SolveResult r = solve(problem, theta, o.solve_mode, oracle_solver(o));
    if (r.converged) return std::move(r.trajectory.controls);
    throw OracleRefusal(
        fmt::format("oracle: unperturbed solve did not converge (metric {:.3e})", r.conv_metric),
        -1, 0);
  } catch (const SolverError& e) {
    throw OracleRefusal(fmt::format("oracle: unperturbed solve failed: {}", e.what()), -1, 0);
  }
}

double fd_partial(const Problem& problem, const UpperLevelCost& ul_cost, const VectorXd& theta,
                  int i, const OracleOptions& o, std::span<const VectorXd> warm, double scale) {
  const double h = step_for(o, theta, i, scale);
  VectorXd plus = theta, minus = theta;
  plus[i] += h;
  minus[i] -= h;
  const double jp = perturbed_cost(problem, ul_cost, plus, o, warm, i, +1);
  const double jm = perturbed_cost(problem, ul_cost, minus, o, warm, i, -1);
  return (jp - jm) / (2.0 * h);
}

VectorXd fd_gradient(const Problem& problem, const UpperLevelCost& ul_cost, const VectorXd& theta,
                     const OracleOptions& o, std::span<const VectorXd> warm, double scale) {
  VectorXd g(theta.size());
  for (int i = 0; i < theta.size(); ++i) {
    g[i] = fd_partial(problem, ul_cost, theta, i, o, warm, scale);
  }
  return g;
}

}  // namespace

VectorXd fd_bilevel_oracle(const Problem& problem, const UpperLevelCost& ul_cost,
                           const VectorXd& theta, const OracleOptions& opts,
                           std::span<const VectorXd> warm_start) {
  std::vector<VectorXd> warm(warm_start.begin(), warm_start.end());
  if (warm.empty()) warm = nominal_controls(problem, theta, opts);
  return fd_gradient(problem, ul_cost, theta, opts, warm, 1.0);
}

void SweepSpec::check(const ParamVector& nominal) const {
  if (samples < 0) throw PreconditionError("sweep: samples must be >= 0");
  if (static_cast<int>(ranges.size()) != nominal.size()) {
    throw DimensionError(fmt::format("sweep: {} ranges for {} parameters", ranges.size(),
                                     nominal.size()));
  }
  for (int i = 0; i < nominal.size(); ++i) {
    if (!ranges[i]) continue;
    const Interval& r = *ranges[i];
    const Interval& b = nominal.bounds()[i];
    if (!(r.lower <= r.upper) || !b.contains(r.lower) || !b.contains(r.upper)) {
      throw PreconditionError(fmt::format("sweep: range [{}, {}] for {} is not inside [{}, {}]",
                                          r.lower, r.upper, nominal.names()[i], b.lower,
                                          b.upper));
    }
  }
  if (workers < 1) throw PreconditionError("sweep: workers must be >= 1");
}

namespace {

bool evaluate_sample(const Problem& problem, const UpperLevelCost& ul_cost, const VectorXd& theta,
                     const SweepSpec& spec, const OracleOptions& oracle, SampleResult& out) {
  SolverOptions so;
  so.conv_threshold = spec.conv_threshold;
  so.max_iters = oracle.max_iters;
  SolveResult r;
  try {
    r = solve(problem, theta, spec.solve_mode, so);
  } catch (const SolverError&) {
    return false;
  } catch (const NonFiniteError&) {
    return false;
  }
  if (!r.converged) return false;
  OracleOptions o = oracle;
  o.conv_threshold = spec.conv_threshold;
  o.solve_mode = spec.solve_mode;
  try {
    out.grad_ddp = differentiate(problem, r, ul_cost, Method::kDdp).grad;
    out.grad_ilqr = differentiate(problem, r, ul_cost, Method::kIlqr).grad;
    out.oracle = fd_gradient(problem, ul_cost, theta, o, r.trajectory.controls, 1.0);
    out.oracle_half = fd_gradient(problem, ul_cost, theta, o, r.trajectory.controls, 0.5);
  } catch (const OracleRefusal&) {
    return false;
  } catch (const SensitivityError&) {
    return false;
  }
  out.theta = theta;
  return true;
}

VectorXd draw(const SweepSpec& spec, const VectorXd& nominal, std::mt19937_64& rng) {
  VectorXd th = nominal;
  for (int i = 0; i < th.size(); ++i) {
    if (spec.ranges[i]) {
      th[i] = std::uniform_real_distribution<double>(spec.ranges[i]->lower,
                                                     spec.ranges[i]->upper)(rng);
    }
  }
  return th;
}

ErrorStats stats(const std::vector<SampleResult>& samples, bool consistent_only, bool ddp) {
  ErrorStats s;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  double sum = 0.0, oracle_sum = 0.0;
  for (const auto& x : samples) {
    if (consistent_only && !x.consistent) continue;
    const double e = ddp ? x.gerr_ddp : x.gerr_ilqr;
    ++s.count;
    s.min = std::min(s.min, e);
    s.max = std::max(s.max, e);
    sum += e;
    oracle_sum += x.oracle.cwiseAbs().sum();
    if (!(ddp ? x.sign_ok_ddp : x.sign_ok_ilqr)) ++s.sign_errors;
  }
  if (s.count > 0) {
    s.mean = sum / s.count;
    s.oracle_mean = oracle_sum / s.count;
  } else {
    s.min = s.max = 0.0;
  }
  return s;
}

bool signs_agree(const VectorXd& g, const VectorXd& oracle, double deadband) {
  for (int i = 0; i < g.size(); ++i) {
    if (std::abs(oracle[i]) <= deadband) continue;
    if ((g[i] > 0.0) != (oracle[i] > 0.0) || g[i] == 0.0) return false;
  }
  return true;
}

}  // namespace

void summarize(GradReport& report, double consistency_rtol) {
  std::vector<double> mags;
  for (const auto& s : report.samples) {
    for (int i = 0; i < s.oracle.size(); ++i) mags.push_back(std::abs(s.oracle[i]));
  }
  double median = 0.0;
  if (!mags.empty()) {
    std::sort(mags.begin(), mags.end());
    const std::size_t n = mags.size();
    median = n % 2 ? mags[n / 2] : 0.5 * (mags[n / 2 - 1] + mags[n / 2]);
  }
  report.deadband = 1e-6 * (1.0 + median);
  report.inconsistent = 0;
  report.deadband_samples = 0;
  report.total_resamples = 0;
  for (auto& s : report.samples) {
    s.gerr_ddp = (s.grad_ddp - s.oracle).cwiseAbs().sum();
    s.gerr_ilqr = (s.grad_ilqr - s.oracle).cwiseAbs().sum();
    s.consistent = true;
    s.in_deadband = false;
    for (int i = 0; i < s.oracle.size(); ++i) {
      const double diff = std::abs(s.oracle[i] - s.oracle_half[i]);
      if (diff > consistency_rtol * std::abs(s.oracle[i]) + report.deadband) s.consistent = false;
      if (std::abs(s.oracle[i]) <= report.deadband) s.in_deadband = true;
    }
    s.sign_ok_ddp = signs_agree(s.grad_ddp, s.oracle, report.deadband);
    s.sign_ok_ilqr = signs_agree(s.grad_ilqr, s.oracle, report.deadband);
    report.inconsistent += !s.consistent;
    report.deadband_samples += s.in_deadband;
    report.total_resamples += s.resamples;
  }
  report.ddp_all = stats(report.samples, false, true);
  report.ilqr_all = stats(report.samples, false, false);
  report.ddp = stats(report.samples, true, true);
  report.ilqr = stats(report.samples, true, false);
}

GradReport gradient_error_sweep(const Problem& problem, const UpperLevelCost& ul_cost,
                                const ParamVector& nominal, const SweepSpec& spec,
                                const OracleOptions& oracle) {
  problem.check();
  spec.check(nominal);
  GradReport report;
  report.seed = spec.seed;
  const int n = spec.samples + (spec.inject_nominal ? 1 : 0);
  report.samples.resize(n);

  parallel_for(n, spec.workers, [&](int i) {
    SampleResult& out = report.samples[i];
    out.sample_id = i;
    if (i == spec.samples) {
      out.injected = true;
      if (!evaluate_sample(problem, ul_cost, nominal.values(), spec, oracle, out)) {
        throw SolverError("sweep: the injected nominal sample failed to solve or differentiate");
      }
      return;
    }
    // One generator per sample keeps draws independent of scheduling.
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed),
                      static_cast<std::uint32_t>(spec.seed >> 32), static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    for (int attempt = 0;; ++attempt) {
      const VectorXd th = draw(spec, nominal.values(), rng);
      if (evaluate_sample(problem, ul_cost, th, spec, oracle, out)) {
        out.resamples = attempt;
        return;
      }
      if (!spec.resample_nonconverged || attempt >= spec.max_resamples_per_sample) {
        throw SolverError(fmt::format("sweep: sample {} failed after {} attempts", i, attempt + 1));
      }
    }
  });
  summarize(report);
  return report;
}

std::vector<SlicePoint> gradient_slice(const Problem& problem, const UpperLevelCost& ul_cost,
                                       const VectorXd& theta, int component,
                                       std::span<const double> grid, const OracleOptions& oracle,
                                       int workers) {
  if (component < 0 || component >= theta.size()) {
    throw DimensionError(fmt::format("slice: component {} out of range for {} parameters",
                                     component, theta.size()));
  }
  std::vector<SlicePoint> out(grid.size());
  parallel_for(static_cast<int>(grid.size()), workers, [&](int k) {
    SlicePoint& p = out[k];
    p.value = grid[k];
    VectorXd th = theta;
    th[component] = grid[k];
    try {
      const SolveResult r = solve(problem, th, oracle.solve_mode, oracle_solver(oracle));
      if (!r.converged) {
        p.error = fmt::format("solve did not converge (metric {:.3e})", r.conv_metric);
        return;
      }
      p.grad_ddp = differentiate(problem, r, ul_cost, Method::kDdp).grad[component];
      p.grad_ilqr = differentiate(problem, r, ul_cost, Method::kIlqr).grad[component];
      p.grad_oracle =
          fd_partial(problem, ul_cost, th, component, oracle, r.trajectory.controls, 1.0);
      p.ok = true;
    } catch (const std::exception& e) {
      p.error = e.what();
    }
  });
  return out;
}

}  // namespace diffddp
