#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffddp/sensitivity.hpp"
#include "diffddp/solver.hpp"
#include "diffddp/types.hpp"
#include "diffddp/upper_level.hpp"

namespace diffddp {

/// Raised by the FD oracle when a perturbed solve does not converge or the
/// perturbed parameters are outside the model's domain.
class OracleRefusal : public std::runtime_error {
 public:
  OracleRefusal(const std::string& what, int component, int direction)
      : std::runtime_error(what), component_(component), direction_(direction) {}
  /// -1 for the unperturbed solve.
  int component() const { return component_; }
  /// +1 or -1; 0 for the unperturbed solve.
  int direction() const { return direction_; }

 private:
  int component_;
  int direction_;
};

struct OracleOptions {
  double step = 1e-5;
  /// Per component: step is step * |theta_i| when true. Empty means all absolute.
  std::vector<bool> relative;
  double conv_threshold = 1e-14;
  Method solve_mode = Method::kDdp;
  int max_iters = 200;
};

/// Central differences of theta -> J_UL(solve(theta)). Perturbed solves are
/// warm-started from `warm_start` (or from a fresh solve at theta when empty).
VectorXd fd_bilevel_oracle(const Problem& problem, const UpperLevelCost& ul_cost,
                           const VectorXd& theta, const OracleOptions& opts = {},
                           std::span<const VectorXd> warm_start = {});

struct SweepSpec {
  int samples = 100;
  /// Per component sampling range; nullopt keeps the nominal value.
  std::vector<std::optional<Interval>> ranges;
  std::uint64_t seed = 0;
  bool resample_nonconverged = true;
  int max_resamples_per_sample = 100;
  double conv_threshold = 1e-14;
  /// Append the nominal theta as one extra sample after the random ones.
  bool inject_nominal = false;
  Method solve_mode = Method::kDdp;
  int workers = 1;

  void check(const ParamVector& nominal) const;
};

struct SampleResult {
  int sample_id = 0;
  VectorXd theta;
  bool injected = false;
  int resamples = 0;
  VectorXd grad_ddp;
  VectorXd grad_ilqr;
  VectorXd oracle;
  /// Oracle at half the step, for the self-consistency check.
  VectorXd oracle_half;
  double gerr_ddp = 0.0;
  double gerr_ilqr = 0.0;
  bool consistent = true;
  /// Some component lies inside the dead-band.
  bool in_deadband = false;
  bool sign_ok_ddp = true;
  bool sign_ok_ilqr = true;
};

struct ErrorStats {
  int count = 0;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  /// mean |oracle|_1 over the same samples.
  double oracle_mean = 0.0;
  int sign_errors = 0;
};

struct GradReport {
  std::uint64_t seed = 0;
  std::vector<SampleResult> samples;
  double deadband = 0.0;
  int total_resamples = 0;
  int inconsistent = 0;
  int deadband_samples = 0;
  /// Over every sample / over oracle-consistent samples only.
  ErrorStats ddp_all, ilqr_all, ddp, ilqr;
};

/// Draws samples, solves, and compares DDP/iLQR sensitivity gradients with
/// the FD oracle. Samples are evaluated on `spec.workers` threads and
/// reported in sample order; results do not depend on the worker count.
GradReport gradient_error_sweep(const Problem& problem, const UpperLevelCost& ul_cost,
                                const ParamVector& nominal, const SweepSpec& spec,
                                const OracleOptions& oracle);

/// Fills signs, dead-band and aggregates from per-sample gradients.
void summarize(GradReport& report, double consistency_rtol = 1e-4);

struct SlicePoint {
  double value = 0.0;
  bool ok = false;
  double grad_ddp = 0.0;
  double grad_ilqr = 0.0;
  double grad_oracle = 0.0;
  std::string error;
};

/// Gradients of one theta component along `grid`, others held at `theta`.
/// A point whose solve or oracle fails is reported with ok == false.
std::vector<SlicePoint> gradient_slice(const Problem& problem, const UpperLevelCost& ul_cost,
                                       const VectorXd& theta, int component,
                                       std::span<const double> grid, const OracleOptions& oracle,
                                       int workers = 1);

/// Runs fn(i) for i in [0, n) on `workers` threads.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace diffddp
