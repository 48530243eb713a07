#include "diffddp/experiment.hpp"

#include <fmt/format.h>

#include <Eigen/Core>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <chrono>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include "diffddp/bilevel.hpp"
#include "diffddp/sensitivity.hpp"
#include "json.hpp"

namespace diffddp {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string num(double v) { return fmt::format("{:.17g}", v); }

class Csv {
 public:
  Csv(const fs::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ParamVector with_overrides(const ParamVector& base, const std::map<std::string, double>& values,
                           std::string_view section) {
  ParamVector out = base;
  for (const auto& [name, v] : values) {
    const auto& names = base.names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw ConfigError(fmt::format("{}.{}: the plant has no parameter '{}'", section, name, name));
    }
    try {
      out = out.with_value(name, v);
    } catch (const PreconditionError& e) {
      throw ConfigError(fmt::format("{}.{}: {}", section, name, e.what()));
    }
  }
  return out;
}

int index_checked(const ParamVector& theta, const std::string& name, std::string_view key) {
  const auto& names = theta.names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    throw ConfigError(fmt::format("{}: the plant has no parameter '{}'", key, name));
  }
  return static_cast<int>(it - names.begin());
}

std::vector<std::string> theta_cells(const VectorXd& theta) {
  std::vector<std::string> out;
  for (int i = 0; i < theta.size(); ++i) out.push_back(num(theta[i]));
  return out;
}

template <typename... Vs>
std::vector<std::string> concat(std::vector<std::string> a, const Vs&... rest) {
  (a.insert(a.end(), rest.begin(), rest.end()), ...);
  return a;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json config_json(const ExperimentConfig& c) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(serialize_config(c));
  pt::read_ini(in, tree);
  json out = json::object();
  for (const auto& [section, body] : tree) {
    json s = json::object();
    for (const auto& [key, value] : body) s[key] = value.get_value<std::string>();
    out[section] = std::move(s);
  }
  return out;
}

void write_manifest(const ExperimentConfig& c, const fs::path& out_dir, json results,
                    RunSummary& summary) {
  json m;
  m["experiment"] = std::string(to_string(c.kind));
  m["seed"] = c.seed;
  m["timestamp"] = timestamp();
  m["versions"] = {{"diffddp", kVersion},
                   {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION,
                                         EIGEN_MINOR_VERSION)},
                   {"compiler", __VERSION__}};
  m["config"] = config_json(c);
  m["results"] = std::move(results);
  const fs::path path = out_dir / "manifest.json";
  std::ofstream(path) << m.dump(2) << '\n';
  summary.files.push_back(path);
}

json solve_json(const SolveResult& r) {
  return {{"converged", r.converged}, {"iterations", r.iterations},   {"cost", r.cost},
          {"conv_metric", r.conv_metric}, {"final_reg", r.final_reg}, {"mode", to_string(r.mode)}};
}

SolveResult solve_or_throw(const ExperimentSetup& s, const VectorXd& theta, Method mode,
                           const SolverOptions& opts) {
  return solve(s.plant.problem, theta, mode, opts);
}

// --- solve -----------------------------------------------------------------

void run_solve(const ExperimentConfig& c, const fs::path& out, RunSummary& summary) {
  const ExperimentSetup s = build_setup(c, c.solver.conv_threshold);
  const SolveResult r = solve_or_throw(s, s.theta.values(), c.solve_mode, c.solver);
  const Trajectory& tr = r.trajectory;
  const int nx = static_cast<int>(tr.states[0].size());
  const int nu = static_cast<int>(tr.controls[0].size());

  std::vector<std::string> hx{"knot", "t"}, hu{"knot", "t"};
  for (int i = 0; i < nx; ++i) hx.push_back(fmt::format("x{}", i));
  for (int i = 0; i < nu; ++i) hu.push_back(fmt::format("u{}", i));
  {
    Csv states(out / "states.csv", hx);
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
      std::vector<std::string> row{std::to_string(t), num(t * tr.dt)};
      for (int i = 0; i < nx; ++i) row.push_back(num(tr.states[t][i]));
      states.row(row);
    }
    Csv controls(out / "controls.csv", hu);
    for (std::size_t t = 0; t < tr.controls.size(); ++t) {
      std::vector<std::string> row{std::to_string(t), num(t * tr.dt)};
      for (int i = 0; i < nu; ++i) row.push_back(num(tr.controls[t][i]));
      controls.row(row);
    }
  }
  summary.files.push_back(out / "states.csv");
  summary.files.push_back(out / "controls.csv");
  write_manifest(c, out, solve_json(r), summary);
  if (!r.converged) {
    throw NotConvergedError(fmt::format("solve did not converge after {} iterations (metric {:.3e})",
                                        r.iterations, r.conv_metric));
  }
  summary.message = fmt::format("converged in {} iterations, cost {:.17g}", r.iterations, r.cost);
}

// --- gradcheck ---------------------------------------------------------------

SolverOptions with_threshold(SolverOptions o, double threshold) {
  o.conv_threshold = threshold;
  return o;
}

void run_gradcheck(const ExperimentConfig& c, const fs::path& out, RunSummary& summary) {
  const ExperimentSetup s = build_setup(c, c.oracle_threshold);
  const SolveResult r = solve_or_throw(s, s.theta.values(), c.solve_mode,
                                       with_threshold(c.solver, c.oracle_threshold));
  if (!r.converged) {
    write_manifest(c, out, {{"solve", solve_json(r)}}, summary);
    throw NotConvergedError(fmt::format("solve did not converge after {} iterations (metric {:.3e})",
                                        r.iterations, r.conv_metric));
  }
  const VectorXd gd = differentiate(s.plant.problem, r, *s.ul_cost, Method::kDdp).grad;
  const VectorXd gi = differentiate(s.plant.problem, r, *s.ul_cost, Method::kIlqr).grad;
  const VectorXd fd = fd_bilevel_oracle(s.plant.problem, *s.ul_cost, s.theta.values(), s.oracle,
                                        r.trajectory.controls);
  {
    Csv csv(out / "gradient.csv", {"component", "value", "grad_ddp", "grad_ilqr", "grad_oracle"});
    for (int i = 0; i < s.theta.size(); ++i) {
      csv.row({s.theta.names()[i], num(s.theta[i]), num(gd[i]), num(gi[i]), num(fd[i])});
    }
  }
  summary.files.push_back(out / "gradient.csv");
  const double ul = s.ul_cost->eval(r.trajectory, s.theta.values());
  write_manifest(c, out,
                 {{"solve", solve_json(r)},
                  {"ul_cost", ul},
                  {"gerr_ddp", (gd - fd).cwiseAbs().sum()},
                  {"gerr_ilqr", (gi - fd).cwiseAbs().sum()}},
                 summary);
  summary.message = fmt::format("G_ERR ddp {:.3e}, ilqr {:.3e}", (gd - fd).cwiseAbs().sum(),
                                (gi - fd).cwiseAbs().sum());
}

// --- slice -------------------------------------------------------------------

void run_slice(const ExperimentConfig& c, const fs::path& out, RunSummary& summary) {
  const ExperimentSetup s = build_setup(c, c.oracle_threshold);
  const int comp = index_checked(s.theta, c.slice_component, "slice.component");
  if (c.slice_points < 2 || !(c.slice_lower < c.slice_upper)) {
    throw ConfigError("slice: need points >= 2 and lower < upper");
  }
  std::vector<double> grid(c.slice_points);
  for (int k = 0; k < c.slice_points; ++k) {
    grid[k] = c.slice_lower + (c.slice_upper - c.slice_lower) * k / (c.slice_points - 1);
  }
  const auto points = gradient_slice(s.plant.problem, *s.ul_cost, s.theta.values(), comp, grid,
                                     s.oracle, c.workers);
  int missing = 0;
  {
    Csv csv(out / "slice.csv", {c.slice_component, "ok", "grad_ddp", "grad_ilqr", "grad_oracle"});
    for (const auto& p : points) {
      missing += !p.ok;
      csv.row({num(p.value), p.ok ? "1" : "0", p.ok ? num(p.grad_ddp) : "",
               p.ok ? num(p.grad_ilqr) : "", p.ok ? num(p.grad_oracle) : ""});
    }
  }
  summary.files.push_back(out / "slice.csv");
  write_manifest(c, out, {{"component", c.slice_component}, {"points", points.size()},
                          {"missing", missing}},
                 summary);
  summary.message = fmt::format("{} grid points, {} missing", points.size(), missing);
}

// --- sweep -------------------------------------------------------------------

json stats_json(const ErrorStats& s) {
  return {{"count", s.count}, {"min", s.min},  {"max", s.max}, {"mean", s.mean},
          {"oracle_mean_l1", s.oracle_mean}, {"sign_errors", s.sign_errors}};
}

void run_sweep(const ExperimentConfig& c, const fs::path& out, RunSummary& summary) {
  const ExperimentSetup s = build_setup(c, c.oracle_threshold);
  SweepSpec spec;
  spec.samples = c.samples;
  spec.seed = c.seed;
  spec.resample_nonconverged = c.resample;
  spec.conv_threshold = c.oracle_threshold;
  spec.inject_nominal = c.inject_nominal;
  spec.solve_mode = c.solve_mode;
  spec.workers = c.workers;
  spec.ranges.assign(s.theta.size(), std::nullopt);
  for (const auto& [name, range] : c.ranges) {
    spec.ranges[index_checked(s.theta, name, "ranges." + name)] = range;
  }
  try {
    spec.check(s.theta);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  const GradReport rep =
      gradient_error_sweep(s.plant.problem, *s.ul_cost, s.theta, spec, s.oracle);

  {
    Csv csv(out / "sweep.csv",
            concat(std::vector<std::string>{"sample_id"}, s.theta.names(),
                   std::vector<std::string>{"gerr_ddp", "gerr_ilqr", "sign_ok_ddp", "sign_ok_ilqr",
                                            "consistent", "injected", "resamples"}));
    for (const auto& x : rep.samples) {
      csv.row(concat(std::vector<std::string>{std::to_string(x.sample_id)}, theta_cells(x.theta),
                     std::vector<std::string>{num(x.gerr_ddp), num(x.gerr_ilqr),
                                              x.sign_ok_ddp ? "1" : "0", x.sign_ok_ilqr ? "1" : "0",
                                              x.consistent ? "1" : "0", x.injected ? "1" : "0",
                                              std::to_string(x.resamples)}));
    }
    Csv agg(out / "sweep_summary.csv",
            {"method", "subset", "samples", "min", "max", "mean", "sign_errors"});
    auto line = [&](std::string_view m, std::string_view subset, const ErrorStats& st) {
      agg.row({std::string(m), std::string(subset), std::to_string(st.count), num(st.min),
               num(st.max), num(st.mean), std::to_string(st.sign_errors)});
    };
    line("ddp", "consistent", rep.ddp);
    line("ilqr", "consistent", rep.ilqr);
    line("ddp", "all", rep.ddp_all);
    line("ilqr", "all", rep.ilqr_all);
  }
  summary.files.push_back(out / "sweep.csv");
  summary.files.push_back(out / "sweep_summary.csv");
  write_manifest(c, out,
                 {{"samples", rep.samples.size()},
                  {"deadband", rep.deadband},
                  {"resamples", rep.total_resamples},
                  {"inconsistent", rep.inconsistent},
                  {"deadband_samples", rep.deadband_samples},
                  {"ddp", stats_json(rep.ddp)},
                  {"ilqr", stats_json(rep.ilqr)},
                  {"ddp_all", stats_json(rep.ddp_all)},
                  {"ilqr_all", stats_json(rep.ilqr_all)}},
                 summary);
  summary.message =
      fmt::format("mean G_ERR ddp {:.3e}, ilqr {:.3e}; sign errors ddp {}/{}, ilqr {}/{}",
                  rep.ddp.mean, rep.ilqr.mean, rep.ddp.sign_errors, rep.ddp.count,
                  rep.ilqr.sign_errors, rep.ilqr.count);
}

// --- optimize ----------------------------------------------------------------

void run_optimize(const ExperimentConfig& c, const fs::path& out, RunSummary& summary) {
  const ExperimentSetup s = build_setup(c, c.solver.conv_threshold);
  const ParamVector start = with_overrides(s.theta, c.initial, "initial");
  std::vector<std::string> free = c.free.empty() ? s.theta.names() : c.free;
  for (const auto& f : free) index_checked(s.theta, f, "optimize.free");
  if (!(c.eta > 0.0)) throw ConfigError("optimize.eta: must be > 0");
  const VectorXd eta = masked_learning_rate(s.theta, c.eta, free);
  for (const auto& [name, r] : c.initial_ranges) {
    const int i = index_checked(s.theta, name, "initial_ranges." + name);
    if (!s.theta.bounds()[i].contains(r.lower) || !s.theta.bounds()[i].contains(r.upper)) {
      throw ConfigError(fmt::format("initial_ranges.{}: outside the parameter bounds", name));
    }
  }

  BilevelOptions bo;
  bo.grad_tol = c.grad_tol;
  bo.max_iters = c.outer_max_iters;
  bo.divergence_factor = c.divergence_factor;
  bo.derivative_mode = c.derivative_mode;
  bo.solve_mode = c.solve_mode;
  bo.solver = c.solver;

  // Initial designs come from one stream, run by run, in name order.
  std::vector<ParamVector> starts;
  std::mt19937_64 rng(c.seed);
  for (int run = 0; run < c.runs; ++run) {
    VectorXd th = start.values();
    for (const auto& [name, r] : c.initial_ranges) {
      th[s.theta.index_of(name)] = std::uniform_real_distribution<double>(r.lower, r.upper)(rng);
    }
    starts.push_back(s.theta.with_values(th));
  }
  std::vector<BilevelRun> runs(starts.size());
  parallel_for(static_cast<int>(starts.size()), c.workers, [&](int k) {
    runs[k] = optimize(s.plant.problem, *s.ul_cost, starts[k], eta, bo);
  });

  json results = json::array();
  {
    Csv hist(out / "history.csv",
             concat(std::vector<std::string>{"run", "iteration"}, s.theta.names(),
                    std::vector<std::string>{"ul_cost", "grad_inf", "inner_iterations",
                                             "converged"}));
    Csv res(out / "runs.csv",
            concat(std::vector<std::string>{"run", "stop_reason", "iterations", "initial_ul_cost",
                                            "final_ul_cost"},
                   s.theta.names()));
    for (std::size_t k = 0; k < runs.size(); ++k) {
      const BilevelRun& r = runs[k];
      for (std::size_t it = 0; it < r.history.size(); ++it) {
        const BilevelIterate& h = r.history[it];
        hist.row(concat(std::vector<std::string>{std::to_string(k), std::to_string(it)},
                        theta_cells(h.theta),
                        std::vector<std::string>{num(h.ul_cost), num(h.grad_inf),
                                                 std::to_string(h.inner_iterations),
                                                 h.converged ? "1" : "0"}));
      }
      res.row(concat(std::vector<std::string>{std::to_string(k), std::string(to_string(r.stop)),
                                              std::to_string(r.history.size() - 1),
                                              num(r.history.front().ul_cost),
                                              num(r.history.back().ul_cost)},
                     theta_cells(r.final_theta)));
      results.push_back({{"run", k},
                         {"stop_reason", to_string(r.stop)},
                         {"iterations", r.history.size() - 1},
                         {"initial_ul_cost", r.history.front().ul_cost},
                         {"final_ul_cost", r.history.back().ul_cost}});
    }
  }
  summary.files.push_back(out / "history.csv");
  summary.files.push_back(out / "runs.csv");
  write_manifest(c, out, {{"runs", results}}, summary);
  summary.message = fmt::format("{} run(s); first stopped with {} after {} iterations", runs.size(),
                                to_string(runs.front().stop), runs.front().history.size() - 1);
}

}  // namespace

ExperimentSetup build_setup(const ExperimentConfig& c, double reference_threshold) {
  PlantOptions po;
  po.horizon = c.horizon;
  po.dt = c.dt;
  po.control_weight = c.control_weight;
  po.x1 = to_vector(c.x1);
  po.goal = to_vector(c.goal);
  ExperimentSetup s;
  try {
    s.plant = make_plant(c.plant, po);
  } catch (const DimensionError& e) {
    throw ConfigError(fmt::format("problem: {}", e.what()));
  }
  s.theta = with_overrides(s.plant.theta, c.theta, "theta");

  s.oracle.step = c.oracle_step;
  s.oracle.relative = s.plant.relative_step;
  s.oracle.conv_threshold = c.oracle_threshold;
  s.oracle.solve_mode = c.solve_mode;
  s.oracle.max_iters = c.solver.max_iters;
  if (c.kind == ExperimentKind::kSolve) return s;

  if (c.upper_level == UpperLevelKind::kCoDesign) {
    if (s.plant.length_indices.empty()) {
      throw ConfigError("upper_level.kind: codesign needs a plant with link lengths");
    }
    s.ul_cost = std::make_shared<CoDesignCost>(s.plant.dof, s.plant.length_indices, c.reach,
                                               c.hinge_weight);
    return s;
  }
  const ParamVector ref_theta = with_overrides(s.theta, c.reference, "reference");
  SolverOptions ro = c.solver;
  ro.conv_threshold = reference_threshold;
  std::vector<VectorXd> ref = reference_controls(s.plant, ref_theta.values(), c.solve_mode, ro);
  if (c.upper_level == UpperLevelKind::kImitation) {
    s.ul_cost = std::make_shared<ImitationCost>(std::move(ref), c.imitation_eps);
  } else {
    s.ul_cost =
        std::make_shared<VelocityImitationCost>(std::move(ref), s.plant.dof, c.imitation_eps);
  }
  return s;
}

RunSummary run_experiment(const ExperimentConfig& c, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  RunSummary summary;
  switch (c.kind) {
    case ExperimentKind::kSolve:
      run_solve(c, out_dir, summary);
      break;
    case ExperimentKind::kGradcheck:
      run_gradcheck(c, out_dir, summary);
      break;
    case ExperimentKind::kSlice:
      run_slice(c, out_dir, summary);
      break;
    case ExperimentKind::kSweep:
      run_sweep(c, out_dir, summary);
      break;
    case ExperimentKind::kOptimize:
      run_optimize(c, out_dir, summary);
      break;
  }
  return summary;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const NotConvergedError*>(&e) || dynamic_cast<const SolverError*>(&e)) return 3;
  if (dynamic_cast<const OracleRefusal*>(&e)) return 4;
  return 1;
}

}  // namespace diffddp
