#include "diffddp/config.hpp"

#include <fmt/format.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace diffddp {

std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kSolve:
      return "solve";
    case ExperimentKind::kGradcheck:
      return "gradcheck";
    case ExperimentKind::kSlice:
      return "slice";
    case ExperimentKind::kSweep:
      return "sweep";
    case ExperimentKind::kOptimize:
      return "optimize";
  }
  return "?";
}

std::string_view to_string(UpperLevelKind k) {
  switch (k) {
    case UpperLevelKind::kImitation:
      return "imitation";
    case UpperLevelKind::kVelocityImitation:
      return "velocity_imitation";
    case UpperLevelKind::kCoDesign:
      return "codesign";
  }
  return "?";
}

namespace {

using Handler = std::function<void(const std::string&)>;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  double out = 0.0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw ConfigError(fmt::format("{}: expected a number, got '{}'", key, v));
  }
  return out;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  Int out = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw ConfigError(fmt::format("{}: expected an integer, got '{}'", key, v));
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true") return true;
  if (t == "false") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, v));
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& w : words(v)) out.push_back(to_double(key, w));
  return out;
}

Interval to_interval(const std::string& key, const std::string& v) {
  const auto d = to_doubles(key, v);
  if (d.size() != 2 || !(d[0] <= d[1])) {
    throw ConfigError(fmt::format("{}: expected 'lower upper', got '{}'", key, v));
  }
  return Interval{d[0], d[1]};
}

Method to_method(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "ddp") return Method::kDdp;
  if (t == "ilqr") return Method::kIlqr;
  throw ConfigError(fmt::format("{}: expected ddp or ilqr, got '{}'", key, v));
}

template <typename E, std::size_t N>
E to_enum(const std::string& key, const std::string& v, const E (&options)[N]) {
  const std::string t = trim(v);
  std::string names;
  for (E o : options) {
    if (to_string(o) == t) return o;
    names += fmt::format("{}{}", names.empty() ? "" : ", ", to_string(o));
  }
  throw ConfigError(fmt::format("{}: expected one of {}, got '{}'", key, names, v));
}

constexpr ExperimentKind kKinds[] = {ExperimentKind::kSolve, ExperimentKind::kGradcheck,
                                     ExperimentKind::kSlice, ExperimentKind::kSweep,
                                     ExperimentKind::kOptimize};
constexpr PlantKind kPlants[] = {PlantKind::kPendulum, PlantKind::kDoublePendulum,
                                 PlantKind::kLinear};
constexpr UpperLevelKind kUpperLevels[] = {UpperLevelKind::kImitation,
                                           UpperLevelKind::kVelocityImitation,
                                           UpperLevelKind::kCoDesign};

std::map<std::string, std::map<std::string, Handler>> fixed_sections(ExperimentConfig& c) {
  using K = const std::string&;
  std::map<std::string, std::map<std::string, Handler>> s;
  s["experiment"] = {
      {"kind", [&](K v) { c.kind = to_enum("experiment.kind", v, kKinds); }},
      {"plant", [&](K v) { c.plant = to_enum("experiment.plant", v, kPlants); }},
      {"output_dir", [&](K v) { c.output_dir = trim(v); }},
      {"seed", [&](K v) { c.seed = to_int<std::uint64_t>("experiment.seed", v); }},
      {"workers", [&](K v) { c.workers = to_int<int>("experiment.workers", v); }},
  };
  s["problem"] = {
      {"horizon", [&](K v) { c.horizon = to_int<int>("problem.horizon", v); }},
      {"dt", [&](K v) { c.dt = to_double("problem.dt", v); }},
      {"control_weight", [&](K v) { c.control_weight = to_double("problem.control_weight", v); }},
      {"x1", [&](K v) { c.x1 = to_doubles("problem.x1", v); }},
      {"goal", [&](K v) { c.goal = to_doubles("problem.goal", v); }},
  };
  s["solver"] = {
      {"mode", [&](K v) { c.solve_mode = to_method("solver.mode", v); }},
      {"max_iters", [&](K v) { c.solver.max_iters = to_int<int>("solver.max_iters", v); }},
      {"conv_threshold",
       [&](K v) { c.solver.conv_threshold = to_double("solver.conv_threshold", v); }},
      {"reg_init", [&](K v) { c.solver.reg_init = to_double("solver.reg_init", v); }},
      {"reg_min", [&](K v) { c.solver.reg_min = to_double("solver.reg_min", v); }},
      {"reg_max", [&](K v) { c.solver.reg_max = to_double("solver.reg_max", v); }},
      {"reg_increase", [&](K v) { c.solver.reg_increase = to_double("solver.reg_increase", v); }},
      {"reg_decrease", [&](K v) { c.solver.reg_decrease = to_double("solver.reg_decrease", v); }},
      {"line_search_steps",
       [&](K v) { c.solver.line_search_steps = to_int<int>("solver.line_search_steps", v); }},
  };
  s["sensitivity"] = {
      {"derivative_mode",
       [&](K v) { c.derivative_mode = to_method("sensitivity.derivative_mode", v); }},
  };
  s["upper_level"] = {
      {"kind", [&](K v) { c.upper_level = to_enum("upper_level.kind", v, kUpperLevels); }},
      {"eps", [&](K v) { c.imitation_eps = to_double("upper_level.eps", v); }},
      {"reach", [&](K v) { c.reach = to_double("upper_level.reach", v); }},
      {"hinge_weight", [&](K v) { c.hinge_weight = to_double("upper_level.hinge_weight", v); }},
  };
  s["oracle"] = {
      {"step", [&](K v) { c.oracle_step = to_double("oracle.step", v); }},
      {"conv_threshold",
       [&](K v) { c.oracle_threshold = to_double("oracle.conv_threshold", v); }},
  };
  s["sweep"] = {
      {"samples", [&](K v) { c.samples = to_int<int>("sweep.samples", v); }},
      {"inject_nominal", [&](K v) { c.inject_nominal = to_bool("sweep.inject_nominal", v); }},
      {"resample", [&](K v) { c.resample = to_bool("sweep.resample", v); }},
  };
  s["slice"] = {
      {"component", [&](K v) { c.slice_component = trim(v); }},
      {"lower", [&](K v) { c.slice_lower = to_double("slice.lower", v); }},
      {"upper", [&](K v) { c.slice_upper = to_double("slice.upper", v); }},
      {"points", [&](K v) { c.slice_points = to_int<int>("slice.points", v); }},
  };
  s["optimize"] = {
      {"eta", [&](K v) { c.eta = to_double("optimize.eta", v); }},
      {"free", [&](K v) { c.free = words(v); }},
      {"max_iters", [&](K v) { c.outer_max_iters = to_int<int>("optimize.max_iters", v); }},
      {"grad_tol", [&](K v) { c.grad_tol = to_double("optimize.grad_tol", v); }},
      {"divergence_factor",
       [&](K v) { c.divergence_factor = to_double("optimize.divergence_factor", v); }},
      {"runs", [&](K v) { c.runs = to_int<int>("optimize.runs", v); }},
  };
  return s;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("line {}: {}", e.line(), e.message()));
  }

  ExperimentConfig c;
  auto fixed = fixed_sections(c);
  using Scalars = std::map<std::string, double>;
  using Ranges = std::map<std::string, Interval>;
  const std::map<std::string, Scalars*> scalar_maps = {
      {"theta", &c.theta}, {"reference", &c.reference}, {"initial", &c.initial}};
  const std::map<std::string, Ranges*> range_maps = {{"ranges", &c.ranges},
                                                     {"initial_ranges", &c.initial_ranges}};

  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) {
      throw ConfigError(fmt::format("{}: key outside of any section", section));
    }
    for (const auto& [key, value] : body) {
      const std::string name = section + "." + key;
      const std::string v = value.get_value<std::string>();
      if (auto f = fixed.find(section); f != fixed.end()) {
        auto h = f->second.find(key);
        if (h == f->second.end()) throw ConfigError(fmt::format("unknown key '{}'", name));
        h->second(v);
      } else if (auto m = scalar_maps.find(section); m != scalar_maps.end()) {
        (*m->second)[key] = to_double(name, v);
      } else if (auto r = range_maps.find(section); r != range_maps.end()) {
        (*r->second)[key] = to_interval(name, v);
      } else {
        throw ConfigError(fmt::format("unknown section '[{}]' (key '{}')", section, name));
      }
    }
  }
  if (c.horizon < 2) throw ConfigError("problem.horizon: must be >= 2");
  if (!(c.dt > 0.0)) throw ConfigError("problem.dt: must be > 0");
  if (c.workers < 1) throw ConfigError("experiment.workers: must be >= 1");
  if (c.samples < 0) throw ConfigError("sweep.samples: must be >= 0");
  if (c.runs < 1) throw ConfigError("optimize.runs: must be >= 1");
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(fmt::format("cannot open config '{}'", path));
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config(buf.str());
}

namespace {

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::string nums(const std::vector<double>& v) {
  std::string out;
  for (double d : v) out += (out.empty() ? "" : " ") + num(d);
  return out;
}

}  // namespace

std::string serialize_config(const ExperimentConfig& c) {
  std::string s;
  auto kv = [&](std::string_view k, const std::string& v) {
    s += fmt::format("{} = {}\n", k, v);
  };
  auto section = [&](std::string_view name) {
    s += fmt::format("{}[{}]\n", s.empty() ? "" : "\n", name);
  };
  auto scalars = [&](std::string_view name, const std::map<std::string, double>& m) {
    if (m.empty()) return;
    section(name);
    for (const auto& [k, v] : m) kv(k, num(v));
  };
  auto ranges = [&](std::string_view name, const std::map<std::string, Interval>& m) {
    if (m.empty()) return;
    section(name);
    for (const auto& [k, v] : m) kv(k, num(v.lower) + " " + num(v.upper));
  };

  section("experiment");
  kv("kind", std::string(to_string(c.kind)));
  kv("plant", std::string(to_string(c.plant)));
  kv("output_dir", c.output_dir);
  kv("seed", std::to_string(c.seed));
  kv("workers", std::to_string(c.workers));

  section("problem");
  kv("horizon", std::to_string(c.horizon));
  kv("dt", num(c.dt));
  kv("control_weight", num(c.control_weight));
  if (!c.x1.empty()) kv("x1", nums(c.x1));
  if (!c.goal.empty()) kv("goal", nums(c.goal));

  scalars("theta", c.theta);

  section("solver");
  kv("mode", std::string(to_string(c.solve_mode)));
  kv("max_iters", std::to_string(c.solver.max_iters));
  kv("conv_threshold", num(c.solver.conv_threshold));
  kv("reg_init", num(c.solver.reg_init));
  kv("reg_min", num(c.solver.reg_min));
  kv("reg_max", num(c.solver.reg_max));
  kv("reg_increase", num(c.solver.reg_increase));
  kv("reg_decrease", num(c.solver.reg_decrease));
  kv("line_search_steps", std::to_string(c.solver.line_search_steps));

  section("sensitivity");
  kv("derivative_mode", std::string(to_string(c.derivative_mode)));

  section("upper_level");
  kv("kind", std::string(to_string(c.upper_level)));
  kv("eps", num(c.imitation_eps));
  kv("reach", num(c.reach));
  kv("hinge_weight", num(c.hinge_weight));
  scalars("reference", c.reference);

  section("oracle");
  kv("step", num(c.oracle_step));
  kv("conv_threshold", num(c.oracle_threshold));

  section("sweep");
  kv("samples", std::to_string(c.samples));
  kv("inject_nominal", c.inject_nominal ? "true" : "false");
  kv("resample", c.resample ? "true" : "false");
  ranges("ranges", c.ranges);

  section("slice");
  if (!c.slice_component.empty()) kv("component", c.slice_component);
  kv("lower", num(c.slice_lower));
  kv("upper", num(c.slice_upper));
  kv("points", std::to_string(c.slice_points));

  section("optimize");
  kv("eta", num(c.eta));
  if (!c.free.empty()) {
    std::string f;
    for (const auto& w : c.free) f += (f.empty() ? "" : " ") + w;
    kv("free", f);
  }
  kv("max_iters", std::to_string(c.outer_max_iters));
  kv("grad_tol", num(c.grad_tol));
  kv("divergence_factor", num(c.divergence_factor));
  kv("runs", std::to_string(c.runs));
  scalars("initial", c.initial);
  ranges("initial_ranges", c.initial_ranges);
  return s;
}

}  // namespace diffddp
