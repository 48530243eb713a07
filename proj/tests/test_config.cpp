#include <gtest/gtest.h>

#include <filesystem>

#include "diffddp/config.hpp"
#include "test_support.hpp"

namespace diffddp {
namespace {

namespace fs = std::filesystem;

std::string config_dir() { return std::string(DIFFDDP_SOURCE_DIR) + "/configs"; }

TEST(Config, DefaultsMatchTheStandardSwingUp) {
  const ExperimentConfig c = parse_config("");
  EXPECT_EQ(c.kind, ExperimentKind::kSolve);
  EXPECT_EQ(c.plant, PlantKind::kPendulum);
  EXPECT_EQ(c.horizon, 50);
  EXPECT_EQ(c.dt, 0.01);
  EXPECT_EQ(c.workers, 1);
  EXPECT_EQ(c.solver, SolverOptions{});
}

TEST(Config, ParsesEverySection) {
  const ExperimentConfig c = parse_config(R"(
; comment
[experiment]
kind = sweep
plant = double_pendulum
seed = 18446744073709551615
workers = 3

[problem]
x1 = 1.5 0 0 0
goal = 3.14 0 0 0

[theta]
l1 = 0.3

[solver]
mode = ilqr
max_iters = 77
conv_threshold = 1e-13

[sensitivity]
derivative_mode = ilqr

[upper_level]
kind = codesign
reach = 0.7

[sweep]
samples = 12
inject_nominal = true

[ranges]
qf = 100 10000

[optimize]
free = l1 l2
eta = 2.5e-6
)");
  EXPECT_EQ(c.kind, ExperimentKind::kSweep);
  EXPECT_EQ(c.plant, PlantKind::kDoublePendulum);
  EXPECT_EQ(c.seed, 18446744073709551615ull);
  EXPECT_EQ(c.workers, 3);
  EXPECT_EQ(c.x1, (std::vector<double>{1.5, 0, 0, 0}));
  EXPECT_EQ(c.theta.at("l1"), 0.3);
  EXPECT_EQ(c.solve_mode, Method::kIlqr);
  EXPECT_EQ(c.solver.max_iters, 77);
  EXPECT_EQ(c.solver.conv_threshold, 1e-13);
  EXPECT_EQ(c.derivative_mode, Method::kIlqr);
  EXPECT_EQ(c.upper_level, UpperLevelKind::kCoDesign);
  EXPECT_EQ(c.reach, 0.7);
  EXPECT_EQ(c.samples, 12);
  EXPECT_TRUE(c.inject_nominal);
  EXPECT_EQ(c.ranges.at("qf"), (Interval{100, 10000}));
  EXPECT_EQ(c.free, (std::vector<std::string>{"l1", "l2"}));
  EXPECT_EQ(c.eta, 2.5e-6);
}

TEST(Config, UnknownKeyIsAnErrorNamingTheKey) {
  try {
    parse_config("[sweep]\nsampels = 3\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("sweep.sampels"), std::string::npos) << e.what();
  }
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(parse_config("[nonsense]\na = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("kind = solve\n"), ConfigError);
  EXPECT_THROW(parse_config("[experiment]\nkind = fly\n"), ConfigError);
  EXPECT_THROW(parse_config("[problem]\nhorizon = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[problem]\ndt = 0.01s\n"), ConfigError);
  EXPECT_THROW(parse_config("[ranges]\nrho = 1 0.5\n"), ConfigError);
  EXPECT_THROW(parse_config("[sweep]\ninject_nominal = yes\n"), ConfigError);
  EXPECT_THROW(parse_config("[experiment\nkind = solve\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/path.cfg"), ConfigError);
}

TEST(Config, RoundTripsThroughSerialization) {
  ExperimentConfig c;
  c.kind = ExperimentKind::kOptimize;
  c.plant = PlantKind::kDoublePendulum;
  c.seed = 123456789012345ull;
  c.dt = 0.1 + 0.2;
  c.x1 = {1.0 / 3.0, 0, 0, 0};
  c.theta = {{"l1", 0.3}, {"qf", 1e3}};
  c.reference = {{"l2", 0.375}};
  c.solver.reg_min = 1e-9;
  c.derivative_mode = Method::kIlqr;
  c.ranges = {{"l1", Interval{0.25, 0.5}}};
  c.slice_component = "l2";
  c.free = {"l1", "l2"};
  c.initial = {{"l1", 0.3}};
  c.initial_ranges = {{"l2", Interval{0.25, 0.5}}};
  c.inject_nominal = true;
  const std::string text = serialize_config(c);
  EXPECT_EQ(parse_config(text), c) << text;
  EXPECT_EQ(serialize_config(parse_config(text)), text);
  EXPECT_EQ(parse_config(serialize_config(ExperimentConfig{})), ExperimentConfig{});
}

TEST(Config, ShippedConfigsParseAndRoundTrip) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(config_dir())) {
    if (e.path().extension() != ".cfg") continue;
    SCOPED_TRACE(e.path().string());
    const ExperimentConfig c = load_config(e.path().string());
    EXPECT_EQ(parse_config(serialize_config(c)), c);
    ++n;
  }
  EXPECT_GE(n, 5);
}

}  // namespace
}  // namespace diffddp
