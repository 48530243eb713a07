#include <diffddp/config.hpp>
#include <diffddp/experiment.hpp>
#include <fmt/format.h>

#include <optional>

#include "CLI11.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Differentiable DDP experiment runner"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(diffddp::kVersion));

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;

  CLI::App* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "Experiment config (INI)")->required();
  run->add_option("--out", out_dir, "Output directory (overrides experiment.output_dir)");
  run->add_option("--seed", seed, "RNG seed (overrides experiment.seed)");
  run->add_option("--workers", workers, "Worker threads (overrides experiment.workers)")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    diffddp::ExperimentConfig cfg = diffddp::load_config(config_path);
    if (out_dir) cfg.output_dir = *out_dir;
    if (seed) cfg.seed = *seed;
    if (workers) cfg.workers = *workers;
    const auto summary = diffddp::run_experiment(cfg, cfg.output_dir);
    fmt::print("{}: {}\n", diffddp::to_string(cfg.kind), summary.message);
    for (const auto& f : summary.files) fmt::print("  wrote {}\n", f.string());
    return 0;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return diffddp::exit_code_for(e);
  }
}
