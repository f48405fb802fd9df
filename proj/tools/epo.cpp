// Command-line front end: run, evaluate, testbed.
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "epo/experiment/runner.hpp"
#include "epo/nn/checkpoint.hpp"

#ifndef EPO_DEFAULT_FIXTURE_DIR
#define EPO_DEFAULT_FIXTURE_DIR "tests/fixtures"
#endif

namespace fs = std::filesystem;
using namespace epo;

namespace {

int cmd_run(const std::string& config_path, const std::string& seeds, const std::string& out, bool quiet) {
  experiment::RunConfig cfg = experiment::load_config(config_path);
  experiment::RunOptions options;
  experiment::apply_env_overrides(cfg, options);
  if (!seeds.empty()) cfg.seeds = experiment::parse_seeds(seeds);
  if (!out.empty()) cfg.output_dir = out;
  if (!quiet) options.seed.progress = [](const std::string& msg) { std::cerr << msg << std::endl; };

  const experiment::ExperimentResult res = experiment::run_experiment(cfg, options);
  for (const auto& s : res.seeds) {
    std::cout << "seed " << s.seed << ": " << s.status;
    if (s.ok()) {
      std::cout << "  outer=" << s.outer_iterations << " |E|max=" << s.max_working_set
                << " J0=" << s.initial_objective << " J=" << s.evaluation.objective_mean << " +- "
                << s.evaluation.objective_stderr << " max_violation=" << s.evaluation.max_violation
                << " greedy_reached=" << (s.evaluation.greedy.reached ? "yes" : "no");
    } else {
      std::cout << "  " << s.error;
    }
    std::cout << '\n';
  }
  std::cout << "manifest: " << res.manifest.string() << '\n';
  return res.exit_code;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& config_path, const std::string& out,
                 std::uint64_t seed) {
  const experiment::RunConfig cfg = experiment::load_config(config_path);
  const experiment::PolicyEvaluation ev = experiment::evaluate_checkpoint(cfg, checkpoint, seed);
  const fs::path dir = out.empty() ? fs::path(checkpoint).parent_path() / "eval" : fs::path(out);
  fs::create_directories(dir);
  experiment::write_heatmap(dir / "heatmap.csv", ev);
  experiment::write_trajectory(dir / "trajectory.csv", ev.greedy);
  std::cout << "objective " << ev.objective_mean << " +- " << ev.objective_stderr << " (" << ev.episodes
            << " episodes)\n"
            << "max violation on " << ev.resolution << "x" << ev.resolution << " grid: " << ev.max_violation << '\n'
            << "reached goal: " << ev.reached_fraction * 100.0 << "% sampled, greedy "
            << (ev.greedy.reached ? "yes" : "no") << " in " << ev.greedy.length() << " steps\n"
            << "wrote " << (dir / "heatmap.csv").string() << " and " << (dir / "trajectory.csv").string() << '\n';
  return 0;
}

int cmd_testbed(const std::string& fixtures) {
  const auto reports = experiment::run_testbed_suite(fixtures);
  int failures = 0;
  for (const auto& r : reports) {
    std::cout << r.summary() << '\n';
    for (const auto& a : r.assertions) {
      if (!a.passed) {
        ++failures;
        std::cout << "  FAILED " << a.name << ": " << a.detail << '\n';
      }
    }
  }
  std::cout << (failures == 0 ? "testbed suite passed" : "testbed suite FAILED") << '\n';
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exchange policy optimization for semi-infinitely constrained RL"};
  app.require_subcommand(1);

  std::string config, seeds, out, checkpoint;
  std::string fixtures = EPO_DEFAULT_FIXTURE_DIR;
  std::uint64_t eval_seed = 0;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "train every seed of a config");
  run->add_option("--config", config, "INI config file")->required()->check(CLI::ExistingFile);
  run->add_option("--seeds", seeds, "seed list, e.g. 0..9 or 1,3,5");
  run->add_option("--out", out, "output directory");
  run->add_flag("-q,--quiet", quiet, "no per-iteration progress on stderr");

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a saved policy");
  evaluate->add_option("--checkpoint", checkpoint, "policy checkpoint")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--config", config, "INI config the policy was trained with")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--out", out, "directory for heatmap.csv and trajectory.csv");
  evaluate->add_option("--seed", eval_seed, "evaluation seed");

  auto* testbed = app.add_subcommand("testbed", "deterministic SIP instances against their oracles");
  testbed->add_option("--fixtures", fixtures, "oracle fixture directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, seeds, out, quiet);
    if (*evaluate) return cmd_evaluate(checkpoint, config, out, eval_seed);
    if (*testbed) return cmd_testbed(fixtures);
  } catch (const experiment::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const nn::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
