#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "epo/experiment/config.hpp"
#include "epo/rollout/rollout.hpp"
#include "epo/sip/testbed.hpp"

namespace epo::experiment {

/// Rollout stream reserved for final evaluation; training streams count up from 0.
inline constexpr std::uint64_t kEvalStream = 0xe7a1000000000000ULL;

struct PolicyEvaluation {
  int episodes = 0;
  double objective_mean = 0.0;
  double objective_stderr = 0.0;
  double reached_fraction = 0.0;  // sampled episodes ending at the goal
  int resolution = 0;
  std::vector<Eigen::VectorXd> grid;   // resolution^2 points, first axis slowest
  std::vector<double> violation;       // signed, sign * (J_c - d)
  double max_violation = 0.0;
  rollout::Trajectory greedy;          // mean-action episode
};

/// M_eval sampled episodes on kEvalStream, a violation grid and one greedy episode.
PolicyEvaluation evaluate_policy(const nn::GaussianPolicy& policy, const env::Environment& environment,
                                 const EvalSettings& settings, std::uint64_t seed);

void write_heatmap(const std::filesystem::path& path, const PolicyEvaluation& eval);
void write_trajectory(const std::filesystem::path& path, const rollout::Trajectory& trajectory);

struct SeedOptions {
  int abort_working_set_above = 0;  // stop the run once |E| exceeds this (0: never)
  std::function<void(const std::string&)> progress;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::string status;  // terminated, iteration_cap, stopped, working_set_limit, error
  std::string error;
  int outer_iterations = 0;  // index of the final record
  int inner_rounds = 0;
  std::size_t max_working_set = 0;  // largest |E| right after an expansion
  std::size_t final_working_set = 0;
  double initial_objective = 0.0;
  double final_objective = 0.0;  // training-time estimate at the last iterate
  double final_max_violation = 0.0;  // search estimate at the last iterate
  PolicyEvaluation evaluation;
  std::vector<std::filesystem::path> files;
  double runtime_s = 0.0;

  bool ok() const { return status != "error"; }
};

/// Trains one seed and writes metrics.csv, worksets.csv, heatmap.csv,
/// trajectory.csv and policy.ckpt into `dir`. Exceptions are caught and
/// reported through status "error".
SeedResult run_seed(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir,
                    const SeedOptions& options = {});

struct RunOptions {
  int jobs = 1;
  SeedOptions seed;
};

struct ExperimentResult {
  std::vector<SeedResult> seeds;
  std::filesystem::path manifest;
  int exit_code = 0;  // nonzero only when every seed failed
};

/// All seeds of cfg into cfg.output_dir/seed_<s>/, then manifest.json.
ExperimentResult run_experiment(const RunConfig& cfg, const RunOptions& options = {});

/// Loads a checkpoint written for cfg's architecture and evaluates it.
/// Architecture mismatch surfaces as nn::CheckpointError.
PolicyEvaluation evaluate_checkpoint(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                                     std::uint64_t seed);

struct SuiteCase {
  std::string instance;
  double eta = 0.0;
  std::string fixture;  // file name inside the fixture directory
};

/// CSIP-Q at eta 1e-3 and CHEB-2 at eta 1e-4.
std::vector<SuiteCase> testbed_suite_cases();

/// Runs every suite case against its stored oracle fixture. A fixture that
/// disagrees with a fresh oracle solve throws sip::FixtureError.
std::vector<sip::TestbedReport> run_testbed_suite(const std::filesystem::path& fixture_dir);

/// EPO_OUTPUT_DIR replaces the output directory, EPO_JOBS the number of parallel seeds.
void apply_env_overrides(RunConfig& cfg, RunOptions& options);

std::string sha256_file(const std::filesystem::path& path);

std::string code_version();

}  // namespace epo::experiment
