#include "epo/experiment/runner.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "epo/nn/checkpoint.hpp"

#ifndef EPO_VERSION
#define EPO_VERSION "unknown"
#endif

namespace epo::experiment {

namespace fs = std::filesystem;

namespace {

std::string cell(double x) { return std::isfinite(x) ? format_number(x) : std::string(); }

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

class MetricsWriter {
 public:
  MetricsWriter(const fs::path& path, std::uint64_t seed, bool wall_clock)
      : out_(open_out(path)), seed_(seed), wall_clock_(wall_clock), t0_(std::chrono::steady_clock::now()) {
    out_ << "seed,outer_iteration,inner_round,objective_estimate,max_violation,working_set_size,multipliers_l1,"
            "wall_clock_s\n";
  }

  void row(int outer, int inner, double objective, double max_violation, std::size_t ws_size, double l1) {
    out_ << seed_ << ',' << outer << ',' << inner << ',' << cell(objective) << ',' << cell(max_violation) << ','
         << ws_size << ',' << cell(l1) << ',';
    if (wall_clock_) {
      out_ << format_number(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count());
    }
    out_ << '\n';
    if (inner < 0) out_.flush();
  }

 private:
  std::ofstream out_;
  std::uint64_t seed_;
  bool wall_clock_;
  std::chrono::steady_clock::time_point t0_;
};

class WorksetWriter {
 public:
  WorksetWriter(const fs::path& path, std::uint64_t seed) : out_(open_out(path)), seed_(seed) {
    out_ << "seed,outer_iteration,event,family,y1,y2,multiplier,added_at\n";
  }

  void entry(int outer, const char* event, const exchange::WorkingEntry& e) {
    out_ << seed_ << ',' << outer << ',' << event << ',' << e.point.family;
    for (Eigen::Index d = 0; d < 2; ++d) {
      out_ << ',' << (d < e.point.coords.size() ? format_number(e.point.coords(d)) : std::string());
    }
    out_ << ',' << cell(e.multiplier) << ',' << e.added_at << '\n';
  }

  void record(const exchange::IterationRecord& rec) {
    if (rec.added) {
      exchange::WorkingEntry added = *rec.added;
      if (rec.added_multiplier_after_solve) added.multiplier = *rec.added_multiplier_after_solve;
      entry(rec.iteration, "add", added);
    }
    for (const auto& e : rec.deleted) entry(rec.iteration, "delete", e);
    out_.flush();
  }

 private:
  std::ofstream out_;
  std::uint64_t seed_;
};

std::string status_name(exchange::ExchangeStatus s, bool ws_limit) {
  if (ws_limit) return "working_set_limit";
  return exchange::to_string(s);
}

}  // namespace

PolicyEvaluation evaluate_policy(const nn::GaussianPolicy& policy, const env::Environment& environment,
                                 const EvalSettings& settings, std::uint64_t seed) {
  PolicyEvaluation ev;
  ev.episodes = settings.episodes;
  ev.resolution = settings.heatmap_resolution;

  const rollout::EvalBatch batch =
      rollout::collect(policy, environment, settings.episodes, seed, kEvalStream, rollout::ActionMode::Sample);
  const std::vector<double> returns = rollout::episode_returns(batch, environment.config().gamma_r);
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= static_cast<double>(returns.size());
  double ss = 0.0;
  for (double r : returns) ss += (r - mean) * (r - mean);
  ev.objective_mean = mean;
  ev.objective_stderr =
      returns.size() > 1 ? std::sqrt(ss / static_cast<double>(returns.size() - 1) / static_cast<double>(returns.size()))
                         : 0.0;
  std::size_t reached = 0;
  for (const auto& t : batch.trajectories) reached += t.reached ? 1 : 0;
  ev.reached_fraction = static_cast<double>(reached) / static_cast<double>(batch.size());

  const env::ConstraintFamily& family = environment.constraint();
  ev.grid = search::make_grid(family.index_box(), settings.heatmap_resolution);
  const std::vector<double> j = rollout::estimate_constraint_grid(batch, family, ev.grid);
  ev.violation.resize(j.size());
  ev.max_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < j.size(); ++i) {
    ev.violation[i] = family.violation(j[i], ev.grid[i]);
    ev.max_violation = std::max(ev.max_violation, ev.violation[i]);
  }

  rollout::EvalBatch greedy =
      rollout::collect(policy, environment, 1, seed, kEvalStream + 1, rollout::ActionMode::Greedy);
  ev.greedy = std::move(greedy.trajectories.front());
  return ev;
}

void write_heatmap(const fs::path& path, const PolicyEvaluation& eval) {
  std::ofstream out = open_out(path);
  out << "y1,y2,violation_plus\n";
  for (std::size_t i = 0; i < eval.grid.size(); ++i) {
    out << format_number(eval.grid[i](0)) << ',' << format_number(eval.grid[i](1)) << ','
        << format_number(std::max(0.0, eval.violation[i])) << '\n';
  }
}

void write_trajectory(const fs::path& path, const rollout::Trajectory& trajectory) {
  std::ofstream out = open_out(path);
  out << "step,s1,s2,action,reward\n";
  for (std::size_t t = 0; t < trajectory.length(); ++t) {
    out << t << ',' << format_number(trajectory.states[t](0)) << ',' << format_number(trajectory.states[t](1)) << ','
        << format_number(trajectory.actions[t](0)) << ',' << format_number(trajectory.rewards[t]) << '\n';
  }
  out << trajectory.length() << ',' << format_number(trajectory.final_state(0)) << ','
      << format_number(trajectory.final_state(1)) << ",,\n";
}

SeedResult run_seed(const RunConfig& cfg, std::uint64_t seed, const fs::path& dir, const SeedOptions& options) {
  SeedResult result;
  result.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  auto say = [&](const std::string& msg) {
    if (options.progress) options.progress("seed " + std::to_string(seed) + ": " + msg);
  };

  try {
    fs::create_directories(dir);
    ppo::RlContext ctx(make_environment(cfg), cfg.network, cfg.ppo, seed);
    MetricsWriter metrics(dir / "metrics.csv", seed, cfg.record_wall_clock);
    WorksetWriter worksets(dir / "worksets.csv", seed);
    result.files = {dir / "metrics.csv", dir / "worksets.csv"};

    ppo::PpoLagSolver solver(ctx, [&](const ppo::InnerRoundStats& s) {
      metrics.row(s.outer_iteration, s.round, s.objective_estimate, s.max_residual(), s.residuals.size(),
                  s.multiplier_l1());
    });
    ppo::RlEvaluator evaluator(ctx);
    const exchange::ExchangeConfig ec = cfg.exchange_config();
    const exchange::ViolationSearcher searcher(ec.ladder, ec.eta, ec.refine);

    bool ws_limit = false;
    auto observer = [&](const exchange::IterationRecord& rec, const exchange::WorkingSet& ws) {
      metrics.row(rec.iteration, -1, rec.objective_estimate, rec.max_violation_seen, ws.size(), ws.multiplier_l1());
      worksets.record(rec);
      result.max_working_set = std::max(result.max_working_set, rec.working_set.size() + rec.deleted.size());
      std::ostringstream msg;
      msg << "outer " << rec.iteration << " J=" << std::setprecision(5) << rec.objective_estimate
          << " max_violation=" << rec.max_violation_seen << " |E|=" << ws.size();
      say(msg.str());
      if (options.abort_working_set_above > 0 &&
          result.max_working_set > static_cast<std::size_t>(options.abort_working_set_above)) {
        ws_limit = true;
        return false;
      }
      return true;
    };

    const exchange::ExchangeResult run =
        exchange::run(ctx.policy().flatten(), solver, searcher, evaluator, ec, observer);
    result.status = status_name(run.status, ws_limit);
    result.outer_iterations = static_cast<int>(run.trace.records.size()) - 1;
    result.inner_rounds = run.trace.total_inner_rounds;
    result.final_working_set = run.working_set.size();
    result.initial_objective = run.trace.initial_objective;
    if (!run.trace.records.empty()) {
      result.final_objective = run.trace.records.back().objective_estimate;
      result.final_max_violation = run.trace.records.back().max_violation_seen;
    }

    ctx.policy().unflatten(run.params);
    result.evaluation = evaluate_policy(ctx.policy(), ctx.environment(), cfg.eval, seed);
    write_heatmap(dir / "heatmap.csv", result.evaluation);
    write_trajectory(dir / "trajectory.csv", result.evaluation.greedy);
    nn::save_policy(dir / "policy.ckpt", ctx.policy());
    result.files.push_back(dir / "heatmap.csv");
    result.files.push_back(dir / "trajectory.csv");
    result.files.push_back(dir / "policy.ckpt");
    say("finished (" + result.status + "), eval max violation " + format_number(result.evaluation.max_violation));
  } catch (const std::exception& e) {
    result.status = "error";
    result.error = e.what();
    say(std::string("failed: ") + e.what());
  }
  result.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  EVP_MD_CTX* md = EVP_MD_CTX_new();
  if (!md || EVP_DigestInit_ex(md, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(md);
    throw std::runtime_error("sha256 unavailable");
  }
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    EVP_DigestUpdate(md, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(md, digest, &len);
  EVP_MD_CTX_free(md);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

PolicyEvaluation evaluate_checkpoint(const RunConfig& cfg, const fs::path& checkpoint, std::uint64_t seed) {
  const auto environment = make_environment(cfg);
  Rng rng = make_rng(seed, {0});
  const nn::GaussianPolicy like = ppo::make_policy(*environment, cfg.network, rng);
  const nn::GaussianPolicy policy = nn::load_policy(checkpoint, like);
  return evaluate_policy(policy, *environment, cfg.eval, seed);
}

std::vector<SuiteCase> testbed_suite_cases() {
  return {{"CSIP-Q", 1e-3, "csip_q.oracle"}, {"CHEB-2", 1e-4, "cheb2.oracle"}};
}

std::vector<sip::TestbedReport> run_testbed_suite(const fs::path& fixture_dir) {
  std::vector<sip::TestbedReport> reports;
  for (const auto& c : testbed_suite_cases()) {
    const sip::AnalyticSip sip = sip::instance_by_name(c.instance);
    const sip::OracleFixture fixture = sip::load_fixture(fixture_dir / c.fixture);
    sip::TestbedConfig tc;
    tc.eta = c.eta;
    reports.push_back(sip::run_testbed(sip, tc, &fixture));
  }
  return reports;
}

std::string code_version() { return EPO_VERSION; }

void apply_env_overrides(RunConfig& cfg, RunOptions& options) {
  if (const char* out = std::getenv("EPO_OUTPUT_DIR"); out && *out) cfg.output_dir = out;
  if (const char* jobs = std::getenv("EPO_JOBS"); jobs && *jobs) {
    char* end = nullptr;
    const long n = std::strtol(jobs, &end, 10);
    if (*end != '\0' || n < 1) throw ConfigError(std::string("EPO_JOBS must be a positive integer, got '") + jobs + "'");
    options.jobs = static_cast<int>(n);
  }
}

ExperimentResult run_experiment(const RunConfig& cfg, const RunOptions& options) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);

  ExperimentResult out;
  out.seeds.resize(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  SeedOptions seed_options = options.seed;
  if (seed_options.progress) {
    auto inner = seed_options.progress;
    seed_options.progress = [inner, &log_mutex](const std::string& msg) {
      std::lock_guard<std::mutex> lock(log_mutex);
      inner(msg);
    };
  }
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) {
      const std::uint64_t s = cfg.seeds[i];
      out.seeds[i] = run_seed(cfg, s, cfg.output_dir / ("seed_" + std::to_string(s)), seed_options);
    }
  };
  const int jobs = std::clamp(options.jobs, 1, static_cast<int>(cfg.seeds.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  nlohmann::ordered_json manifest;
  manifest["code_version"] = code_version();
  manifest["config"] = to_ini(cfg);
  manifest["jobs"] = jobs;
  nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
  std::size_t failed = 0;
  for (const auto& r : out.seeds) {
    nlohmann::ordered_json j;
    j["seed"] = r.seed;
    j["status"] = r.status;
    if (!r.ok()) {
      ++failed;
      j["error"] = r.error;
    } else {
      j["outer_iterations"] = r.outer_iterations;
      j["inner_rounds"] = r.inner_rounds;
      j["max_working_set"] = r.max_working_set;
      j["final_working_set"] = r.final_working_set;
      j["initial_objective"] = r.initial_objective;
      j["final_objective"] = r.final_objective;
      j["eval_objective_mean"] = r.evaluation.objective_mean;
      j["eval_objective_stderr"] = r.evaluation.objective_stderr;
      j["eval_max_violation"] = r.evaluation.max_violation;
      j["eval_reached_fraction"] = r.evaluation.reached_fraction;
      j["greedy_reached"] = r.evaluation.greedy.reached;
    }
    j["runtime_s"] = r.runtime_s;
    nlohmann::ordered_json files = nlohmann::ordered_json::array();
    for (const auto& f : r.files) {
      if (!fs::exists(f)) continue;
      files.push_back({{"path", fs::relative(f, cfg.output_dir).generic_string()}, {"sha256", sha256_file(f)}});
    }
    j["files"] = files;
    seeds.push_back(j);
  }
  manifest["seeds"] = seeds;

  out.manifest = cfg.output_dir / "manifest.json";
  std::ofstream m = open_out(out.manifest);
  m << manifest.dump(2) << '\n';
  out.exit_code = (failed == out.seeds.size()) ? 1 : 0;
  return out;
}

}  // namespace epo::experiment
