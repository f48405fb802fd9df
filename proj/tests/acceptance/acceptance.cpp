// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any selected criterion fails.
//
//   epo_acceptance [--out DIR] [--list] [NAME...]
//
// Without names, runs every criterion not marked long; "all" selects everything.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../support/oracles.hpp"
#include "../support/ppo_fixtures.hpp"
#include "epo/env/benchmarks.hpp"
#include "epo/experiment/config.hpp"
#include "epo/experiment/runner.hpp"
#include "epo/nn/mlp.hpp"
#include "epo/rollout/rollout.hpp"
#include "epo/sip/testbed.hpp"

namespace fs = std::filesystem;
using namespace epo;
using nn::ParamVector;

namespace {

const fs::path kFixtures = EPO_FIXTURE_DIR;
const fs::path kConfigs = EPO_CONFIG_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  bool slow = false;
  std::function<Outcome()> run;
};

template <typename... Ts>
std::string cat(const Ts&... parts) {
  std::ostringstream os;
  os << std::setprecision(6);
  (os << ... << parts);
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Testbed runs, shared by the four testbed criteria.
struct TestbedRun {
  sip::AnalyticSip sip;
  sip::TestbedConfig cfg;
  sip::OracleFixture fixture;
  sip::TestbedReport report;
};

const std::vector<TestbedRun>& testbed_runs() {
  static const std::vector<TestbedRun> runs = [] {
    std::vector<TestbedRun> out;
    for (const auto& c : experiment::testbed_suite_cases()) {
      TestbedRun r{sip::instance_by_name(c.instance), {}, sip::load_fixture(kFixtures / c.fixture), {}};
      r.cfg.eta = c.eta;
      r.report = sip::run_testbed(r.sip, r.cfg, &r.fixture);
      out.push_back(std::move(r));
    }
    return out;
  }();
  return runs;
}

Outcome testbed_oracle_equivalence() {
  Outcome o{true, ""};
  for (const auto& r : testbed_runs()) {
    const auto& rep = r.report;
    const double limit_s = rep.instance == "CHEB-2" ? 30.0 : 10.0;
    const double gap = std::abs(rep.objective - r.fixture.value);
    const double dense = sip::dense_max_violation(r.sip, rep.x, 2001);
    bool ok = rep.status == exchange::ExchangeStatus::Terminated && rep.iterations <= 50 && gap <= 1e-4 &&
              dense <= r.cfg.eta && rep.runtime_s < limit_s;
    if (rep.instance == "CHEB-2") ok = ok && rep.near_active >= 4;
    o.pass = o.pass && ok;
    o.detail += cat(o.detail.empty() ? "" : "; ", rep.instance, " |f-f*|=", gap, " dense_max=", dense, " iters=",
                    rep.iterations, " near_active=", rep.near_active, " t=", rep.runtime_s, "s");
  }
  return o;
}

Outcome subproblem_value_monotonicity() {
  Outcome o{true, ""};
  for (const auto& r : testbed_runs()) {
    const std::vector<double> v = r.report.trace.subproblem_values();  // score = -f
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < v.size(); ++i) worst = std::max(worst, v[i] - v[i - 1]);
    const bool ok = v.size() >= 2 && worst <= 1e-10;
    o.pass = o.pass && ok;
    o.detail += cat(o.detail.empty() ? "" : "; ", r.report.instance, " values=", v.size(), " max_increase=", worst);
  }
  return o;
}

Outcome expanded_point_retention() {
  Outcome o{true, ""};
  for (const auto& r : testbed_runs()) {
    int expansions = 0, retained = 0;
    double smallest = std::numeric_limits<double>::infinity();
    for (const auto& rec : r.report.trace.records) {
      if (!rec.added) continue;
      ++expansions;
      const double v = rec.added_multiplier_after_solve.value_or(-1.0);
      smallest = std::min(smallest, v);
      const bool kept = std::any_of(rec.working_set.begin(), rec.working_set.end(), [&](const auto& e) {
        return search::same_point(e.point, rec.added->point);
      });
      if (v > r.cfg.eps_mult && kept) ++retained;
    }
    o.pass = o.pass && expansions > 0 && retained == expansions;
    o.detail += cat(o.detail.empty() ? "" : "; ", r.report.instance, " retained ", retained, "/", expansions,
                    " min_multiplier=", smallest);
  }
  return o;
}

Outcome relaxation_side() {
  Outcome o{true, ""};
  for (const auto& r : testbed_runs()) {
    // Minimizing f: the relaxation side is f_K <= f*.
    const double excess = r.report.objective - r.fixture.value;
    o.pass = o.pass && excess <= 1e-6;
    o.detail += cat(o.detail.empty() ? "" : "; ", r.report.instance, " f_K-f*=", excess);
  }
  return o;
}

double rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(1e-12, std::max(a.norm(), b.norm()));
}

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240501);
  std::uniform_int_distribution<int> width(1, 8), depth(0, 3);
  std::normal_distribution<double> n01(0.0, 1.0);

  double net_worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    std::vector<int> sizes{width(rng)};
    for (int l = depth(rng); l > 0; --l) sizes.push_back(width(rng));
    sizes.push_back(width(rng));
    nn::Mlp net(sizes);
    ParamVector p(static_cast<Eigen::Index>(net.parameter_count()));
    for (auto& v : p) v = 0.8 * n01(rng);
    net.unflatten(p);
    const Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(sizes.front(), [&] { return n01(rng); });
    const Eigen::VectorXd u = Eigen::VectorXd::NullaryExpr(sizes.back(), [&] { return n01(rng); });
    const ParamVector g = net.backward(x, u);
    ParamVector fd(p.size());
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      ParamVector q = p;
      q(i) += h;
      net.unflatten(q);
      const double up = u.dot(net.forward(x));
      q(i) -= 2 * h;
      net.unflatten(q);
      fd(i) = (up - u.dot(net.forward(x))) / (2 * h);
    }
    net_worst = std::max(net_worst, rel_error(g, fd));
  }

  double surrogate_worst = 0.0;
  for (std::uint64_t draw = 0; draw < 100; ++draw) {
    auto f = fixture::make_surrogate_fixture(7000 + draw);
    surrogate_worst = std::max(surrogate_worst, fixture::surrogate_fd_error(f));
  }
  const double t = seconds_since(t0);
  return {net_worst <= 1e-5 && surrogate_worst <= 1e-4 && t < 30.0,
          cat("network max rel err=", net_worst, " surrogate max rel err=", surrogate_worst, " t=", t, "s")};
}

env::Action heading(double a) { return env::Action::Constant(1, a); }

Outcome estimator_exactness() {
  double worst = 0.0;
  bool grid_exact = true;
  std::size_t points = 0;
  for (bool ship : {true, false}) {
    std::unique_ptr<env::Environment> e;
    if (ship) e = std::make_unique<env::ShipEnv>();
    else e = std::make_unique<env::AgriEnv>();
    const oracle::Task task = ship ? oracle::ship_task() : oracle::agri_task();
    std::function<double(const oracle::Point&, int)> script;
    if (ship) {
      script = [](const oracle::Point& s, int t) {
        if (t < 6) return 0.0;
        if (s[0] > s[1] + 0.2) return 0.45 * std::numbers::pi;
        return std::numbers::pi / 4.0 + 0.1 * std::sin(0.3 * t);
      };
    } else {
      script = [](const oracle::Point&, int t) { return 0.6 * std::sin(0.35 * t); };
    }
    const rollout::EvalBatch batch =
        rollout::collect_scripted([&](const env::State& s, int t) { return heading(script({s(0), s(1)}, t)); }, *e, 3);
    const auto states = oracle::visited_states(task, script);
    Rng rng(ship ? 3 : 4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const env::Box& box = e->constraint().index_box();
    for (int i = 0; i < 200; ++i) {
      const oracle::Point y{box.lo(0) + u(rng) * (box.hi(0) - box.lo(0)), box.lo(1) + u(rng) * (box.hi(1) - box.lo(1))};
      Eigen::VectorXd yv(2);
      yv << y[0], y[1];
      const double want = oracle::constraint_sum(task, states, y, 1.0);
      const double got = rollout::estimate_constraint(batch, e->constraint(), yv);
      worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
    }

    Rng init(ship ? 5 : 6);
    const nn::GaussianPolicy policy = ppo::make_policy(*e, ppo::NetworkShape{2, 64}, init);
    const rollout::EvalBatch sampled = rollout::collect(policy, *e, 16, 99, 0);
    const auto grid = search::make_grid(box, 64);
    const auto j = rollout::estimate_constraint_grid(sampled, e->constraint(), grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      grid_exact = grid_exact && j[i] == rollout::estimate_constraint(sampled, e->constraint(), grid[i]);
    }
    points += grid.size();
  }
  return {worst <= 1e-12 && grid_exact,
          cat("scripted max rel err=", worst, " grid==scalar on ", points, " points: ", grid_exact ? "yes" : "no")};
}

struct E2eSummary {
  std::vector<experiment::SeedResult> seeds;
  int passed = 0;
  int failed = 0;
};

std::string seed_line(const experiment::SeedResult& r) {
  return cat("  seed ", r.seed, ": ", r.status, " outer=", r.outer_iterations, " |E|max=", r.max_working_set,
             " J0=", r.initial_objective, " eval J=", r.evaluation.objective_mean, " eval max_violation=",
             r.evaluation.max_violation, " greedy_reached=", r.evaluation.greedy.reached, " t=", r.runtime_s, "s",
             r.error.empty() ? "" : " error: " + r.error);
}

// Seeds in order; stops as soon as the failures make the pass count unreachable.
E2eSummary run_seeds(const experiment::RunConfig& cfg, const fs::path& out, int need,
                     const std::function<bool(const experiment::SeedResult&)>& seed_passes) {
  E2eSummary s;
  experiment::SeedOptions opts;
  opts.abort_working_set_above = 16;
  const int total = static_cast<int>(cfg.seeds.size());
  for (std::uint64_t seed : cfg.seeds) {
    experiment::SeedResult r = experiment::run_seed(cfg, seed, out / ("seed_" + std::to_string(seed)), opts);
    const bool ok = seed_passes(r);
    (ok ? s.passed : s.failed) += 1;
    std::cout << seed_line(r) << (ok ? "  [pass]" : "  [fail]") << std::endl;
    s.seeds.push_back(std::move(r));
    if (total - s.failed < need) {
      std::cout << "  stopping early: " << s.failed << " seeds failed" << std::endl;
      break;
    }
  }
  return s;
}

std::size_t max_ws(const E2eSummary& s) {
  std::size_t m = 0;
  for (const auto& r : s.seeds) m = std::max(m, r.max_working_set);
  return m;
}

fs::path g_out = "acceptance_runs";

Outcome ship_end_to_end() {
  experiment::RunConfig cfg = experiment::load_config(kConfigs / "ship.ini");
  const double limit = cfg.eta + 0.005;
  const E2eSummary s = run_seeds(cfg, g_out / "ship", 7, [&](const experiment::SeedResult& r) {
    return r.status == "terminated" && r.outer_iterations <= cfg.max_outer && r.max_working_set <= 16 &&
           r.evaluation.max_violation <= limit;
  });
  double j0 = 0.0, jf = 0.0, runtime = 0.0;
  for (const auto& r : s.seeds) {
    j0 += r.initial_objective;
    jf += r.evaluation.objective_mean;
    runtime = std::max(runtime, r.runtime_s);
  }
  const double n = static_cast<double>(s.seeds.size());
  j0 /= n;
  jf /= n;
  const bool complete = static_cast<int>(s.seeds.size()) == static_cast<int>(cfg.seeds.size());
  return {complete && s.passed >= 7 && max_ws(s) <= 16 && jf > j0,
          cat(s.passed, "/", s.seeds.size(), " seeds terminated with eval max violation <= ", limit,
              ", max |E|=", max_ws(s), ", mean J0=", j0, " mean final J=", jf, ", slowest seed ", runtime, "s")};
}

Outcome agri_end_to_end() {
  experiment::RunConfig cfg = experiment::load_config(kConfigs / "agri.ini");
  const double limit = cfg.eta + 0.02;
  const E2eSummary s = run_seeds(cfg, g_out / "agri", 7, [&](const experiment::SeedResult& r) {
    return r.ok() && r.status != "working_set_limit" && r.outer_iterations <= cfg.max_outer &&
           r.max_working_set <= 16 && r.evaluation.max_violation <= limit;
  });
  int passing = 0, reached = 0;
  double runtime = 0.0;
  for (const auto& r : s.seeds) {
    runtime = std::max(runtime, r.runtime_s);
    if (r.ok() && r.status != "working_set_limit" && r.max_working_set <= 16 && r.evaluation.max_violation <= limit) {
      ++passing;
      reached += r.evaluation.greedy.reached ? 1 : 0;
    }
  }
  const bool complete = s.seeds.size() == cfg.seeds.size();
  const bool greedy_ok = passing > 0 && reached >= 0.9 * passing;
  return {complete && s.passed >= 7 && max_ws(s) <= 16 && greedy_ok,
          cat(s.passed, "/", s.seeds.size(), " seeds with eval max violation <= ", limit, ", max |E|=", max_ws(s),
              ", greedy reached on ", reached, "/", passing, " passing seeds, slowest seed ", runtime, "s")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome reproducibility() {
  experiment::RunConfig cfg = experiment::load_config(kConfigs / "agri.ini");
  const std::uint64_t seed = 0;
  const fs::path a = g_out / "repro" / "a";
  const fs::path b = g_out / "repro" / "b";
  const auto ra = experiment::run_seed(cfg, seed, a);
  const auto rb = experiment::run_seed(cfg, seed, b);
  bool same = ra.ok() && rb.ok();
  std::string detail;
  for (const char* f : {"metrics.csv", "worksets.csv"}) {
    const std::string x = slurp(a / f);
    const bool eq = !x.empty() && x == slurp(b / f);
    same = same && eq;
    detail += cat(detail.empty() ? "" : ", ", f, eq ? " identical" : " differ", " (", x.size(), " bytes)");
  }
  return {same, cat("agri seed ", seed, ": ", detail)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"testbed_oracle_equivalence", false, testbed_oracle_equivalence},
      {"subproblem_value_monotonicity", false, subproblem_value_monotonicity},
      {"expanded_point_retention", false, expanded_point_retention},
      {"relaxation_side", false, relaxation_side},
      {"gradient_suite", false, gradient_suite},
      {"estimator_exactness", false, estimator_exactness},
      {"ship_end_to_end", true, ship_end_to_end},
      {"agri_end_to_end", true, agri_end_to_end},
      {"reproducibility", true, reproducibility},
  };

  std::vector<std::string> names;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      g_out = argv[++i];
    } else if (a == "--list") {
      for (const auto& c : criteria) std::cout << c.name << (c.slow ? " (long)" : "") << '\n';
      return 0;
    } else {
      names.push_back(a);
    }
  }
  const bool all = std::find(names.begin(), names.end(), "all") != names.end();
  for (const auto& n : names) {
    if (n != "all" && std::none_of(criteria.begin(), criteria.end(), [&](const Criterion& c) { return c.name == n; })) {
      std::cerr << "unknown criterion '" << n << "' (see --list)\n";
      return 2;
    }
  }

  int failures = 0;
  for (const auto& c : criteria) {
    const bool chosen = all || (names.empty() ? !c.slow : std::find(names.begin(), names.end(), c.name) != names.end());
    if (!chosen) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, cat("exception: ", e.what())};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << " [" << std::fixed
              << std::setprecision(1) << seconds_since(t0) << " s]" << std::defaultfloat << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
