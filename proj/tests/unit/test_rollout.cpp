#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "../support/oracles.hpp"
#include "epo/env/benchmarks.hpp"
#include "epo/ppo/ppo_lag.hpp"
#include "epo/rollout/rollout.hpp"
#include "epo/search/violation_search.hpp"

using namespace epo;
using namespace epo::rollout;

namespace {

env::Action act(double a) { return env::Action::Constant(1, a); }

Eigen::VectorXd v2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

// Ship: east along the bottom, then a diagonal, then north-east towards D.
double ship_script(const oracle::Point& s, int t) {
  if (t < 6) return 0.0;
  if (s[0] > s[1] + 0.2) return 0.5 * std::numbers::pi * 0.9;
  return std::numbers::pi / 4.0 + 0.1 * std::sin(0.3 * t);
}

double agri_script(const oracle::Point&, int t) { return 0.6 * std::sin(0.35 * t); }

Trajectory single(std::vector<double> rewards) {
  Trajectory t;
  for (double r : rewards) {
    t.states.push_back(v2(0, 0));
    t.actions.push_back(act(0));
    t.pre_squash.push_back(act(0));
    t.log_probs.push_back(0.0);
    t.rewards.push_back(r);
  }
  t.final_state = v2(0, 0);
  t.reached = true;
  return t;
}

}  // namespace

TEST_CASE("objective estimates") {
  EvalBatch b;
  b.trajectories.push_back(single({1.0, 1.0, 1.0}));
  CHECK(estimate_objective(b, 0.95) == doctest::Approx(2.8525).epsilon(1e-15));
  b.trajectories[0] = single({0.5, -2.0, 4.25});
  CHECK(estimate_objective(b, 1.0) == 2.75);
  b.trajectories.push_back(single({1.0}));
  CHECK(estimate_objective(b, 1.0) == doctest::Approx((2.75 + 1.0) / 2.0));
}

TEST_CASE("scripted estimates equal an independent state sum") {
  for (bool ship : {true, false}) {
    std::unique_ptr<env::Environment> e;
    if (ship) e = std::make_unique<env::ShipEnv>();
    else e = std::make_unique<env::AgriEnv>();
    const oracle::Task task = ship ? oracle::ship_task() : oracle::agri_task();
    auto script = ship ? ship_script : agri_script;
    const EvalBatch batch = collect_scripted(
        [&](const env::State& s, int t) { return act(script({s(0), s(1)}, t)); }, *e, 3);
    const auto states = oracle::visited_states(task, script);
    REQUIRE(batch.trajectories[0].length() == states.size());

    Rng rng(ship ? 1 : 2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const env::Box& box = e->constraint().index_box();
    for (int i = 0; i < 50; ++i) {
      const oracle::Point y{box.lo(0) + u(rng) * (box.hi(0) - box.lo(0)), box.lo(1) + u(rng) * (box.hi(1) - box.lo(1))};
      const double want = oracle::constraint_sum(task, states, y, 1.0);
      CHECK(std::abs(estimate_constraint(batch, e->constraint(), v2(y[0], y[1])) - want) <= 1e-12 * std::max(1.0, want));
    }
  }
}

TEST_CASE("trajectory pinned at y accumulates exactly T") {
  env::ShipEnv ship;
  env::ShipEnv::Params p;
  p.env.max_steps = 17;
  env::ShipEnv pinned(p);
  // Heading south-west from the origin keeps the state clipped at (0, 0).
  const EvalBatch b = collect_scripted([](const env::State&, int) { return act(1.25 * std::numbers::pi); }, pinned, 2);
  CHECK(estimate_constraint(b, pinned.constraint(), v2(0, 0)) == 17.0);
}

TEST_CASE("grid estimator equals the scalar estimator bit for bit") {
  env::ShipEnv ship;
  const nn::GaussianPolicy policy = [&] {
    Rng rng(5);
    return ppo::make_policy(ship, ppo::NetworkShape{1, 16}, rng);
  }();
  const EvalBatch batch = collect(policy, ship, 8, 42, 0);
  const auto grid = search::make_grid(ship.constraint().index_box(), 32);
  const auto j = estimate_constraint_grid(batch, ship.constraint(), grid);
  double grid_max = -1e300, scalar_max = -1e300;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double s = estimate_constraint(batch, ship.constraint(), grid[i]);
    CHECK(j[i] == s);
    grid_max = std::max(grid_max, j[i]);
    scalar_max = std::max(scalar_max, s);
  }
  CHECK(grid_max == scalar_max);

  std::vector<Eigen::VectorXd> one{grid[100]};
  CHECK(estimate_constraint_grid(batch, ship.constraint(), one)[0] == j[100]);

  std::vector<Eigen::VectorXd> reversed(grid.rbegin(), grid.rend());
  const auto jr = estimate_constraint_grid(batch, ship.constraint(), reversed);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(jr[grid.size() - 1 - i] == j[i]);
}

TEST_CASE("identical trajectories and segment additivity") {
  env::AgriEnv agri;
  auto script = [](const env::State& s, int t) { return act(agri_script({s(0), s(1)}, t)); };
  const EvalBatch one = collect_scripted(script, agri, 1);
  const EvalBatch many = collect_scripted(script, agri, 5);
  const Eigen::VectorXd y = v2(9.0, 0.8);
  CHECK(estimate_constraint(one, agri.constraint(), y) == doctest::Approx(estimate_constraint(many, agri.constraint(), y)).epsilon(1e-15));

  // gamma_c = 1: splitting the state list into two episodes-worth of sums adds up.
  EvalBatch head = one, tail = one;
  const auto& states = one.trajectories[0].states;
  const std::size_t cut = states.size() / 2;
  head.trajectories[0].states.assign(states.begin(), states.begin() + static_cast<long>(cut));
  tail.trajectories[0].states.assign(states.begin() + static_cast<long>(cut), states.end());
  CHECK(estimate_constraint(head, agri.constraint(), y) + estimate_constraint(tail, agri.constraint(), y) ==
        doctest::Approx(estimate_constraint(one, agri.constraint(), y)).epsilon(1e-14));
}

TEST_CASE("collect is deterministic and bounded") {
  env::ShipEnv ship;
  Rng rng(9);
  const nn::GaussianPolicy policy = ppo::make_policy(ship, ppo::NetworkShape{1, 16}, rng);
  const EvalBatch a = collect(policy, ship, 16, 7, 3);
  const EvalBatch b = collect(policy, ship, 16, 7, 3);
  REQUIRE(a.size() == 16);
  for (std::size_t m = 0; m < a.size(); ++m) {
    CHECK(a.trajectories[m].length() <= 200);
    CHECK(a.trajectories[m].length() == b.trajectories[m].length());
    for (std::size_t t = 0; t < a.trajectories[m].length(); ++t) {
      CHECK(a.trajectories[m].states[t] == b.trajectories[m].states[t]);
      CHECK(a.trajectories[m].log_probs[t] == b.trajectories[m].log_probs[t]);
      CHECK(std::isfinite(a.trajectories[m].log_probs[t]));
    }
  }
  const EvalBatch scripted = collect_scripted([](const env::State&, int) { return act(0.7); }, ship, 4);
  for (const auto& t : scripted.trajectories) CHECK(t.states == scripted.trajectories[0].states);
}

TEST_CASE("violation gradient matches finite differences") {
  for (bool ship : {true, false}) {
    std::unique_ptr<env::Environment> e;
    if (ship) e = std::make_unique<env::ShipEnv>();
    else e = std::make_unique<env::AgriEnv>();
    auto script = ship ? ship_script : agri_script;
    const EvalBatch batch =
        collect_scripted([&](const env::State& s, int t) { return act(script({s(0), s(1)}, t)); }, *e, 1);
    const auto& fam = e->constraint();
    Rng rng(3);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int i = 0; i < 50; ++i) {
      const Eigen::VectorXd y = fam.index_box().lo + (fam.index_box().hi - fam.index_box().lo).cwiseProduct(v2(u(rng), u(rng)));
      const Eigen::VectorXd g = violation_grad_y(batch, fam, y);
      Eigen::VectorXd fd(2);
      const double h = 1e-6 * (fam.index_box().hi - fam.index_box().lo).maxCoeff();
      for (int d = 0; d < 2; ++d) {
        Eigen::VectorXd yp = y, ym = y;
        yp(d) += h;
        ym(d) -= h;
        fd(d) = (estimate_violation(batch, fam, yp) - estimate_violation(batch, fam, ym)) / (2 * h);
      }
      CHECK((g - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
    }
  }
}

TEST_CASE("agri gradient across a symmetric trajectory has no horizontal part") {
  env::AgriEnv agri;
  rollout::EvalBatch b;
  rollout::Trajectory t = single({0.0, 0.0, 0.0, 0.0});
  t.states = {v2(4.0, 1.0), v2(5.0, 1.0), v2(6.0, 1.0), v2(5.0, 0.2)};
  b.trajectories.push_back(t);
  const Eigen::VectorXd g = violation_grad_y(b, agri.constraint(), v2(5.0, 1.5));
  CHECK(std::abs(g(0)) < 1e-12);
  CHECK(std::abs(g(1)) > 1e-3);

  rollout::Trajectory s1 = single({0.0});
  s1.states = {v2(3.0, 0.5)};
  rollout::EvalBatch one;
  one.trajectories.push_back(s1);
  const Eigen::VectorXd y = v2(2.0, 1.0);
  const Eigen::VectorXd want = -(agri.constraint().cost_grad_y(y, v2(3.0, 0.5)) - agri.constraint().bound_grad_y(y));
  CHECK((violation_grad_y(one, agri.constraint(), y) - want).norm() < 1e-15);
}

TEST_CASE("gae identities") {
  const std::vector<double> r{1.0, -0.5, 2.0, 0.25};
  const std::vector<double> v{0.3, 0.1, -0.2, 0.7};
  const double gamma = 0.9;
  const auto a1 = gae(r, v, 0.0, gamma, 1.0);
  const auto ret = returns_to_go(r, 0.0, gamma);
  for (std::size_t t = 0; t < r.size(); ++t) CHECK(a1[t] == doctest::Approx(ret[t] - v[t]).epsilon(1e-14));

  const auto a0 = gae(r, v, 0.4, gamma, 0.0);
  for (std::size_t t = 0; t < r.size(); ++t) {
    const double next = t + 1 < r.size() ? v[t + 1] : 0.4;
    CHECK(a0[t] == doctest::Approx(r[t] + gamma * next - v[t]).epsilon(1e-14));
  }

  const std::vector<double> zeros(5, 0.0);
  for (double a : gae(zeros, zeros, 0.0, 0.99, 0.95)) CHECK(a == 0.0);
}

TEST_CASE("gae bootstraps only truncated episodes") {
  Trajectory t = single({1.0, 1.0});
  auto value = [](const env::State&) { return 10.0; };
  t.reached = true;
  CHECK(gae(t, value, 1.0, 1.0)[0] == doctest::Approx(2.0 - 10.0));
  t.reached = false;
  CHECK(gae(t, value, 1.0, 1.0)[0] == doctest::Approx(2.0 + 10.0 - 10.0));
}

TEST_CASE("objective standard error shrinks like one over root M") {
  env::ShipEnv ship;
  Rng rng(21);
  nn::GaussianPolicy policy = ppo::make_policy(ship, ppo::NetworkShape{1, 16}, rng);
  policy.set_log_std(Eigen::VectorXd::Constant(1, 0.5));
  std::vector<double> spread;
  for (int m : {16, 64, 256}) {
    // Spread of batch means across independent batches.
    std::vector<double> means;
    for (std::uint64_t rep = 0; rep < 24; ++rep) {
      means.push_back(estimate_objective(collect(policy, ship, m, 1000 + rep, static_cast<std::uint64_t>(m)), 1.0));
    }
    double mu = 0.0, ss = 0.0;
    for (double x : means) mu += x;
    mu /= static_cast<double>(means.size());
    for (double x : means) ss += (x - mu) * (x - mu);
    spread.push_back(std::sqrt(ss / static_cast<double>(means.size() - 1)));
  }
  CHECK(spread[0] / spread[1] > 1.0);
  CHECK(spread[0] / spread[1] < 4.0);
  CHECK(spread[1] / spread[2] > 1.0);
  CHECK(spread[1] / spread[2] < 4.0);
}
