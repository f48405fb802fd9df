#include "epo/rollout/rollout.hpp"

#include <cmath>
#include <stdexcept>

namespace epo::rollout {

std::size_t EvalBatch::transitions() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.length();
  return n;
}

EvalBatch collect(const nn::GaussianPolicy& policy, const env::Environment& environment, int episodes,
                  std::uint64_t seed, std::uint64_t stream, ActionMode mode) {
  if (episodes < 1) throw std::invalid_argument("collect: need at least one episode");
  const auto m = static_cast<std::size_t>(episodes);
  EvalBatch batch;
  batch.trajectories.resize(m);
  std::vector<Rng> rngs;
  rngs.reserve(m);
  std::vector<env::State> current(m);
  for (std::size_t e = 0; e < m; ++e) {
    rngs.push_back(make_rng(seed, {stream, e}));
    current[e] = environment.reset(rngs.back());
  }

  const int sdim = environment.state_dim();
  const Eigen::VectorXd sigma = policy.log_std().array().exp();
  std::vector<std::size_t> active(m);
  for (std::size_t e = 0; e < m; ++e) active[e] = e;

  // All live episodes advance in lockstep so the mean network runs once per step on a batch.
  for (int t = 0; !active.empty(); ++t) {
    Eigen::MatrixXd states(sdim, static_cast<Eigen::Index>(active.size()));
    for (std::size_t i = 0; i < active.size(); ++i) states.col(static_cast<Eigen::Index>(i)) = current[active[i]];
    const Eigen::MatrixXd means = policy.mean_batch(states);

    std::vector<std::size_t> still_active;
    still_active.reserve(active.size());
    for (std::size_t i = 0; i < active.size(); ++i) {
      const std::size_t e = active[i];
      Trajectory& traj = batch.trajectories[e];
      const Eigen::VectorXd mean = means.col(static_cast<Eigen::Index>(i));
      Eigen::VectorXd u = mean;
      if (mode == ActionMode::Sample) {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index d = 0; d < u.size(); ++d) u(d) += sigma(d) * normal(rngs[e]);
      }
      Eigen::VectorXd a = policy.squash(u);
      const double lp = policy.log_prob_pre_squash(mean, u);
      env::StepResult step = environment.step(current[e], a, t);

      traj.states.push_back(current[e]);
      traj.actions.push_back(std::move(a));
      traj.pre_squash.push_back(std::move(u));
      traj.log_probs.push_back(lp);
      traj.rewards.push_back(step.reward);
      current[e] = std::move(step.next);
      if (step.done) {
        traj.final_state = current[e];
        traj.reached = step.reached;
      } else {
        still_active.push_back(e);
      }
    }
    active.swap(still_active);
  }
  return batch;
}

EvalBatch collect_scripted(const ScriptedPolicy& fn, const env::Environment& environment, int episodes) {
  if (episodes < 1) throw std::invalid_argument("collect_scripted: need at least one episode");
  EvalBatch batch;
  Rng unused(0);
  for (int e = 0; e < episodes; ++e) {
    Trajectory traj;
    env::State s = environment.reset(unused);
    for (int t = 0;; ++t) {
      env::Action a = fn(s, t);
      env::StepResult step = environment.step(s, a, t);
      traj.states.push_back(s);
      traj.actions.push_back(a);
      traj.pre_squash.push_back(Eigen::VectorXd::Zero(a.size()));
      traj.log_probs.push_back(0.0);
      traj.rewards.push_back(step.reward);
      s = std::move(step.next);
      if (step.done) {
        traj.final_state = s;
        traj.reached = step.reached;
        break;
      }
    }
    batch.trajectories.push_back(std::move(traj));
  }
  return batch;
}

std::vector<double> episode_returns(const EvalBatch& batch, double gamma) {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& traj : batch.trajectories) {
    double ret = 0.0;
    double discount = 1.0;
    for (double r : traj.rewards) {
      ret += discount * r;
      discount *= gamma;
    }
    out.push_back(ret);
  }
  return out;
}

double estimate_objective(const EvalBatch& batch, double gamma) {
  if (batch.size() == 0) throw std::invalid_argument("estimate_objective: empty batch");
  double total = 0.0;
  for (double r : episode_returns(batch, gamma)) total += r;
  return total / static_cast<double>(batch.size());
}

double estimate_constraint(const EvalBatch& batch, const env::ConstraintFamily& family, const Eigen::VectorXd& y) {
  if (batch.size() == 0) throw std::invalid_argument("estimate_constraint: empty batch");
  const double gamma = family.gamma_c();
  double total = 0.0;
  for (const auto& traj : batch.trajectories) {
    double acc = 0.0;
    double discount = 1.0;
    for (const auto& s : traj.states) {
      acc += discount * family.cost(y, s);
      discount *= gamma;
    }
    total += acc;
  }
  return total / static_cast<double>(batch.size());
}

std::vector<double> estimate_constraint_grid(const EvalBatch& batch, const env::ConstraintFamily& family,
                                             std::span<const Eigen::VectorXd> points) {
  if (batch.size() == 0) throw std::invalid_argument("estimate_constraint_grid: empty batch");
  const double gamma = family.gamma_c();
  const std::size_t n = points.size();
  std::vector<double> total(n, 0.0);
  std::vector<double> acc(n);
  // Same operation order per point as estimate_constraint(), hence bitwise-equal results.
  for (const auto& traj : batch.trajectories) {
    std::fill(acc.begin(), acc.end(), 0.0);
    double discount = 1.0;
    for (const auto& s : traj.states) {
      for (std::size_t p = 0; p < n; ++p) acc[p] += discount * family.cost(points[p], s);
      discount *= gamma;
    }
    for (std::size_t p = 0; p < n; ++p) total[p] += acc[p];
  }
  for (double& v : total) v /= static_cast<double>(batch.size());
  return total;
}

double estimate_violation(const EvalBatch& batch, const env::ConstraintFamily& family, const Eigen::VectorXd& y) {
  return family.violation(estimate_constraint(batch, family, y), y);
}

Eigen::VectorXd violation_grad_y(const EvalBatch& batch, const env::ConstraintFamily& family,
                                 const Eigen::VectorXd& y) {
  if (batch.size() == 0) throw std::invalid_argument("violation_grad_y: empty batch");
  const double gamma = family.gamma_c();
  Eigen::VectorXd total = Eigen::VectorXd::Zero(y.size());
  for (const auto& traj : batch.trajectories) {
    double discount = 1.0;
    for (const auto& s : traj.states) {
      total += discount * family.cost_grad_y(y, s);
      discount *= gamma;
    }
  }
  total /= static_cast<double>(batch.size());
  return family.sign() * (total - family.bound_grad_y(y));
}

std::vector<double> gae(std::span<const double> rewards, std::span<const double> values, double bootstrap,
                        double gamma, double lambda) {
  if (rewards.size() != values.size()) throw std::invalid_argument("gae: rewards/values length mismatch");
  std::vector<double> adv(rewards.size());
  double running = 0.0;
  double next_value = bootstrap;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    const double delta = rewards[i] + gamma * next_value - values[i];
    running = delta + gamma * lambda * running;
    adv[i] = running;
    next_value = values[i];
  }
  return adv;
}

std::vector<double> gae(const Trajectory& trajectory, const std::function<double(const env::State&)>& value_fn,
                        double gamma, double lambda) {
  std::vector<double> values;
  values.reserve(trajectory.length());
  for (const auto& s : trajectory.states) values.push_back(value_fn(s));
  const double bootstrap = trajectory.reached ? 0.0 : value_fn(trajectory.final_state);
  return gae(trajectory.rewards, values, bootstrap, gamma, lambda);
}

std::vector<double> returns_to_go(std::span<const double> rewards, double bootstrap, double gamma) {
  std::vector<double> out(rewards.size());
  double running = bootstrap;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    running = rewards[i] + gamma * running;
    out[i] = running;
  }
  return out;
}

}  // namespace epo::rollout
