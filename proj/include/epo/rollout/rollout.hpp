#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "epo/env/environment.hpp"
#include "epo/nn/gaussian_policy.hpp"

namespace epo::rollout {

/// One episode. states[t] is the state in which actions[t] was taken;
/// rewards[t] is the reward of that transition.
struct Trajectory {
  std::vector<env::State> states;
  std::vector<env::Action> actions;
  std::vector<Eigen::VectorXd> pre_squash;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  env::State final_state;
  bool reached = false;  // false: truncated at max_steps

  std::size_t length() const { return states.size(); }
};

struct EvalBatch {
  std::vector<Trajectory> trajectories;
  std::uint64_t policy_version = 0;

  std::size_t size() const { return trajectories.size(); }
  std::size_t transitions() const;
};

enum class ActionMode { Sample, Greedy };

/**
 * Runs `episodes` independent episodes of `policy` in `environment`.
 *
 * Episode e draws its noise from the substream (seed, stream, e), so the
 * batch depends only on those three values, never on execution order.
 */
EvalBatch collect(const nn::GaussianPolicy& policy, const env::Environment& environment, int episodes,
                  std::uint64_t seed, std::uint64_t stream, ActionMode mode = ActionMode::Sample);

/// Deterministic scripted controller: action = fn(state, t). Log-probs are recorded as 0.
using ScriptedPolicy = std::function<env::Action(const env::State&, int)>;
EvalBatch collect_scripted(const ScriptedPolicy& fn, const env::Environment& environment, int episodes);

/// Per-episode discounted returns sum_t gamma^t r_t.
std::vector<double> episode_returns(const EvalBatch& batch, double gamma);
/// Mean of episode_returns().
double estimate_objective(const EvalBatch& batch, double gamma);

/// (1/M) sum_m sum_t gamma_c^t c_y(s_t^m).
double estimate_constraint(const EvalBatch& batch, const env::ConstraintFamily& family, const Eigen::VectorXd& y);
/// estimate_constraint() at every point, in one pass over the stored states.
/// Results are bitwise identical to the scalar routine.
std::vector<double> estimate_constraint_grid(const EvalBatch& batch, const env::ConstraintFamily& family,
                                             std::span<const Eigen::VectorXd> points);

/// Normalized violation sign * (J_{c_y} - d_y) of the batch at y.
double estimate_violation(const EvalBatch& batch, const env::ConstraintFamily& family, const Eigen::VectorXd& y);

/// Analytic d/dy of estimate_violation().
Eigen::VectorXd violation_grad_y(const EvalBatch& batch, const env::ConstraintFamily& family,
                                 const Eigen::VectorXd& y);

/// Generalized advantage estimation over one episode.
/// `values` holds V(s_t) for every stored state; `bootstrap` is V(s_T)
/// (pass 0 when the episode terminated at the goal).
std::vector<double> gae(std::span<const double> rewards, std::span<const double> values, double bootstrap,
                        double gamma, double lambda);

/// Trajectory convenience overload: bootstraps with value_fn(final_state) on truncation, 0 on arrival.
std::vector<double> gae(const Trajectory& trajectory, const std::function<double(const env::State&)>& value_fn,
                        double gamma, double lambda);

/// sum_{u >= t} gamma^{u-t} r_u + gamma^{T-t} * bootstrap, for every t.
std::vector<double> returns_to_go(std::span<const double> rewards, double bootstrap, double gamma);

}  // namespace epo::rollout
