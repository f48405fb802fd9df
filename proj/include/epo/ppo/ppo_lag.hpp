#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "epo/env/environment.hpp"
#include "epo/exchange/exchange.hpp"
#include "epo/nn/adam.hpp"
#include "epo/nn/gaussian_policy.hpp"
#include "epo/rollout/rollout.hpp"

namespace epo::ppo {

using search::IndexPoint;
using ParamVector = Eigen::VectorXd;

struct PpoConfig {
  double clip = 0.3;
  double lr_net = 1e-4;
  double lr_mult = 1e-4;
  double gae_lambda = 1.0;
  int inner_iters = 20;
  int epochs = 4;
  int minibatch = 256;
  int episodes = 64;             // M, episodes per inner round
  double sub_tolerance = 0.005;  // tau_sub
  bool normalize_reward_advantages = true;
  int constraint_critic_samples = 4096;  // (state, y) pairs per round for the constraint critic fit

  void validate() const;
};

/// Projected dual ascent: max(0, v + lr * residual).
double dual_update(double v, double residual, double lr_mult);

/// Affine map of a box onto [-1, 1]^d, as (x - offset) .* scale.
struct InputScaling {
  Eigen::VectorXd offset;
  Eigen::VectorXd scale;

  static InputScaling for_box(const env::Box& box);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

/// Reward critic V(s) and y-conditioned constraint critic V_c(s, y).
struct Critics {
  nn::Mlp reward;
  nn::Mlp constraint;
  nn::Adam reward_opt;
  nn::Adam constraint_opt;
  InputScaling state_scaling;
  InputScaling index_scaling;

  static Critics make(const env::Environment& environment, int hidden_layers, int hidden_size, double lr, Rng& rng);

  Eigen::VectorXd reward_values(const Eigen::MatrixXd& states) const;
  Eigen::VectorXd constraint_values(const Eigen::MatrixXd& states, const Eigen::VectorXd& y) const;
  /// Constraint-critic input rows: scaled state stacked on scaled y.
  Eigen::MatrixXd constraint_inputs(const Eigen::MatrixXd& states, const Eigen::VectorXd& y) const;
};

/// An EvalBatch laid out column-wise for batched network passes.
struct Transitions {
  Eigen::MatrixXd states;      // state_dim x N
  Eigen::MatrixXd pre_squash;  // action_dim x N
  Eigen::VectorXd behavior_log_probs;
  Eigen::MatrixXd final_states;        // state_dim x M
  std::vector<Eigen::Index> starts;    // first column of each episode, plus N at the end
  std::vector<bool> reached;

  static Transitions from(const rollout::EvalBatch& batch);
  Eigen::Index size() const { return states.cols(); }
  std::size_t episodes() const { return reached.size(); }
};

/// Everything policy_update needs for one batch.
struct SurrogateInputs {
  Eigen::MatrixXd states;
  Eigen::MatrixXd pre_squash;
  Eigen::VectorXd behavior_log_probs;
  Eigen::VectorXd reward_advantages;   // N
  Eigen::MatrixXd penalty_advantages;  // N x K, sign * A_c per working-set entry
  std::vector<double> multipliers;     // K
};

struct SurrogateValue {
  double loss = 0.0;
  ParamVector grad;
  double clip_fraction = 0.0;
};

/**
 * Clipped Lagrangian surrogate over the listed columns:
 *
 *   mean_i [ -min(r_i A_i, clip(r_i) A_i) - sum_k v_k min(-r_i P_ik, -clip(r_i) P_ik) ]
 *
 * with r_i = exp(log pi(u_i|s_i) - behavior_i). The penalty advantage is
 * negated before the pessimistic min so that the clip bounds how far one
 * update can go in reducing the penalty, mirroring the reward term. Entries
 * with zero multiplier are skipped, so v = 0 reproduces plain PPO exactly.
 */
SurrogateValue surrogate(const nn::GaussianPolicy& policy, const SurrogateInputs& in,
                         std::span<const Eigen::Index> columns, double clip);

struct PolicyUpdateStats {
  double mean_loss = 0.0;
  double clip_fraction = 0.0;
  int steps = 0;
};

/// Shuffled minibatch Adam steps on surrogate() for cfg.epochs passes.
PolicyUpdateStats policy_update(nn::GaussianPolicy& policy, nn::Adam& optimizer, const SurrogateInputs& in,
                                const PpoConfig& cfg, Rng& rng);

struct CriticLoss {
  double reward = 0.0;
  double constraint = 0.0;  // 0 when the working set is empty
};

/**
 * Regression of the critics on returns-to-go: reward on gamma_r returns,
 * bootstrapped with the current reward critic when an episode was truncated;
 * constraint on gamma_c cost-to-go at each working-set point (no bootstrap),
 * over a random subsample of (state, y) pairs.
 */
CriticLoss fit_critics(Critics& critics, const Transitions& tr, const rollout::EvalBatch& batch,
                       const env::Environment& environment, std::span<const IndexPoint> points,
                       const PpoConfig& cfg, Rng& rng);

/// Violation surface of one batch: sign * (J_c estimate - d_y).
class BatchViolationModel final : public search::ViolationModel {
 public:
  BatchViolationModel(std::shared_ptr<const rollout::EvalBatch> batch, const env::ConstraintFamily& family);

  const env::Box& index_box(int) const override { return family_.index_box(); }
  double violation(const IndexPoint& y) const override;
  std::vector<double> violations(int family, std::span<const Eigen::VectorXd> points) const override;
  Eigen::VectorXd violation_gradient(const IndexPoint& y) const override;

 private:
  std::shared_ptr<const rollout::EvalBatch> batch_;
  const env::ConstraintFamily& family_;
};

struct NetworkShape {
  int hidden_layers = 2;
  int hidden_size = 256;
};

/// Mutable training state shared by the evaluator and the subproblem solver of one seed.
class RlContext {
 public:
  RlContext(std::unique_ptr<env::Environment> environment, const NetworkShape& shape, const PpoConfig& cfg,
            std::uint64_t seed);

  const env::Environment& environment() const { return *env_; }
  nn::GaussianPolicy& policy() { return policy_; }
  const nn::GaussianPolicy& policy() const { return policy_; }
  nn::Adam& policy_optimizer() { return policy_opt_; }
  Critics& critics() { return critics_; }
  const PpoConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }

  /// Fresh batch under the current policy on the next rollout stream.
  std::shared_ptr<const rollout::EvalBatch> collect();
  /// Remembers a batch collected under `params` for reuse by the next inner round.
  void remember(const ParamVector& params, std::shared_ptr<const rollout::EvalBatch> batch);
  /// The remembered batch if it was collected under exactly `params`, else nullptr; clears it.
  std::shared_ptr<const rollout::EvalBatch> take_if_current(const ParamVector& params);
  /// Seed for auxiliary randomness (minibatch shuffles, critic subsamples) of the current round.
  Rng round_rng(std::uint64_t purpose);

 private:
  std::unique_ptr<env::Environment> env_;
  nn::GaussianPolicy policy_;
  nn::Adam policy_opt_;
  Critics critics_;
  PpoConfig cfg_;
  std::uint64_t seed_;
  std::uint64_t next_stream_ = 0;
  std::uint64_t aux_counter_ = 0;
  ParamVector remembered_params_;
  std::shared_ptr<const rollout::EvalBatch> remembered_;
};

/// Builds the policy for an environment: mean network, interval squashing, region input scaling.
nn::GaussianPolicy make_policy(const env::Environment& environment, const NetworkShape& shape, Rng& rng);

class RlEvaluator final : public exchange::IterateEvaluator {
 public:
  explicit RlEvaluator(RlContext& ctx) : ctx_(ctx) {}
  exchange::IterateEvaluation evaluate(const ParamVector& params, int outer_iteration) override;

 private:
  RlContext& ctx_;
};

enum class StopReason { ToleranceMet, BudgetExhausted };
std::string to_string(StopReason reason);

struct InnerRoundStats {
  int outer_iteration = 0;
  int round = 0;
  double objective_estimate = 0.0;
  std::vector<double> residuals;    // sign * (J_c - d) per entry, from this round's batch
  std::vector<double> multipliers;  // after the dual step
  double policy_loss = 0.0;
  double clip_fraction = 0.0;
  CriticLoss critic_loss;
  double mean_episode_length = 0.0;

  double max_residual() const;
  double multiplier_l1() const;
};

struct SubproblemReport {
  std::vector<InnerRoundStats> rounds;
  StopReason stop_reason = StopReason::BudgetExhausted;
};

/**
 * PPO-Lagrangian solve of the subproblem over a working set: per round,
 * collect a batch (the first round reuses the evaluator's batch when the
 * parameters match), fit critics, one clipped policy update and one dual
 * step per entry. With a nonempty working set it stops once every residual
 * has been within sub_tolerance on two consecutive rounds.
 */
class PpoLagSolver final : public exchange::SubproblemSolver {
 public:
  using RoundObserver = std::function<void(const InnerRoundStats&)>;

  explicit PpoLagSolver(RlContext& ctx, RoundObserver observer = {}) : ctx_(ctx), observer_(std::move(observer)) {}

  exchange::SubproblemResult solve(const ParamVector& init, const exchange::WorkingSet& ws,
                                   int outer_iteration) override;
  const SubproblemReport& last_report() const { return report_; }

 private:
  RlContext& ctx_;
  RoundObserver observer_;
  SubproblemReport report_;
};

}  // namespace epo::ppo
