#pragma once

#include <vector>

#include "epo/nn/mlp.hpp"
#include "epo/rng.hpp"

namespace epo::nn {

struct ActionInterval {
  double lo = 0.0;
  double hi = 1.0;

  double width() const { return hi - lo; }
  double midpoint() const { return 0.5 * (lo + hi); }
};

/// Actions closer than this fraction of the interval width to an end are clamped inward.
inline constexpr double kBoundaryClampFraction = 1e-6;

struct PolicySample {
  Eigen::VectorXd action;      // squashed, strictly inside the interval
  Eigen::VectorXd pre_squash;  // Gaussian draw before squashing
  double log_prob = 0.0;
};

/// Log-probabilities for a batch of (state, pre-squash action) pairs plus what
/// the gradient pass needs.
struct LogProbBatch {
  ForwardCache cache;
  Eigen::VectorXd log_probs;
};

/**
 * Diagonal Gaussian over pre-squash actions with a state-dependent mean and a
 * state-independent learned log standard deviation. Actions are mapped onto
 * [lo, hi] per dimension by an affine-scaled tanh.
 *
 * For angular actions on [0, 2pi) the squash leaves a seam at 0/2pi: headings
 * just either side of east are far apart in pre-squash space.
 */
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(Mlp mean_net, std::vector<ActionInterval> intervals, double initial_log_std = -0.5);

  const Mlp& mean_net() const { return mean_net_; }
  Mlp& mean_net() { return mean_net_; }
  const Eigen::VectorXd& log_std() const { return log_std_; }
  void set_log_std(const Eigen::VectorXd& log_std);
  const std::vector<ActionInterval>& intervals() const { return intervals_; }
  int state_dim() const { return mean_net_.input_dim(); }

  /// Fixed affine map applied to states before the mean network: (s - offset) .* scale.
  /// Not a parameter; callers derive it from the state region.
  void set_input_normalization(const Eigen::VectorXd& offset, const Eigen::VectorXd& scale);
  Eigen::MatrixXd normalize_inputs(const Eigen::MatrixXd& states) const;
  Eigen::VectorXd mean(const Eigen::VectorXd& state) const;
  /// Mean network on a batch of raw states (columns).
  Eigen::MatrixXd mean_batch(const Eigen::MatrixXd& states) const;
  int action_dim() const { return mean_net_.output_dim(); }

  std::size_t parameter_count() const;
  /// Mean-network parameters followed by log_std.
  ParamVector flatten() const;
  void unflatten(const ParamVector& params);

  Eigen::VectorXd squash(const Eigen::VectorXd& pre_squash) const;
  /// Inverse of squash(); actions on or beyond the boundary are clamped inward first.
  Eigen::VectorXd unsquash(const Eigen::VectorXd& action) const;

  PolicySample sample(const Eigen::VectorXd& state, Rng& rng) const;
  /// squash(mean(state)).
  Eigen::VectorXd greedy_action(const Eigen::VectorXd& state) const;

  double log_prob(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const;
  double log_prob_pre_squash(const Eigen::VectorXd& mean, const Eigen::VectorXd& pre_squash) const;

  /// states: state_dim x B, pre_squash: action_dim x B.
  LogProbBatch log_prob_batch(const Eigen::MatrixXd& states, const Eigen::MatrixXd& pre_squash) const;
  /// Gradient of sum_i weights(i) * log_prob_i with respect to flatten().
  ParamVector log_prob_gradient(const LogProbBatch& batch, const Eigen::MatrixXd& pre_squash,
                                const Eigen::VectorXd& weights) const;

 private:
  Mlp mean_net_;
  Eigen::VectorXd log_std_;
  std::vector<ActionInterval> intervals_;
  Eigen::VectorXd input_offset_;
  Eigen::VectorXd input_scale_;
};

}  // namespace epo::nn
