#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "epo/nn/gaussian_policy.hpp"
#include "epo/rng.hpp"

namespace epo::env {

using State = Eigen::VectorXd;
using Action = Eigen::VectorXd;

/// Axis-aligned box; used both for state regions and constraint index sets.
struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  int dim() const { return static_cast<int>(lo.size()); }
  double diameter() const { return (hi - lo).norm(); }
  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;
  Eigen::VectorXd clip(const Eigen::VectorXd& x) const;
};

enum class Orientation { UpperBound, LowerBound };

/**
 * Parameterized constraint family J_{c_y}(pi) <= d_y (UpperBound) or
 * J_{c_y}(pi) >= d_y (LowerBound) for every y in the index box.
 *
 * Everything downstream works with the normalized violation
 * sign() * (J_{c_y} - d_y), which is <= 0 exactly when y is satisfied.
 */
class ConstraintFamily {
 public:
  virtual ~ConstraintFamily() = default;

  virtual const Box& index_box() const = 0;
  virtual double cost(const Eigen::VectorXd& y, const State& s) const = 0;
  virtual double bound(const Eigen::VectorXd& y) const = 0;
  /// d/dy cost(y, s). At a non-differentiable point the singular term is dropped.
  virtual Eigen::VectorXd cost_grad_y(const Eigen::VectorXd& y, const State& s) const = 0;
  virtual Eigen::VectorXd bound_grad_y(const Eigen::VectorXd& y) const = 0;
  virtual Orientation orientation() const = 0;
  virtual double gamma_c() const = 0;

  double sign() const { return orientation() == Orientation::UpperBound ? 1.0 : -1.0; }
  /// Normalized violation for a given constraint value J_{c_y}.
  double violation(double constraint_value, const Eigen::VectorXd& y) const {
    return sign() * (constraint_value - bound(y));
  }
};

struct EnvConfig {
  double step_length = 0.05;
  int max_steps = 200;
  double reach_radius = 0.05;
  double gamma_r = 1.0;

  void validate() const;
};

struct StepResult {
  State next;
  double reward = 0.0;
  bool done = false;
  bool reached = false;    // episode ended at the goal (terminal bonus paid)
  bool truncated = false;  // episode ended on the step budget
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual int state_dim() const { return region().dim(); }
  virtual const Box& region() const = 0;
  virtual const std::vector<nn::ActionInterval>& action_intervals() const = 0;
  virtual const EnvConfig& config() const = 0;
  virtual const ConstraintFamily& constraint() const = 0;

  /// Fixed start state; the rng is accepted for interface symmetry and ignored.
  virtual State reset(Rng& rng) const = 0;
  /// Deterministic transition. `t` is the 0-based index of this step within the episode.
  virtual StepResult step(const State& s, const Action& a, int t) const = 0;

  virtual std::unique_ptr<Environment> clone() const = 0;
};

/// Throws std::invalid_argument when any action component lies outside its interval.
void check_action(const Action& a, const std::vector<nn::ActionInterval>& intervals);

}  // namespace epo::env
