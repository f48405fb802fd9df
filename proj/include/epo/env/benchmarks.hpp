#pragma once

#include <memory>
#include <string>

#include "epo/env/environment.hpp"

namespace epo::env {

/// Pollution constraint of the ship task: c_y(s) = exp(-k |y - s|), d_y = base + scale * exp(growth |y - A|).
class ShipPollution final : public ConstraintFamily {
 public:
  struct Params {
    Eigen::Vector2d reserve{0.5, 0.5};
    double cost_decay = 15.0;
    double bound_base = 0.015;
    double bound_scale = 0.005;
    double bound_growth = 20.0;
    double gamma_c = 1.0;
  };

  ShipPollution();
  explicit ShipPollution(Params p);

  const Box& index_box() const override { return box_; }
  double cost(const Eigen::VectorXd& y, const State& s) const override;
  double bound(const Eigen::VectorXd& y) const override;
  Eigen::VectorXd cost_grad_y(const Eigen::VectorXd& y, const State& s) const override;
  Eigen::VectorXd bound_grad_y(const Eigen::VectorXd& y) const override;
  Orientation orientation() const override { return Orientation::UpperBound; }
  double gamma_c() const override { return p_.gamma_c; }
  const Params& params() const { return p_; }

 private:
  Params p_;
  Box box_;
};

/// Pesticide requirement of the spraying task: c_y(s) = 1 / (1 + |y - s|^2),
/// d_y = 2.8 * sum_i exp(-|y - P_i|^2 / 0.5), cumulative dose must exceed d_y.
class AgriPesticide final : public ConstraintFamily {
 public:
  struct Params {
    std::vector<Eigen::Vector2d> centers{{5.0, 1.5}, {10.0, 0.5}, {15.0, 1.5}};
    double demand_scale = 2.8;
    double demand_width = 0.5;
    double gamma_c = 1.0;
  };

  AgriPesticide();
  explicit AgriPesticide(Params p);

  const Box& index_box() const override { return box_; }
  double cost(const Eigen::VectorXd& y, const State& s) const override;
  double bound(const Eigen::VectorXd& y) const override;
  Eigen::VectorXd cost_grad_y(const Eigen::VectorXd& y, const State& s) const override;
  Eigen::VectorXd bound_grad_y(const Eigen::VectorXd& y) const override;
  Orientation orientation() const override { return Orientation::LowerBound; }
  double gamma_c() const override { return p_.gamma_c; }
  const Params& params() const { return p_; }

 private:
  Params p_;
  Box box_;
};

/**
 * Ship route planning on [0,1]^2: start at the origin, head for D = (1,1)
 * while keeping pollution at every point of the square under its threshold.
 * Per-step reward -0.1 * (|s' - D| + 1), +5 on arrival.
 */
class ShipEnv final : public Environment {
 public:
  struct Params {
    EnvConfig env{0.05, 200, 0.05, 1.0};
    Eigen::Vector2d start{0.0, 0.0};
    Eigen::Vector2d destination{1.0, 1.0};
    double goal_bonus = 5.0;
    ShipPollution::Params pollution{};
  };

  ShipEnv();
  explicit ShipEnv(Params p);

  std::string name() const override { return "ship"; }
  const Box& region() const override { return region_; }
  const std::vector<nn::ActionInterval>& action_intervals() const override { return actions_; }
  const EnvConfig& config() const override { return p_.env; }
  const ConstraintFamily& constraint() const override { return family_; }
  State reset(Rng& rng) const override;
  StepResult step(const State& s, const Action& a, int t) const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<ShipEnv>(*this); }

  /// Shaping term -0.1 * (|s - D| + 1) without any bonus.
  double shaping_reward(const State& s) const;
  const Params& params() const { return p_; }

 private:
  Params p_;
  Box region_;
  std::vector<nn::ActionInterval> actions_;
  ShipPollution family_;
};

/**
 * Agricultural spraying over [0,20] x [0,2]: fly from (0,1) to the right
 * edge; reward 0.1 * (x' - x) per step and +10 on reaching x = 20.
 */
class AgriEnv final : public Environment {
 public:
  struct Params {
    EnvConfig env{0.5, 120, 0.25, 0.95};
    Eigen::Vector2d start{0.0, 1.0};
    double goal_bonus = 10.0;
    double progress_scale = 0.1;
    AgriPesticide::Params pesticide{};
  };

  AgriEnv();
  explicit AgriEnv(Params p);

  std::string name() const override { return "agri"; }
  const Box& region() const override { return region_; }
  const std::vector<nn::ActionInterval>& action_intervals() const override { return actions_; }
  const EnvConfig& config() const override { return p_.env; }
  const ConstraintFamily& constraint() const override { return family_; }
  State reset(Rng& rng) const override;
  StepResult step(const State& s, const Action& a, int t) const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<AgriEnv>(*this); }
  const Params& params() const { return p_; }

 private:
  Params p_;
  Box region_;
  std::vector<nn::ActionInterval> actions_;
  AgriPesticide family_;
};

}  // namespace epo::env
