#include "epo/env/benchmarks.hpp"

#include <cmath>
#include <numbers>

namespace epo::env {

namespace {

Box make_box(double x0, double y0, double x1, double y1) {
  Box b;
  b.lo = Eigen::Vector2d(x0, y0);
  b.hi = Eigen::Vector2d(x1, y1);
  return b;
}

Eigen::VectorXd heading(double step, double angle) {
  return Eigen::Vector2d(step * std::cos(angle), step * std::sin(angle));
}

}  // namespace

// ---- ShipPollution ---------------------------------------------------------

ShipPollution::ShipPollution() : ShipPollution(Params{}) {}

ShipPollution::ShipPollution(Params p) : p_(std::move(p)), box_(make_box(0.0, 0.0, 1.0, 1.0)) {}

double ShipPollution::cost(const Eigen::VectorXd& y, const State& s) const {
  return std::exp(-p_.cost_decay * (y - s).norm());
}

double ShipPollution::bound(const Eigen::VectorXd& y) const {
  return p_.bound_base + p_.bound_scale * std::exp(p_.bound_growth * (y - p_.reserve).norm());
}

Eigen::VectorXd ShipPollution::cost_grad_y(const Eigen::VectorXd& y, const State& s) const {
  const Eigen::VectorXd diff = y - s;
  const double r = diff.norm();
  if (r == 0.0) return Eigen::VectorXd::Zero(y.size());
  return (-p_.cost_decay * std::exp(-p_.cost_decay * r) / r) * diff;
}

Eigen::VectorXd ShipPollution::bound_grad_y(const Eigen::VectorXd& y) const {
  const Eigen::VectorXd diff = y - p_.reserve;
  const double r = diff.norm();
  if (r == 0.0) return Eigen::VectorXd::Zero(y.size());
  return (p_.bound_scale * p_.bound_growth * std::exp(p_.bound_growth * r) / r) * diff;
}

// ---- AgriPesticide ---------------------------------------------------------

AgriPesticide::AgriPesticide() : AgriPesticide(Params{}) {}

AgriPesticide::AgriPesticide(Params p) : p_(std::move(p)), box_(make_box(0.0, 0.0, 20.0, 2.0)) {}

double AgriPesticide::cost(const Eigen::VectorXd& y, const State& s) const {
  return 1.0 / (1.0 + (y - s).squaredNorm());
}

double AgriPesticide::bound(const Eigen::VectorXd& y) const {
  double sum = 0.0;
  for (const auto& c : p_.centers) sum += std::exp(-(y - c).squaredNorm() / p_.demand_width);
  return p_.demand_scale * sum;
}

Eigen::VectorXd AgriPesticide::cost_grad_y(const Eigen::VectorXd& y, const State& s) const {
  const Eigen::VectorXd diff = y - s;
  const double q = 1.0 + diff.squaredNorm();
  return (-2.0 / (q * q)) * diff;
}

Eigen::VectorXd AgriPesticide::bound_grad_y(const Eigen::VectorXd& y) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(y.size());
  for (const auto& c : p_.centers) {
    const Eigen::VectorXd diff = y - c;
    g += (-2.0 / p_.demand_width) * std::exp(-diff.squaredNorm() / p_.demand_width) * diff;
  }
  return p_.demand_scale * g;
}

// ---- ShipEnv ---------------------------------------------------------------

ShipEnv::ShipEnv() : ShipEnv(Params{}) {}

ShipEnv::ShipEnv(Params p)
    : p_(std::move(p)),
      region_(make_box(0.0, 0.0, 1.0, 1.0)),
      actions_{{0.0, 2.0 * std::numbers::pi}},
      family_(p_.pollution) {
  p_.env.validate();
}

State ShipEnv::reset(Rng&) const { return p_.start; }

double ShipEnv::shaping_reward(const State& s) const { return -0.1 * ((s - p_.destination).norm() + 1.0); }

StepResult ShipEnv::step(const State& s, const Action& a, int t) const {
  check_action(a, actions_);
  StepResult out;
  out.next = region_.clip(s + heading(p_.env.step_length, a(0)));
  out.reward = shaping_reward(out.next);
  if ((out.next - p_.destination).norm() <= p_.env.reach_radius) {
    out.reward += p_.goal_bonus;
    out.reached = true;
    out.done = true;
  } else if (t + 1 >= p_.env.max_steps) {
    out.truncated = true;
    out.done = true;
  }
  return out;
}

// ---- AgriEnv ---------------------------------------------------------------

AgriEnv::AgriEnv() : AgriEnv(Params{}) {}

AgriEnv::AgriEnv(Params p)
    : p_(std::move(p)),
      region_(make_box(0.0, 0.0, 20.0, 2.0)),
      actions_{{-0.5 * std::numbers::pi, 0.5 * std::numbers::pi}},
      family_(p_.pesticide) {
  p_.env.validate();
}

State AgriEnv::reset(Rng&) const { return p_.start; }

StepResult AgriEnv::step(const State& s, const Action& a, int t) const {
  check_action(a, actions_);
  StepResult out;
  out.next = region_.clip(s + heading(p_.env.step_length, a(0)));
  out.reward = p_.progress_scale * (out.next(0) - s(0));
  if (out.next(0) >= region_.hi(0)) {
    out.reward += p_.goal_bonus;
    out.reached = true;
    out.done = true;
  } else if (t + 1 >= p_.env.max_steps) {
    out.truncated = true;
    out.done = true;
  }
  return out;
}

}  // namespace epo::env
