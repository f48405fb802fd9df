#include "epo/nn/gaussian_policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace epo::nn {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

// log(1 - tanh(u)^2), stable for large |u|.
double log_sech2(double u) {
  const double a = std::abs(u);
  return 2.0 * (std::numbers::ln2 - a - softplus(-2.0 * a));
}

}  // namespace

GaussianPolicy::GaussianPolicy(Mlp mean_net, std::vector<ActionInterval> intervals, double initial_log_std)
    : mean_net_(std::move(mean_net)), intervals_(std::move(intervals)) {
  if (static_cast<int>(intervals_.size()) != mean_net_.output_dim()) {
    throw std::invalid_argument("GaussianPolicy: one action interval per output dimension required");
  }
  for (const auto& iv : intervals_) {
    if (!(iv.hi > iv.lo)) throw std::invalid_argument("GaussianPolicy: empty action interval");
  }
  log_std_ = Eigen::VectorXd::Constant(mean_net_.output_dim(), initial_log_std);
}

void GaussianPolicy::set_log_std(const Eigen::VectorXd& log_std) {
  if (log_std.size() != action_dim()) throw std::invalid_argument("set_log_std: size mismatch");
  log_std_ = log_std;
}

void GaussianPolicy::set_input_normalization(const Eigen::VectorXd& offset, const Eigen::VectorXd& scale) {
  if (offset.size() != state_dim() || scale.size() != state_dim()) {
    throw std::invalid_argument("set_input_normalization: expected " + std::to_string(state_dim()) + " entries");
  }
  input_offset_ = offset;
  input_scale_ = scale;
}

Eigen::MatrixXd GaussianPolicy::normalize_inputs(const Eigen::MatrixXd& states) const {
  if (input_scale_.size() == 0) return states;
  return (states.colwise() - input_offset_).array().colwise() * input_scale_.array();
}

Eigen::VectorXd GaussianPolicy::mean(const Eigen::VectorXd& state) const {
  return mean_net_.forward(normalize_inputs(state));
}

Eigen::MatrixXd GaussianPolicy::mean_batch(const Eigen::MatrixXd& states) const {
  return mean_net_.forward_batch(normalize_inputs(states));
}

std::size_t GaussianPolicy::parameter_count() const {
  return mean_net_.parameter_count() + static_cast<std::size_t>(log_std_.size());
}

ParamVector GaussianPolicy::flatten() const {
  ParamVector out(static_cast<Eigen::Index>(parameter_count()));
  const auto n = static_cast<Eigen::Index>(mean_net_.parameter_count());
  out.head(n) = mean_net_.flatten();
  out.tail(log_std_.size()) = log_std_;
  return out;
}

void GaussianPolicy::unflatten(const ParamVector& params) {
  if (params.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw std::invalid_argument("GaussianPolicy::unflatten: parameter count mismatch");
  }
  const auto n = static_cast<Eigen::Index>(mean_net_.parameter_count());
  mean_net_.unflatten(params.head(n));
  log_std_ = params.tail(log_std_.size());
}

Eigen::VectorXd GaussianPolicy::squash(const Eigen::VectorXd& pre_squash) const {
  Eigen::VectorXd a(pre_squash.size());
  for (Eigen::Index d = 0; d < a.size(); ++d) {
    const auto& iv = intervals_[static_cast<std::size_t>(d)];
    const double margin = kBoundaryClampFraction * iv.width();
    const double raw = iv.lo + iv.width() * 0.5 * (std::tanh(pre_squash(d)) + 1.0);
    a(d) = std::clamp(raw, iv.lo + margin, iv.hi - margin);
  }
  return a;
}

Eigen::VectorXd GaussianPolicy::unsquash(const Eigen::VectorXd& action) const {
  if (action.size() != action_dim()) throw std::invalid_argument("unsquash: action dimension mismatch");
  Eigen::VectorXd u(action.size());
  for (Eigen::Index d = 0; d < u.size(); ++d) {
    const auto& iv = intervals_[static_cast<std::size_t>(d)];
    const double margin = kBoundaryClampFraction * iv.width();
    const double a = std::clamp(action(d), iv.lo + margin, iv.hi - margin);
    u(d) = std::atanh(2.0 * (a - iv.lo) / iv.width() - 1.0);
  }
  return u;
}

double GaussianPolicy::log_prob_pre_squash(const Eigen::VectorXd& mean, const Eigen::VectorXd& pre_squash) const {
  double lp = 0.0;
  for (Eigen::Index d = 0; d < mean.size(); ++d) {
    const double sigma = std::exp(log_std_(d));
    const double z = (pre_squash(d) - mean(d)) / sigma;
    const double half_width = 0.5 * intervals_[static_cast<std::size_t>(d)].width();
    lp += -0.5 * z * z - log_std_(d) - kHalfLog2Pi - std::log(half_width) - log_sech2(pre_squash(d));
  }
  return lp;
}

PolicySample GaussianPolicy::sample(const Eigen::VectorXd& state, Rng& rng) const {
  const Eigen::VectorXd mu = mean(state);
  std::normal_distribution<double> normal(0.0, 1.0);
  PolicySample out;
  out.pre_squash.resize(mu.size());
  for (Eigen::Index d = 0; d < mu.size(); ++d) {
    out.pre_squash(d) = mu(d) + std::exp(log_std_(d)) * normal(rng);
  }
  out.action = squash(out.pre_squash);
  out.log_prob = log_prob_pre_squash(mu, out.pre_squash);
  return out;
}

Eigen::VectorXd GaussianPolicy::greedy_action(const Eigen::VectorXd& state) const {
  return squash(mean(state));
}

double GaussianPolicy::log_prob(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const {
  return log_prob_pre_squash(mean(state), unsquash(action));
}

LogProbBatch GaussianPolicy::log_prob_batch(const Eigen::MatrixXd& states, const Eigen::MatrixXd& pre_squash) const {
  LogProbBatch out;
  out.cache = mean_net_.forward_cached(normalize_inputs(states));
  const Eigen::MatrixXd& means = out.cache.output();
  out.log_probs.resize(states.cols());
  for (Eigen::Index i = 0; i < states.cols(); ++i) {
    out.log_probs(i) = log_prob_pre_squash(means.col(i), pre_squash.col(i));
  }
  return out;
}

ParamVector GaussianPolicy::log_prob_gradient(const LogProbBatch& batch, const Eigen::MatrixXd& pre_squash,
                                              const Eigen::VectorXd& weights) const {
  const Eigen::MatrixXd& means = batch.cache.output();
  const Eigen::Index n = means.cols();
  Eigen::MatrixXd upstream(action_dim(), n);
  Eigen::VectorXd grad_log_std = Eigen::VectorXd::Zero(action_dim());
  for (Eigen::Index d = 0; d < action_dim(); ++d) {
    const double inv_var = std::exp(-2.0 * log_std_(d));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double diff = pre_squash(d, i) - means(d, i);
      upstream(d, i) = weights(i) * diff * inv_var;
      grad_log_std(d) += weights(i) * (diff * diff * inv_var - 1.0);
    }
  }
  ParamVector grad(static_cast<Eigen::Index>(parameter_count()));
  grad.head(static_cast<Eigen::Index>(mean_net_.parameter_count())) = mean_net_.backward(batch.cache, upstream);
  grad.tail(action_dim()) = grad_log_std;
  return grad;
}

}  // namespace epo::nn
