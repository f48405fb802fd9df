#include "epo/ppo/ppo_lag.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "epo/errors.hpp"

namespace epo::ppo {

namespace {

constexpr std::uint64_t kInitStream = 0x1a17;
constexpr std::uint64_t kAuxStream = 0xa0c5;
constexpr std::uint64_t kShufflePolicy = 1;
constexpr std::uint64_t kCriticFit = 2;

std::vector<Eigen::Index> iota_columns(Eigen::Index n) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  return idx;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, std::span<const Eigen::Index> cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(cols[i]);
  return out;
}

// Minibatch regression of a scalar network onto targets; returns the mean loss of the last epoch.
double regress(nn::Mlp& net, nn::Adam& opt, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets, int epochs,
               int minibatch, Rng& rng) {
  std::vector<Eigen::Index> order = iota_columns(inputs.cols());
  double epoch_loss = 0.0;
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(minibatch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(minibatch));
      const std::span<const Eigen::Index> cols(order.data() + start, stop - start);
      const double b = static_cast<double>(cols.size());
      const nn::ForwardCache cache = net.forward_cached(gather(inputs, cols));
      Eigen::MatrixXd residual(1, cache.output().cols());
      for (Eigen::Index i = 0; i < residual.cols(); ++i) residual(0, i) = cache.output()(0, i) - targets(cols[static_cast<std::size_t>(i)]);
      epoch_loss += 0.5 * residual.squaredNorm();
      ParamVector params = net.flatten();
      opt.step(params, net.backward(cache, residual / b));
      net.unflatten(params);
    }
    epoch_loss /= static_cast<double>(order.size());
  }
  if (!std::isfinite(epoch_loss)) throw NumericalError("critic loss is not finite");
  return epoch_loss;
}

// Per-episode advantages with the given per-step signal and baseline values.
Eigen::VectorXd episode_advantages(const Transitions& tr, const Eigen::VectorXd& signal, const Eigen::VectorXd& values,
                                   const Eigen::VectorXd& bootstrap, double gamma, double lambda) {
  Eigen::VectorXd adv(tr.size());
  for (std::size_t e = 0; e < tr.episodes(); ++e) {
    const Eigen::Index a = tr.starts[e];
    const Eigen::Index len = tr.starts[e + 1] - a;
    const std::vector<double> g =
        rollout::gae(std::span<const double>(signal.data() + a, static_cast<std::size_t>(len)),
                     std::span<const double>(values.data() + a, static_cast<std::size_t>(len)),
                     bootstrap(static_cast<Eigen::Index>(e)), gamma, lambda);
    for (Eigen::Index t = 0; t < len; ++t) adv(a + t) = g[static_cast<std::size_t>(t)];
  }
  return adv;
}

Eigen::VectorXd flat_rewards(const rollout::EvalBatch& batch, Eigen::Index n) {
  Eigen::VectorXd r(n);
  Eigen::Index k = 0;
  for (const auto& traj : batch.trajectories) {
    for (double x : traj.rewards) r(k++) = x;
  }
  return r;
}

Eigen::VectorXd flat_costs(const Transitions& tr, const env::ConstraintFamily& family, const Eigen::VectorXd& y) {
  Eigen::VectorXd c(tr.size());
  for (Eigen::Index j = 0; j < tr.size(); ++j) c(j) = family.cost(y, tr.states.col(j));
  return c;
}

// Bootstrap values per episode: critic value of the final state on truncation, 0 on arrival.
Eigen::VectorXd reward_bootstrap(const Critics& critics, const Transitions& tr) {
  const Eigen::VectorXd finals = critics.reward_values(tr.final_states);
  Eigen::VectorXd out(static_cast<Eigen::Index>(tr.episodes()));
  for (std::size_t e = 0; e < tr.episodes(); ++e) {
    out(static_cast<Eigen::Index>(e)) = tr.reached[e] ? 0.0 : finals(static_cast<Eigen::Index>(e));
  }
  return out;
}

}  // namespace

void PpoConfig::validate() const {
  if (!(clip > 0.0)) throw std::invalid_argument("ppo: clip must be positive");
  if (!(lr_net > 0.0) || !(lr_mult > 0.0)) throw std::invalid_argument("ppo: learning rates must be positive");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("ppo: gae_lambda must lie in [0, 1]");
  if (inner_iters < 1 || epochs < 1 || minibatch < 1 || episodes < 1) {
    throw std::invalid_argument("ppo: inner_iters, epochs, minibatch and episodes must be positive");
  }
  if (!(sub_tolerance >= 0.0)) throw std::invalid_argument("ppo: sub_tolerance must be nonnegative");
  if (constraint_critic_samples < 1) throw std::invalid_argument("ppo: constraint_critic_samples must be positive");
}

double dual_update(double v, double residual, double lr_mult) { return std::max(0.0, v + lr_mult * residual); }

InputScaling InputScaling::for_box(const env::Box& box) {
  InputScaling s;
  s.offset = 0.5 * (box.lo + box.hi);
  s.scale = (2.0 / (box.hi - box.lo).array()).matrix();
  return s;
}

Eigen::MatrixXd InputScaling::apply(const Eigen::MatrixXd& x) const {
  return (x.colwise() - offset).array().colwise() * scale.array();
}

Critics Critics::make(const env::Environment& environment, int hidden_layers, int hidden_size, double lr, Rng& rng) {
  Critics c;
  const int sdim = environment.state_dim();
  const int ydim = environment.constraint().index_box().dim();
  c.reward = nn::Mlp(nn::make_layer_sizes(sdim, hidden_layers, hidden_size, 1));
  c.constraint = nn::Mlp(nn::make_layer_sizes(sdim + ydim, hidden_layers, hidden_size, 1));
  c.reward.init_orthogonal(rng, std::sqrt(2.0), 1.0);
  c.constraint.init_orthogonal(rng, std::sqrt(2.0), 1.0);
  c.reward_opt = nn::Adam(c.reward.parameter_count(), nn::AdamConfig{lr});
  c.constraint_opt = nn::Adam(c.constraint.parameter_count(), nn::AdamConfig{lr});
  c.state_scaling = InputScaling::for_box(environment.region());
  c.index_scaling = InputScaling::for_box(environment.constraint().index_box());
  return c;
}

Eigen::VectorXd Critics::reward_values(const Eigen::MatrixXd& states) const {
  return reward.forward_batch(state_scaling.apply(states)).row(0).transpose();
}

Eigen::MatrixXd Critics::constraint_inputs(const Eigen::MatrixXd& states, const Eigen::VectorXd& y) const {
  Eigen::MatrixXd in(states.rows() + y.size(), states.cols());
  in.topRows(states.rows()) = state_scaling.apply(states);
  in.bottomRows(y.size()) = index_scaling.apply(y).replicate(1, states.cols());
  return in;
}

Eigen::VectorXd Critics::constraint_values(const Eigen::MatrixXd& states, const Eigen::VectorXd& y) const {
  return constraint.forward_batch(constraint_inputs(states, y)).row(0).transpose();
}

Transitions Transitions::from(const rollout::EvalBatch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("Transitions: empty batch");
  const auto n = static_cast<Eigen::Index>(batch.transitions());
  const auto& first = batch.trajectories.front();
  Transitions tr;
  tr.states.resize(first.states.front().size(), n);
  tr.pre_squash.resize(first.pre_squash.front().size(), n);
  tr.behavior_log_probs.resize(n);
  tr.final_states.resize(first.final_state.size(), static_cast<Eigen::Index>(batch.size()));
  Eigen::Index k = 0;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const auto& traj = batch.trajectories[e];
    tr.starts.push_back(k);
    tr.reached.push_back(traj.reached);
    tr.final_states.col(static_cast<Eigen::Index>(e)) = traj.final_state;
    for (std::size_t t = 0; t < traj.length(); ++t, ++k) {
      tr.states.col(k) = traj.states[t];
      tr.pre_squash.col(k) = traj.pre_squash[t];
      tr.behavior_log_probs(k) = traj.log_probs[t];
    }
  }
  tr.starts.push_back(n);
  return tr;
}

SurrogateValue surrogate(const nn::GaussianPolicy& policy, const SurrogateInputs& in,
                         std::span<const Eigen::Index> columns, double clip) {
  const auto b = static_cast<Eigen::Index>(columns.size());
  const Eigen::MatrixXd states = gather(in.states, columns);
  const Eigen::MatrixXd pre = gather(in.pre_squash, columns);
  const nn::LogProbBatch lp = policy.log_prob_batch(states, pre);

  SurrogateValue out;
  Eigen::VectorXd weights(b);
  int clipped = 0;
  const double lo = 1.0 - clip;
  const double hi = 1.0 + clip;
  // d/dr of -min(r A, clip(r) A): -A where the unclipped branch is the min, else 0.
  auto term = [&](double r, double adv, double& loss, double& dr) {
    const double rc = std::clamp(r, lo, hi);
    const double unclipped = r * adv;
    const double clipped_v = rc * adv;
    if (unclipped <= clipped_v) {
      loss -= unclipped;
      dr -= adv;
    } else {
      loss -= clipped_v;
    }
  };
  for (Eigen::Index i = 0; i < b; ++i) {
    const Eigen::Index c = columns[static_cast<std::size_t>(i)];
    const double r = std::exp(lp.log_probs(i) - in.behavior_log_probs(c));
    if (r < lo || r > hi) ++clipped;
    double loss = 0.0;
    double dr = 0.0;
    term(r, in.reward_advantages(c), loss, dr);
    for (std::size_t k = 0; k < in.multipliers.size(); ++k) {
      const double v = in.multipliers[k];
      if (v == 0.0) continue;
      double lk = 0.0;
      double dk = 0.0;
      term(r, -in.penalty_advantages(c, static_cast<Eigen::Index>(k)), lk, dk);
      loss += v * lk;
      dr += v * dk;
    }
    out.loss += loss;
    // d r / d theta = r * d log pi / d theta.
    weights(i) = dr * r / static_cast<double>(b);
  }
  out.loss /= static_cast<double>(b);
  out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(b);
  out.grad = policy.log_prob_gradient(lp, pre, weights);
  return out;
}

PolicyUpdateStats policy_update(nn::GaussianPolicy& policy, nn::Adam& optimizer, const SurrogateInputs& in,
                                const PpoConfig& cfg, Rng& rng) {
  PolicyUpdateStats stats;
  std::vector<Eigen::Index> order = iota_columns(in.states.cols());
  double loss_sum = 0.0;
  double clip_sum = 0.0;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.minibatch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch));
      const SurrogateValue s =
          surrogate(policy, in, std::span<const Eigen::Index>(order.data() + start, stop - start), cfg.clip);
      if (!std::isfinite(s.loss)) throw NumericalError("policy surrogate loss is not finite");
      ParamVector params = policy.flatten();
      optimizer.step(params, s.grad);
      policy.unflatten(params);
      loss_sum += s.loss;
      clip_sum += s.clip_fraction;
      ++stats.steps;
    }
  }
  if (stats.steps > 0) {
    stats.mean_loss = loss_sum / stats.steps;
    stats.clip_fraction = clip_sum / stats.steps;
  }
  return stats;
}

CriticLoss fit_critics(Critics& critics, const Transitions& tr, const rollout::EvalBatch& batch,
                       const env::Environment& environment, std::span<const IndexPoint> points,
                       const PpoConfig& cfg, Rng& rng) {
  CriticLoss loss;
  const double gamma_r = environment.config().gamma_r;
  const Eigen::VectorXd boot = reward_bootstrap(critics, tr);
  const Eigen::VectorXd rewards = flat_rewards(batch, tr.size());
  Eigen::VectorXd targets(tr.size());
  for (std::size_t e = 0; e < tr.episodes(); ++e) {
    const Eigen::Index a = tr.starts[e];
    const Eigen::Index len = tr.starts[e + 1] - a;
    const std::vector<double> g = rollout::returns_to_go(
        std::span<const double>(rewards.data() + a, static_cast<std::size_t>(len)), boot(static_cast<Eigen::Index>(e)),
        gamma_r);
    for (Eigen::Index t = 0; t < len; ++t) targets(a + t) = g[static_cast<std::size_t>(t)];
  }
  loss.reward = regress(critics.reward, critics.reward_opt, critics.state_scaling.apply(tr.states), targets,
                        cfg.epochs, cfg.minibatch, rng);

  if (points.empty()) return loss;
  const env::ConstraintFamily& family = environment.constraint();
  const auto k = static_cast<Eigen::Index>(points.size());
  const Eigen::Index pairs = tr.size() * k;
  const Eigen::Index count = std::min<Eigen::Index>(pairs, cfg.constraint_critic_samples);
  std::vector<Eigen::Index> chosen;
  if (count == pairs) {
    chosen = iota_columns(pairs);
  } else {
    std::uniform_int_distribution<Eigen::Index> pick(0, pairs - 1);
    chosen.resize(static_cast<std::size_t>(count));
    for (auto& c : chosen) c = pick(rng);
  }
  // Cost-to-go per entry, then the sampled (state, y) inputs.
  Eigen::MatrixXd cost_to_go(tr.size(), k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::VectorXd c = flat_costs(tr, family, points[static_cast<std::size_t>(j)].coords);
    for (std::size_t e = 0; e < tr.episodes(); ++e) {
      const Eigen::Index a = tr.starts[e];
      const Eigen::Index len = tr.starts[e + 1] - a;
      const std::vector<double> g = rollout::returns_to_go(
          std::span<const double>(c.data() + a, static_cast<std::size_t>(len)), 0.0, family.gamma_c());
      for (Eigen::Index t = 0; t < len; ++t) cost_to_go(a + t, j) = g[static_cast<std::size_t>(t)];
    }
  }
  const int sdim = static_cast<int>(tr.states.rows());
  const int ydim = static_cast<int>(points.front().coords.size());
  Eigen::MatrixXd inputs(sdim + ydim, count);
  Eigen::VectorXd ctargets(count);
  const Eigen::MatrixXd scaled_states = critics.state_scaling.apply(tr.states);
  for (Eigen::Index i = 0; i < count; ++i) {
    const Eigen::Index pair = chosen[static_cast<std::size_t>(i)];
    const Eigen::Index col = pair % tr.size();
    const Eigen::Index entry = pair / tr.size();
    inputs.col(i).head(sdim) = scaled_states.col(col);
    inputs.col(i).tail(ydim) = critics.index_scaling.apply(points[static_cast<std::size_t>(entry)].coords);
    ctargets(i) = cost_to_go(col, entry);
  }
  loss.constraint = regress(critics.constraint, critics.constraint_opt, inputs, ctargets, cfg.epochs, cfg.minibatch, rng);
  return loss;
}

BatchViolationModel::BatchViolationModel(std::shared_ptr<const rollout::EvalBatch> batch,
                                         const env::ConstraintFamily& family)
    : batch_(std::move(batch)), family_(family) {
  if (!batch_ || batch_->size() == 0) throw std::invalid_argument("BatchViolationModel: empty batch");
}

double BatchViolationModel::violation(const IndexPoint& y) const {
  return rollout::estimate_violation(*batch_, family_, y.coords);
}

std::vector<double> BatchViolationModel::violations(int, std::span<const Eigen::VectorXd> points) const {
  std::vector<double> j = rollout::estimate_constraint_grid(*batch_, family_, points);
  for (std::size_t i = 0; i < j.size(); ++i) j[i] = family_.violation(j[i], points[i]);
  return j;
}

Eigen::VectorXd BatchViolationModel::violation_gradient(const IndexPoint& y) const {
  return rollout::violation_grad_y(*batch_, family_, y.coords);
}

nn::GaussianPolicy make_policy(const env::Environment& environment, const NetworkShape& shape, Rng& rng) {
  const auto& intervals = environment.action_intervals();
  nn::Mlp net(nn::make_layer_sizes(environment.state_dim(), shape.hidden_layers, shape.hidden_size,
                                   static_cast<int>(intervals.size())));
  net.init_orthogonal(rng, std::sqrt(2.0), 0.01);
  nn::GaussianPolicy policy(std::move(net), intervals, -0.5);
  const InputScaling s = InputScaling::for_box(environment.region());
  policy.set_input_normalization(s.offset, s.scale);
  return policy;
}

RlContext::RlContext(std::unique_ptr<env::Environment> environment, const NetworkShape& shape, const PpoConfig& cfg,
                     std::uint64_t seed)
    : env_(std::move(environment)), cfg_(cfg), seed_(seed) {
  cfg_.validate();
  Rng rng = make_rng(seed, {kInitStream});
  policy_ = make_policy(*env_, shape, rng);
  critics_ = Critics::make(*env_, shape.hidden_layers, shape.hidden_size, cfg_.lr_net, rng);
  policy_opt_ = nn::Adam(policy_.parameter_count(), nn::AdamConfig{cfg_.lr_net});
}

std::shared_ptr<const rollout::EvalBatch> RlContext::collect() {
  return std::make_shared<const rollout::EvalBatch>(
      rollout::collect(policy_, *env_, cfg_.episodes, seed_, next_stream_++, rollout::ActionMode::Sample));
}

void RlContext::remember(const ParamVector& params, std::shared_ptr<const rollout::EvalBatch> batch) {
  remembered_params_ = params;
  remembered_ = std::move(batch);
}

std::shared_ptr<const rollout::EvalBatch> RlContext::take_if_current(const ParamVector& params) {
  std::shared_ptr<const rollout::EvalBatch> out;
  if (remembered_ && remembered_params_.size() == params.size() && remembered_params_ == params) out = remembered_;
  remembered_.reset();
  return out;
}

Rng RlContext::round_rng(std::uint64_t purpose) { return make_rng(seed_, {kAuxStream, aux_counter_++, purpose}); }

exchange::IterateEvaluation RlEvaluator::evaluate(const ParamVector& params, int) {
  ctx_.policy().unflatten(params);
  auto batch = ctx_.collect();
  ctx_.remember(params, batch);
  exchange::IterateEvaluation e;
  e.objective = rollout::estimate_objective(*batch, ctx_.environment().config().gamma_r);
  e.model = std::make_unique<BatchViolationModel>(batch, ctx_.environment().constraint());
  return e;
}

std::string to_string(StopReason reason) {
  return reason == StopReason::ToleranceMet ? "tolerance_met" : "budget_exhausted";
}

double InnerRoundStats::max_residual() const {
  double m = -std::numeric_limits<double>::infinity();
  for (double r : residuals) m = std::max(m, r);
  return m;
}

double InnerRoundStats::multiplier_l1() const {
  double s = 0.0;
  for (double v : multipliers) s += std::abs(v);
  return s;
}

exchange::SubproblemResult PpoLagSolver::solve(const ParamVector& init, const exchange::WorkingSet& ws,
                                               int outer_iteration) {
  const PpoConfig& cfg = ctx_.config();
  const env::Environment& environment = ctx_.environment();
  const env::ConstraintFamily& family = environment.constraint();
  nn::GaussianPolicy& policy = ctx_.policy();
  policy.unflatten(init);

  std::vector<IndexPoint> points;
  for (const auto& e : ws.entries()) points.push_back(e.point);
  std::vector<double> v = ws.multipliers();
  const auto k = static_cast<Eigen::Index>(points.size());

  report_ = SubproblemReport{};
  int satisfied_rounds = 0;
  double value = 0.0;
  int rounds = 0;
  for (int round = 0; round < cfg.inner_iters; ++round) {
    std::shared_ptr<const rollout::EvalBatch> batch = round == 0 ? ctx_.take_if_current(init) : nullptr;
    if (!batch) batch = ctx_.collect();

    InnerRoundStats stats;
    stats.outer_iteration = outer_iteration;
    stats.round = round;
    stats.objective_estimate = rollout::estimate_objective(*batch, environment.config().gamma_r);
    stats.mean_episode_length = static_cast<double>(batch->transitions()) / static_cast<double>(batch->size());
    for (const auto& y : points) stats.residuals.push_back(rollout::estimate_violation(*batch, family, y.coords));
    value = stats.objective_estimate;
    ++rounds;

    if (!points.empty()) {
      const bool ok = std::all_of(stats.residuals.begin(), stats.residuals.end(),
                                  [&](double r) { return r <= cfg.sub_tolerance; });
      satisfied_rounds = ok ? satisfied_rounds + 1 : 0;
      if (satisfied_rounds >= 2) {
        stats.multipliers = v;
        report_.rounds.push_back(stats);
        report_.stop_reason = StopReason::ToleranceMet;
        if (observer_) observer_(stats);
        break;
      }
    }

    const Transitions tr = Transitions::from(*batch);
    Rng critic_rng = ctx_.round_rng(kCriticFit);
    stats.critic_loss = fit_critics(ctx_.critics(), tr, *batch, environment, points, cfg, critic_rng);

    SurrogateInputs in;
    in.states = tr.states;
    in.pre_squash = tr.pre_squash;
    in.behavior_log_probs = tr.behavior_log_probs;
    const Critics& critics = ctx_.critics();
    const Eigen::VectorXd values = critics.reward_values(tr.states);
    in.reward_advantages = episode_advantages(tr, flat_rewards(*batch, tr.size()), values,
                                              reward_bootstrap(critics, tr), environment.config().gamma_r,
                                              cfg.gae_lambda);
    if (cfg.normalize_reward_advantages && tr.size() > 1) {
      const double mean = in.reward_advantages.mean();
      const double sd = std::sqrt((in.reward_advantages.array() - mean).square().mean());
      in.reward_advantages = ((in.reward_advantages.array() - mean) / (sd + 1e-8)).matrix();
    }
    in.penalty_advantages = Eigen::MatrixXd::Zero(tr.size(), k);
    const Eigen::VectorXd no_bootstrap = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(tr.episodes()));
    for (Eigen::Index j = 0; j < k; ++j) {
      if (v[static_cast<std::size_t>(j)] == 0.0) continue;
      const Eigen::VectorXd& y = points[static_cast<std::size_t>(j)].coords;
      in.penalty_advantages.col(j) =
          family.sign() * episode_advantages(tr, flat_costs(tr, family, y), critics.constraint_values(tr.states, y),
                                             no_bootstrap, family.gamma_c(), cfg.gae_lambda);
    }
    in.multipliers = v;

    Rng policy_rng = ctx_.round_rng(kShufflePolicy);
    const PolicyUpdateStats ps = policy_update(policy, ctx_.policy_optimizer(), in, cfg, policy_rng);
    stats.policy_loss = ps.mean_loss;
    stats.clip_fraction = ps.clip_fraction;

    for (std::size_t j = 0; j < v.size(); ++j) v[j] = dual_update(v[j], stats.residuals[j], cfg.lr_mult);
    stats.multipliers = v;
    report_.rounds.push_back(stats);
    if (observer_) observer_(stats);
  }

  exchange::SubproblemResult res;
  res.params = policy.flatten();
  res.multipliers = std::move(v);
  res.value = value;
  res.inner_rounds = rounds;
  res.diagnostics = to_string(report_.stop_reason);
  return res;
}

}  // namespace epo::ppo
