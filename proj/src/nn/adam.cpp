#include "epo/nn/adam.hpp"

#include <cmath>
#include <string>

#include "epo/errors.hpp"

namespace epo::nn {

Adam::Adam(std::size_t parameter_count, AdamConfig config) : config_(config) {
  const auto n = static_cast<Eigen::Index>(parameter_count);
  state_.first_moment = ParamVector::Zero(n);
  state_.second_moment = ParamVector::Zero(n);
}

void Adam::step(ParamVector& params, const ParamVector& grad) {
  if (params.size() != state_.first_moment.size() || grad.size() != params.size()) {
    throw std::invalid_argument("Adam::step: shape mismatch");
  }
  if (!grad.allFinite()) {
    Eigen::Index bad = 0;
    for (; bad < grad.size() && std::isfinite(grad(bad)); ++bad) {
    }
    throw NumericalError("Adam::step: non-finite gradient entry at index " + std::to_string(bad) +
                         " (step " + std::to_string(state_.step + 1) + ")");
  }
  ++state_.step;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  state_.first_moment = b1 * state_.first_moment + (1.0 - b1) * grad;
  state_.second_moment = b2 * state_.second_moment + (1.0 - b2) * grad.cwiseProduct(grad);
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  params.array() -= config_.learning_rate * (state_.first_moment.array() / c1) /
                    ((state_.second_moment.array() / c2).sqrt() + config_.epsilon);
}

}  // namespace epo::nn
