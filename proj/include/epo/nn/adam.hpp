#pragma once

#include <cstdint>

#include "epo/nn/mlp.hpp"

namespace epo::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ParamVector first_moment;
  ParamVector second_moment;
  std::int64_t step = 0;
};

/// Adam with bias correction. Minimizes: params move against the gradient.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t parameter_count, AdamConfig config);

  /// Throws NumericalError when grad contains a non-finite entry; params are left untouched then.
  void step(ParamVector& params, const ParamVector& grad);

  const AdamState& state() const { return state_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  AdamConfig config_;
  AdamState state_;
};

}  // namespace epo::nn
