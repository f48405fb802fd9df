#include "epo/env/environment.hpp"

#include <stdexcept>
#include <string>

namespace epo::env {

bool Box::contains(const Eigen::VectorXd& x, double tol) const {
  if (x.size() != lo.size()) return false;
  return ((x.array() >= lo.array() - tol) && (x.array() <= hi.array() + tol)).all();
}

Eigen::VectorXd Box::clip(const Eigen::VectorXd& x) const { return x.cwiseMax(lo).cwiseMin(hi); }

void EnvConfig::validate() const {
  if (!(step_length > 0.0)) throw std::invalid_argument("step_length must be positive");
  if (max_steps <= 0) throw std::invalid_argument("max_steps must be positive");
  if (reach_radius < 0.5 * step_length) {
    throw std::invalid_argument("reach_radius must be at least step_length / 2");
  }
  if (!(gamma_r > 0.0 && gamma_r <= 1.0)) throw std::invalid_argument("gamma_r must lie in (0, 1]");
}

void check_action(const Action& a, const std::vector<nn::ActionInterval>& intervals) {
  if (a.size() != static_cast<Eigen::Index>(intervals.size())) {
    throw std::invalid_argument("action dimension mismatch");
  }
  for (Eigen::Index d = 0; d < a.size(); ++d) {
    const auto& iv = intervals[static_cast<std::size_t>(d)];
    if (!(a(d) >= iv.lo && a(d) <= iv.hi)) {
      throw std::invalid_argument("action component " + std::to_string(d) + " = " + std::to_string(a(d)) +
                                  " outside [" + std::to_string(iv.lo) + ", " + std::to_string(iv.hi) + "]");
    }
  }
}

}  // namespace epo::env
