#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "epo/env/environment.hpp"

namespace epo::search {

using env::Box;

/// A constraint index: which constraint family, and the point y in its index box.
struct IndexPoint {
  int family = 0;
  Eigen::VectorXd coords;
};

/// Same family and every coordinate within `tol`.
bool same_point(const IndexPoint& a, const IndexPoint& b, double tol = 1e-12);
std::string to_string(const IndexPoint& y);

/**
 * Violation surface g(theta_k, .) of one frozen iterate: g <= 0 means the
 * constraint at y holds. Implementations must be deterministic, so that
 * re-evaluating a point reproduces the same value exactly.
 */
class ViolationModel {
 public:
  virtual ~ViolationModel() = default;

  virtual int family_count() const { return 1; }
  virtual const Box& index_box(int family) const = 0;
  virtual double violation(const IndexPoint& y) const = 0;
  /// g at many points of one family; must agree exactly with violation().
  virtual std::vector<double> violations(int family, std::span<const Eigen::VectorXd> points) const;
  /// d g / d y (a subgradient at non-smooth points).
  virtual Eigen::VectorXd violation_gradient(const IndexPoint& y) const = 0;
};

/// Grid fineness levels, strictly increasing, each >= 2.
class GridLadder {
 public:
  GridLadder() : GridLadder(std::vector<int>{8, 16, 24, 32}) {}
  explicit GridLadder(std::vector<int> levels);

  const std::vector<int>& levels() const { return levels_; }

 private:
  std::vector<int> levels_;
};

/// Uniform grid with N points per axis, lexicographic order (first axis slowest).
/// The last coordinate of every axis is exactly the box's upper end.
std::vector<Eigen::VectorXd> make_grid(const Box& box, int n);

struct RefineOptions {
  int max_iters = 50;             // gradient evaluations
  double stop_radius_rel = 1e-6;  // relative to the box diameter
};

/**
 * Projected gradient ascent with an adaptive step radius: steps of length r
 * along the normalized gradient, projected back into the box. A step is kept
 * only if it strictly increases the value (then r doubles); otherwise r
 * halves. Stops when r falls below stop_radius_rel * diameter or after
 * max_iters gradient evaluations.
 */
Eigen::VectorXd local_refine(const Eigen::VectorXd& start,
                             const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradient,
                             const std::function<double(const Eigen::VectorXd&)>& value, const Box& box,
                             double initial_radius, const RefineOptions& options = {});

struct SearchOutcome {
  bool found = false;
  IndexPoint point;       // Found: the violated index
  double violation = 0.0; // Found: g at point (> eta)
  int level = -1;         // ladder level that produced the result
  bool refined = false;
  double max_violation_seen = -std::numeric_limits<double>::infinity();
  IndexPoint argmax;      // best point seen anywhere in the search
};

/// Points the caller will not accept (already in the working set).
using ExclusionFn = std::function<bool(const IndexPoint&)>;

/**
 * Multi-level grid search for an index with violation above eta.
 *
 * For each ladder level: take the grid argmax (ties go to the lowest family,
 * then the lexicographically smallest point). Above eta it is returned; within
 * [-eta, eta] it seeds local_refine() and the refined point is returned if it
 * exceeds eta. Excluded candidates move the search on to the next level.
 */
SearchOutcome search(const ViolationModel& model, const GridLadder& ladder, double eta,
                     const RefineOptions& refine = {}, const ExclusionFn& excluded = {});

}  // namespace epo::search
