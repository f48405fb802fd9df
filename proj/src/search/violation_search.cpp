#include "epo/search/violation_search.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace epo::search {

bool same_point(const IndexPoint& a, const IndexPoint& b, double tol) {
  if (a.family != b.family || a.coords.size() != b.coords.size()) return false;
  return ((a.coords - b.coords).array().abs() <= tol).all();
}

std::string to_string(const IndexPoint& y) {
  std::ostringstream os;
  os.precision(17);
  os << "f" << y.family << "(";
  for (Eigen::Index i = 0; i < y.coords.size(); ++i) os << (i ? ", " : "") << y.coords(i);
  os << ")";
  return os.str();
}

std::vector<double> ViolationModel::violations(int family, std::span<const Eigen::VectorXd> points) const {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(violation(IndexPoint{family, p}));
  return out;
}

GridLadder::GridLadder(std::vector<int> levels) : levels_(std::move(levels)) {
  if (levels_.empty()) throw std::invalid_argument("grid ladder must have at least one level");
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (levels_[i] < 2) throw std::invalid_argument("grid levels must be >= 2");
    if (i > 0 && levels_[i] <= levels_[i - 1]) throw std::invalid_argument("grid levels must be strictly increasing");
  }
}

std::vector<Eigen::VectorXd> make_grid(const Box& box, int n) {
  if (n < 2) throw std::invalid_argument("make_grid: N must be at least 2");
  const int m = box.dim();
  std::vector<Eigen::VectorXd> axes(static_cast<std::size_t>(m), Eigen::VectorXd(n));
  for (int i = 0; i < m; ++i) {
    const double a = box.lo(i);
    const double b = box.hi(i);
    for (int j = 0; j < n; ++j) axes[static_cast<std::size_t>(i)](j) = (j == n - 1) ? b : a + j * (b - a) / (n - 1);
  }
  std::size_t total = 1;
  for (int i = 0; i < m; ++i) total *= static_cast<std::size_t>(n);
  std::vector<Eigen::VectorXd> points;
  points.reserve(total);
  std::vector<int> idx(static_cast<std::size_t>(m), 0);
  for (std::size_t k = 0; k < total; ++k) {
    Eigen::VectorXd p(m);
    for (int i = 0; i < m; ++i) p(i) = axes[static_cast<std::size_t>(i)](idx[static_cast<std::size_t>(i)]);
    points.push_back(std::move(p));
    for (int i = m - 1; i >= 0; --i) {
      if (++idx[static_cast<std::size_t>(i)] < n) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
  }
  return points;
}

Eigen::VectorXd local_refine(const Eigen::VectorXd& start,
                             const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradient,
                             const std::function<double(const Eigen::VectorXd&)>& value, const Box& box,
                             double initial_radius, const RefineOptions& options) {
  Eigen::VectorXd y = start;
  double g = value(y);
  double radius = initial_radius;
  const double stop = options.stop_radius_rel * box.diameter();
  for (int evals = 0; evals < options.max_iters && radius >= stop;) {
    Eigen::VectorXd d = gradient(y);
    ++evals;
    // Components pushing out through an active bound cannot move y.
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if ((y(i) <= box.lo(i) && d(i) < 0.0) || (y(i) >= box.hi(i) && d(i) > 0.0)) d(i) = 0.0;
    }
    const double norm = d.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) break;
    const Eigen::VectorXd dir = d / norm;
    bool accepted = false;
    while (radius >= stop) {
      const Eigen::VectorXd candidate = box.clip(y + radius * dir);
      const double gc = value(candidate);
      if (gc > g) {
        y = candidate;
        g = gc;
        radius *= 2.0;
        accepted = true;
        break;
      }
      radius *= 0.5;
    }
    if (!accepted) break;
  }
  return y;
}

SearchOutcome search(const ViolationModel& model, const GridLadder& ladder, double eta, const RefineOptions& refine,
                     const ExclusionFn& excluded) {
  if (!(eta > 0.0)) throw std::invalid_argument("search: eta must be positive");
  SearchOutcome out;
  auto note = [&out](const IndexPoint& y, double v) {
    if (v > out.max_violation_seen) {
      out.max_violation_seen = v;
      out.argmax = y;
    }
  };
  auto is_excluded = [&excluded](const IndexPoint& y) { return excluded && excluded(y); };

  for (std::size_t r = 0; r < ladder.levels().size(); ++r) {
    const int n = ladder.levels()[r];
    IndexPoint best;
    double best_value = -std::numeric_limits<double>::infinity();
    bool have_best = false;
    for (int f = 0; f < model.family_count(); ++f) {
      const std::vector<Eigen::VectorXd> grid = make_grid(model.index_box(f), n);
      const std::vector<double> values = model.violations(f, grid);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!have_best || values[i] > best_value) {
          best = IndexPoint{f, grid[i]};
          best_value = values[i];
          have_best = true;
        }
      }
    }
    note(best, best_value);

    if (best_value > eta) {
      if (!is_excluded(best)) {
        out.found = true;
        out.point = best;
        out.violation = best_value;
        out.level = static_cast<int>(r);
        return out;
      }
    } else if (best_value >= -eta) {
      const Box& box = model.index_box(best.family);
      double cell = 0.0;
      for (int i = 0; i < box.dim(); ++i) cell = std::max(cell, (box.hi(i) - box.lo(i)) / (n - 1));
      const int family = best.family;
      const Eigen::VectorXd y_hat = local_refine(
          best.coords, [&](const Eigen::VectorXd& y) { return model.violation_gradient(IndexPoint{family, y}); },
          [&](const Eigen::VectorXd& y) { return model.violation(IndexPoint{family, y}); }, box, cell, refine);
      const IndexPoint refined{family, y_hat};
      const double g_hat = model.violation(refined);
      note(refined, g_hat);
      if (g_hat > eta && !is_excluded(refined)) {
        out.found = true;
        out.point = refined;
        out.violation = g_hat;
        out.level = static_cast<int>(r);
        out.refined = true;
        return out;
      }
    }
  }
  out.level = static_cast<int>(ladder.levels().size()) - 1;
  return out;
}

}  // namespace epo::search
