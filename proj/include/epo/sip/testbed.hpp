#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "epo/exchange/exchange.hpp"

namespace epo::sip {

using search::IndexPoint;

/// One family of constraints g(x, y) <= 0 for y in [lo, hi].
struct SipFamily {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  std::function<double(const Eigen::VectorXd&, double)> g;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)> grad_x;
  std::function<double(const Eigen::VectorXd&, double)> dg_dy;
};

/// min f(x) s.t. g_j(x, y) <= 0 for every family j and y in its interval.
struct AnalyticSip {
  std::string name;
  int dim = 0;
  std::function<double(const Eigen::VectorXd&)> f;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad_f;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hess_f;
  std::vector<SipFamily> families;
  bool convex = true;
  Eigen::VectorXd start;
  std::vector<IndexPoint> initial_points;

  double constraint(const IndexPoint& y, const Eigen::VectorXd& x) const;
};

/// (x1-2)^2 + (x2-2)^2 s.t. x1*y + x2*y^2 <= 1 on [0,1]; optimum (0.5, 0.5), value 4.5.
AnalyticSip csip_q();
/// Degree-2 minimax fit of e^y on [0,1]: variables p0 p1 p2 t, minimize t
/// s.t. |p(y) - e^y| <= t, as two families. Starts from the four points 0, 1/3, 2/3, 1
/// in both families, since with no constraints the LP is unbounded.
AnalyticSip cheb2();
AnalyticSip instance_by_name(const std::string& name);
std::vector<std::string> instance_names();

struct KktResiduals {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
  double min_multiplier = 0.0;

  bool within(double tol) const {
    return stationarity <= tol && feasibility <= tol && complementarity <= tol && min_multiplier >= 0.0;
  }
  std::string describe() const;
};

KktResiduals kkt_residuals(const AnalyticSip& sip, std::span<const IndexPoint> points, const Eigen::VectorXd& x,
                           std::span<const double> multipliers);

struct ExactSolution {
  Eigen::VectorXd x;
  std::vector<double> multipliers;
  double objective = 0.0;  // f(x)
  KktResiduals kkt;
  int iterations = 0;
};

/**
 * Solves the finite subproblem over `points` by sequential QP: the objective
 * is replaced by its second-order model and each constraint by its
 * linearization at the current point, and the QP is solved exactly. For
 * quadratic f and affine g one pass is exact. Throws NumericalError if the
 * KKT residuals are not all within `tol` after `max_passes`.
 */
ExactSolution exact_subproblem_solve(const AnalyticSip& sip, std::span<const IndexPoint> points,
                                     const Eigen::VectorXd& x_init, double tol = 1e-10, int max_passes = 20);

/// Uniform grid of n points on each family's interval, family by family.
std::vector<IndexPoint> dense_points(const AnalyticSip& sip, int n);

struct OracleSolution {
  Eigen::VectorXd x;
  double value = 0.0;  // f at the oracle point
  std::vector<IndexPoint> points;
  std::vector<double> multipliers;
};

/// exact_subproblem_solve over the full dense grid; n_dense >= 101.
OracleSolution oracle_solve(const AnalyticSip& sip, int n_dense = 2001);

/// max_j max_y g_j(x, y) over the dense grid.
double dense_max_violation(const AnalyticSip& sip, const Eigen::VectorXd& x, int n_dense = 2001);

/// Closed-form g(x, .) of one point x.
class ExactViolationModel final : public search::ViolationModel {
 public:
  ExactViolationModel(const AnalyticSip& sip, Eigen::VectorXd x);

  int family_count() const override { return static_cast<int>(sip_.families.size()); }
  const env::Box& index_box(int family) const override { return boxes_.at(static_cast<std::size_t>(family)); }
  double violation(const IndexPoint& y) const override;
  Eigen::VectorXd violation_gradient(const IndexPoint& y) const override;

 private:
  const AnalyticSip& sip_;
  Eigen::VectorXd x_;
  std::vector<env::Box> boxes_;
};

search::SearchOutcome exact_violation_search(const AnalyticSip& sip, const Eigen::VectorXd& x, double eta,
                                             const search::GridLadder& ladder = {});

/// Exchange-engine adapters. Scores are -f.
class ExactSubproblemSolver final : public exchange::SubproblemSolver {
 public:
  explicit ExactSubproblemSolver(const AnalyticSip& sip) : sip_(sip) {}
  exchange::SubproblemResult solve(const Eigen::VectorXd& init, const exchange::WorkingSet& ws,
                                   int outer_iteration) override;

 private:
  const AnalyticSip& sip_;
};

class ExactEvaluator final : public exchange::IterateEvaluator {
 public:
  explicit ExactEvaluator(const AnalyticSip& sip) : sip_(sip) {}
  exchange::IterateEvaluation evaluate(const Eigen::VectorXd& x, int outer_iteration) override;

 private:
  const AnalyticSip& sip_;
};

class FixtureError : public std::runtime_error {
 public:
  explicit FixtureError(const std::string& what) : std::runtime_error(what) {}
};

struct OracleFixture {
  std::string instance;
  int n_dense = 0;
  Eigen::VectorXd x;
  double value = 0.0;
};

OracleFixture load_fixture(const std::filesystem::path& path);
void save_fixture(const std::filesystem::path& path, const OracleFixture& fixture);
/// Throws FixtureError when the computed oracle and the fixture disagree beyond tol.
void check_fixture(const OracleFixture& fixture, const std::string& instance, const OracleSolution& oracle,
                   int n_dense, double tol = 1e-8);

struct TestbedConfig {
  double eta = 1e-3;
  double eps_mult = 1e-6;
  int max_outer = 50;
  int n_dense = 2001;
  double value_tol = 1e-4;       // |f_K - f_oracle|
  double relaxation_tol = 1e-6;  // f_K <= f_oracle + tol
  double monotone_tol = 1e-10;
  double near_active_tol = 1e-8;
  search::GridLadder ladder;
  search::RefineOptions refine;
};

struct Assertion {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct TestbedReport {
  std::string instance;
  double eta = 0.0;
  exchange::ExchangeStatus status = exchange::ExchangeStatus::Terminated;
  int iterations = 0;  // index of the final record
  Eigen::VectorXd x;
  double objective = 0.0;  // f at the returned point
  double oracle_value = 0.0;
  double dense_max_violation = 0.0;
  int near_active = 0;
  std::vector<double> subproblem_values;  // score convention
  std::vector<Assertion> assertions;
  exchange::ExchangeTrace trace;
  exchange::WorkingSet working_set;
  double runtime_s = 0.0;

  bool passed() const;
  std::string summary() const;
};

/**
 * Runs the exchange loop with exact components and checks it against the
 * dense-grid oracle: (a) subproblem values monotone, (b) each added point keeps
 * a multiplier above eps_mult, (c) termination within max_outer, (d) dense-grid
 * feasibility within eta, (e) objective within value_tol of the oracle and on
 * its relaxation side. If `fixture` is given, the oracle must match it.
 */
TestbedReport run_testbed(const AnalyticSip& sip, const TestbedConfig& cfg, const OracleFixture* fixture = nullptr);

}  // namespace epo::sip
