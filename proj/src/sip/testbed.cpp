#include "epo/sip/testbed.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "epo/errors.hpp"
#include "epo/sip/qp.hpp"

namespace epo::sip {

std::string KktResiduals::describe() const {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3) << "stationarity=" << stationarity << " feasibility=" << feasibility
     << " complementarity=" << complementarity << " min_multiplier=" << min_multiplier;
  return os.str();
}

KktResiduals kkt_residuals(const AnalyticSip& sip, std::span<const IndexPoint> points, const Eigen::VectorXd& x,
                           std::span<const double> multipliers) {
  if (points.size() != multipliers.size()) throw std::invalid_argument("kkt_residuals: one multiplier per point");
  KktResiduals r;
  Eigen::VectorXd grad = sip.grad_f(x);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const SipFamily& fam = sip.families.at(static_cast<std::size_t>(points[i].family));
    const double y = points[i].coords(0);
    const double g = fam.g(x, y);
    grad += multipliers[i] * fam.grad_x(x, y);
    r.feasibility = std::max(r.feasibility, g);
    r.complementarity = std::max(r.complementarity, std::abs(multipliers[i] * g));
    r.min_multiplier = std::min(r.min_multiplier, multipliers[i]);
  }
  r.stationarity = grad.norm();
  return r;
}

ExactSolution exact_subproblem_solve(const AnalyticSip& sip, std::span<const IndexPoint> points,
                                     const Eigen::VectorXd& x_init, double tol, int max_passes) {
  if (x_init.size() != sip.dim) throw std::invalid_argument("exact_subproblem_solve: x_init has the wrong size");
  const auto m = static_cast<Eigen::Index>(points.size());
  Eigen::VectorXd x = x_init;
  ExactSolution sol;
  for (int pass = 0; pass < max_passes; ++pass) {
    QpProblem qp;
    qp.H = sip.hess_f(x);
    qp.c = sip.grad_f(x) - qp.H * x;
    qp.A.resize(m, sip.dim);
    qp.b.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const IndexPoint& y = points[static_cast<std::size_t>(i)];
      const SipFamily& fam = sip.families.at(static_cast<std::size_t>(y.family));
      const Eigen::VectorXd a = fam.grad_x(x, y.coords(0));
      qp.A.row(i) = a.transpose();
      qp.b(i) = a.dot(x) - fam.g(x, y.coords(0));
    }
    const QpResult r = solve_qp(qp, x);
    sol.iterations += r.iterations;
    sol.x = r.x;
    sol.multipliers.assign(r.multipliers.data(), r.multipliers.data() + r.multipliers.size());
    sol.kkt = kkt_residuals(sip, points, sol.x, sol.multipliers);
    sol.objective = sip.f(sol.x);
    if (sol.kkt.within(tol)) return sol;
    x = sol.x;
  }
  throw NumericalError(sip.name + ": subproblem with " + std::to_string(points.size()) +
                       " constraints did not reach KKT tolerance: " + sol.kkt.describe());
}

std::vector<IndexPoint> dense_points(const AnalyticSip& sip, int n) {
  std::vector<IndexPoint> out;
  for (std::size_t f = 0; f < sip.families.size(); ++f) {
    const env::Box box{Eigen::VectorXd::Constant(1, sip.families[f].lo), Eigen::VectorXd::Constant(1, sip.families[f].hi)};
    for (auto& p : search::make_grid(box, n)) out.push_back(IndexPoint{static_cast<int>(f), std::move(p)});
  }
  return out;
}

OracleSolution oracle_solve(const AnalyticSip& sip, int n_dense) {
  if (n_dense < 101) throw std::invalid_argument("oracle_solve: n_dense must be at least 101");
  OracleSolution o;
  o.points = dense_points(sip, n_dense);
  const ExactSolution s = exact_subproblem_solve(sip, o.points, sip.start);
  o.x = s.x;
  o.value = s.objective;
  o.multipliers = s.multipliers;
  return o;
}

double dense_max_violation(const AnalyticSip& sip, const Eigen::VectorXd& x, int n_dense) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& y : dense_points(sip, n_dense)) worst = std::max(worst, sip.constraint(y, x));
  return worst;
}

ExactViolationModel::ExactViolationModel(const AnalyticSip& sip, Eigen::VectorXd x) : sip_(sip), x_(std::move(x)) {
  for (const auto& fam : sip_.families) {
    boxes_.push_back(env::Box{Eigen::VectorXd::Constant(1, fam.lo), Eigen::VectorXd::Constant(1, fam.hi)});
  }
}

double ExactViolationModel::violation(const IndexPoint& y) const { return sip_.constraint(y, x_); }

Eigen::VectorXd ExactViolationModel::violation_gradient(const IndexPoint& y) const {
  return Eigen::VectorXd::Constant(1, sip_.families.at(static_cast<std::size_t>(y.family)).dg_dy(x_, y.coords(0)));
}

search::SearchOutcome exact_violation_search(const AnalyticSip& sip, const Eigen::VectorXd& x, double eta,
                                             const search::GridLadder& ladder) {
  const ExactViolationModel model(sip, x);
  return search::search(model, ladder, eta);
}

exchange::SubproblemResult ExactSubproblemSolver::solve(const Eigen::VectorXd& init, const exchange::WorkingSet& ws,
                                                        int) {
  std::vector<IndexPoint> points;
  points.reserve(ws.size());
  for (const auto& e : ws.entries()) points.push_back(e.point);
  ExactSolution s = exact_subproblem_solve(sip_, points, init);
  exchange::SubproblemResult r;
  r.params = std::move(s.x);
  r.multipliers = std::move(s.multipliers);
  r.value = -s.objective;
  r.inner_rounds = s.iterations;
  r.diagnostics = s.kkt.describe();
  return r;
}

exchange::IterateEvaluation ExactEvaluator::evaluate(const Eigen::VectorXd& x, int) {
  exchange::IterateEvaluation e;
  e.objective = -sip_.f(x);
  e.model = std::make_unique<ExactViolationModel>(sip_, x);
  return e;
}

OracleFixture load_fixture(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw FixtureError("cannot read fixture " + path.string() + ": " + e.what());
  }
  OracleFixture f;
  try {
    f.instance = tree.get<std::string>("instance");
    f.n_dense = tree.get<int>("n_dense");
    f.value = tree.get<double>("value");
    std::istringstream xs(tree.get<std::string>("x"));
    std::vector<double> vals;
    std::string tok;
    while (xs >> tok) vals.push_back(std::stod(tok));
    if (vals.empty()) throw FixtureError("empty x");
    f.x = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  } catch (const FixtureError& e) {
    throw FixtureError("malformed fixture " + path.string() + ": " + e.what());
  } catch (const std::exception& e) {
    throw FixtureError("malformed fixture " + path.string() + ": " + e.what());
  }
  return f;
}

void save_fixture(const std::filesystem::path& path, const OracleFixture& fixture) {
  std::ofstream out(path);
  if (!out) throw FixtureError("cannot write fixture " + path.string());
  out << std::setprecision(17);
  out << "instance = " << fixture.instance << "\n";
  out << "n_dense = " << fixture.n_dense << "\n";
  out << "x =";
  for (Eigen::Index i = 0; i < fixture.x.size(); ++i) out << " " << fixture.x(i);
  out << "\nvalue = " << fixture.value << "\n";
}

void check_fixture(const OracleFixture& fixture, const std::string& instance, const OracleSolution& oracle,
                   int n_dense, double tol) {
  std::ostringstream why;
  why << std::setprecision(17);
  if (fixture.instance != instance) {
    why << "instance '" << fixture.instance << "' expected '" << instance << "'";
  } else if (fixture.n_dense != n_dense) {
    why << "n_dense " << fixture.n_dense << " expected " << n_dense;
  } else if (fixture.x.size() != oracle.x.size()) {
    why << "x has " << fixture.x.size() << " entries, expected " << oracle.x.size();
  } else if ((fixture.x - oracle.x).cwiseAbs().maxCoeff() > tol) {
    why << "x differs by " << (fixture.x - oracle.x).cwiseAbs().maxCoeff();
  } else if (std::abs(fixture.value - oracle.value) > tol) {
    why << "value " << fixture.value << " vs computed " << oracle.value;
  } else {
    return;
  }
  throw FixtureError("fixture mismatch for " + instance + ": " + why.str());
}

bool TestbedReport::passed() const {
  return std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.passed; });
}

std::string TestbedReport::summary() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << instance << " eta=" << eta << " status=" << exchange::to_string(status) << " iterations=" << iterations
     << " f=" << objective << " oracle=" << oracle_value << " dense_max_violation=" << dense_max_violation
     << " |E|=" << working_set.size() << " near_active=" << near_active << " runtime=" << runtime_s << "s";
  for (const auto& a : assertions) os << "\n  [" << (a.passed ? "ok" : "FAILED") << "] " << a.name << ": " << a.detail;
  return os.str();
}

TestbedReport run_testbed(const AnalyticSip& sip, const TestbedConfig& cfg, const OracleFixture* fixture) {
  const auto t0 = std::chrono::steady_clock::now();
  const OracleSolution oracle = oracle_solve(sip, cfg.n_dense);
  if (fixture) check_fixture(*fixture, sip.name, oracle, cfg.n_dense);

  exchange::ExchangeConfig ec;
  ec.eta = cfg.eta;
  ec.eps_mult = cfg.eps_mult;
  ec.max_outer = cfg.max_outer;
  ec.initial_multiplier = 0.0;
  ec.initial_working_set = sip.initial_points;
  ec.ladder = cfg.ladder;
  ec.refine = cfg.refine;

  ExactSubproblemSolver solver(sip);
  ExactEvaluator evaluator(sip);
  const exchange::ViolationSearcher searcher(cfg.ladder, cfg.eta, cfg.refine);
  exchange::ExchangeResult result = exchange::run(sip.start, solver, searcher, evaluator, ec);

  TestbedReport rep;
  rep.instance = sip.name;
  rep.eta = cfg.eta;
  rep.status = result.status;
  rep.iterations = result.trace.records.empty() ? 0 : result.trace.records.back().iteration;
  rep.x = result.params;
  rep.objective = sip.f(rep.x);
  rep.oracle_value = oracle.value;
  rep.dense_max_violation = dense_max_violation(sip, rep.x, cfg.n_dense);
  rep.subproblem_values = result.trace.subproblem_values();
  for (const auto& e : result.working_set.entries()) {
    if (std::abs(sip.constraint(e.point, rep.x)) <= cfg.near_active_tol) ++rep.near_active;
  }

  std::ostringstream d;
  d << std::setprecision(12);

  {
    Assertion a{"monotone_values", true, ""};
    const auto& v = rep.subproblem_values;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < v.size(); ++i) {
      worst = std::max(worst, v[i] - v[i - 1]);
      if (v[i] > v[i - 1] + cfg.monotone_tol) a.passed = false;
    }
    d.str("");
    d << v.size() << " values, largest increase " << (v.size() > 1 ? worst : 0.0);
    a.detail = d.str();
    rep.assertions.push_back(a);
  }
  {
    Assertion a{"added_point_retained", true, ""};
    int added = 0;
    double smallest = std::numeric_limits<double>::infinity();
    for (const auto& r : result.trace.records) {
      if (!r.added) continue;
      ++added;
      const double v = r.added_multiplier_after_solve.value_or(0.0);
      smallest = std::min(smallest, v);
      if (!(v > cfg.eps_mult)) a.passed = false;
    }
    d.str("");
    d << added << " expansions, smallest new multiplier " << (added ? smallest : 0.0);
    a.detail = d.str();
    rep.assertions.push_back(a);
  }
  {
    Assertion a{"terminated", result.status == exchange::ExchangeStatus::Terminated && rep.iterations <= cfg.max_outer,
                ""};
    d.str("");
    d << exchange::to_string(result.status) << " after " << rep.iterations << " of " << cfg.max_outer;
    a.detail = d.str();
    rep.assertions.push_back(a);
  }
  {
    Assertion a{"dense_feasible", rep.dense_max_violation <= cfg.eta, ""};
    d.str("");
    d << "max violation " << rep.dense_max_violation << " vs eta " << cfg.eta;
    a.detail = d.str();
    rep.assertions.push_back(a);
  }
  {
    Assertion a{"oracle_value", std::abs(rep.objective - oracle.value) <= cfg.value_tol, ""};
    d.str("");
    d << "|f - f_oracle| = " << std::abs(rep.objective - oracle.value) << " vs " << cfg.value_tol;
    a.detail = d.str();
    rep.assertions.push_back(a);
  }
  {
    Assertion a{"relaxation_side", -rep.objective >= -oracle.value - cfg.relaxation_tol, ""};
    d.str("");
    d << "score " << -rep.objective << " vs oracle score " << -oracle.value;
    a.detail = d.str();
    rep.assertions.push_back(a);
  }

  rep.trace = std::move(result.trace);
  rep.working_set = std::move(result.working_set);
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace epo::sip
