#include "epo/exchange/exchange.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "epo/errors.hpp"

namespace epo::exchange {

bool WorkingSet::contains(const IndexPoint& y) const {
  for (const auto& e : entries_) {
    if (search::same_point(e.point, y, kDuplicateTolerance)) return true;
  }
  return false;
}

void WorkingSet::expand(IndexPoint y, double multiplier, int iteration) {
  if (contains(y)) {
    throw DuplicatePointError("working set already contains " + search::to_string(y) +
                              "; check the searcher exclusion and the deletion threshold");
  }
  if (!(multiplier >= 0.0)) throw std::invalid_argument("initial multiplier must be nonnegative");
  entries_.push_back(WorkingEntry{std::move(y), multiplier, iteration});
}

std::vector<WorkingEntry> WorkingSet::delete_inactive(double eps_mult) {
  std::vector<WorkingEntry> kept;
  std::vector<WorkingEntry> removed;
  for (auto& e : entries_) {
    (e.multiplier > eps_mult ? kept : removed).push_back(std::move(e));
  }
  entries_ = std::move(kept);
  return removed;
}

std::vector<double> WorkingSet::multipliers() const {
  std::vector<double> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.multiplier);
  return out;
}

void WorkingSet::set_multipliers(std::span<const double> values) {
  if (values.size() != entries_.size()) {
    throw std::invalid_argument("set_multipliers: expected " + std::to_string(entries_.size()) + " values, got " +
                                std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] >= 0.0) || !std::isfinite(values[i])) {
      throw NumericalError("multiplier " + std::to_string(i) + " is negative or non-finite");
    }
    entries_[i].multiplier = values[i];
  }
}

double WorkingSet::multiplier_l1() const {
  double s = 0.0;
  for (const auto& e : entries_) s += std::abs(e.multiplier);
  return s;
}

std::optional<IndexPoint> detect_excluded(const search::SearchOutcome& outcome, const WorkingSet& ws) {
  if (!outcome.found || ws.contains(outcome.point)) return std::nullopt;
  return outcome.point;
}

void ExchangeConfig::validate() const {
  if (!(eta > 0.0)) throw std::invalid_argument("exchange: eta must be positive");
  if (!(eps_mult >= 0.0)) throw std::invalid_argument("exchange: eps_mult must be nonnegative");
  if (max_outer < 0) throw std::invalid_argument("exchange: max_outer must be nonnegative");
  if (!(initial_multiplier >= 0.0)) throw std::invalid_argument("exchange: initial multiplier must be nonnegative");
}

search::SearchOutcome ViolationSearcher::find(const search::ViolationModel& model, const WorkingSet& ws) const {
  return search::search(model, ladder_, eta_, refine_, [&ws](const IndexPoint& y) { return ws.contains(y); });
}

std::vector<double> ExchangeTrace::subproblem_values() const {
  std::vector<double> out{initial_subproblem_value};
  for (const auto& r : records) {
    if (r.added) out.push_back(r.subproblem_value);
  }
  return out;
}

std::string to_string(ExchangeStatus status) {
  switch (status) {
    case ExchangeStatus::Terminated: return "terminated";
    case ExchangeStatus::IterationCapReached: return "iteration_cap";
    case ExchangeStatus::Stopped: return "stopped";
  }
  return "unknown";
}

namespace {

void check_solution(const SubproblemResult& res, const WorkingSet& ws, const ParamVector& init) {
  if (res.params.size() != init.size()) throw NumericalError("subproblem solver changed the parameter count");
  if (!res.params.allFinite()) throw NumericalError("subproblem solver returned non-finite parameters");
  if (res.multipliers.size() != ws.size()) {
    throw NumericalError("subproblem solver returned " + std::to_string(res.multipliers.size()) +
                         " multipliers for " + std::to_string(ws.size()) + " working-set entries");
  }
}

}  // namespace

ExchangeResult run(const ParamVector& init, SubproblemSolver& solver, const ViolationSearcher& searcher,
                   IterateEvaluator& evaluator, const ExchangeConfig& config, const RecordObserver& observer) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [t0] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  ExchangeResult result;
  ExchangeTrace& trace = result.trace;
  WorkingSet& ws = result.working_set;
  for (const auto& y : config.initial_working_set) ws.expand(y, config.initial_multiplier, 0);

  ParamVector theta = init;
  std::optional<IterateEvaluation> pending = evaluator.evaluate(theta, 0);
  trace.initial_objective = pending->objective;
  trace.initial_subproblem_value = std::numeric_limits<double>::quiet_NaN();

  try {
    if (config.solve_initial) {
      SubproblemResult res = solver.solve(theta, ws, 0);
      check_solution(res, ws, theta);
      theta = std::move(res.params);
      ws.set_multipliers(res.multipliers);
      trace.initial_deleted = ws.delete_inactive(config.eps_mult);
      trace.initial_subproblem_value = res.value;
      trace.total_inner_rounds += res.inner_rounds;
      pending.reset();
    }

    for (int k = 0;; ++k) {
      IterateEvaluation eval = pending ? std::move(*pending) : evaluator.evaluate(theta, k);
      pending.reset();

      IterationRecord rec;
      rec.iteration = k;
      rec.objective_estimate = eval.objective;
      rec.subproblem_value = std::numeric_limits<double>::quiet_NaN();
      const search::SearchOutcome outcome = searcher.find(*eval.model, ws);
      rec.max_violation_seen = outcome.max_violation_seen;
      rec.argmax = outcome.argmax;
      rec.search_level = outcome.level;
      rec.search_refined = outcome.refined;

      const std::optional<IndexPoint> fresh = detect_excluded(outcome, ws);
      const bool stop_terminated = !fresh;
      const bool stop_cap = fresh && k >= config.max_outer;
      if (stop_terminated || stop_cap) {
        rec.working_set = ws.entries();
        rec.wall_clock_s = elapsed();
        trace.records.push_back(rec);
        result.status = stop_terminated ? ExchangeStatus::Terminated : ExchangeStatus::IterationCapReached;
        if (observer) observer(trace.records.back(), ws);
        break;
      }

      ws.expand(*fresh, config.initial_multiplier, k + 1);
      rec.added = ws.entries().back();
      const std::size_t added_index = ws.size() - 1;

      SubproblemResult res = solver.solve(theta, ws, k + 1);
      check_solution(res, ws, theta);
      theta = std::move(res.params);
      ws.set_multipliers(res.multipliers);
      rec.added_multiplier_after_solve = ws.entries()[added_index].multiplier;
      rec.deleted = ws.delete_inactive(config.eps_mult);
      rec.subproblem_value = res.value;
      rec.inner_rounds = res.inner_rounds;
      rec.diagnostics = std::move(res.diagnostics);
      rec.working_set = ws.entries();
      rec.wall_clock_s = elapsed();
      trace.total_inner_rounds += res.inner_rounds;
      trace.records.push_back(std::move(rec));
      if (observer && !observer(trace.records.back(), ws)) {
        result.status = ExchangeStatus::Stopped;
        break;
      }
    }
  } catch (const NumericalError& e) {
    throw ExchangeError(std::string("exchange aborted: ") + e.what(), trace);
  }

  result.params = std::move(theta);
  return result;
}

}  // namespace epo::exchange
