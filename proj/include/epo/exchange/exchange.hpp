#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "epo/search/violation_search.hpp"

namespace epo::exchange {

using search::IndexPoint;
using ParamVector = Eigen::VectorXd;

struct WorkingEntry {
  IndexPoint point;
  double multiplier = 0.0;
  int added_at = 0;
};

class DuplicatePointError : public std::invalid_argument {
 public:
  explicit DuplicatePointError(const std::string& what) : std::invalid_argument(what) {}
};

/// The finite constraint set E_k with its Lagrange multipliers.
class WorkingSet {
 public:
  static constexpr double kDuplicateTolerance = 1e-12;

  WorkingSet() = default;

  const std::vector<WorkingEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool contains(const IndexPoint& y) const;

  /// Appends (y, multiplier). A point already present is a configuration bug
  /// upstream (searcher or deletion threshold) and throws DuplicatePointError.
  void expand(IndexPoint y, double multiplier, int iteration);
  /// Keeps entries with multiplier > eps_mult (order preserved); returns the removed ones.
  std::vector<WorkingEntry> delete_inactive(double eps_mult);

  std::vector<double> multipliers() const;
  void set_multipliers(std::span<const double> values);
  double multiplier_l1() const;

 private:
  std::vector<WorkingEntry> entries_;
};

/// A Found outcome whose point is not yet in the working set, otherwise nothing.
std::optional<IndexPoint> detect_excluded(const search::SearchOutcome& outcome, const WorkingSet& ws);

struct ExchangeConfig {
  double eta = 0.01;
  double eps_mult = 1e-3;
  int max_outer = 150;
  double initial_multiplier = 0.05;
  std::vector<IndexPoint> initial_working_set;
  search::GridLadder ladder;
  search::RefineOptions refine;
  bool solve_initial = true;  // solve P(E_0) before the first search

  void validate() const;
};

/// Objective estimate (maximization convention) and violation surface of one iterate.
struct IterateEvaluation {
  double objective = 0.0;
  std::unique_ptr<search::ViolationModel> model;
};

class IterateEvaluator {
 public:
  virtual ~IterateEvaluator() = default;
  virtual IterateEvaluation evaluate(const ParamVector& params, int outer_iteration) = 0;
};

struct SubproblemResult {
  ParamVector params;
  std::vector<double> multipliers;  // one per working-set entry, same order
  double value = 0.0;               // subproblem optimal value (maximization convention)
  int inner_rounds = 0;
  std::string diagnostics;
};

/// Solves P(E) for the given working set, warm-started from `init` and the
/// multipliers stored in `ws`.
class SubproblemSolver {
 public:
  virtual ~SubproblemSolver() = default;
  virtual SubproblemResult solve(const ParamVector& init, const WorkingSet& ws, int outer_iteration) = 0;
};

/// Grid-ladder search that skips points already in the working set.
class ViolationSearcher {
 public:
  ViolationSearcher(search::GridLadder ladder, double eta, search::RefineOptions refine = {})
      : ladder_(std::move(ladder)), eta_(eta), refine_(refine) {}

  search::SearchOutcome find(const search::ViolationModel& model, const WorkingSet& ws) const;
  double eta() const { return eta_; }

 private:
  search::GridLadder ladder_;
  double eta_;
  search::RefineOptions refine_;
};

struct IterationRecord {
  int iteration = 0;
  double objective_estimate = 0.0;
  double subproblem_value = 0.0;  // value of the solve started in this iteration (NaN if none)
  double max_violation_seen = 0.0;
  IndexPoint argmax;
  int search_level = -1;
  bool search_refined = false;
  std::optional<WorkingEntry> added;
  std::optional<double> added_multiplier_after_solve;
  std::vector<WorkingEntry> deleted;
  std::vector<WorkingEntry> working_set;  // after deletion
  int inner_rounds = 0;
  std::string diagnostics;
  double wall_clock_s = 0.0;
};

struct ExchangeTrace {
  double initial_objective = 0.0;         // estimate at the starting parameters
  double initial_subproblem_value = 0.0;  // value of P(E_0) (NaN when not solved)
  std::vector<WorkingEntry> initial_deleted;
  std::vector<IterationRecord> records;
  int total_inner_rounds = 0;

  /// J*_0 followed by every recorded subproblem value.
  std::vector<double> subproblem_values() const;
};

enum class ExchangeStatus { Terminated, IterationCapReached, Stopped };
std::string to_string(ExchangeStatus status);

struct ExchangeResult {
  ParamVector params;
  WorkingSet working_set;
  ExchangeTrace trace;
  ExchangeStatus status = ExchangeStatus::Terminated;
};

/// Solver failure inside run(); carries the trace up to the failure.
class ExchangeError : public std::runtime_error {
 public:
  ExchangeError(const std::string& what, ExchangeTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const ExchangeTrace& trace() const { return trace_; }

 private:
  ExchangeTrace trace_;
};

/// Called after each record is appended; returning false stops the run (status Stopped).
using RecordObserver = std::function<bool(const IterationRecord&, const WorkingSet&)>;

/**
 * The exchange loop: evaluate the iterate, search for an eta-violated index
 * outside the working set, stop if there is none, otherwise add it, solve the
 * enlarged subproblem and drop entries whose multiplier fell to eps_mult or
 * below.
 */
ExchangeResult run(const ParamVector& init, SubproblemSolver& solver, const ViolationSearcher& searcher,
                   IterateEvaluator& evaluator, const ExchangeConfig& config, const RecordObserver& observer = {});

}  // namespace epo::exchange
