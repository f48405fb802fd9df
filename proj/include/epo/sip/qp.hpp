#pragma once

#include <vector>

#include <Eigen/Dense>

namespace epo::sip {

/// min 1/2 x'Hx + c'x  s.t.  A x <= b, with H positive semidefinite (H = 0 gives an LP).
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd c;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

struct QpOptions {
  int max_iterations = 20000;
  double feasibility_tol = 1e-12;
};

struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd multipliers;  // one per row of A, zero off the active set
  std::vector<int> active;
  int iterations = 0;
};

/**
 * Primal active-set method with nullspace steps.
 *
 * A feasible start is found first by the same method applied to
 * min s s.t. Ax - s <= b, s >= 0. In directions where the reduced Hessian is
 * singular the method moves along the projected negative gradient until a
 * constraint blocks; ties in both the blocking and the release choice go to
 * the smallest row index, which rules out cycling on degenerate LPs.
 *
 * Throws NumericalError if the problem is infeasible, unbounded, or the
 * iteration cap is hit.
 */
QpResult solve_qp(const QpProblem& problem, const Eigen::VectorXd& x0, const QpOptions& options = {});

}  // namespace epo::sip
