#include "epo/sip/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "epo/errors.hpp"

namespace epo::sip {

namespace {

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& A, const std::vector<int>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), A.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = A.row(idx[i]);
  return out;
}

// Active-set iterations from a feasible x.
QpResult active_set(const QpProblem& p, Eigen::VectorXd x, std::vector<int> working, const QpOptions& opt) {
  const Eigen::Index n = x.size();
  const Eigen::Index m = p.A.rows();
  std::vector<char> in_working(static_cast<std::size_t>(m), 0);
  for (int i : working) in_working[static_cast<std::size_t>(i)] = 1;
  const double hscale = std::max(1.0, p.H.cwiseAbs().maxCoeff());

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    const Eigen::VectorXd g = p.H * x + p.c;
    const double gscale = std::max(1.0, g.cwiseAbs().maxCoeff());
    const Eigen::MatrixXd Aw = rows_of(p.A, working);

    Eigen::MatrixXd Z;
    if (working.empty()) {
      Z = Eigen::MatrixXd::Identity(n, n);
    } else {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Aw.transpose());
      const Eigen::Index r = qr.rank();
      const Eigen::MatrixXd Q = qr.householderQ();
      Z = Q.rightCols(n - r);
    }

    Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
    bool ray = false;
    if (Z.cols() > 0) {
      const Eigen::MatrixXd Hr = Z.transpose() * p.H * Z;
      const Eigen::VectorXd gr = Z.transpose() * g;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Hr);
      const Eigen::VectorXd& lam = eig.eigenvalues();
      const Eigen::MatrixXd& V = eig.eigenvectors();
      const double lam_tol = 1e-12 * hscale;
      Eigen::VectorXd newton = Eigen::VectorXd::Zero(Hr.rows());
      Eigen::VectorXd flat = Eigen::VectorXd::Zero(Hr.rows());
      for (Eigen::Index i = 0; i < lam.size(); ++i) {
        const double proj = V.col(i).dot(gr);
        if (lam(i) > lam_tol) {
          newton -= (proj / lam(i)) * V.col(i);
        } else {
          flat -= proj * V.col(i);
        }
      }
      if (flat.norm() > 1e-13 * gscale) {
        step = Z * flat;
        ray = true;
      } else {
        step = Z * newton;
      }
    }

    if (step.norm() <= 1e-14 * (1.0 + x.norm())) {
      Eigen::VectorXd lambda = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(working.size()));
      if (!working.empty()) lambda = Aw.transpose().colPivHouseholderQr().solve(-g);
      int release = -1;
      const double neg_tol = -1e-12 * gscale;
      for (std::size_t i = 0; i < working.size(); ++i) {
        if (lambda(static_cast<Eigen::Index>(i)) < neg_tol && (release < 0 || working[i] < working[static_cast<std::size_t>(release)])) {
          release = static_cast<int>(i);
        }
      }
      if (release < 0) {
        QpResult res;
        res.x = x;
        res.multipliers = Eigen::VectorXd::Zero(m);
        for (std::size_t i = 0; i < working.size(); ++i) {
          res.multipliers(working[i]) = std::max(0.0, lambda(static_cast<Eigen::Index>(i)));
        }
        res.active = working;
        res.iterations = iter;
        return res;
      }
      in_working[static_cast<std::size_t>(working[static_cast<std::size_t>(release)])] = 0;
      working.erase(working.begin() + release);
      continue;
    }

    double alpha = ray ? std::numeric_limits<double>::infinity() : 1.0;
    int blocking = -1;
    const Eigen::VectorXd Ap = p.A * step;
    const double pnorm = step.norm();
    for (Eigen::Index i = 0; i < m; ++i) {
      if (in_working[static_cast<std::size_t>(i)]) continue;
      if (Ap(i) <= 1e-14 * p.A.row(i).norm() * pnorm) continue;
      const double slack = std::max(0.0, p.b(i) - p.A.row(i).dot(x));
      const double a = slack / Ap(i);
      if (a < alpha) {
        alpha = a;
        blocking = static_cast<int>(i);
      }
    }
    if (!std::isfinite(alpha)) throw NumericalError("QP is unbounded below");
    x += alpha * step;
    if (blocking >= 0) {
      working.push_back(blocking);
      in_working[static_cast<std::size_t>(blocking)] = 1;
    }
  }
  throw NumericalError("active-set QP hit the iteration cap (" + std::to_string(opt.max_iterations) + ")");
}

}  // namespace

QpResult solve_qp(const QpProblem& problem, const Eigen::VectorXd& x0, const QpOptions& options) {
  const Eigen::Index n = x0.size();
  const Eigen::Index m = problem.A.rows();
  if (problem.H.rows() != n || problem.H.cols() != n || problem.c.size() != n || problem.A.cols() != n ||
      problem.b.size() != m) {
    throw std::invalid_argument("solve_qp: inconsistent problem dimensions");
  }

  Eigen::VectorXd x = x0;
  const double worst = m > 0 ? (problem.A * x0 - problem.b).maxCoeff() : 0.0;
  if (worst > 0.0) {
    QpProblem phase1;
    phase1.H = Eigen::MatrixXd::Zero(n + 1, n + 1);
    phase1.c = Eigen::VectorXd::Zero(n + 1);
    phase1.c(n) = 1.0;
    phase1.A = Eigen::MatrixXd::Zero(m + 1, n + 1);
    phase1.A.topLeftCorner(m, n) = problem.A;
    phase1.A.col(n).head(m).setConstant(-1.0);
    phase1.A(m, n) = -1.0;
    phase1.b = Eigen::VectorXd::Zero(m + 1);
    phase1.b.head(m) = problem.b;
    Eigen::VectorXd z(n + 1);
    z << x0, worst;
    const QpResult r = active_set(phase1, z, {}, options);
    if (r.x(n) > options.feasibility_tol) {
      throw NumericalError("QP is infeasible (phase-one residual " + std::to_string(r.x(n)) + ")");
    }
    x = r.x.head(n);
  }
  QpResult res = active_set(problem, x, {}, options);
  return res;
}

}  // namespace epo::sip
