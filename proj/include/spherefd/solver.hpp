#pragma once

#include <cmath>
#include <string>

#include <Eigen/Core>
#include <Eigen/QR>

#include "spherefd/assembly.hpp"
#include "spherefd/errors.hpp"

namespace spherefd {

enum class SolveMethod { dense_qr, normal_cg };

inline const char* to_string(SolveMethod m) {
  return m == SolveMethod::dense_qr ? "dense-qr" : "normal-cg";
}

struct SolveParams {
  SolveMethod method = SolveMethod::normal_cg;
  double rel_tol = 1e-10;
  int max_iter = 0;  // 0: defaults to 10 n
};

struct SolveReport {
  Eigen::VectorXd solution;
  double residual_norm = 0.0;           // |A u - F|_2
  Eigen::VectorXd per_block_residuals;  // |W_l u|_{J_l} - F_l|_2 per patch
  int iterations = 0;
  SolveMethod method = SolveMethod::normal_cg;
  bool converged = false;
};

/// Residual norms of the numerical differentiation blocks; their squares sum
/// to the squared global residual.
inline Eigen::VectorXd block_residuals(const GlobalLeastSquares& sys,
                                       const Eigen::VectorXd& u) {
  if (u.size() != sys.cols()) {
    throw InvalidArgument("block_residuals: solution length mismatch");
  }
  const Eigen::VectorXd r = sys.apply(u) - sys.rhs();
  Eigen::VectorXd out(sys.block_count());
  for (int b = 0; b < sys.block_count(); ++b) {
    out(b) = r.segment(sys.block_row_start(b), sys.block_rows(b)).norm();
  }
  return out;
}

namespace detail {

inline SolveReport solve_dense_qr(const GlobalLeastSquares& sys) {
  SolveReport report;
  report.method = SolveMethod::dense_qr;
  const Eigen::MatrixXd A = sys.dense();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < sys.cols()) {
    throw SolverError("dense-qr: system is numerically rank deficient (rank " +
                      std::to_string(qr.rank()) + " of " + std::to_string(sys.cols()) + ")");
  }
  report.solution = qr.solve(sys.rhs());
  report.iterations = 0;
  report.converged = true;
  return report;
}

/// Jacobi-preconditioned conjugate gradients on the normal equations
/// A^T A u = A^T F.  Sequential matvecs, fixed reduction order; whenever the
/// recurrence residual passes the tolerance the true normal residual is
/// recomputed and iteration restarts if it disagrees.
inline SolveReport solve_normal_cg(const GlobalLeastSquares& sys, double rel_tol,
                                   int max_iter) {
  SolveReport report;
  report.method = SolveMethod::normal_cg;

  const Eigen::VectorXd atf = sys.apply_transpose(sys.rhs());
  const double target = rel_tol * atf.norm();
  Eigen::VectorXd diag = sys.column_squared_norms();
  for (int j = 0; j < diag.size(); ++j) {
    if (diag(j) <= 0.0) {
      throw SolverError("normal-cg: column " + std::to_string(j) +
                        " of the system is structurally empty");
    }
  }

  Eigen::VectorXd u = Eigen::VectorXd::Zero(sys.cols());
  Eigen::VectorXd r = atf;  // A^T (F - A u) at u = 0
  if (r.norm() <= target) {
    report.solution = u;
    report.converged = true;
    report.residual_norm = (sys.apply(u) - sys.rhs()).norm();
    report.per_block_residuals = block_residuals(sys, u);
    return report;
  }

  Eigen::VectorXd z = r.cwiseQuotient(diag);
  Eigen::VectorXd p = z;
  double rho = r.dot(z);
  int iter = 0;
  bool converged = false;

  while (iter < max_iter) {
    const Eigen::VectorXd q = sys.apply_transpose(sys.apply(p));
    const double pq = p.dot(q);
    if (!(pq > 0.0)) break;  // loss of positive definiteness in finite precision
    const double alpha = rho / pq;
    u += alpha * p;
    r -= alpha * q;
    ++iter;
    if (r.norm() <= target) {
      // Recurrence can drift; accept only the true normal residual.
      r = atf - sys.apply_transpose(sys.apply(u));
      if (r.norm() <= target) {
        converged = true;
        break;
      }
      z = r.cwiseQuotient(diag);
      p = z;
      rho = r.dot(z);
      continue;
    }
    z = r.cwiseQuotient(diag);
    const double rho_next = r.dot(z);
    p = z + (rho_next / rho) * p;
    rho = rho_next;
  }

  report.solution = u;
  report.iterations = iter;
  report.converged = converged;
  return report;
}

}  // namespace detail

/// Least-squares solution of the assembled system.  dense-qr forms the matrix
/// densely (reference oracle, n <= 5000); normal-cg is the default iterative
/// path.  Non-convergence is reported, not thrown; structural rank deficiency
/// (an empty column) is an error.
inline SolveReport solve_least_squares(const GlobalLeastSquares& sys,
                                       const SolveParams& params) {
  if (!(params.rel_tol > 0.0 && params.rel_tol < 1.0)) {
    throw InvalidArgument("solver rel_tol must lie in (0, 1)");
  }
  const Eigen::VectorXd colnorm = sys.column_squared_norms();
  for (int j = 0; j < colnorm.size(); ++j) {
    if (colnorm(j) <= 0.0) {
      throw SolverError("column " + std::to_string(j) +
                        " has no nonzero entry: node belongs to no patch row");
    }
  }

  SolveReport report;
  if (params.method == SolveMethod::dense_qr) {
    if (sys.cols() > 5000) {
      throw InvalidArgument("dense-qr is limited to n <= 5000 columns");
    }
    report = detail::solve_dense_qr(sys);
  } else {
    const int max_iter = params.max_iter > 0 ? params.max_iter : 10 * sys.cols();
    report = detail::solve_normal_cg(sys, params.rel_tol, max_iter);
  }
  report.residual_norm = (sys.apply(report.solution) - sys.rhs()).norm();
  report.per_block_residuals = block_residuals(sys, report.solution);
  return report;
}

}  // namespace spherefd
