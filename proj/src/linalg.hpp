#pragma once

// Small dense linear algebra shared by the solvers, on top of Eigen.

#include <Eigen/Dense>
#include <vector>

namespace bnpc::linalg {

/// Solves a x = b in place; false if a is numerically singular.
inline bool solve_dense(const std::vector<std::vector<double>>& a, std::vector<double>& b) {
  const auto n = static_cast<Eigen::Index>(b.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = a[r][c];
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (!lu.isInvertible()) return false;
  const Eigen::VectorXd x = lu.solve(Eigen::Map<const Eigen::VectorXd>(b.data(), n));
  for (Eigen::Index r = 0; r < n; ++r) b[r] = x(r);
  return true;
}

/// Minimum-norm Newton step -H^+ g for a symmetric positive semidefinite H. Eigen
/// directions below `rel` times the largest curvature are treated as flat and left alone.
inline Eigen::VectorXd pseudo_newton_step(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, double rel = 1e-12) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
  const Eigen::VectorXd& vals = eig.eigenvalues();
  const double top = vals.cwiseAbs().maxCoeff();
  Eigen::VectorXd coef = eig.eigenvectors().transpose() * g;
  for (Eigen::Index k = 0; k < vals.size(); ++k) coef(k) = vals(k) > rel * top ? -coef(k) / vals(k) : 0.0;
  return eig.eigenvectors() * coef;
}

}  // namespace bnpc::linalg
