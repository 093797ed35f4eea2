#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "robustreg/errors.hpp"

namespace robustreg {

/// Largest eigenvalue of X^T X / n by power iteration on u -> X^T(Xu)/n.
/// Deterministic start vector; stops on relative change below tol.
inline double lambda_max_gram(const Eigen::MatrixXd& X, int max_iters = 200,
                              double tol = 1e-10) {
  const auto n = X.rows();
  const auto d = X.cols();
  if (n < 1 || d < 1) throw std::invalid_argument("lambda_max_gram: empty matrix");
  Eigen::VectorXd v(d);
  for (Eigen::Index j = 0; j < d; ++j) v(j) = 1.0 + 1e-3 * static_cast<double>(j);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd w = X.transpose() * (X * v) / static_cast<double>(n);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    const double next = v.dot(w);
    w /= norm;
    if (it > 0 && std::abs(next - lambda) <= tol * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
    v = std::move(w);
  }
  return lambda;
}

/// Smallest eigenvalue of a symmetric matrix.
inline double lambda_min_sym(const Eigen::MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("lambda_min_sym: eigendecomposition failed");
  return es.eigenvalues().minCoeff();
}

/// Symmetric inverse square root via eigendecomposition. Eigenvalues below
/// the floor mean the input is not usably positive definite.
inline Eigen::MatrixXd inverse_sqrt_psd(const Eigen::MatrixXd& A,
                                        double eigenvalue_floor = 1e-12) {
  if (A.rows() != A.cols()) throw std::invalid_argument("inverse_sqrt_psd: not square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("inverse_sqrt_psd: eigendecomposition failed");
  if (es.eigenvalues().minCoeff() < eigenvalue_floor)
    throw std::invalid_argument("inverse_sqrt_psd: matrix is not positive definite");
  return es.eigenvectors() *
         es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

struct Orthogonalized {
  Eigen::MatrixXd Xo;  // n x d with Xo^T Xo = n Id
  Eigen::MatrixXd T;   // d x d, Xo = X * T
};

/// Rescale the column span so the Gram matrix is n times the identity.
/// QR-based; the diagonal of R is made positive so an input that already
/// satisfies X^T X = n Id maps to itself.
inline Orthogonalized orthogonalize_columns(const Eigen::MatrixXd& X) {
  const auto n = X.rows();
  const auto d = X.cols();
  if (n < d) throw SingularMatrixError("orthogonalize_columns: fewer rows than columns");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
  Eigen::MatrixXd R = qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
  const double scale = R.diagonal().cwiseAbs().maxCoeff();
  if (scale == 0.0 || (R.diagonal().cwiseAbs().minCoeff() < 1e-12 * scale))
    throw SingularMatrixError("orthogonalize_columns: rank-deficient design");
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (R(j, j) < 0.0) {
      R.row(j) = -R.row(j);
      Q.col(j) = -Q.col(j);
    }
  }
  const double root_n = std::sqrt(static_cast<double>(n));
  Orthogonalized out;
  out.Xo = root_n * Q;
  out.T = root_n *
          R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(d, d));
  return out;
}

/// Least squares by normal equations with a symmetric positive-definite solve.
inline Eigen::VectorXd ols_solve(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw std::invalid_argument("ols_solve: shape mismatch");
  Eigen::MatrixXd gram = X.transpose() * X;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success)
    throw SingularMatrixError("ols_solve: rank-deficient design");
  return llt.solve(X.transpose() * y);
}

}  // namespace robustreg
