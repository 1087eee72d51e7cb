#pragma once

#include <Eigen/Core>

#include "sgp/types.hpp"

namespace sgp {

/// Squared-exponential covariance between two points:
///   k(x, x') = s_f^2 exp(-1/2 sum_d (x_d - x'_d)^2 / ell_d^2)
/// Isotropic and ARD are the same code path (isotropic = tied lengthscales).
double kernel_eval(const VectorXd& x, const VectorXd& x2,
                   const Hyperparameters& hyper);

/// Cross-covariance matrix between row-point sets A (n x d) and B (m x d);
/// entry (i, j) = k(A_i, B_j).
MatrixXd kernel_matrix(const MatrixXd& A, const MatrixXd& B,
                       const Hyperparameters& hyper);

/// Diagonal of kernel_matrix(A, A, hyper) in O(n): every entry is s_f^2.
VectorXd kernel_diag(const MatrixXd& A, const Hyperparameters& hyper);

/// Squared distance matrix of lengthscale-scaled points, entry (i,j) =
/// sum_d (A_id - B_jd)^2 / ell_d^2, computed by the expanded form with a
/// floor at zero. Shared by kernel assembly and the analytic gradients.
MatrixXd scaled_sqdist(const MatrixXd& A, const MatrixXd& B,
                       const VectorXd& lengthscales);

struct JitteredCholesky {
  MatrixXd L;             // lower-triangular factor of A + applied_jitter * I
  double applied_jitter;  // absolute diagonal addition that succeeded
};

/// Cholesky factorization of a symmetric matrix with an escalating diagonal
/// jitter ladder. The attempted absolute jitters are
/// {eps, eps*f, eps*f^2, ..., max} scaled by the mean diagonal of A; the
/// first rung that factorizes wins. Throws NotPositiveDefiniteError with the
/// attempted ladder when even the top rung fails.
JitteredCholesky jittered_cholesky(const MatrixXd& A,
                                   const JitterPolicy& policy = {});

}  // namespace sgp
