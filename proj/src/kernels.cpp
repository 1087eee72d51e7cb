#include "sgp/kernels.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <sstream>

namespace sgp {

double kernel_eval(const VectorXd& x, const VectorXd& x2,
                   const Hyperparameters& hyper) {
  if (x.size() != x2.size() || x.size() != hyper.log_lengthscales().size())
    throw InvalidArgumentError("kernel_eval: dimension mismatch");
  const VectorXd ell = hyper.lengthscales();
  const double d2 = ((x - x2).array() / ell.array()).square().sum();
  return hyper.signal_variance() * std::exp(-0.5 * d2);
}

MatrixXd scaled_sqdist(const MatrixXd& A, const MatrixXd& B,
                       const VectorXd& lengthscales) {
  if (A.cols() != B.cols() || A.cols() != lengthscales.size())
    throw InvalidArgumentError("scaled_sqdist: dimension mismatch");
  const Eigen::ArrayXd inv_ell = lengthscales.array().inverse();
  const MatrixXd As = A.array().rowwise() * inv_ell.transpose();
  const MatrixXd Bs = B.array().rowwise() * inv_ell.transpose();
  const VectorXd a2 = As.rowwise().squaredNorm();
  const VectorXd b2 = Bs.rowwise().squaredNorm();
  MatrixXd d2 = (-2.0 * As * Bs.transpose());
  d2.colwise() += a2;
  d2.rowwise() += b2.transpose();
  return d2.cwiseMax(0.0);  // round-off can push tiny distances negative
}

MatrixXd kernel_matrix(const MatrixXd& A, const MatrixXd& B,
                       const Hyperparameters& hyper) {
  const MatrixXd d2 = scaled_sqdist(A, B, hyper.lengthscales());
  return hyper.signal_variance() * (-0.5 * d2.array()).exp();
}

VectorXd kernel_diag(const MatrixXd& A, const Hyperparameters& hyper) {
  if (A.cols() != hyper.log_lengthscales().size())
    throw InvalidArgumentError("kernel_diag: dimension mismatch");
  return VectorXd::Constant(A.rows(), hyper.signal_variance());
}

JitteredCholesky jittered_cholesky(const MatrixXd& A,
                                   const JitterPolicy& policy) {
  policy.validate();
  if (A.rows() != A.cols())
    throw InvalidArgumentError("jittered_cholesky: matrix not square");
  if (!A.allFinite())
    throw NotPositiveDefiniteError("jittered_cholesky: non-finite entries", {});
  const double scale = A.cwiseAbs().maxCoeff();
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(scale, 1.0))
    throw InvalidArgumentError("jittered_cholesky: matrix not symmetric");

  // Jitter magnitudes are relative to the mean diagonal; for kernel matrices
  // that is s_f^2, which keeps the ladder invariant under output rescaling.
  double base = A.diagonal().mean();
  if (!(base > 0.0)) base = 1.0;

  std::vector<double> attempted;
  double rel = policy.initial_jitter;
  while (true) {
    const double jitter = rel * base;
    attempted.push_back(jitter);
    MatrixXd candidate = A;
    candidate.diagonal().array() += jitter;
    Eigen::LLT<MatrixXd> llt(candidate);
    if (llt.info() == Eigen::Success)
      return {MatrixXd(llt.matrixL()), jitter};
    if (rel >= policy.max_jitter) break;
    rel = std::min(rel * policy.escalation_factor, policy.max_jitter);
  }

  std::ostringstream msg;
  msg << "jittered_cholesky: not positive definite after " << attempted.size()
      << " jitter rungs up to " << attempted.back();
  throw NotPositiveDefiniteError(msg.str(), std::move(attempted));
}

}  // namespace sgp
