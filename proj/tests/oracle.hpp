#pragma once

// Test-only reference implementations. These deliberately take the slow,
// explicit route: form Q_ff + G as a dense N x N matrix and evaluate the
// Gaussian log-density through an eigendecomposition, so they share no code
// path with the matrix-inversion-lemma implementation they check.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "sgp/kernels.hpp"
#include "sgp/model.hpp"
#include "sgp/rng.hpp"

namespace sgp::testing {

struct DenseParts {
  MatrixXd q;        // Q_ff from the same jittered K_uu the library uses
  VectorXd g;        // per-point G
  VectorXd residual; // floored diag[K_ff - Q_ff]
  MatrixXd kuu_inv;  // (K_uu + eps I)^-1
};

inline DenseParts dense_parts(const Dataset& data, const Hyperparameters& hyper,
                              const InducingSet& inducing, Method method,
                              const JitterPolicy& policy = {}) {
  const MatrixXd kuu = kernel_matrix(inducing.Z, inducing.Z, hyper);
  const auto chol = jittered_cholesky(kuu, policy);
  MatrixXd jittered = kuu;
  jittered.diagonal().array() += chol.applied_jitter;

  DenseParts parts;
  parts.kuu_inv = jittered.inverse();
  const MatrixXd kuf = kernel_matrix(inducing.Z, data.X, hyper);
  parts.q = kuf.transpose() * parts.kuu_inv * kuf;

  const double sf2 = hyper.signal_variance();
  parts.residual =
      (VectorXd::Constant(data.size(), sf2) - parts.q.diagonal()).cwiseMax(0.0);
  const double sn2 = hyper.noise_variance();
  if (method == Method::FITC)
    parts.g = parts.residual.array() + sn2;
  else
    parts.g = VectorXd::Constant(data.size(), sn2);
  return parts;
}

/// NLML of N(y; 0, Q_ff + G) + VFE trace term, evaluated via eigenvalues.
inline NlmlBreakdown dense_sparse_nlml(const Dataset& data,
                                       const Hyperparameters& hyper,
                                       const InducingSet& inducing, Method method,
                                       const JitterPolicy& policy = {}) {
  const DenseParts parts = dense_parts(data, hyper, inducing, method, policy);
  MatrixXd c = parts.q;
  c.diagonal() += parts.g;

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(c);
  const VectorXd lambda = eig.eigenvalues();
  const MatrixXd vecs = eig.eigenvectors();
  const double logdet = lambda.array().log().sum();
  const VectorXd yproj = vecs.transpose() * data.y;
  const double quad = (yproj.array().square() / lambda.array()).sum();

  const double n = static_cast<double>(data.size());
  double trace = 0.0;
  if (method == Method::VFE)
    trace = parts.residual.sum() / (2.0 * hyper.noise_variance());
  return NlmlBreakdown::assemble(0.5 * n * std::log(2.0 * std::numbers::pi),
                                 0.5 * quad, 0.5 * logdet, trace);
}

/// Predictive distribution of the explicit Q/G Gaussian model.
inline PredictiveDistribution dense_predict(const Dataset& data,
                                            const Hyperparameters& hyper,
                                            const InducingSet& inducing,
                                            Method method, const MatrixXd& Xstar,
                                            const JitterPolicy& policy = {}) {
  const DenseParts parts = dense_parts(data, hyper, inducing, method, policy);
  MatrixXd c = parts.q;
  c.diagonal() += parts.g;
  const MatrixXd cinv = c.inverse();

  const MatrixXd kuf = kernel_matrix(inducing.Z, data.X, hyper);
  const MatrixXd kus = kernel_matrix(inducing.Z, Xstar, hyper);
  const MatrixXd qsf = kus.transpose() * parts.kuu_inv * kuf;

  PredictiveDistribution pred;
  pred.mean = qsf * (cinv * data.y);
  pred.latent_variance =
      (kernel_diag(Xstar, hyper) - (qsf * cinv * qsf.transpose()).diagonal())
          .cwiseMax(0.0);
  pred.observation_variance =
      pred.latent_variance.array() + hyper.noise_variance();
  return pred;
}

/// Central finite differences of the training objective over the packed
/// parameter vector [log s_f^2, log ell, log sigma_n^2, vec(Z)].
template <class F>
VectorXd finite_difference_gradient(F&& objective, const VectorXd& x,
                                    double rel_step = 1e-5) {
  VectorXd grad(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x(i)));
    VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    grad(i) = (objective(xp) - objective(xm)) / (2.0 * h);
  }
  return grad;
}

/// Random small test instance, fully determined by the seed.
struct RandomInstance {
  Dataset data;
  Hyperparameters hyper;
  InducingSet inducing;
};

/// Instance with inputs on a jittered lattice (guaranteed minimum spacing)
/// and targets drawn from the model's own prior. Keeps K_ff numerically
/// non-degenerate, which the Z = X identities need to hold at tight
/// tolerances.
struct LatticeInstance {
  Dataset data;
  Hyperparameters hyper;
};

inline LatticeInstance lattice_instance(std::uint64_t seed, Eigen::Index max_n = 200) {
  Rng rng(seed);
  const int d = 1 + static_cast<int>(rng.uniform_index(3));
  const Eigen::Index n =
      10 + static_cast<Eigen::Index>(rng.uniform_index(max_n - 9));
  const auto q = static_cast<Eigen::Index>(
      std::ceil(std::pow(static_cast<double>(n), 1.0 / d)));
  MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index rem = i;
    for (int j = 0; j < d; ++j) {
      const Eigen::Index cell = rem % q;
      rem /= q;
      X(i, j) = static_cast<double>(cell) + 0.35 * rng.uniform(-1.0, 1.0);
    }
  }
  const double ell = rng.uniform(0.45, 0.8);
  const double sf2 = std::exp(rng.uniform(-0.7, 0.7));
  const double sn2 = sf2 * rng.uniform(0.05, 0.3);
  const auto hyper = Hyperparameters::isotropic(sf2, ell, sn2, d);

  const MatrixXd k = kernel_matrix(X, X, hyper);
  const auto chol = jittered_cholesky(k, {1e-12, 10.0, 1e-2});
  VectorXd white(n);
  for (Eigen::Index i = 0; i < n; ++i) white(i) = rng.normal();
  VectorXd y = chol.L.triangularView<Eigen::Lower>() * white;
  const double noise_std = std::sqrt(sn2);
  for (Eigen::Index i = 0; i < n; ++i) y(i) += noise_std * rng.normal();
  return {Dataset(std::move(X), std::move(y)), hyper};
}

inline RandomInstance random_instance(std::uint64_t seed, Eigen::Index max_n = 8,
                                      Eigen::Index max_m = 4, int max_d = 3) {
  Rng rng(seed);
  const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.uniform_index(max_n - 1));
  const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.uniform_index(max_m));
  const int d = 1 + static_cast<int>(rng.uniform_index(max_d));

  MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = rng.uniform(-2.0, 2.0);
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = rng.normal();

  MatrixXd Z(m, d);
  for (Eigen::Index i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) Z(i, j) = rng.uniform(-2.0, 2.0);

  VectorXd ell(d);
  for (int j = 0; j < d; ++j) ell(j) = std::exp(rng.uniform(-0.7, 0.7));
  const double sf2 = std::exp(rng.uniform(-1.0, 1.0));
  const double sn2 = std::exp(rng.uniform(-3.0, -0.5));

  return {Dataset(std::move(X), std::move(y)),
          Hyperparameters::from_values(sf2, ell, sn2),
          InducingSet(std::move(Z))};
}

}  // namespace sgp::testing
