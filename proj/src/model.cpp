#include "sgp/model.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <numbers>

namespace sgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

double half_logdet_from_chol(const MatrixXd& L) {
  return L.diagonal().array().log().sum();
}

/// Floors tiny negative residuals caused by round-off; anything clearly
/// negative is a bug in the low-rank algebra, not noise.
VectorXd floor_residual(const VectorXd& raw, double signal_variance) {
  if ((raw.array() < -1e-8 * signal_variance).any())
    throw InternalConsistencyError(
        "diag[K_ff - Q_ff] is negative beyond round-off tolerance");
  return raw.cwiseMax(0.0);
}

MatrixXd lower_solve(const MatrixXd& L, const MatrixXd& rhs) {
  return L.triangularView<Eigen::Lower>().solve(rhs);
}

MatrixXd upper_solve(const MatrixXd& L, const MatrixXd& rhs) {
  return L.transpose().triangularView<Eigen::Upper>().solve(rhs);
}

}  // namespace

SparseModel::SparseModel(Dataset dataset, Hyperparameters hyper,
                         InducingSet inducing, Method method,
                         JitterPolicy jitter)
    : dataset_(std::move(dataset)),
      hyper_(std::move(hyper)),
      inducing_(std::move(inducing)),
      method_(method),
      jitter_(jitter) {
  if (method_ == Method::FULL)
    throw InvalidArgumentError("sparse model: FULL takes no inducing set");
  if (hyper_.input_dim() != dataset_.dim())
    throw InvalidArgumentError("sparse model: lengthscale count != data dimension");
  if (inducing_.dim() != dataset_.dim())
    throw InvalidArgumentError("sparse model: inducing dimension != data dimension");
}

SparseModel::SparseModel(Dataset dataset, Hyperparameters hyper,
                         JitterPolicy jitter)
    : dataset_(std::move(dataset)),
      hyper_(std::move(hyper)),
      method_(Method::FULL),
      jitter_(jitter) {
  if (hyper_.input_dim() != dataset_.dim())
    throw InvalidArgumentError("full model: lengthscale count != data dimension");
}

void SparseModel::set_inducing(const InducingSet& z) {
  if (method_ == Method::FULL)
    throw InvalidArgumentError("full model has no inducing set");
  if (z.dim() != dataset_.dim())
    throw InvalidArgumentError("inducing dimension != data dimension");
  inducing_ = z;
  cache_.reset();
}

SparseModel SparseModel::factorized() const {
  SparseModel copy = *this;
  if (!copy.cache_ && method_ != Method::FULL)
    copy.cache_ = std::make_shared<const Factorization>(factorize(*this));
  return copy;
}

Factorization factorize(const SparseModel& model) {
  if (!model.is_sparse())
    throw InvalidArgumentError("factorize: full model has no sparse factorization");
  const Dataset& data = model.dataset();
  const Hyperparameters& hyper = model.hyper();
  const MatrixXd& Z = model.inducing().Z;

  Factorization fac;
  const MatrixXd kuu = kernel_matrix(Z, Z, hyper);
  auto chol = jittered_cholesky(kuu, model.jitter_policy());
  fac.luu = std::move(chol.L);
  fac.applied_jitter = chol.applied_jitter;

  const MatrixXd kuf = kernel_matrix(Z, data.X, hyper);
  fac.v = lower_solve(fac.luu, kuf);

  const double sf2 = hyper.signal_variance();
  const VectorXd qdiag = fac.v.colwise().squaredNorm();
  fac.residual_raw = VectorXd::Constant(data.size(), sf2) - qdiag;
  fac.residual = floor_residual(fac.residual_raw, sf2);

  const double sn2 = hyper.noise_variance();
  if (model.method() == Method::FITC)
    fac.gdiag = fac.residual.array() + sn2;
  else
    fac.gdiag = VectorXd::Constant(data.size(), sn2);

  const Eigen::ArrayXd ginv = fac.gdiag.array().inverse();
  const MatrixXd vg = fac.v.array().rowwise() * ginv.transpose();
  MatrixXd b = vg * fac.v.transpose();
  b.diagonal().array() += 1.0;
  Eigen::LLT<MatrixXd> llt(b);
  // Eigen's LLT can report success on NaN input, so check finiteness too
  if (llt.info() != Eigen::Success || !b.allFinite())
    throw NotPositiveDefiniteError("factorize: inner M x M factorization failed", {});
  fac.lb = llt.matrixL();

  fac.c = lower_solve(fac.lb, fac.v * (data.y.array() * ginv).matrix());
  return fac;
}

NlmlBreakdown full_nlml(const Dataset& dataset, const Hyperparameters& hyper) {
  const Eigen::Index n = dataset.size();
  MatrixXd c = kernel_matrix(dataset.X, dataset.X, hyper);
  c.diagonal().array() += hyper.noise_variance();
  Eigen::LLT<MatrixXd> llt(c);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefiniteError("full_nlml: K_ff + sigma_n^2 I not positive definite", {});
  const MatrixXd L = llt.matrixL();
  const VectorXd alpha = llt.solve(dataset.y);
  return NlmlBreakdown::assemble(0.5 * n * kLog2Pi,
                                 0.5 * dataset.y.dot(alpha),
                                 half_logdet_from_chol(L), 0.0);
}

NlmlBreakdown sparse_nlml(const SparseModel& model) {
  if (!model.is_sparse())
    throw InvalidArgumentError("sparse_nlml: model is FULL; use full_nlml");
  Factorization local;
  const Factorization* fac = model.cache().get();
  if (!fac) {
    local = factorize(model);
    fac = &local;
  }

  const VectorXd& y = model.dataset().y;
  const Eigen::Index n = y.size();
  const Eigen::ArrayXd ginv = fac->gdiag.array().inverse();

  const double logdet =
      fac->gdiag.array().log().sum() + 2.0 * half_logdet_from_chol(fac->lb);
  const double quad = (y.array().square() * ginv).sum() - fac->c.squaredNorm();

  double trace = 0.0;
  if (model.method() == Method::VFE)
    trace = fac->residual.sum() / (2.0 * model.hyper().noise_variance());

  return NlmlBreakdown::assemble(0.5 * n * kLog2Pi, 0.5 * quad, 0.5 * logdet,
                                 trace);
}

NlmlBreakdown nlml(const SparseModel& model) {
  return model.is_sparse() ? sparse_nlml(model)
                           : full_nlml(model.dataset(), model.hyper());
}

namespace {

/// Gradient of the full-GP objective. Forms N x N matrices; fine at the
/// documented scale (N up to a few thousand).
NlmlGradient full_gradient(const Dataset& dataset, const Hyperparameters& hyper) {
  const Eigen::Index n = dataset.size();
  const int d = dataset.dim();
  const double sn2 = hyper.noise_variance();
  const VectorXd ell = hyper.lengthscales();

  const MatrixXd kff = kernel_matrix(dataset.X, dataset.X, hyper);
  MatrixXd c = kff;
  c.diagonal().array() += sn2;
  Eigen::LLT<MatrixXd> llt(c);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefiniteError("full_nlml: K_ff + sigma_n^2 I not positive definite", {});
  const MatrixXd L = llt.matrixL();
  const VectorXd alpha = llt.solve(dataset.y);

  NlmlGradient out;
  out.breakdown = NlmlBreakdown::assemble(0.5 * n * kLog2Pi,
                                          0.5 * dataset.y.dot(alpha),
                                          half_logdet_from_chol(L), 0.0);

  MatrixXd p = llt.solve(MatrixXd::Identity(n, n));
  p.noalias() -= alpha * alpha.transpose();

  out.grad_log_hyper = VectorXd::Zero(2 + d);
  out.grad_log_hyper(0) = 0.5 * p.cwiseProduct(kff).sum();
  const MatrixXd h = p.cwiseProduct(kff);
  for (int k = 0; k < d; ++k) {
    const VectorXd xd = dataset.X.col(k);
    const VectorXd rowsum = h.rowwise().sum();
    const double s = xd.array().square().matrix().dot(rowsum) - xd.dot(h * xd);
    out.grad_log_hyper(1 + k) = s / (ell(k) * ell(k));
  }
  out.grad_log_hyper(1 + d) = 0.5 * p.trace() * sn2;
  out.grad_inducing.resize(0, 0);
  return out;
}

}  // namespace

NlmlGradient nlml_gradient(const SparseModel& model) {
  if (!model.is_sparse())
    return full_gradient(model.dataset(), model.hyper());

  Factorization local;
  const Factorization* facp = model.cache().get();
  if (!facp) {
    local = factorize(model);
    facp = &local;
  }
  const Factorization& fac = *facp;

  const Dataset& data = model.dataset();
  const MatrixXd& X = data.X;
  const VectorXd& y = data.y;
  const MatrixXd& Z = model.inducing().Z;
  const Eigen::Index n = data.size();
  const Eigen::Index m = Z.rows();
  const int d = data.dim();
  const Hyperparameters& hyper = model.hyper();
  const double sf2 = hyper.signal_variance();
  const double sn2 = hyper.noise_variance();
  const VectorXd ell = hyper.lengthscales();
  const bool is_fitc = model.method() == Method::FITC;
  const bool is_vfe = model.method() == Method::VFE;

  const Eigen::ArrayXd ginv = fac.gdiag.array().inverse();
  const MatrixXd vg = fac.v.array().rowwise() * ginv.transpose();

  // Objective value (same pieces as sparse_nlml, reusing the factorization).
  const double logdet =
      fac.gdiag.array().log().sum() + 2.0 * half_logdet_from_chol(fac.lb);
  const double quad = (y.array().square() * ginv).sum() - fac.c.squaredNorm();
  const double trace_term = is_vfe ? fac.residual.sum() / (2.0 * sn2) : 0.0;

  NlmlGradient out;
  out.breakdown = NlmlBreakdown::assemble(0.5 * n * kLog2Pi, 0.5 * quad,
                                          0.5 * logdet, trace_term);

  // Adjoint assembly. With C = Q_ff + G, P = C^-1 - alpha alpha^T, the
  // matrix-inversion-lemma route gives, all in M x M / M x N pieces:
  //   d/dK_uf : Sigma^-1 U - mhat alpha^T          (U = K_uf G^-1)
  //   d/dK_uu : -1/2 (K_uu^-1 - Sigma^-1 - mhat mhat^T)
  // plus the diag[K_ff - Q_ff] chains through G (FITC) and the trace (VFE).
  const VectorXd t = upper_solve(fac.lb, fac.c);            // B^-1 V G^-1 y
  const VectorXd kfu_mhat = fac.v.transpose() * t;          // K_fu mhat
  const VectorXd alpha = (ginv * (y - kfu_mhat).array()).matrix();
  const VectorXd mhat = upper_solve(fac.luu, t);

  const MatrixXd e = lower_solve(fac.lb, vg);               // L_B^-1 V G^-1
  const VectorXd cinv_diag =
      (ginv - e.colwise().squaredNorm().transpose().array()).matrix();
  const VectorXd pdiag = cinv_diag - alpha.array().square().matrix();

  const double tau = is_vfe ? 1.0 / (2.0 * sn2) : 0.0;
  VectorXd wq = VectorXd::Zero(n);
  VectorXd wk = VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (fac.residual_raw(i) <= 0.0) continue;  // floored: no dependence left
    const double w = (is_fitc ? 0.5 * pdiag(i) : 0.0) + tau;
    wq(i) = -w;
    wk(i) = w;
  }

  const MatrixXd j = upper_solve(fac.luu, fac.v);           // K_uu^-1 K_uf
  const MatrixXd sig_inv_u = upper_solve(fac.luu, upper_solve(fac.lb, e));

  MatrixXd wuf = sig_inv_u;
  wuf.noalias() -= mhat * alpha.transpose();
  wuf.noalias() += 2.0 * (j.array().rowwise() * wq.transpose().array()).matrix();

  const MatrixXd kuu_inv =
      upper_solve(fac.luu, lower_solve(fac.luu, MatrixXd::Identity(m, m)));
  const MatrixXd lsig = fac.luu.triangularView<Eigen::Lower>() * fac.lb;
  const MatrixXd sig_inv =
      upper_solve(lsig, lower_solve(lsig, MatrixXd::Identity(m, m)));

  MatrixXd wuu = -0.5 * (kuu_inv - sig_inv);
  wuu.noalias() += 0.5 * mhat * mhat.transpose();
  wuu.noalias() -= (j.array().rowwise() * wq.transpose().array()).matrix() * j.transpose();

  // Kernel blocks for the chain rule through the SE kernel.
  const MatrixXd kuf = fac.luu.triangularView<Eigen::Lower>() * fac.v;
  MatrixXd kuu_t = fac.luu.triangularView<Eigen::Lower>() * fac.luu.transpose();

  out.grad_log_hyper = VectorXd::Zero(2 + d);
  out.grad_log_hyper(0) = wuu.cwiseProduct(kuu_t).sum() +
                          wuf.cwiseProduct(kuf).sum() + sf2 * wk.sum();
  out.grad_log_hyper(1 + d) = sn2 * 0.5 * pdiag.sum() - (is_vfe ? trace_term : 0.0);

  // Hadamard products drive both the lengthscale and the Z gradients. The
  // jittered diagonal of K_uu is harmless here: coordinate differences
  // vanish on the diagonal.
  const MatrixXd huu = wuu.cwiseProduct(kuu_t);
  const MatrixXd huf = wuf.cwiseProduct(kuf);
  const VectorXd huu_rowsum = huu.rowwise().sum();
  const VectorXd huf_rowsum = huf.rowwise().sum();
  const VectorXd huf_colsum = huf.colwise().sum();

  out.grad_inducing = MatrixXd::Zero(m, d);
  for (int k = 0; k < d; ++k) {
    const VectorXd zd = Z.col(k);
    const VectorXd xd = X.col(k);
    const double inv_ell2 = 1.0 / (ell(k) * ell(k));

    const VectorXd huu_zd = huu * zd;
    const VectorXd huf_xd = huf * xd;

    // d F / d log ell_k = sum of W .* K .* sqdist_k / ell_k^2
    const double uu_part =
        2.0 * (zd.array().square().matrix().dot(huu_rowsum) - zd.dot(huu_zd));
    const double uf_part = zd.array().square().matrix().dot(huf_rowsum) +
                           xd.array().square().matrix().dot(huf_colsum) -
                           2.0 * zd.dot(huf_xd);
    out.grad_log_hyper(1 + k) = (uu_part + uf_part) * inv_ell2;

    out.grad_inducing.col(k) =
        inv_ell2 * (huf_xd - zd.cwiseProduct(huf_rowsum) +
                    2.0 * (huu_zd - zd.cwiseProduct(huu_rowsum)));
  }
  return out;
}

PredictiveDistribution predict(const SparseModel& model, const MatrixXd& Xstar) {
  if (Xstar.cols() != model.dataset().dim())
    throw InvalidArgumentError("predict: test-point dimension mismatch");
  const Hyperparameters& hyper = model.hyper();
  const double sn2 = hyper.noise_variance();
  PredictiveDistribution pred;

  if (!model.is_sparse()) {
    const Dataset& data = model.dataset();
    MatrixXd c = kernel_matrix(data.X, data.X, hyper);
    c.diagonal().array() += sn2;
    Eigen::LLT<MatrixXd> llt(c);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefiniteError("predict: K_ff + sigma_n^2 I not positive definite", {});
    const VectorXd alpha = llt.solve(data.y);
    const MatrixXd kfs = kernel_matrix(data.X, Xstar, hyper);
    pred.mean = kfs.transpose() * alpha;
    const MatrixXd L(llt.matrixL());
    const MatrixXd w = L.triangularView<Eigen::Lower>().solve(kfs);
    pred.latent_variance =
        (kernel_diag(Xstar, hyper) - w.colwise().squaredNorm().transpose())
            .cwiseMax(0.0);
  } else {
    Factorization local;
    const Factorization* fac = model.cache().get();
    if (!fac) {
      local = factorize(model);
      fac = &local;
    }
    const MatrixXd kus = kernel_matrix(model.inducing().Z, Xstar, hyper);
    const MatrixXd a = fac->luu.triangularView<Eigen::Lower>().solve(kus);
    const VectorXd t =
        fac->lb.transpose().triangularView<Eigen::Upper>().solve(fac->c);
    pred.mean = a.transpose() * t;
    const MatrixXd ab = fac->lb.triangularView<Eigen::Lower>().solve(a);
    pred.latent_variance = (kernel_diag(Xstar, hyper) -
                            a.colwise().squaredNorm().transpose() +
                            ab.colwise().squaredNorm().transpose())
                               .cwiseMax(0.0);
  }
  pred.observation_variance = pred.latent_variance.array() + sn2;
  return pred;
}

VectorXd heteroscedastic_diag(const MatrixXd& points, const InducingSet& inducing,
                              const Hyperparameters& hyper,
                              const JitterPolicy& policy) {
  if (points.cols() != inducing.dim())
    throw InvalidArgumentError("heteroscedastic_diag: dimension mismatch");
  const MatrixXd kuu = kernel_matrix(inducing.Z, inducing.Z, hyper);
  const auto chol = jittered_cholesky(kuu, policy);
  const MatrixXd kup = kernel_matrix(inducing.Z, points, hyper);
  const MatrixXd a = chol.L.triangularView<Eigen::Lower>().solve(kup);
  const double sf2 = hyper.signal_variance();
  const VectorXd raw =
      VectorXd::Constant(points.rows(), sf2) -
      a.colwise().squaredNorm().transpose().matrix();
  if ((raw.array() < -1e-8 * sf2).any())
    throw InternalConsistencyError(
        "heteroscedastic_diag: negative residual beyond round-off tolerance");
  return raw.cwiseMax(0.0);
}

}  // namespace sgp
