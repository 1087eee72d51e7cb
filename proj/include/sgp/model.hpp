#pragma once

#include <memory>

#include "sgp/kernels.hpp"
#include "sgp/types.hpp"

namespace sgp {

/// The unified objective
///   F = N/2 log(2pi) + 1/2 log|Q_ff + G| + 1/2 y^T (Q_ff + G)^-1 y
///       + tr(T) / (2 sigma_n^2)
/// split into its named components. `total` is always the exact sum of the
/// other four fields.
struct NlmlBreakdown {
  double constant = 0.0;            // N/2 log(2pi)
  double data_fit = 0.0;            // 1/2 y^T (Q_ff + G)^-1 y
  double complexity_penalty = 0.0;  // 1/2 log|Q_ff + G|
  double trace_term = 0.0;          // tr(K_ff - Q_ff) / (2 sigma_n^2), VFE only
  double total = 0.0;

  static NlmlBreakdown assemble(double constant, double data_fit,
                                double complexity, double trace) {
    NlmlBreakdown b;
    b.constant = constant;
    b.data_fit = data_fit;
    b.complexity_penalty = complexity;
    b.trace_term = trace;
    b.total = constant + data_fit + complexity + trace;
    return b;
  }
};

struct PredictiveDistribution {
  VectorXd mean;
  VectorXd latent_variance;       // var of f*, floored at 0
  VectorXd observation_variance;  // latent + sigma_n^2
};

/// Everything the sparse solves need, built from two M x M Cholesky
/// factorizations (K_uu + eps I and the inner matrix of the
/// matrix-inversion-lemma route). No N x N matrix is ever formed.
struct Factorization {
  MatrixXd luu;           // chol factor of K_uu + applied_jitter I
  double applied_jitter = 0.0;
  MatrixXd v;             // V = L_uu^-1 K_uf  (M x N)
  VectorXd residual;      // diag[K_ff - Q_ff], floored at 0
  VectorXd residual_raw;  // same, before the floor (for gradient masking)
  VectorXd gdiag;         // per-point G: sigma_n^2 (+ residual for FITC)
  MatrixXd lb;            // chol factor of B = I + V diag(1/G) V^T
  VectorXd c;             // L_B^-1 (V (y / G)); reused by predictions
};

/// Dataset + hyperparameters + inducing set + method tag, plus an optional
/// cached factorization. Setters drop the cache; `factorized()` returns a
/// copy with the cache rebuilt, so snapshots stay immutable and can be shared
/// across threads.
class SparseModel {
public:
  SparseModel(Dataset dataset, Hyperparameters hyper, InducingSet inducing,
              Method method, JitterPolicy jitter = {});

  /// Full-GP model; no inducing set.
  SparseModel(Dataset dataset, Hyperparameters hyper, JitterPolicy jitter = {});

  const Dataset& dataset() const { return dataset_; }
  const Hyperparameters& hyper() const { return hyper_; }
  const InducingSet& inducing() const { return inducing_; }
  Method method() const { return method_; }
  const JitterPolicy& jitter_policy() const { return jitter_; }
  bool is_sparse() const { return method_ != Method::FULL; }

  void set_hyper(const Hyperparameters& h) { hyper_ = h; cache_.reset(); }
  void set_inducing(const InducingSet& z);
  void set_method(Method m) { method_ = m; cache_.reset(); }

  /// Copy of this model with the factorization cache filled.
  SparseModel factorized() const;
  const std::shared_ptr<const Factorization>& cache() const { return cache_; }

private:
  Dataset dataset_;
  Hyperparameters hyper_;
  InducingSet inducing_;
  Method method_;
  JitterPolicy jitter_;
  std::shared_ptr<const Factorization> cache_;
};

/// Build (or fetch) the factorization for a sparse model.
Factorization factorize(const SparseModel& model);

/// Exact GP objective: N/2 log 2pi + 1/2 log|K_ff + sigma_n^2 I|
/// + 1/2 y^T (K_ff + sigma_n^2 I)^-1 y, via Cholesky. O(N^3); intended for
/// N up to a few thousand.
NlmlBreakdown full_nlml(const Dataset& dataset, const Hyperparameters& hyper);

/// Unified sparse objective for FITC / VFE / DTC (Q_ff + G form), computed
/// through the M x M factorizations only.
NlmlBreakdown sparse_nlml(const SparseModel& model);

/// NLML for whatever method the model carries (FULL included).
NlmlBreakdown nlml(const SparseModel& model);

struct NlmlGradient {
  NlmlBreakdown breakdown;
  /// d F / d [log s_f^2, log ell_1..d, log sigma_n^2]
  VectorXd grad_log_hyper;
  /// d F / d Z, (M x d); empty for FULL.
  MatrixXd grad_inducing;
};

/// Analytic gradients of the objective w.r.t. the log-hyperparameters and
/// every inducing-input coordinate.
NlmlGradient nlml_gradient(const SparseModel& model);

/// Predictive mean / latent variance / observation variance at Xstar.
/// FULL uses the exact GP posterior; sparse methods use the standard
/// predictive equations of the Q/G structure (VFE and DTC coincide).
PredictiveDistribution predict(const SparseModel& model, const MatrixXd& Xstar);

/// diag[K_ff - Q_ff] evaluated at arbitrary points: FITC's input-dependent
/// noise, zero at inducing inputs and rising to s_f^2 far from them.
VectorXd heteroscedastic_diag(const MatrixXd& points, const InducingSet& inducing,
                              const Hyperparameters& hyper,
                              const JitterPolicy& policy = {});

}  // namespace sgp
