#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sgp/model.hpp"

namespace sgp {

/// Per-candidate effect of adding one inducing input, hyperparameters held
/// fixed. Deltas are (objective with Z + {z}) minus the baseline.
struct SweepCandidate {
  VectorXd location;
  double delta_total = 0.0;
  double delta_data_fit = 0.0;
  double delta_complexity = 0.0;
  double delta_trace = 0.0;
  std::optional<std::string> error;  // factorization failure, sweep continues
};

struct SweepResult {
  NlmlBreakdown baseline;
  std::vector<SweepCandidate> candidates;
};

struct ClumpReport {
  std::vector<std::vector<Eigen::Index>> clusters;  // partition of {0..M-1}
  Eigen::Index effective_count = 0;
  double min_pairwise_distance = 0.0;  // lengthscale-normalized
};

struct MetricsReport {
  double nlml_per_datum = 0.0;
  double rmse = 0.0;
  double smse = 0.0;
  double nlpp = 0.0;
};

struct NoiseBiasEntry {
  Method method;
  double noise_std = 0.0;          // sigma_n
  double ratio_to_full = 1.0;      // sigma_n / sigma_n(FULL)
  bool underestimation_flag = false;  // ratio < 0.5
  bool overestimation_flag = false;   // ratio > 1
  bool severe_flag = false;           // sigma_n nearly zero
};

struct NoiseBiasReport {
  std::vector<NoiseBiasEntry> entries;  // FULL first when present
};

/// F(Z + {z}) - F(Z) for every candidate row of `grid`, with no further
/// hyperparameter optimization. Evaluated by re-factorizing the grown model,
/// which is exactly the from-scratch recomputation the deltas are defined by.
SweepResult addition_sweep(const SparseModel& model, const MatrixXd& grid);

/// Uniform sweep grid spanning [min(X) - ell, max(X) + ell] per dimension
/// (row-major over dimensions; intended for 1-D studies).
MatrixXd default_sweep_grid(const Dataset& dataset, const Hyperparameters& hyper,
                            Eigen::Index points_per_dim = 200);

/// Single-linkage clustering of inducing inputs at threshold tau on
/// lengthscale-normalized Euclidean distance.
ClumpReport detect_clumps(const InducingSet& inducing, const VectorXd& lengthscales,
                          double tau = 1e-2);

/// sigma_n per trained model with FITC-underestimation / VFE-overestimation
/// flags relative to the FULL model in the list.
NoiseBiasReport noise_bias_report(const std::vector<SparseModel>& models);

/// RMSE, SMSE (population variance of the test targets), and mean negative
/// log predictive probability under the Gaussian predictive.
MetricsReport evaluate(const PredictiveDistribution& pred, const VectorXd& y_test,
                       double nlml_per_datum = 0.0);

}  // namespace sgp
