#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "sgp/model.hpp"

namespace sgp {

struct OptimizerConfig {
  int max_iterations = 1000;
  double gradient_tolerance = 1e-6;   // threshold is this value times N
  double objective_tolerance = 1e-9;  // relative objective decrease
  int freeze_hyper_iterations = 0;    // mask hyper gradients this long
  int restarts = 1;
  std::uint64_t seed = 0;
  int jobs = 1;                       // parallel restarts

  void validate() const {
    if (max_iterations < 1)
      throw InvalidArgumentError("optimizer: max_iterations must be >= 1");
    if (!(gradient_tolerance > 0.0) || !(objective_tolerance > 0.0))
      throw InvalidArgumentError("optimizer: tolerances must be > 0");
    if (freeze_hyper_iterations < 0)
      throw InvalidArgumentError("optimizer: freeze iterations must be >= 0");
    if (restarts < 1) throw InvalidArgumentError("optimizer: restarts must be >= 1");
    if (jobs < 1) throw InvalidArgumentError("optimizer: jobs must be >= 1");
  }
};

/// How to pick the starting (Z, theta) for a run.
struct InitScheme {
  enum class Kind { RANDOM_SUBSET, KMEANS, GIVEN, FROM_MODEL };
  Kind kind = Kind::RANDOM_SUBSET;
  std::optional<InducingSet> z0;
  std::optional<Hyperparameters> hyper0;

  static InitScheme random_subset() { return {}; }
  static InitScheme kmeans() { return {Kind::KMEANS, std::nullopt, std::nullopt}; }
  static InitScheme given(InducingSet z, Hyperparameters h) {
    return {Kind::GIVEN, std::move(z), std::move(h)};
  }
  static InitScheme from_model(const SparseModel& trained) {
    return {Kind::FROM_MODEL, trained.inducing(), trained.hyper()};
  }
};

enum class TrainingStatus { CONVERGED, MAX_ITERATIONS, LINE_SEARCH_FAILURE };

struct IterationRecord {
  int iteration = 0;
  NlmlBreakdown objective;
  double gradient_norm = 0.0;
  Hyperparameters hyper;
  double z_min_pairwise_distance = 0.0;  // NaN when there is no inducing set
};

struct TrainingTrace {
  std::vector<IterationRecord> iterations;  // record 0 is the initial point
  TrainingStatus status = TrainingStatus::MAX_ITERATIONS;
  std::uint64_t seed = 0;

  double final_objective() const { return iterations.back().objective.total; }
};

/// Starting inducing set and hyperparameters for a dataset. RANDOM_SUBSET
/// draws m training inputs without replacement (with replacement once
/// m > N); KMEANS runs 25 seeded Lloyd iterations. Default hyperparameters:
/// s_f^2 = var(y), ell_d = std(X_d), sigma_n^2 = 0.1 var(y).
std::pair<InducingSet, Hyperparameters> initialize(const Dataset& dataset,
                                                   Eigen::Index m,
                                                   const InitScheme& scheme,
                                                   std::uint64_t seed);

/// Default hyperparameters alone (used for FULL models).
Hyperparameters default_hyper_init(const Dataset& dataset);

/// Joint gradient descent on (log-hypers, Z) from the model's current state.
/// Line-search failure is not an error: the best iterate so far is returned
/// and the trace says what happened.
std::pair<SparseModel, TrainingTrace> optimize(const SparseModel& model,
                                               const OptimizerConfig& config);

struct MultistartResult {
  SparseModel best;
  int best_restart = 0;
  std::vector<TrainingTrace> traces;
};

/// `restarts` seeded initializations (seed, seed+1, ...), each optimized;
/// returns the argmin over final objectives, lowest seed winning ties.
/// Restarts run on `config.jobs` threads; the merge is deterministic.
MultistartResult optimize_multistart(const Dataset& dataset, Eigen::Index m,
                                     Method method, const OptimizerConfig& config,
                                     const InitScheme& scheme = InitScheme::random_subset(),
                                     const JitterPolicy& jitter = {});

/// Seeded Lloyd's algorithm (25 iterations), exposed for initialization.
MatrixXd kmeans_centers(const MatrixXd& X, Eigen::Index k, std::uint64_t seed);

}  // namespace sgp
