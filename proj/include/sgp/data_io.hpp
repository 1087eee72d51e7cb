#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgp/types.hpp"

namespace sgp {

/// Where a dataset comes from: a single delimited table (inputs + target
/// column) or the paired-file layout (inputs file + outputs file, one point
/// per line). Delimiters are auto-detected (whitespace and/or commas).
struct DataSource {
  std::string path;                          // table, or the inputs file
  std::optional<std::string> outputs_path;   // set for paired files
  std::vector<int> input_columns;            // empty = all but target
  std::optional<int> target_column;          // default: last column
};

/// Seeded draw from a GP prior: joint function sample over train + test
/// inputs plus independent observation noise.
struct SyntheticSpec {
  enum class InputDistribution { GAUSSIAN, UNIFORM };
  int dim = 1;
  Eigen::Index n_train = 128;
  Eigen::Index n_test = 128;
  Hyperparameters hyper;
  InputDistribution input_distribution = InputDistribution::GAUSSIAN;
  double input_scale = 1.0;    // std for GAUSSIAN, half-width for UNIFORM
  std::uint64_t seed = 0;
};

struct SyntheticDraw {
  Dataset train;
  Dataset test;
  Hyperparameters ground_truth;
};

enum class SubsetRule { FIRST, EVERY_OTHER, SEEDED_RANDOM };

/// Invertible per-column affine map used by standardize().
struct AffineTransform {
  VectorXd x_shift, x_scale;
  double y_shift = 0.0, y_scale = 1.0;

  Dataset apply(const Dataset& d) const;
  Dataset invert(const Dataset& d) const;
  VectorXd invert_mean(const VectorXd& mean) const;
  VectorXd invert_variance(const VectorXd& variance) const;
};

Dataset load_xy(const DataSource& source);

Dataset subset(const Dataset& dataset, Eigen::Index n, SubsetRule rule,
               std::uint64_t seed = 0);

SyntheticDraw sample_gp(const SyntheticSpec& spec);

/// Shift/scale inputs and targets to zero mean, unit (population) variance.
std::pair<Dataset, AffineTransform> standardize(const Dataset& dataset);

/// Canonical two-column (d inputs + target) text serialization.
void save_xy(const Dataset& dataset, const std::string& path);

/// FNV-1a 64-bit hash of the canonical serialization; manifests use it to
/// pin the exact data a run saw.
std::string dataset_hash(const Dataset& dataset);

}  // namespace sgp
