#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "sgp/errors.hpp"

namespace sgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Squared-exponential kernel hyperparameters. Stored in log-space so that
/// unconstrained optimization keeps every quantity strictly positive;
/// exponentiation recovers the raw values exactly.
class Hyperparameters {
public:
  Hyperparameters() = default;

  /// From raw (positive) values: signal variance s_f^2, per-dimension
  /// lengthscales, noise variance sigma_n^2.
  static Hyperparameters from_values(double signal_variance,
                                     const VectorXd& lengthscales,
                                     double noise_variance) {
    if (!(signal_variance > 0.0) || !(noise_variance > 0.0))
      throw InvalidArgumentError("hyperparameters: variances must be > 0");
    if (lengthscales.size() < 1 || (lengthscales.array() <= 0.0).any())
      throw InvalidArgumentError("hyperparameters: lengthscales must be > 0");
    Hyperparameters h;
    h.log_signal_variance_ = std::log(signal_variance);
    h.log_lengthscales_ = lengthscales.array().log();
    h.log_noise_variance_ = std::log(noise_variance);
    return h;
  }

  /// Isotropic convenience: one lengthscale replicated over `dim` dimensions.
  static Hyperparameters isotropic(double signal_variance, double lengthscale,
                                   double noise_variance, int dim = 1) {
    return from_values(signal_variance, VectorXd::Constant(dim, lengthscale),
                       noise_variance);
  }

  static Hyperparameters from_log(double log_sf2, const VectorXd& log_ell,
                                  double log_sn2) {
    Hyperparameters h;
    h.log_signal_variance_ = log_sf2;
    h.log_lengthscales_ = log_ell;
    h.log_noise_variance_ = log_sn2;
    return h;
  }

  double signal_variance() const { return std::exp(log_signal_variance_); }
  VectorXd lengthscales() const { return log_lengthscales_.array().exp(); }
  double noise_variance() const { return std::exp(log_noise_variance_); }

  double log_signal_variance() const { return log_signal_variance_; }
  const VectorXd& log_lengthscales() const { return log_lengthscales_; }
  double log_noise_variance() const { return log_noise_variance_; }

  int input_dim() const { return static_cast<int>(log_lengthscales_.size()); }

private:
  double log_signal_variance_ = 0.0;
  VectorXd log_lengthscales_ = VectorXd::Zero(1);
  double log_noise_variance_ = std::log(0.1);
};

/// Escalation policy for the diagonal jitter added to K_uu before
/// factorizing. All magnitudes are relative to the mean kernel diagonal.
struct JitterPolicy {
  double initial_jitter = 1e-6;
  double escalation_factor = 10.0;
  double max_jitter = 1e-2;

  void validate() const {
    if (!(initial_jitter > 0.0) || !(max_jitter > 0.0))
      throw InvalidArgumentError("jitter policy: jitters must be > 0");
    if (!(escalation_factor > 1.0))
      throw InvalidArgumentError("jitter policy: escalation factor must be > 1");
    if (initial_jitter > max_jitter)
      throw InvalidArgumentError("jitter policy: initial jitter exceeds max");
  }
};

/// Regression data: rows of X are input points, y holds the targets.
struct Dataset {
  MatrixXd X;
  VectorXd y;

  Dataset() = default;
  Dataset(MatrixXd inputs, VectorXd targets)
      : X(std::move(inputs)), y(std::move(targets)) {
    validate();
  }

  Eigen::Index size() const { return X.rows(); }
  int dim() const { return static_cast<int>(X.cols()); }

  void validate() const {
    if (X.rows() < 1 || X.cols() < 1)
      throw InvalidArgumentError("dataset: need at least one point and one dimension");
    if (X.rows() != y.size())
      throw InvalidArgumentError("dataset: X rows and y length differ");
    if (!X.allFinite() || !y.allFinite())
      throw InvalidArgumentError("dataset: non-finite entries");
  }
};

/// The M inducing-input locations Z, jointly optimized with the
/// hyperparameters in the sparse methods.
struct InducingSet {
  MatrixXd Z;

  InducingSet() = default;
  explicit InducingSet(MatrixXd locations) : Z(std::move(locations)) {
    if (Z.rows() < 1)
      throw InvalidArgumentError("inducing set: need at least one location");
  }

  Eigen::Index size() const { return Z.rows(); }
  int dim() const { return static_cast<int>(Z.cols()); }
};

enum class Method { FULL, FITC, VFE, DTC };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::FULL: return "full";
    case Method::FITC: return "fitc";
    case Method::VFE: return "vfe";
    case Method::DTC: return "dtc";
  }
  return "?";
}

inline Method method_from_name(const std::string& name) {
  if (name == "full") return Method::FULL;
  if (name == "fitc") return Method::FITC;
  if (name == "vfe") return Method::VFE;
  if (name == "dtc") return Method::DTC;
  throw InvalidArgumentError("unknown method '" + name + "'");
}

}  // namespace sgp
