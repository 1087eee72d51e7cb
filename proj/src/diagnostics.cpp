#include "sgp/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace sgp {

SweepResult addition_sweep(const SparseModel& model, const MatrixXd& grid) {
  if (!model.is_sparse())
    throw InvalidArgumentError("addition_sweep: model must be sparse");
  if (grid.rows() < 1)
    throw InvalidArgumentError("addition_sweep: empty candidate grid");
  if (grid.cols() != model.dataset().dim())
    throw InvalidArgumentError("addition_sweep: grid dimension mismatch");

  SweepResult result;
  result.baseline = sparse_nlml(model);
  result.candidates.reserve(grid.rows());

  const MatrixXd& Z = model.inducing().Z;
  MatrixXd grown(Z.rows() + 1, Z.cols());
  grown.topRows(Z.rows()) = Z;

  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    SweepCandidate cand;
    cand.location = grid.row(i).transpose();
    grown.row(Z.rows()) = grid.row(i);
    try {
      SparseModel bigger = model;
      bigger.set_inducing(InducingSet(grown));
      const NlmlBreakdown b = sparse_nlml(bigger);
      cand.delta_total = b.total - result.baseline.total;
      cand.delta_data_fit = b.data_fit - result.baseline.data_fit;
      cand.delta_complexity =
          b.complexity_penalty - result.baseline.complexity_penalty;
      cand.delta_trace = b.trace_term - result.baseline.trace_term;
    } catch (const std::exception& e) {
      cand.error = e.what();
    }
    result.candidates.push_back(std::move(cand));
  }
  return result;
}

MatrixXd default_sweep_grid(const Dataset& dataset, const Hyperparameters& hyper,
                            Eigen::Index points_per_dim) {
  if (points_per_dim < 2)
    throw InvalidArgumentError("default_sweep_grid: need at least 2 points");
  const VectorXd ell = hyper.lengthscales();
  const int d = dataset.dim();
  MatrixXd grid(points_per_dim * d, d);
  grid.setZero();
  // One axis-aligned segment per dimension, other coordinates at the data
  // median proxy (column mean); for 1-D data this is the usual scan line.
  const VectorXd center = dataset.X.colwise().mean();
  Eigen::Index row = 0;
  for (int j = 0; j < d; ++j) {
    const double lo = dataset.X.col(j).minCoeff() - ell(j);
    const double hi = dataset.X.col(j).maxCoeff() + ell(j);
    for (Eigen::Index i = 0; i < points_per_dim; ++i, ++row) {
      grid.row(row) = center.transpose();
      grid(row, j) =
          lo + (hi - lo) * static_cast<double>(i) /
                   static_cast<double>(points_per_dim - 1);
    }
  }
  return grid;
}

ClumpReport detect_clumps(const InducingSet& inducing, const VectorXd& lengthscales,
                          double tau) {
  if (!(tau > 0.0)) throw InvalidArgumentError("detect_clumps: tau must be > 0");
  if (lengthscales.size() != inducing.dim())
    throw InvalidArgumentError("detect_clumps: lengthscale dimension mismatch");
  const Eigen::Index m = inducing.size();
  const MatrixXd zs =
      inducing.Z.array().rowwise() / lengthscales.transpose().array();

  // Single linkage at a fixed threshold = connected components of the
  // "distance <= tau" graph; union-find keeps it order-independent.
  std::vector<Eigen::Index> parent(m);
  std::iota(parent.begin(), parent.end(), Eigen::Index{0});
  auto find = [&](Eigen::Index a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };

  double min_dist = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double dist = (zs.row(i) - zs.row(j)).norm();
      min_dist = std::min(min_dist, dist);
      if (dist <= tau) {
        const auto ri = find(i), rj = find(j);
        if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
      }
    }
  }

  ClumpReport report;
  report.min_pairwise_distance = min_dist;
  std::vector<std::vector<Eigen::Index>> by_root(m);
  for (Eigen::Index i = 0; i < m; ++i) by_root[find(i)].push_back(i);
  for (auto& cluster : by_root)
    if (!cluster.empty()) report.clusters.push_back(std::move(cluster));
  report.effective_count = static_cast<Eigen::Index>(report.clusters.size());
  return report;
}

NoiseBiasReport noise_bias_report(const std::vector<SparseModel>& models) {
  NoiseBiasReport report;
  double full_sigma = std::numeric_limits<double>::quiet_NaN();
  double signal_scale = 0.0;
  for (const auto& model : models) {
    if (model.method() == Method::FULL)
      full_sigma = std::sqrt(model.hyper().noise_variance());
    signal_scale = std::max(signal_scale, std::sqrt(model.hyper().signal_variance()));
  }
  for (const auto& model : models) {
    NoiseBiasEntry entry;
    entry.method = model.method();
    entry.noise_std = std::sqrt(model.hyper().noise_variance());
    entry.severe_flag = entry.noise_std < 1e-3 * std::max(signal_scale, 1e-300);
    if (std::isfinite(full_sigma) && full_sigma > 0.0 &&
        model.method() != Method::FULL) {
      entry.ratio_to_full = entry.noise_std / full_sigma;
      entry.underestimation_flag = entry.ratio_to_full < 0.5;
      entry.overestimation_flag = entry.ratio_to_full > 1.0;
    }
    report.entries.push_back(entry);
  }
  std::stable_sort(report.entries.begin(), report.entries.end(),
                   [](const NoiseBiasEntry& a, const NoiseBiasEntry& b) {
                     return (a.method == Method::FULL) > (b.method == Method::FULL);
                   });
  return report;
}

MetricsReport evaluate(const PredictiveDistribution& pred, const VectorXd& y_test,
                       double nlml_per_datum) {
  const Eigen::Index n = y_test.size();
  if (pred.mean.size() != n || pred.observation_variance.size() != n)
    throw InvalidArgumentError("evaluate: prediction / target length mismatch");
  if (n < 1) throw InvalidArgumentError("evaluate: empty test set");

  const VectorXd resid = pred.mean - y_test;
  const double mse = resid.squaredNorm() / static_cast<double>(n);

  const double ymean = y_test.mean();
  const double yvar =
      (y_test.array() - ymean).square().sum() / static_cast<double>(n);
  if (!(yvar > 0.0))
    throw InvalidArgumentError("evaluate: test targets have zero variance");

  double nlpp = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double var = pred.observation_variance(i);
    nlpp += 0.5 * std::log(2.0 * std::numbers::pi * var) +
            0.5 * resid(i) * resid(i) / var;
  }

  MetricsReport report;
  report.nlml_per_datum = nlml_per_datum;
  report.rmse = std::sqrt(mse);
  report.smse = mse / yvar;
  report.nlpp = nlpp / static_cast<double>(n);
  return report;
}

}  // namespace sgp
