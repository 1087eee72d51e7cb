#include "sgp/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "sgp/lbfgs.hpp"
#include "sgp/rng.hpp"

namespace sgp {

namespace {

double min_pairwise_distance(const MatrixXd& Z) {
  if (Z.rows() < 2) return std::numeric_limits<double>::quiet_NaN();
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < Z.rows(); ++i)
    for (Eigen::Index j = i + 1; j < Z.rows(); ++j)
      best = std::min(best, (Z.row(i) - Z.row(j)).norm());
  return best;
}

/// Draw m row indices from [0, n): without replacement while m <= n,
/// with replacement beyond that.
std::vector<Eigen::Index> draw_rows(Eigen::Index n, Eigen::Index m, Rng& rng) {
  std::vector<Eigen::Index> idx;
  idx.reserve(m);
  if (m <= n) {
    std::vector<Eigen::Index> pool(n);
    for (Eigen::Index i = 0; i < n; ++i) pool[i] = i;
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto j = i + static_cast<Eigen::Index>(rng.uniform_index(n - i));
      std::swap(pool[i], pool[j]);
      idx.push_back(pool[i]);
    }
  } else {
    for (Eigen::Index i = 0; i < m; ++i)
      idx.push_back(static_cast<Eigen::Index>(rng.uniform_index(n)));
  }
  return idx;
}

struct ParamLayout {
  int dim = 0;
  Eigen::Index m = 0;  // 0 for FULL
  Eigen::Index hyper_size() const { return 2 + dim; }
  Eigen::Index total_size() const { return hyper_size() + m * dim; }
};

VectorXd pack(const Hyperparameters& hyper, const MatrixXd& Z,
              const ParamLayout& layout) {
  VectorXd x(layout.total_size());
  x(0) = hyper.log_signal_variance();
  x.segment(1, layout.dim) = hyper.log_lengthscales();
  x(1 + layout.dim) = hyper.log_noise_variance();
  for (Eigen::Index i = 0; i < layout.m; ++i)
    x.segment(layout.hyper_size() + i * layout.dim, layout.dim) =
        Z.row(i).transpose();
  return x;
}

void unpack(const VectorXd& x, const ParamLayout& layout, Hyperparameters& hyper,
            MatrixXd& Z) {
  hyper = Hyperparameters::from_log(x(0), x.segment(1, layout.dim),
                                    x(1 + layout.dim));
  Z.resize(layout.m, layout.dim);
  for (Eigen::Index i = 0; i < layout.m; ++i)
    Z.row(i) = x.segment(layout.hyper_size() + i * layout.dim, layout.dim)
                   .transpose();
}

}  // namespace

MatrixXd kmeans_centers(const MatrixXd& X, Eigen::Index k, std::uint64_t seed) {
  if (k < 1) throw InvalidArgumentError("kmeans: k must be >= 1");
  const Eigen::Index n = X.rows();
  Rng rng(seed);
  const auto init_idx = draw_rows(n, k, rng);
  MatrixXd centers(k, X.cols());
  for (Eigen::Index i = 0; i < k; ++i) centers.row(i) = X.row(init_idx[i]);

  std::vector<Eigen::Index> assign(n, 0);
  for (int sweep = 0; sweep < 25; ++sweep) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < k; ++c) {
        const double d2 = (X.row(i) - centers.row(c)).squaredNorm();
        if (d2 < best) {
          best = d2;
          assign[i] = c;
        }
      }
    }
    MatrixXd sums = MatrixXd::Zero(k, X.cols());
    std::vector<Eigen::Index> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[i]) += X.row(i);
      ++counts[assign[i]];
    }
    for (Eigen::Index c = 0; c < k; ++c)
      if (counts[c] > 0)
        centers.row(c) = sums.row(c) / static_cast<double>(counts[c]);
    // empty clusters keep their previous center
  }
  return centers;
}

Hyperparameters default_hyper_init(const Dataset& dataset) {
  const double n = static_cast<double>(dataset.size());
  const double ymean = dataset.y.mean();
  const double yvar = (dataset.y.array() - ymean).square().sum() / n;
  if (!(yvar > 0.0))
    throw InvalidArgumentError("initialize: targets have zero variance");
  VectorXd ell(dataset.dim());
  for (int j = 0; j < dataset.dim(); ++j) {
    const double mean = dataset.X.col(j).mean();
    const double var = (dataset.X.col(j).array() - mean).square().sum() / n;
    ell(j) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return Hyperparameters::from_values(yvar, ell, 0.1 * yvar);
}

std::pair<InducingSet, Hyperparameters> initialize(const Dataset& dataset,
                                                   Eigen::Index m,
                                                   const InitScheme& scheme,
                                                   std::uint64_t seed) {
  if (m < 1) throw InvalidArgumentError("initialize: m must be >= 1");

  switch (scheme.kind) {
    case InitScheme::Kind::GIVEN:
    case InitScheme::Kind::FROM_MODEL: {
      if (!scheme.z0 || !scheme.hyper0)
        throw InvalidArgumentError("initialize: scheme carries no (Z, hyper)");
      if (scheme.z0->size() != m)
        throw InvalidArgumentError("initialize: scheme Z has wrong point count");
      if (scheme.z0->dim() != dataset.dim() ||
          scheme.hyper0->input_dim() != dataset.dim())
        throw InvalidArgumentError("initialize: scheme dimension mismatch");
      return {*scheme.z0, *scheme.hyper0};
    }
    case InitScheme::Kind::RANDOM_SUBSET: {
      Rng rng(seed);
      const auto idx = draw_rows(dataset.size(), m, rng);
      MatrixXd Z(m, dataset.dim());
      for (Eigen::Index i = 0; i < m; ++i) Z.row(i) = dataset.X.row(idx[i]);
      return {InducingSet(std::move(Z)), default_hyper_init(dataset)};
    }
    case InitScheme::Kind::KMEANS:
      return {InducingSet(kmeans_centers(dataset.X, m, seed)),
              default_hyper_init(dataset)};
  }
  throw InvalidArgumentError("initialize: unknown scheme");
}

std::pair<SparseModel, TrainingTrace> optimize(const SparseModel& model,
                                               const OptimizerConfig& config) {
  config.validate();
  const Dataset& data = model.dataset();
  ParamLayout layout{data.dim(),
                     model.is_sparse() ? model.inducing().size() : 0};

  SparseModel work = model;
  TrainingTrace trace;
  trace.seed = config.seed;

  bool first_eval = true;
  VectorXd stash_x;
  NlmlBreakdown stash_breakdown;
  VectorXd stash_grad;
  auto evaluate = [&](const VectorXd& x, VectorXd& grad_out) -> double {
    Hyperparameters hyper;
    MatrixXd Z;
    unpack(x, layout, hyper, Z);
    try {
      work.set_hyper(hyper);
      if (layout.m > 0) work.set_inducing(InducingSet(Z));
      const NlmlGradient g = nlml_gradient(work);
      grad_out.resize(layout.total_size());
      grad_out.head(layout.hyper_size()) = g.grad_log_hyper;
      for (Eigen::Index i = 0; i < layout.m; ++i)
        grad_out.segment(layout.hyper_size() + i * layout.dim, layout.dim) =
            g.grad_inducing.row(i).transpose();
      first_eval = false;
      stash_x = x;
      stash_breakdown = g.breakdown;
      stash_grad = grad_out;
      return g.breakdown.total;
    } catch (const NotPositiveDefiniteError&) {
      if (first_eval) throw;
      grad_out = VectorXd::Zero(layout.total_size());
      return std::numeric_limits<double>::infinity();
    } catch (const InternalConsistencyError&) {
      // Extreme trial parameters can push the low-rank residual past the
      // round-off tolerance; treat the trial as out-of-domain.
      if (first_eval) throw;
      grad_out = VectorXd::Zero(layout.total_size());
      return std::numeric_limits<double>::infinity();
    }
  };

  auto record = [&](int iter, const VectorXd& x) {
    if (stash_x.size() != x.size() || stash_x != x) {
      VectorXd scratch;
      evaluate(x, scratch);  // refresh the stash (accepted points are finite)
    }
    Hyperparameters hyper;
    MatrixXd Z;
    unpack(x, layout, hyper, Z);
    IterationRecord rec;
    rec.iteration = iter;
    rec.objective = stash_breakdown;
    rec.gradient_norm = stash_grad.norm();
    rec.hyper = hyper;
    rec.z_min_pairwise_distance =
        layout.m > 0 ? min_pairwise_distance(Z)
                     : std::numeric_limits<double>::quiet_NaN();
    trace.iterations.push_back(std::move(rec));
  };

  const VectorXd x0 = pack(model.hyper(),
                           model.is_sparse() ? model.inducing().Z : MatrixXd(),
                           layout);
  {
    VectorXd g0;
    const double f0 = evaluate(x0, g0);
    if (!std::isfinite(f0))
      throw InvalidArgumentError("optimize: objective not finite at the initial point");
  }
  record(0, x0);

  lbfgs::Options opts;
  opts.gradient_tolerance =
      config.gradient_tolerance * static_cast<double>(data.size());
  opts.objective_tolerance = config.objective_tolerance;

  VectorXd x = x0;
  int used_iterations = 0;

  // Phase 1: hyperparameters frozen. Masking the gradient keeps the frozen
  // coordinates bit-identical: every curvature pair and search direction
  // stays zero there.
  const int freeze = std::min(config.freeze_hyper_iterations, config.max_iterations);
  if (freeze > 0) {
    auto masked = [&](const VectorXd& xx, VectorXd& grad_out) {
      const double f = evaluate(xx, grad_out);
      grad_out.head(layout.hyper_size()).setZero();
      return f;
    };
    lbfgs::Options frozen_opts = opts;
    frozen_opts.max_iterations = freeze;
    auto res = lbfgs::minimize(masked, x, frozen_opts,
                               [&](int iter, const VectorXd& xx, double, const VectorXd&) {
                                 record(iter, xx);
                               });
    x = res.x;
    used_iterations = res.iterations;
  }

  lbfgs::Options main_opts = opts;
  main_opts.max_iterations = std::max(config.max_iterations - used_iterations, 0);
  lbfgs::Status status = lbfgs::Status::MAX_ITERATIONS;
  if (main_opts.max_iterations > 0) {
    auto res = lbfgs::minimize(evaluate, x, main_opts,
                               [&](int iter, const VectorXd& xx, double, const VectorXd&) {
                                 record(used_iterations + iter, xx);
                               });
    x = res.x;
    status = res.status;
  }

  switch (status) {
    case lbfgs::Status::CONVERGED: trace.status = TrainingStatus::CONVERGED; break;
    case lbfgs::Status::MAX_ITERATIONS: trace.status = TrainingStatus::MAX_ITERATIONS; break;
    case lbfgs::Status::LINE_SEARCH_FAILURE:
      trace.status = TrainingStatus::LINE_SEARCH_FAILURE;
      break;
  }

  Hyperparameters hyper;
  MatrixXd Z;
  unpack(x, layout, hyper, Z);
  SparseModel trained = model;
  trained.set_hyper(hyper);
  if (layout.m > 0) trained.set_inducing(InducingSet(Z));
  return {trained.factorized(), std::move(trace)};
}

MultistartResult optimize_multistart(const Dataset& dataset, Eigen::Index m,
                                     Method method, const OptimizerConfig& config,
                                     const InitScheme& scheme,
                                     const JitterPolicy& jitter) {
  config.validate();
  const int restarts = config.restarts;
  std::vector<std::optional<SparseModel>> models(restarts);
  std::vector<TrainingTrace> traces(restarts);
  std::vector<std::string> failures(restarts);

  auto run_one = [&](int r) {
    try {
      OptimizerConfig local = config;
      local.seed = config.seed + static_cast<std::uint64_t>(r);
      if (method == Method::FULL) {
        Hyperparameters h0 = scheme.hyper0 ? *scheme.hyper0
                                           : default_hyper_init(dataset);
        SparseModel model(dataset, h0, jitter);
        auto [trained, trace] = optimize(model, local);
        models[r] = std::move(trained);
        traces[r] = std::move(trace);
      } else {
        auto [z0, h0] = initialize(dataset, m, scheme, local.seed);
        SparseModel model(dataset, h0, z0, method, jitter);
        auto [trained, trace] = optimize(model, local);
        models[r] = std::move(trained);
        traces[r] = std::move(trace);
      }
    } catch (const std::exception& e) {
      failures[r] = e.what();
    }
  };

  if (config.jobs <= 1 || restarts == 1) {
    for (int r = 0; r < restarts; ++r) run_one(r);
  } else {
    std::vector<std::thread> workers;
    const int njobs = std::min(config.jobs, restarts);
    for (int w = 0; w < njobs; ++w)
      workers.emplace_back([&, w] {
        for (int r = w; r < restarts; r += njobs) run_one(r);
      });
    for (auto& t : workers) t.join();
  }

  // Deterministic merge: strict argmin over final objectives, so the lowest
  // restart index (lowest seed) wins ties regardless of completion order.
  int best = -1;
  double best_obj = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    if (!models[r]) continue;
    const double obj = traces[r].final_objective();
    if (obj < best_obj) {
      best_obj = obj;
      best = r;
    }
  }
  if (best < 0) {
    std::string causes;
    for (int r = 0; r < restarts; ++r) {
      if (!failures[r].empty())
        causes += "\n  restart " + std::to_string(r) + ": " + failures[r];
    }
    throw InvalidArgumentError("optimize_multistart: every restart failed" + causes);
  }
  return {std::move(*models[best]), best, std::move(traces)};
}

}  // namespace sgp
