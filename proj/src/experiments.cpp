#include "sgp/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <thread>

#include "sgp/data_io.hpp"
#include "sgp/diagnostics.hpp"
#include "sgp/model.hpp"
#include "sgp/rng.hpp"
#include "sgp/training.hpp"

namespace sgp {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------- utilities

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  throw InvalidArgumentError("config: " + path + ": " + what);
}

void deep_merge(Json& base, const Json& overlay, const std::string& path) {
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string child = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key()))
      config_error(child, "unknown field");
    if (base[it.key()].is_object() && it.value().is_object())
      deep_merge(base[it.key()], it.value(), child);
    else
      base[it.key()] = it.value();
  }
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void parallel_runs(int count, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  const int n = std::min(jobs, count);
  for (int w = 0; w < n; ++w)
    workers.emplace_back([&, w] {
      for (int i = w; i < count; i += n) fn(i);
    });
  for (auto& t : workers) t.join();
}

// ------------------------------------------------------------- serializers

Json breakdown_json(const NlmlBreakdown& b) {
  return Json{{"constant", b.constant},
              {"data_fit", b.data_fit},
              {"complexity_penalty", b.complexity_penalty},
              {"trace_term", b.trace_term},
              {"total", b.total}};
}

Json hyper_json(const Hyperparameters& h) {
  const VectorXd ell = h.lengthscales();
  Json j;
  j["signal_variance"] = h.signal_variance();
  j["lengthscales"] = std::vector<double>(ell.data(), ell.data() + ell.size());
  j["noise_variance"] = h.noise_variance();
  return j;
}

Json metrics_json(const MetricsReport& m) {
  return Json{{"nlml_per_datum", m.nlml_per_datum},
              {"rmse", m.rmse},
              {"smse", m.smse},
              {"nlpp", m.nlpp}};
}

Json clump_json(const ClumpReport& c) {
  Json clusters = Json::array();
  for (const auto& cluster : c.clusters)
    clusters.push_back(std::vector<Eigen::Index>(cluster.begin(), cluster.end()));
  return Json{{"effective_count", c.effective_count},
              {"min_pairwise_distance", c.min_pairwise_distance},
              {"clusters", clusters}};
}

Json matrix_json(const MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_json(const VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

std::string status_name(TrainingStatus s) {
  switch (s) {
    case TrainingStatus::CONVERGED: return "converged";
    case TrainingStatus::MAX_ITERATIONS: return "max-iterations";
    case TrainingStatus::LINE_SEARCH_FAILURE: return "line-search-failure";
  }
  return "?";
}

Json trace_summary_json(const TrainingTrace& t) {
  return Json{{"seed", t.seed},
              {"status", status_name(t.status)},
              {"iterations", t.iterations.size() - 1},
              {"initial_objective", t.iterations.front().objective.total},
              {"final_objective", t.final_objective()}};
}

Json trace_full_json(const TrainingTrace& t) {
  Json iters = Json::array();
  for (const auto& rec : t.iterations) {
    Json j{{"iteration", rec.iteration},
           {"objective", breakdown_json(rec.objective)},
           {"gradient_norm", rec.gradient_norm},
           {"noise_variance", rec.hyper.noise_variance()}};
    if (std::isfinite(rec.z_min_pairwise_distance))
      j["z_min_pairwise_distance"] = rec.z_min_pairwise_distance;
    iters.push_back(std::move(j));
  }
  Json j = trace_summary_json(t);
  j["records"] = std::move(iters);
  return j;
}

// -------------------------------------------------------------- config

Json optimizer_defaults() {
  return Json{{"max_iterations", 1000},  {"gradient_tolerance", 1e-6},
              {"objective_tolerance", 1e-9}, {"freeze_hyper_iterations", 0},
              {"restarts", 1},           {"seed", 0}};
}

Json synthetic_defaults() {
  return Json{{"dim", 1},           {"n_train", 256},
              {"n_test", 256},      {"signal_variance", 1.0},
              {"lengthscale", 0.6}, {"noise_variance", 0.1},
              {"input", "gaussian"}, {"input_scale", 1.0},
              {"seed", nullptr}};
}

Json data_defaults() {
  return Json{{"path", "data/toy1d_200.txt"},
              {"outputs_path", nullptr},
              {"input_columns", nullptr},
              {"target_column", nullptr},
              {"test_path", nullptr},
              {"test_outputs_path", nullptr},
              {"subset", nullptr},
              {"standardize", false},
              {"synthetic", nullptr}};
}

}  // namespace

Json default_config(const std::string& experiment) {
  Json c{{"experiment", experiment},
         {"seed", 0},
         {"data", data_defaults()},
         {"optimizer", optimizer_defaults()}};

  if (experiment == "fit") {
    c["methods"] = {"full", "fitc", "vfe"};
    c["m"] = 8;
    c["init"] = "random-subset";
  } else if (experiment == "sweep-add") {
    c["methods"] = {"fitc", "vfe"};
    c["m"] = 7;
    c["init"] = "random-subset";
    c["sweep"] = Json{{"points", 200}, {"include_inducing", true}};
  } else if (experiment == "clump-study") {
    c["methods"] = {"fitc", "vfe"};
    c["m"] = 15;
    c["init"] = "random-subset";
    c["clump_tau"] = 1e-2;
  } else if (experiment == "recover-zx") {
    c["methods"] = {"vfe", "fitc"};
    c["data"]["subset"] = Json{{"n", 100}, {"rule", "first"}, {"seed", 0}};
    c["clump_tau"] = 1e-3;
    c["optimizer"]["objective_tolerance"] = 1e-12;
    c["optimizer"]["gradient_tolerance"] = 1e-9;
    c["optimizer"]["max_iterations"] = 2000;
  } else if (experiment == "regime-study") {
    c["methods"] = {"fitc", "vfe"};
    c["m_list"] = {16, 32, 64, 128, 256, 512, 1024};
    c["init"] = "random-subset";
    c["chain_initialization"] = true;
    c["data"]["synthetic"] =
        Json{{"dim", 4},           {"n_train", 1024},
             {"n_test", 1024},     {"signal_variance", 1.0},
             {"lengthscale", 1.5}, {"noise_variance", 0.01},
             {"input", "gaussian"}, {"input_scale", 1.0},
             {"seed", nullptr}};
    c["optimizer"]["max_iterations"] = 250;
    c["optimizer"]["gradient_tolerance"] = 1e-5;
    // plateau-sensitive stop: the ladder reads off where the optimizer
    // settles, not where exhaustive descent would end up
    c["optimizer"]["objective_tolerance"] = 1e-6;
    c["optimizer"]["restarts"] = 3;
  } else if (experiment == "ard-study") {
    c["m"] = 40;
    c["init"] = "random-subset";
    c["data"]["standardize"] = true;
    c["ard"] = Json{{"sod_n", 2048},
                    {"train_n", nullptr},
                    {"test_n", 1024},
                    {"freeze_iterations", 200},
                    {"top_lengthscales", 10}};
    c["optimizer"]["max_iterations"] = 500;
  } else {
    throw InvalidArgumentError("unknown experiment '" + experiment + "'");
  }
  return c;
}

Json resolve_config(const std::string& experiment, const Json& user) {
  Json config = default_config(experiment);
  if (!user.is_null() && !user.empty()) {
    if (!user.is_object()) config_error("", "top level must be an object");
    Json overlay = user;
    if (overlay.contains("experiment")) {
      if (overlay["experiment"] != experiment)
        config_error("experiment", "file says '" +
                                       overlay["experiment"].get<std::string>() +
                                       "' but the command is '" + experiment + "'");
      overlay.erase("experiment");
    }
    deep_merge(config, overlay, "");
  }

  // validation of the resolved result
  if (config.contains("m")) {
    if (!config["m"].is_number_integer() || config["m"].get<int>() < 1)
      config_error("m", "must be a positive integer");
  }
  if (config.contains("m_list")) {
    if (!config["m_list"].is_array() || config["m_list"].empty())
      config_error("m_list", "must be a non-empty array");
    for (const auto& v : config["m_list"])
      if (!v.is_number_integer() || v.get<int>() < 1)
        config_error("m_list", "entries must be positive integers");
  }
  if (config.contains("methods")) {
    if (!config["methods"].is_array() || config["methods"].empty())
      config_error("methods", "must be a non-empty array");
    for (const auto& m : config["methods"]) method_from_name(m.get<std::string>());
  }
  if (config.contains("init")) {
    const std::string init = config["init"];
    if (init != "random-subset" && init != "kmeans")
      config_error("init", "must be 'random-subset' or 'kmeans'");
  }
  const Json& opt = config["optimizer"];
  if (opt["max_iterations"].get<int>() < 1)
    config_error("optimizer.max_iterations", "must be >= 1");
  if (opt["restarts"].get<int>() < 1)
    config_error("optimizer.restarts", "must be >= 1");
  return config;
}

namespace {

OptimizerConfig optimizer_from(const Json& j, std::uint64_t base_seed) {
  OptimizerConfig c;
  c.max_iterations = j["max_iterations"].get<int>();
  c.gradient_tolerance = j["gradient_tolerance"].get<double>();
  c.objective_tolerance = j["objective_tolerance"].get<double>();
  c.freeze_hyper_iterations = j["freeze_hyper_iterations"].get<int>();
  c.restarts = j["restarts"].get<int>();
  c.seed = j["seed"].is_null() ? base_seed : j["seed"].get<std::uint64_t>();
  c.validate();
  return c;
}

InitScheme init_from(const Json& config) {
  return config.value("init", "random-subset") == std::string("kmeans")
             ? InitScheme::kmeans()
             : InitScheme::random_subset();
}

struct ResolvedData {
  Dataset train;
  std::optional<Dataset> test;
  std::string hash;
};

ResolvedData resolve_data(Json& dcfg, std::uint64_t base_seed) {
  ResolvedData out;
  if (!dcfg["synthetic"].is_null()) {
    // partial synthetic specs are allowed; fill the canonical defaults
    Json filled = synthetic_defaults();
    deep_merge(filled, dcfg["synthetic"], "data.synthetic");
    dcfg["synthetic"] = std::move(filled);
    Json& syn = dcfg["synthetic"];
    SyntheticSpec spec;
    spec.dim = syn["dim"].get<int>();
    spec.n_train = syn["n_train"].get<Eigen::Index>();
    spec.n_test = syn["n_test"].get<Eigen::Index>();
    spec.hyper = Hyperparameters::isotropic(
        syn["signal_variance"].get<double>(), syn["lengthscale"].get<double>(),
        syn["noise_variance"].get<double>(), spec.dim);
    spec.input_distribution = syn["input"] == "uniform"
                                  ? SyntheticSpec::InputDistribution::UNIFORM
                                  : SyntheticSpec::InputDistribution::GAUSSIAN;
    spec.input_scale = syn["input_scale"].get<double>();
    if (syn["seed"].is_null()) syn["seed"] = base_seed;  // echo the draw seed
    spec.seed = syn["seed"].get<std::uint64_t>();
    auto draw = sample_gp(spec);
    out.train = std::move(draw.train);
    out.test = std::move(draw.test);
  } else {
    DataSource src;
    src.path = dcfg["path"].get<std::string>();
    if (!dcfg["outputs_path"].is_null())
      src.outputs_path = dcfg["outputs_path"].get<std::string>();
    if (!dcfg["input_columns"].is_null())
      src.input_columns = dcfg["input_columns"].get<std::vector<int>>();
    if (!dcfg["target_column"].is_null())
      src.target_column = dcfg["target_column"].get<int>();
    out.train = load_xy(src);
    if (!dcfg["test_path"].is_null()) {
      DataSource tsrc = src;
      tsrc.path = dcfg["test_path"].get<std::string>();
      tsrc.outputs_path.reset();
      if (!dcfg["test_outputs_path"].is_null())
        tsrc.outputs_path = dcfg["test_outputs_path"].get<std::string>();
      out.test = load_xy(tsrc);
    }
  }

  if (!dcfg["subset"].is_null()) {
    const Json& sub = dcfg["subset"];
    const std::string rule = sub.value("rule", "first");
    SubsetRule r = SubsetRule::FIRST;
    if (rule == "every-other") r = SubsetRule::EVERY_OTHER;
    else if (rule == "seeded-random") r = SubsetRule::SEEDED_RANDOM;
    else if (rule != "first") config_error("data.subset.rule", "unknown rule");
    out.train = subset(out.train, sub["n"].get<Eigen::Index>(), r,
                       sub.value("seed", std::uint64_t{0}));
  }

  if (dcfg["standardize"].get<bool>()) {
    auto [std_train, transform] = standardize(out.train);
    out.train = std::move(std_train);
    if (out.test) out.test = transform.apply(*out.test);
  }
  out.hash = dataset_hash(out.train);
  return out;
}

/// Predictive series over a 1-D grid for plotting.
Json prediction_series(const SparseModel& model, const Dataset& data) {
  if (data.dim() != 1) return nullptr;
  const double ell = model.hyper().lengthscales()(0);
  const double lo = data.X.minCoeff() - ell;
  const double hi = data.X.maxCoeff() + ell;
  const Eigen::Index n = 400;
  MatrixXd grid(n, 1);
  for (Eigen::Index i = 0; i < n; ++i)
    grid(i, 0) = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
  const auto pred = predict(model, grid);
  return Json{{"x", vector_json(grid.col(0))},
              {"mean", vector_json(pred.mean)},
              {"observation_std",
               vector_json(pred.observation_variance.array().sqrt().matrix())}};
}

MetricsReport model_metrics(const SparseModel& model, const Dataset& on,
                            double nlml_per_datum) {
  return evaluate(predict(model, on.X), on.y, nlml_per_datum);
}

// ------------------------------------------------------------ experiments

struct ExperimentContext {
  Json& config;
  ResolvedData& data;
  int jobs = 1;
  Json results;                 // manifest["results"]
  std::map<std::string, Json> method_files;  // results_<name>.json payloads
  bool partial = false;
};

void run_fit(ExperimentContext& ctx) {
  const std::uint64_t seed = ctx.config["seed"].get<std::uint64_t>();
  OptimizerConfig opt = optimizer_from(ctx.config["optimizer"], seed);
  opt.jobs = ctx.jobs;
  const auto m = ctx.config["m"].get<Eigen::Index>();
  const InitScheme init = init_from(ctx.config);

  std::vector<SparseModel> trained_models;
  Json per_method;
  for (const auto& name : ctx.config["methods"]) {
    const Method method = method_from_name(name.get<std::string>());
    try {
      const auto result =
          optimize_multistart(ctx.data.train, m, method, opt, init);
      const auto& best = result.best;
      const double nlml_n = nlml(best).total / ctx.data.train.size();

      Json entry;
      entry["objective"] = breakdown_json(nlml(best));
      entry["hyper"] = hyper_json(best.hyper());
      entry["train_metrics"] =
          metrics_json(model_metrics(best, ctx.data.train, nlml_n));
      if (ctx.data.test)
        entry["test_metrics"] =
            metrics_json(model_metrics(best, *ctx.data.test, nlml_n));
      if (best.is_sparse())
        entry["clump"] = clump_json(
            detect_clumps(best.inducing(), best.hyper().lengthscales()));
      entry["best_restart"] = result.best_restart;
      Json restarts = Json::array();
      for (const auto& t : result.traces) restarts.push_back(trace_summary_json(t));
      entry["restarts"] = std::move(restarts);
      per_method[name.get<std::string>()] = std::move(entry);

      Json file;
      file["method"] = name;
      if (best.is_sparse()) file["z_final"] = matrix_json(best.inducing().Z);
      file["trace"] = trace_full_json(result.traces[result.best_restart]);
      file["predictions"] = prediction_series(best, ctx.data.train);
      ctx.method_files[name.get<std::string>()] = std::move(file);
      trained_models.push_back(best);
    } catch (const std::exception& e) {
      per_method[name.get<std::string>()] = Json{{"error", e.what()}};
      ctx.partial = true;
    }
  }
  ctx.results["per_method"] = std::move(per_method);

  // noise-bias flags relative to the FULL model, when it is in the mix
  if (trained_models.size() >= 2) {
    const auto report = noise_bias_report(trained_models);
    Json entries = Json::array();
    for (const auto& e : report.entries)
      entries.push_back(Json{{"method", method_name(e.method)},
                             {"sigma_n", e.noise_std},
                             {"ratio_to_full", e.ratio_to_full},
                             {"underestimation", e.underestimation_flag},
                             {"overestimation", e.overestimation_flag},
                             {"severe", e.severe_flag}});
    ctx.results["noise_bias"] = std::move(entries);
  }
}

void run_sweep_add(ExperimentContext& ctx) {
  const std::uint64_t seed = ctx.config["seed"].get<std::uint64_t>();
  OptimizerConfig opt = optimizer_from(ctx.config["optimizer"], seed);
  opt.jobs = ctx.jobs;
  const auto m = ctx.config["m"].get<Eigen::Index>();
  const InitScheme init = init_from(ctx.config);
  const auto points = ctx.config["sweep"]["points"].get<Eigen::Index>();
  const bool include_inducing = ctx.config["sweep"]["include_inducing"].get<bool>();

  Json per_method;
  for (const auto& name : ctx.config["methods"]) {
    const Method method = method_from_name(name.get<std::string>());
    try {
      const auto result =
          optimize_multistart(ctx.data.train, m, method, opt, init);
      const auto best = result.best;

      MatrixXd grid = default_sweep_grid(ctx.data.train, best.hyper(), points);
      if (include_inducing) {
        const Eigen::Index g = grid.rows();
        grid.conservativeResize(g + best.inducing().size(), grid.cols());
        grid.bottomRows(best.inducing().size()) = best.inducing().Z;
      }
      const auto sweep = addition_sweep(best, grid);

      Json entry;
      entry["objective"] = breakdown_json(sweep.baseline);
      entry["hyper"] = hyper_json(best.hyper());
      int n_errors = 0;
      double dmin = 0.0, dmax = 0.0;
      for (const auto& cand : sweep.candidates) {
        if (cand.error) { ++n_errors; continue; }
        dmin = std::min(dmin, cand.delta_total);
        dmax = std::max(dmax, cand.delta_total);
      }
      entry["sweep_summary"] =
          Json{{"candidates", sweep.candidates.size()},
               {"min_delta_total", dmin},
               {"max_delta_total", dmax},
               {"errors", n_errors}};
      per_method[name.get<std::string>()] = std::move(entry);

      Json file;
      file["method"] = name;
      file["z_final"] = matrix_json(best.inducing().Z);
      Json sx = Json::array(), st = Json::array(), sd = Json::array(),
           sc = Json::array(), str = Json::array(), serr = Json::array();
      for (const auto& cand : sweep.candidates) {
        sx.push_back(cand.location(0));
        st.push_back(cand.delta_total);
        sd.push_back(cand.delta_data_fit);
        sc.push_back(cand.delta_complexity);
        str.push_back(cand.delta_trace);
        serr.push_back(cand.error ? Json(*cand.error) : Json(nullptr));
      }
      file["sweep"] = Json{{"x", sx},          {"delta_total", st},
                           {"delta_data_fit", sd}, {"delta_complexity", sc},
                           {"delta_trace", str},   {"errors", serr}};
      file["predictions"] = prediction_series(best, ctx.data.train);
      file["trace"] = trace_full_json(result.traces[result.best_restart]);
      ctx.method_files[name.get<std::string>()] = std::move(file);
    } catch (const std::exception& e) {
      per_method[name.get<std::string>()] = Json{{"error", e.what()}};
      ctx.partial = true;
    }
  }
  ctx.results["per_method"] = std::move(per_method);
}

void run_clump_study(ExperimentContext& ctx) {
  const std::uint64_t seed = ctx.config["seed"].get<std::uint64_t>();
  OptimizerConfig opt = optimizer_from(ctx.config["optimizer"], seed);
  opt.jobs = ctx.jobs;
  const auto m = ctx.config["m"].get<Eigen::Index>();
  const double tau = ctx.config["clump_tau"].get<double>();
  const InitScheme init = init_from(ctx.config);

  Json per_method;
  for (const auto& name : ctx.config["methods"]) {
    const Method method = method_from_name(name.get<std::string>());
    try {
      const auto [z0, h0] = initialize(ctx.data.train, m, init, opt.seed);
      const auto result =
          optimize_multistart(ctx.data.train, m, method, opt, init);
      const auto& best = result.best;
      const auto clumps =
          detect_clumps(best.inducing(), best.hyper().lengthscales(), tau);

      Json entry;
      entry["objective"] = breakdown_json(nlml(best));
      entry["hyper"] = hyper_json(best.hyper());
      entry["clump"] = clump_json(clumps);
      entry["train_metrics"] = metrics_json(model_metrics(
          best, ctx.data.train, nlml(best).total / ctx.data.train.size()));
      per_method[name.get<std::string>()] = std::move(entry);

      Json file;
      file["method"] = name;
      file["z_init"] = matrix_json(z0.Z);
      file["z_final"] = matrix_json(best.inducing().Z);
      file["predictions"] = prediction_series(best, ctx.data.train);
      file["trace"] = trace_full_json(result.traces[result.best_restart]);
      ctx.method_files[name.get<std::string>()] = std::move(file);
    } catch (const std::exception& e) {
      per_method[name.get<std::string>()] = Json{{"error", e.what()}};
      ctx.partial = true;
    }
  }
  ctx.results["per_method"] = std::move(per_method);
}

void run_recover_zx(ExperimentContext& ctx) {
  const std::uint64_t seed = ctx.config["seed"].get<std::uint64_t>();
  OptimizerConfig opt = optimizer_from(ctx.config["optimizer"], seed);
  opt.jobs = ctx.jobs;
  const double tau = ctx.config["clump_tau"].get<double>();

  // Stage 1: the full GP optimum on this dataset.
  const auto full_result =
      optimize_multistart(ctx.data.train, 0, Method::FULL, opt);
  const auto& full_model = full_result.best;
  const auto full_objective = nlml(full_model);
  ctx.results["full"] = Json{{"objective", breakdown_json(full_objective)},
                             {"hyper", hyper_json(full_model.hyper())}};

  // Stage 2: sparse methods from Z = X at the full-GP hyperparameters.
  const InducingSet z_on_x{ctx.data.train.X};
  Json per_method;
  for (const auto& name : ctx.config["methods"]) {
    const Method method = method_from_name(name.get<std::string>());
    try {
      SparseModel model(ctx.data.train, full_model.hyper(), z_on_x, method);
      const auto initial = sparse_nlml(model);
      auto [trained, trace] = optimize(model, opt);
      const auto final_objective = nlml(trained);
      const auto clumps = detect_clumps(
          trained.inducing(), trained.hyper().lengthscales(), tau);

      Json entry;
      entry["initial_objective"] = initial.total;
      entry["final_objective"] = final_objective.total;
      entry["delta"] = final_objective.total - initial.total;
      entry["objective"] = breakdown_json(final_objective);
      entry["hyper"] = hyper_json(trained.hyper());
      entry["clump"] = clump_json(clumps);
      entry["status"] = status_name(trace.status);
      per_method[name.get<std::string>()] = std::move(entry);

      Json file;
      file["method"] = name;
      file["z_final"] = matrix_json(trained.inducing().Z);
      file["trace"] = trace_full_json(trace);
      file["predictions"] = prediction_series(trained, ctx.data.train);
      ctx.method_files[name.get<std::string>()] = std::move(file);
    } catch (const std::exception& e) {
      per_method[name.get<std::string>()] = Json{{"error", e.what()}};
      ctx.partial = true;
    }
  }
  ctx.results["per_method"] = std::move(per_method);
}

void run_regime_study(ExperimentContext& ctx) {
  const std::uint64_t seed = ctx.config["seed"].get<std::uint64_t>();
  OptimizerConfig opt = optimizer_from(ctx.config["optimizer"], seed);
  const bool chain = ctx.config["chain_initialization"].get<bool>();
  const Dataset& train = ctx.data.train;
  if (!ctx.data.test)
    config_error("data", "regime-study needs a test split");

  std::vector<Eigen::Index> ladder;
  for (const auto& v : ctx.config["m_list"]) {
    const auto m = v.get<Eigen::Index>();
    if (m <= train.size()) ladder.push_back(m);
  }
  if (ladder.empty()) config_error("m_list", "no rung fits the training set");

  // Full-GP reference.
  {
    OptimizerConfig fopt = opt;
    fopt.jobs = ctx.jobs;
    const auto full = optimize_multistart(train, 0, Method::FULL, fopt);
    const double nlml_n = nlml(full.best).total / train.size();
    ctx.results["full"] =
        Json{{"objective", breakdown_json(nlml(full.best))},
             {"hyper", hyper_json(full.best.hyper())},
             {"sigma_n", std::sqrt(full.best.hyper().noise_variance())},
             {"test_metrics",
              metrics_json(model_metrics(full.best, *ctx.data.test, nlml_n))}};
  }

  Json ladder_json = Json::array();
  std::map<std::string, std::optional<SparseModel>> previous_best;
  std::map<std::string, Json> rung_files;
  for (const auto& name : ctx.config["methods"])
    rung_files[name.get<std::string>()] = Json::array();

  for (std::size_t rung = 0; rung < ladder.size(); ++rung) {
    const Eigen::Index m = ladder[rung];
    Json rung_entry{{"m", m}};
    Json rung_methods;

    for (const auto& jname : ctx.config["methods"]) {
      const std::string name = jname.get<std::string>();
      const Method method = method_from_name(name);
      try {
        // Candidates: fresh seeded inits, plus (optionally) the previous
        // rung's solution grown by a nested random draw of extra points.
        struct Candidate {
          SparseModel model;
          TrainingTrace trace;
          bool chained = false;
        };
        std::vector<std::optional<Candidate>> finished(opt.restarts);

        // The chained candidate carries the previous rung's optimum plus
        // fresh points: for VFE/DTC the objective can only improve under
        // additions, so the ladder inherits that guarantee. FITC's return
        // toward the full GP at large M rides on local optima reached from
        // spread initializations, so it gets fresh starts only.
        const bool chain_method = chain && method != Method::FITC;

        parallel_runs(opt.restarts, ctx.jobs, [&](int r) {
          OptimizerConfig local = opt;
          local.seed = seed + 1000 * (rung + 1) + r;
          bool chained = false;
          SparseModel model = [&] {
            if (chain_method && r == opt.restarts - 1 && previous_best[name]) {
              const SparseModel& prev = *previous_best[name];
              const Eigen::Index grow = m - prev.inducing().size();
              MatrixXd z(m, train.dim());
              z.topRows(prev.inducing().size()) = prev.inducing().Z;
              Rng rng(local.seed);
              for (Eigen::Index i = 0; i < grow; ++i)
                z.row(prev.inducing().size() + i) = train.X.row(
                    static_cast<Eigen::Index>(rng.uniform_index(train.size())));
              chained = true;
              return SparseModel(train, prev.hyper(), InducingSet(z), method);
            }
            const auto [z0, h0] =
                initialize(train, m, init_from(ctx.config), local.seed);
            return SparseModel(train, h0, z0, method);
          }();
          auto [trained, trace] = optimize(model, local);
          finished[r] = Candidate{std::move(trained), std::move(trace), chained};
        });

        int best = 0;
        for (int r = 1; r < opt.restarts; ++r)
          if (finished[r]->trace.final_objective() <
              finished[best]->trace.final_objective())
            best = r;
        const SparseModel& bm = finished[best]->model;
        const double nlml_n = nlml(bm).total / train.size();

        Json entry;
        entry["objective"] = breakdown_json(nlml(bm));
        entry["sigma_n"] = std::sqrt(bm.hyper().noise_variance());
        entry["test_metrics"] =
            metrics_json(model_metrics(bm, *ctx.data.test, nlml_n));
        entry["best_restart"] = best;
        entry["best_was_chained"] = finished[best]->chained;
        Json finals = Json::array();
        for (int r = 0; r < opt.restarts; ++r)
          finals.push_back(finished[r]->trace.final_objective());
        entry["restart_finals"] = std::move(finals);
        rung_methods[name] = entry;

        Json file_entry{{"m", m}};
        file_entry["best"] = entry;
        file_entry["hyper"] = hyper_json(bm.hyper());
        rung_files[name].push_back(std::move(file_entry));

        previous_best[name] = bm;
      } catch (const std::exception& e) {
        rung_methods[name] = Json{{"error", e.what()}};
        previous_best[name].reset();
        ctx.partial = true;
      }
    }
    rung_entry["per_method"] = std::move(rung_methods);
    ladder_json.push_back(std::move(rung_entry));
  }
  ctx.results["ladder"] = std::move(ladder_json);
  for (auto& [name, rungs] : rung_files)
    ctx.method_files[name] = Json{{"method", name}, {"rungs", std::move(rungs)}};
}

void run_ard_study(ExperimentContext& ctx) {
  const std::uint64_t seed = ctx.config["seed"].get<std::uint64_t>();
  OptimizerConfig opt = optimizer_from(ctx.config["optimizer"], seed);
  opt.jobs = ctx.jobs;
  const auto m = ctx.config["m"].get<Eigen::Index>();
  const Json& ard = ctx.config["ard"];
  const InitScheme init = init_from(ctx.config);

  // Split train/test in file order when no explicit test set was given.
  Dataset train = ctx.data.train;
  Dataset test = [&] {
    if (ctx.data.test) return *ctx.data.test;
    const auto test_n = ard["test_n"].get<Eigen::Index>();
    const Eigen::Index total = train.size();
    if (test_n >= total)
      config_error("ard.test_n", "test split does not leave training data");
    const Eigen::Index train_n = ard["train_n"].is_null()
                                     ? total - test_n
                                     : ard["train_n"].get<Eigen::Index>();
    if (train_n + test_n > total)
      config_error("ard.train_n", "train + test exceeds the dataset");
    Dataset tr(train.X.topRows(train_n), train.y.head(train_n));
    Dataset te(train.X.middleRows(train_n, test_n),
               train.y.segment(train_n, test_n));
    train = std::move(tr);
    return te;
  }();

  const int top_k = ard["top_lengthscales"].get<int>();
  auto row_json = [&](const SparseModel& model, const TrainingTrace& trace) {
    const double nlml_n = nlml(model).total / train.size();
    VectorXd inv_ell = model.hyper().lengthscales().array().inverse();
    std::sort(inv_ell.data(), inv_ell.data() + inv_ell.size(),
              std::greater<double>());
    const int k = std::min<int>(top_k, static_cast<int>(inv_ell.size()));
    Json j;
    j["nlml_per_datum"] = nlml_n;
    j["sigma_n"] = std::sqrt(model.hyper().noise_variance());
    j["inverse_lengthscales"] =
        std::vector<double>(inv_ell.data(), inv_ell.data() + k);
    j["rmse"] = model_metrics(model, test, nlml_n).rmse;
    j["test_metrics"] = metrics_json(model_metrics(model, test, nlml_n));
    j["status"] = status_name(trace.status);
    j["hyper"] = hyper_json(model.hyper());
    return j;
  };

  Json rows;
  std::optional<SparseModel> fitc_model;

  // GP on a seeded random subset of the training data
  try {
    const auto sod_n = std::min(ard["sod_n"].get<Eigen::Index>(), train.size());
    const Dataset sod = subset(train, sod_n, SubsetRule::SEEDED_RANDOM, seed);
    SparseModel model(sod, default_hyper_init(sod));
    auto [trained, trace] = optimize(model, opt);
    rows["gp-sod"] = row_json(trained, trace);
    rows["gp-sod"]["n_train"] = sod_n;
  } catch (const std::exception& e) {
    rows["gp-sod"] = Json{{"error", e.what()}};
    ctx.partial = true;
  }

  // FITC and VFE variants at M inducing inputs
  auto sparse_row = [&](const std::string& label, Method method,
                        int freeze, const InitScheme& scheme) {
    try {
      OptimizerConfig local = opt;
      local.freeze_hyper_iterations = freeze;
      const auto result =
          optimize_multistart(train, m, method, local, scheme);
      rows[label] = row_json(result.best,
                             result.traces[result.best_restart]);
      if (label == "fitc") fitc_model = result.best;
    } catch (const std::exception& e) {
      rows[label] = Json{{"error", e.what()}};
      ctx.partial = true;
    }
  };

  sparse_row("fitc", Method::FITC, 0, init);
  sparse_row("vfe", Method::VFE, 0, init);
  sparse_row("vfe-frozen", Method::VFE, ard["freeze_iterations"].get<int>(), init);
  if (fitc_model) {
    sparse_row("vfe-init-fitc", Method::VFE, 0,
               InitScheme::from_model(*fitc_model));
  } else {
    rows["vfe-init-fitc"] = Json{{"error", "fitc row failed; no initializer"}};
    ctx.partial = true;
  }

  ctx.results["rows"] = std::move(rows);
  ctx.results["n_train"] = train.size();
  ctx.results["n_test"] = test.size();
}

}  // namespace

RunOutcome run_experiment(const Json& config_in, const std::string& out_dir,
                          int jobs) {
  Json config = config_in;
  const std::string experiment = config.at("experiment").get<std::string>();
  const auto t0 = std::chrono::steady_clock::now();

  ResolvedData data = resolve_data(config["data"],
                                   config["seed"].get<std::uint64_t>());

  ExperimentContext ctx{config, data, jobs};
  if (experiment == "fit") run_fit(ctx);
  else if (experiment == "sweep-add") run_sweep_add(ctx);
  else if (experiment == "clump-study") run_clump_study(ctx);
  else if (experiment == "recover-zx") run_recover_zx(ctx);
  else if (experiment == "regime-study") run_regime_study(ctx);
  else if (experiment == "ard-study") run_ard_study(ctx);
  else throw InvalidArgumentError("unknown experiment '" + experiment + "'");

  const auto t1 = std::chrono::steady_clock::now();

  Json manifest;
  manifest["toolkit"] = "sgpkit";
  manifest["version"] = SGPKIT_VERSION;
  manifest["experiment"] = experiment;
  manifest["config"] = ctx.config;
  manifest["dataset_hash"] = data.hash;
  manifest["n_train"] = data.train.size();
  if (data.test) manifest["n_test"] = data.test->size();
  manifest["results"] = std::move(ctx.results);
  manifest["partial"] = ctx.partial;
  manifest["wall_clock_seconds"] =
      std::chrono::duration<double>(t1 - t0).count();

  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "manifest.json");
    out << manifest.dump(2) << '\n';
  }
  for (const auto& [name, payload] : ctx.method_files) {
    std::ofstream out(fs::path(out_dir) / ("results_" + name + ".json"));
    out << payload.dump(2) << '\n';
  }
  return {std::move(manifest), ctx.partial};
}

// ----------------------------------------------------------------- plots

namespace {

Json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open '" + path.string() + "'");
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded())
    throw IngestionError("'" + path.string() + "' is not valid JSON");
  return j;
}

void write_text(const fs::path& path, const std::string& text,
                std::vector<std::string>& written) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write '" + path.string() + "'");
  out << text;
  written.push_back(path.string());
}

std::string tsv_from_columns(const std::vector<std::string>& headers,
                             const std::vector<std::vector<double>>& columns) {
  std::string text = "#";
  for (std::size_t i = 0; i < headers.size(); ++i)
    text += (i ? "\t" : " ") + headers[i];
  text += '\n';
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) text += '\t';
      text += fmt17(columns[c][r]);
    }
    text += '\n';
  }
  return text;
}

constexpr const char* kSweepPlotScript = R"(#!/usr/bin/env python3
"""Plot the inducing-input addition sweep: change in objective (and its
data-fit / complexity / trace components) against candidate location."""
import sys, pathlib
import numpy as np
import matplotlib.pyplot as plt

here = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else ".")
fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharey=True)
for ax, method in zip(axes, ("fitc", "vfe")):
    path = here / f"sweep_{method}.tsv"
    if not path.exists():
        continue
    x, dt, dd, dc, dtr = np.loadtxt(path, unpack=True)
    order = np.argsort(x)
    ax.plot(x[order], dt[order], "k-", label="total")
    ax.plot(x[order], dd[order], "C0--", label="data fit")
    ax.plot(x[order], dc[order], "C1--", label="complexity")
    ax.plot(x[order], dtr[order], "C2--", label="trace")
    ax.axhline(0.0, color="gray", lw=0.5)
    ax.set_title(method.upper())
    ax.set_xlabel("candidate inducing input")
axes[0].set_ylabel("change in objective")
axes[0].legend()
fig.tight_layout()
fig.savefig(here / "sweep.png", dpi=150)
print(here / "sweep.png")
)";

constexpr const char* kFitPlotScript = R"(#!/usr/bin/env python3
"""Plot predictive mean and 2-sigma band per method over the training data."""
import sys, pathlib
import numpy as np
import matplotlib.pyplot as plt

here = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else ".")
data = np.loadtxt(here / "train_data.tsv") if (here / "train_data.tsv").exists() else None
preds = sorted(here.glob("predictions_*.tsv"))
fig, axes = plt.subplots(1, max(len(preds), 1), figsize=(5.5 * max(len(preds), 1), 4),
                         sharey=True, squeeze=False)
for ax, path in zip(axes[0], preds):
    x, mean, sd = np.loadtxt(path, unpack=True)
    if data is not None:
        ax.plot(data[:, 0], data[:, 1], "k.", ms=3, alpha=0.5)
    ax.plot(x, mean, "r-")
    ax.fill_between(x, mean - 2 * sd, mean + 2 * sd, color="r", alpha=0.15)
    zpath = here / path.name.replace("predictions_", "inducing_")
    if zpath.exists():
        z = np.atleast_1d(np.loadtxt(zpath))
        ax.plot(z, np.full_like(z, ax.get_ylim()[0]), "rx", ms=8)
    ax.set_title(path.stem.replace("predictions_", "").upper())
fig.tight_layout()
fig.savefig(here / "fit.png", dpi=150)
print(here / "fit.png")
)";

constexpr const char* kRegimePlotScript = R"(#!/usr/bin/env python3
"""Four panels against the number of inducing inputs: NLML, optimized noise,
NLPP and SMSE, with the full-GP reference as a horizontal line."""
import sys, json, pathlib
import numpy as np
import matplotlib.pyplot as plt

here = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else ".")
table = np.loadtxt(here / "regime.tsv")
refs = json.loads((here / "regime_full_reference.json").read_text())
cols = {"nlml": (1, 3), "sigma_n": (2, 4), "nlpp": (5, 7), "smse": (6, 8)}
names = ["nlml", "sigma_n", "nlpp", "smse"]
fig, axes = plt.subplots(1, 4, figsize=(18, 4))
for ax, key in zip(axes, names):
    fitc_col, vfe_col = cols[key]
    ax.plot(table[:, 0], table[:, fitc_col], "o-", label="FITC")
    ax.plot(table[:, 0], table[:, vfe_col], "s-", label="VFE")
    if key in refs:
        ax.axhline(refs[key], color="gray", ls="--", label="full GP")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("inducing inputs")
    ax.set_title(key)
axes[0].legend()
fig.tight_layout()
fig.savefig(here / "regime.png", dpi=150)
print(here / "regime.png")
)";

constexpr const char* kArdPlotScript = R"(#!/usr/bin/env python3
"""Bar chart of the dominant inverse lengthscales per training variant."""
import sys, pathlib
import numpy as np
import matplotlib.pyplot as plt

here = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else ".")
rows = []
with open(here / "ard_inverse_lengthscales.tsv") as fh:
    for line in fh:
        if line.startswith("#") or not line.strip():
            continue
        name, *vals = line.split()
        rows.append((name, np.array([float(v) for v in vals])))
fig, axes = plt.subplots(1, len(rows), figsize=(3 * len(rows), 3), sharey=True)
for ax, (name, vals) in zip(np.atleast_1d(axes), rows):
    ax.bar(np.arange(len(vals)), vals)
    ax.set_title(name)
fig.tight_layout()
fig.savefig(here / "ard.png", dpi=150)
print(here / "ard.png")
)";

}  // namespace

std::vector<std::string> emit_plots(const std::string& run_dir,
                                    const std::string& out_dir) {
  const fs::path run(run_dir);
  const Json manifest = load_json(run / "manifest.json");
  if (manifest.empty() || !manifest.contains("experiment"))
    throw IngestionError("manifest at '" + run_dir + "' is empty or invalid");
  const std::string experiment = manifest["experiment"].get<std::string>();
  const Json& results = manifest.at("results");

  std::vector<std::string> written;
  fs::create_directories(out_dir);
  const fs::path out(out_dir);

  auto emit_predictions = [&](const std::string& method) {
    const fs::path src = run / ("results_" + method + ".json");
    if (!fs::exists(src)) return;
    const Json file = load_json(src);
    if (!file.contains("predictions") || file["predictions"].is_null()) return;
    const Json& p = file["predictions"];
    write_text(out / ("predictions_" + method + ".tsv"),
               tsv_from_columns({"x", "mean", "observation_std"},
                                {p["x"].get<std::vector<double>>(),
                                 p["mean"].get<std::vector<double>>(),
                                 p["observation_std"].get<std::vector<double>>()}),
               written);
    if (file.contains("z_final")) {
      std::string ztext;
      for (const auto& row : file["z_final"])
        ztext += fmt17(row[0].get<double>()) + "\n";
      write_text(out / ("inducing_" + method + ".tsv"), ztext, written);
    }
  };

  auto emit_train_data = [&] {
    const Json& cfg = manifest["config"]["data"];
    if (cfg["synthetic"].is_null() && manifest["config"].contains("data")) {
      try {
        Json dcfg = cfg;
        const auto resolved =
            resolve_data(dcfg, manifest["config"]["seed"].get<std::uint64_t>());
        if (resolved.train.dim() != 1) return;
        std::string text;
        for (Eigen::Index i = 0; i < resolved.train.size(); ++i)
          text += fmt17(resolved.train.X(i, 0)) + "\t" +
                  fmt17(resolved.train.y(i)) + "\n";
        write_text(out / "train_data.tsv", text, written);
      } catch (const std::exception&) {
        // plotting data echo is best-effort; the series files still stand
      }
    }
  };

  if (experiment == "sweep-add") {
    for (const auto& [method, entry] : results.at("per_method").items()) {
      if (entry.contains("error")) continue;
      const Json file = load_json(run / ("results_" + method + ".json"));
      const Json& s = file.at("sweep");
      write_text(out / ("sweep_" + method + ".tsv"),
                 tsv_from_columns({"x", "delta_total", "delta_data_fit",
                                   "delta_complexity", "delta_trace"},
                                  {s["x"].get<std::vector<double>>(),
                                   s["delta_total"].get<std::vector<double>>(),
                                   s["delta_data_fit"].get<std::vector<double>>(),
                                   s["delta_complexity"].get<std::vector<double>>(),
                                   s["delta_trace"].get<std::vector<double>>()}),
                 written);
      emit_predictions(method);
    }
    emit_train_data();
    write_text(out / "plot_sweep.py", kSweepPlotScript, written);
  } else if (experiment == "fit" || experiment == "clump-study" ||
             experiment == "recover-zx") {
    for (const auto& [method, entry] : results.at("per_method").items()) {
      if (entry.contains("error")) continue;
      emit_predictions(method);
    }
    emit_train_data();
    write_text(out / "plot_fit.py", kFitPlotScript, written);
    if (experiment == "recover-zx") {
      std::string text = "# method\tinitial\tfinal\n";
      for (const auto& [method, entry] : results.at("per_method").items()) {
        if (entry.contains("error")) continue;
        text += method + "\t" + fmt17(entry["initial_objective"].get<double>()) +
                "\t" + fmt17(entry["final_objective"].get<double>()) + "\n";
      }
      write_text(out / "recover.tsv", text, written);
    }
  } else if (experiment == "regime-study") {
    std::vector<std::vector<double>> cols(9);
    for (const auto& rung : results.at("ladder")) {
      const Json& pm = rung.at("per_method");
      if (!pm.contains("fitc") || !pm.contains("vfe")) continue;
      if (pm["fitc"].contains("error") || pm["vfe"].contains("error")) continue;
      cols[0].push_back(rung["m"].get<double>());
      cols[1].push_back(pm["fitc"]["objective"]["total"].get<double>());
      cols[2].push_back(pm["fitc"]["sigma_n"].get<double>());
      cols[3].push_back(pm["vfe"]["objective"]["total"].get<double>());
      cols[4].push_back(pm["vfe"]["sigma_n"].get<double>());
      cols[5].push_back(pm["fitc"]["test_metrics"]["nlpp"].get<double>());
      cols[6].push_back(pm["fitc"]["test_metrics"]["smse"].get<double>());
      cols[7].push_back(pm["vfe"]["test_metrics"]["nlpp"].get<double>());
      cols[8].push_back(pm["vfe"]["test_metrics"]["smse"].get<double>());
    }
    write_text(out / "regime.tsv",
               tsv_from_columns({"m", "fitc_nlml", "fitc_sigma_n", "vfe_nlml",
                                 "vfe_sigma_n", "fitc_nlpp", "fitc_smse",
                                 "vfe_nlpp", "vfe_smse"},
                                cols),
               written);
    const Json& full = results.at("full");
    Json refs{{"nlml", full["objective"]["total"]},
              {"sigma_n", full["sigma_n"]},
              {"nlpp", full["test_metrics"]["nlpp"]},
              {"smse", full["test_metrics"]["smse"]}};
    write_text(out / "regime_full_reference.json", refs.dump(2) + "\n", written);
    write_text(out / "plot_regime.py", kRegimePlotScript, written);
  } else if (experiment == "ard-study") {
    std::string summary = "# row\tnlml_per_datum\tsigma_n\trmse\n";
    std::string inv = "# row\tinverse_lengthscales...\n";
    for (const auto& [name, row] : results.at("rows").items()) {
      if (row.contains("error")) continue;
      summary += name + "\t" + fmt17(row["nlml_per_datum"].get<double>()) + "\t" +
                 fmt17(row["sigma_n"].get<double>()) + "\t" +
                 fmt17(row["rmse"].get<double>()) + "\n";
      inv += name;
      for (const auto& v : row["inverse_lengthscales"])
        inv += "\t" + fmt17(v.get<double>());
      inv += "\n";
    }
    write_text(out / "ard.tsv", summary, written);
    write_text(out / "ard_inverse_lengthscales.tsv", inv, written);
    write_text(out / "plot_ard.py", kArdPlotScript, written);
  } else {
    throw InvalidArgumentError("emit_plots: unknown experiment '" + experiment + "'");
  }
  return written;
}

}  // namespace sgp
