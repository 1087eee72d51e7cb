// Python bindings for the sgpkit core: datasets, models, the unified NLML
// with gradients, training, diagnostics and the synthetic sampler.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sgp/data_io.hpp"
#include "sgp/diagnostics.hpp"
#include "sgp/model.hpp"
#include "sgp/training.hpp"

namespace py = pybind11;
using namespace sgp;

namespace {

SparseModel make_model(const Dataset& data, const Hyperparameters& hyper,
                       std::optional<MatrixXd> z, const std::string& method,
                       double initial_jitter) {
  JitterPolicy policy;
  policy.initial_jitter = initial_jitter;
  const Method m = method_from_name(method);
  if (m == Method::FULL) {
    if (z) throw InvalidArgumentError("full model takes no inducing inputs");
    return SparseModel(data, hyper, policy);
  }
  if (!z) throw InvalidArgumentError("sparse model needs inducing inputs");
  return SparseModel(data, hyper, InducingSet(*z), m, policy);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "sparse Gaussian process regression (FITC / VFE / DTC / exact)";

  py::register_exception<InvalidArgumentError>(m, "InvalidArgumentError",
                                               PyExc_ValueError);
  py::register_exception<NotPositiveDefiniteError>(m, "NotPositiveDefiniteError",
                                                   PyExc_ArithmeticError);
  py::register_exception<IngestionError>(m, "IngestionError", PyExc_IOError);

  py::class_<Hyperparameters>(m, "Hyperparameters")
      .def(py::init([](double signal_variance, const VectorXd& lengthscales,
                       double noise_variance) {
             return Hyperparameters::from_values(signal_variance, lengthscales,
                                                 noise_variance);
           }),
           py::arg("signal_variance"), py::arg("lengthscales"),
           py::arg("noise_variance"))
      .def_property_readonly("signal_variance", &Hyperparameters::signal_variance)
      .def_property_readonly("lengthscales", &Hyperparameters::lengthscales)
      .def_property_readonly("noise_variance", &Hyperparameters::noise_variance)
      .def("__repr__", [](const Hyperparameters& h) {
        return "Hyperparameters(signal_variance=" +
               std::to_string(h.signal_variance()) +
               ", noise_variance=" + std::to_string(h.noise_variance()) + ")";
      });

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<MatrixXd, VectorXd>(), py::arg("X"), py::arg("y"))
      .def_readonly("X", &Dataset::X)
      .def_readonly("y", &Dataset::y)
      .def("__len__", &Dataset::size);

  py::class_<NlmlBreakdown>(m, "NlmlBreakdown")
      .def_readonly("constant", &NlmlBreakdown::constant)
      .def_readonly("data_fit", &NlmlBreakdown::data_fit)
      .def_readonly("complexity_penalty", &NlmlBreakdown::complexity_penalty)
      .def_readonly("trace_term", &NlmlBreakdown::trace_term)
      .def_readonly("total", &NlmlBreakdown::total)
      .def("__repr__", [](const NlmlBreakdown& b) {
        return "NlmlBreakdown(total=" + std::to_string(b.total) + ")";
      });

  py::class_<PredictiveDistribution>(m, "PredictiveDistribution")
      .def_readonly("mean", &PredictiveDistribution::mean)
      .def_readonly("latent_variance", &PredictiveDistribution::latent_variance)
      .def_readonly("observation_variance",
                    &PredictiveDistribution::observation_variance);

  py::class_<SparseModel>(m, "Model")
      .def(py::init(&make_model), py::arg("data"), py::arg("hyper"),
           py::arg("inducing") = std::nullopt, py::arg("method") = "vfe",
           py::arg("initial_jitter") = 1e-6)
      .def_property_readonly("method",
                             [](const SparseModel& s) { return method_name(s.method()); })
      .def_property_readonly("hyper", &SparseModel::hyper)
      .def_property_readonly(
          "inducing",
          [](const SparseModel& s) -> std::optional<MatrixXd> {
            if (!s.is_sparse()) return std::nullopt;
            return s.inducing().Z;
          })
      .def_property_readonly("applied_jitter", [](const SparseModel& s) {
        if (!s.is_sparse()) return 0.0;
        return factorize(s).applied_jitter;
      });

  m.def("nlml", &nlml, py::arg("model"),
        "Negative log marginal likelihood breakdown for the model's method.");
  m.def(
      "nlml_gradient",
      [](const SparseModel& model) {
        const auto g = nlml_gradient(model);
        return py::make_tuple(g.breakdown, g.grad_log_hyper, g.grad_inducing);
      },
      py::arg("model"),
      "Breakdown plus gradients w.r.t. [log s_f^2, log ell, log sigma_n^2] "
      "and the inducing inputs.");
  m.def("predict", &predict, py::arg("model"), py::arg("Xstar"));
  m.def(
      "heteroscedastic_diag",
      [](const MatrixXd& points, const MatrixXd& z, const Hyperparameters& h) {
        return heteroscedastic_diag(points, InducingSet(z), h);
      },
      py::arg("points"), py::arg("inducing"), py::arg("hyper"),
      "diag[K_ff - Q_ff] at the given points.");

  py::class_<MetricsReport>(m, "MetricsReport")
      .def_readonly("nlml_per_datum", &MetricsReport::nlml_per_datum)
      .def_readonly("rmse", &MetricsReport::rmse)
      .def_readonly("smse", &MetricsReport::smse)
      .def_readonly("nlpp", &MetricsReport::nlpp);

  m.def(
      "evaluate",
      [](const PredictiveDistribution& pred, const VectorXd& y_test,
         double nlml_per_datum) { return evaluate(pred, y_test, nlml_per_datum); },
      py::arg("pred"), py::arg("y_test"), py::arg("nlml_per_datum") = 0.0);

  py::class_<TrainingTrace>(m, "TrainingTrace")
      .def_property_readonly("final_objective", &TrainingTrace::final_objective)
      .def_property_readonly("status",
                             [](const TrainingTrace& t) {
                               switch (t.status) {
                                 case TrainingStatus::CONVERGED: return "converged";
                                 case TrainingStatus::MAX_ITERATIONS:
                                   return "max-iterations";
                                 default: return "line-search-failure";
                               }
                             })
      .def_property_readonly("objectives", [](const TrainingTrace& t) {
        std::vector<double> out;
        out.reserve(t.iterations.size());
        for (const auto& rec : t.iterations) out.push_back(rec.objective.total);
        return out;
      });

  m.def(
      "optimize",
      [](const SparseModel& model, int max_iterations, double gradient_tolerance,
         double objective_tolerance, int freeze_hyper_iterations) {
        OptimizerConfig config;
        config.max_iterations = max_iterations;
        config.gradient_tolerance = gradient_tolerance;
        config.objective_tolerance = objective_tolerance;
        config.freeze_hyper_iterations = freeze_hyper_iterations;
        auto [trained, trace] = optimize(model, config);
        return py::make_tuple(trained, trace);
      },
      py::arg("model"), py::arg("max_iterations") = 1000,
      py::arg("gradient_tolerance") = 1e-6, py::arg("objective_tolerance") = 1e-9,
      py::arg("freeze_hyper_iterations") = 0,
      "Joint gradient-based optimization of hyperparameters and inducing "
      "inputs; returns (trained_model, trace).");

  m.def(
      "initialize",
      [](const Dataset& data, Eigen::Index m_points, const std::string& scheme,
         std::uint64_t seed) {
        const InitScheme s = scheme == "kmeans" ? InitScheme::kmeans()
                                                : InitScheme::random_subset();
        auto [z, hyper] = initialize(data, m_points, s, seed);
        return py::make_tuple(z.Z, hyper);
      },
      py::arg("data"), py::arg("m"), py::arg("scheme") = "random-subset",
      py::arg("seed") = 0);

  m.def(
      "sample_gp",
      [](int dim, Eigen::Index n_train, Eigen::Index n_test,
         const Hyperparameters& hyper, const std::string& input, double input_scale,
         std::uint64_t seed) {
        SyntheticSpec spec;
        spec.dim = dim;
        spec.n_train = n_train;
        spec.n_test = n_test;
        spec.hyper = hyper;
        spec.input_distribution = input == "uniform"
                                      ? SyntheticSpec::InputDistribution::UNIFORM
                                      : SyntheticSpec::InputDistribution::GAUSSIAN;
        spec.input_scale = input_scale;
        spec.seed = seed;
        auto draw = sample_gp(spec);
        return py::make_tuple(draw.train, draw.test);
      },
      py::arg("dim"), py::arg("n_train"), py::arg("n_test"), py::arg("hyper"),
      py::arg("input") = "gaussian", py::arg("input_scale") = 1.0,
      py::arg("seed") = 0,
      "Seeded joint draw from the GP prior; returns (train, test).");

  m.def(
      "load_xy",
      [](const std::string& path, std::optional<std::string> outputs_path) {
        DataSource src;
        src.path = path;
        src.outputs_path = std::move(outputs_path);
        return load_xy(src);
      },
      py::arg("path"), py::arg("outputs_path") = std::nullopt);

  m.def(
      "detect_clumps",
      [](const MatrixXd& z, const VectorXd& lengthscales, double tau) {
        const auto report = detect_clumps(InducingSet(z), lengthscales, tau);
        return py::make_tuple(report.effective_count, report.min_pairwise_distance);
      },
      py::arg("inducing"), py::arg("lengthscales"), py::arg("tau") = 1e-2,
      "Single-linkage clump detection; returns (effective_count, min_distance).");

  m.attr("__version__") = SGPKIT_VERSION;
}
