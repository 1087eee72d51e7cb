#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracle.hpp"
#include "sgp/diagnostics.hpp"
#include "sgp/training.hpp"

using namespace sgp;
using namespace sgp::testing;

TEST_CASE("addition_sweep deltas equal from-scratch recomputation") {
  const auto inst = random_instance(2, 6, 3, 1);
  MatrixXd grid(11, 1);
  for (int i = 0; i < 11; ++i) grid(i, 0) = -2.5 + 0.5 * i;

  for (Method method : {Method::FITC, Method::VFE}) {
    SparseModel model(inst.data, inst.hyper, inst.inducing, method);
    const auto sweep = addition_sweep(model, grid);
    REQUIRE(sweep.candidates.size() == 11);

    for (int i = 0; i < 11; ++i) {
      MatrixXd grown(inst.inducing.size() + 1, 1);
      grown.topRows(inst.inducing.size()) = inst.inducing.Z;
      grown.row(grown.rows() - 1) = grid.row(i);
      SparseModel bigger(inst.data, inst.hyper, InducingSet(grown), method);
      const double expected = sparse_nlml(bigger).total - sweep.baseline.total;
      const double got = sweep.candidates[i].delta_total;
      CHECK(std::abs(got - expected) <=
            1e-8 * std::max({std::abs(got), std::abs(expected), 1.0}));
      CHECK(!sweep.candidates[i].error.has_value());
      // component deltas add up to the total delta
      CHECK(sweep.candidates[i].delta_total ==
            doctest::Approx(sweep.candidates[i].delta_data_fit +
                            sweep.candidates[i].delta_complexity +
                            sweep.candidates[i].delta_trace)
                .epsilon(1e-9));
    }
  }
}

TEST_CASE("VFE never deteriorates under additions") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = random_instance(seed + 70);
    SparseModel model(inst.data, inst.hyper, inst.inducing, Method::VFE);
    Rng rng(seed + 900);
    MatrixXd grid(10, inst.data.dim());
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < inst.data.dim(); ++j) grid(i, j) = rng.uniform(-3.0, 3.0);
    const auto sweep = addition_sweep(model, grid);
    for (const auto& cand : sweep.candidates) {
      REQUIRE(!cand.error.has_value());
      CHECK(cand.delta_total <= 1e-6);
    }
  }
}

TEST_CASE("duplicating an existing inducing input is a no-op spike") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = random_instance(seed + 300);
    const JitterPolicy doubled{2e-6, 10.0, 2e-2};
    for (Method method : {Method::FITC, Method::VFE}) {
      SparseModel model(inst.data, inst.hyper, inst.inducing, method);
      // tolerance = the objective's own response to doubling the jitter
      SparseModel perturbed(inst.data, inst.hyper, inst.inducing, method, doubled);
      const double f0 = sparse_nlml(model).total;
      const double sensitivity = std::abs(sparse_nlml(perturbed).total - f0) +
                                 1e-9 * std::max(1.0, std::abs(f0));
      MatrixXd grid = inst.inducing.Z;  // candidates exactly on existing Z
      const auto sweep = addition_sweep(model, grid);
      for (const auto& cand : sweep.candidates) {
        REQUIRE(!cand.error.has_value());
        CHECK(std::abs(cand.delta_total) <= 10.0 * sensitivity);
      }
    }
  }
}

TEST_CASE("sweep errors are recorded per candidate, sweep continues") {
  const auto inst = random_instance(4, 6, 3, 1);
  SparseModel model(inst.data, inst.hyper, inst.inducing, Method::VFE);
  MatrixXd grid(2, 1);
  grid(0, 0) = std::numeric_limits<double>::quiet_NaN();  // poisons K_uu
  grid(1, 0) = 0.5;
  const auto sweep = addition_sweep(model, grid);
  CHECK(sweep.candidates[0].error.has_value());
  CHECK(!sweep.candidates[1].error.has_value());
}

TEST_CASE("detect_clumps") {
  const VectorXd ell = VectorXd::Constant(1, 0.5);

  SUBCASE("all far apart") {
    MatrixXd z(4, 1);
    z << 0.0, 1.0, 2.0, 3.0;
    const auto report = detect_clumps(InducingSet(z), ell, 1e-2);
    CHECK(report.effective_count == 4);
    CHECK(report.min_pairwise_distance == doctest::Approx(2.0));  // 1.0 / 0.5
  }
  SUBCASE("two identical rows merge") {
    MatrixXd z(4, 1);
    z << 0.0, 1.0, 1.0, 3.0;
    const auto report = detect_clumps(InducingSet(z), ell, 1e-2);
    CHECK(report.effective_count == 3);
    bool found_pair = false;
    for (const auto& cluster : report.clusters)
      if (cluster.size() == 2) found_pair = true;
    CHECK(found_pair);
  }
  SUBCASE("permutation invariance") {
    Rng rng(6);
    MatrixXd z(6, 2);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 2; ++j) z(i, j) = rng.uniform(-1, 1);
    z.row(3) = z.row(0);  // one duplicate pair
    const auto a = detect_clumps(InducingSet(z), VectorXd::Constant(2, 0.3), 1e-2);

    MatrixXd zp(6, 2);
    const int perm[6] = {5, 3, 0, 4, 1, 2};
    for (int i = 0; i < 6; ++i) zp.row(i) = z.row(perm[i]);
    const auto b = detect_clumps(InducingSet(zp), VectorXd::Constant(2, 0.3), 1e-2);

    CHECK(a.effective_count == b.effective_count);
    CHECK(a.min_pairwise_distance == doctest::Approx(b.min_pairwise_distance));
    // clusters partition all indices in both cases
    Eigen::Index total = 0;
    for (const auto& c : a.clusters) total += static_cast<Eigen::Index>(c.size());
    CHECK(total == 6);
  }
  SUBCASE("chain linkage merges transitively") {
    MatrixXd z(3, 1);
    z << 0.0, 0.004, 0.008;  // neighbors within tau, endpoints not
    const auto report = detect_clumps(InducingSet(z), VectorXd::Ones(1), 1e-2);
    CHECK(report.effective_count == 1);
  }
}

TEST_CASE("noise_bias_report") {
  const auto inst = lattice_instance(1, 40);
  auto with_noise = [&](Method m, double sn2) {
    auto h = Hyperparameters::from_values(inst.hyper.signal_variance(),
                                          inst.hyper.lengthscales(), sn2);
    if (m == Method::FULL) return SparseModel(inst.data, h);
    return SparseModel(inst.data, h, InducingSet(inst.data.X.topRows(4)), m);
  };

  SUBCASE("flags fire on the documented biases") {
    const auto report = noise_bias_report(
        {with_noise(Method::FULL, 0.09), with_noise(Method::FITC, 1e-8),
         with_noise(Method::VFE, 0.16)});
    REQUIRE(report.entries.size() == 3);
    CHECK(report.entries[0].method == Method::FULL);
    const auto& fitc = report.entries[1].method == Method::FITC
                           ? report.entries[1]
                           : report.entries[2];
    const auto& vfe = report.entries[1].method == Method::VFE ? report.entries[1]
                                                              : report.entries[2];
    CHECK(fitc.underestimation_flag);
    CHECK(fitc.severe_flag);
    CHECK(vfe.overestimation_flag);
    CHECK(!vfe.underestimation_flag);
  }
  SUBCASE("identical noise gives ratio 1 and no flags") {
    const auto report = noise_bias_report(
        {with_noise(Method::FULL, 0.09), with_noise(Method::VFE, 0.09)});
    CHECK(report.entries[1].ratio_to_full == doctest::Approx(1.0));
    CHECK(!report.entries[1].underestimation_flag);
    CHECK(!report.entries[1].overestimation_flag);
  }
}

TEST_CASE("evaluate metrics") {
  SUBCASE("perfect predictions") {
    PredictiveDistribution pred;
    pred.mean = VectorXd::LinSpaced(5, -1.0, 1.0);
    pred.latent_variance = VectorXd::Constant(5, 0.1);
    pred.observation_variance = VectorXd::Constant(5, 0.2);
    const auto m = evaluate(pred, pred.mean, -0.5);
    CHECK(m.rmse == 0.0);
    CHECK(m.smse == 0.0);
    CHECK(m.nlml_per_datum == -0.5);
  }
  SUBCASE("predicting the mean gives smse exactly 1") {
    VectorXd y(4);
    y << 0.0, 2.0, 4.0, 6.0;
    PredictiveDistribution pred;
    pred.mean = VectorXd::Constant(4, y.mean());
    pred.latent_variance = VectorXd::Constant(4, 0.3);
    pred.observation_variance = VectorXd::Constant(4, 0.4);
    CHECK(evaluate(pred, y).smse == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("three-point hand case") {
    // targets {-sqrt(3), 0, sqrt(3)} have population variance exactly 2;
    // residuals {1, -1, 0} then give rmse = sqrt(2/3) and smse = 1/3
    VectorXd y(3);
    y << -std::sqrt(3.0), 0.0, std::sqrt(3.0);
    VectorXd mean = y;
    mean(0) += 1.0;
    mean(1) -= 1.0;
    PredictiveDistribution pred;
    pred.mean = mean;
    pred.latent_variance = VectorXd::Constant(3, 0.2);
    pred.observation_variance = VectorXd::Constant(3, 0.3);
    const auto m = evaluate(pred, y);
    CHECK(m.rmse == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
    CHECK(m.smse == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("nlpp is translation invariant") {
    Rng rng(3);
    VectorXd y(6), mean(6), var(6);
    for (int i = 0; i < 6; ++i) {
      y(i) = rng.normal();
      mean(i) = rng.normal();
      var(i) = 0.1 + rng.uniform(0.0, 1.0);
    }
    PredictiveDistribution a{mean, var, var};
    PredictiveDistribution b{mean.array() + 5.0, var, var};
    const double na = evaluate(a, y).nlpp;
    const double nb = evaluate(b, (y.array() + 5.0).matrix().eval()).nlpp;
    CHECK(na == doctest::Approx(nb).epsilon(1e-12));
  }
  SUBCASE("zero test variance is an error") {
    PredictiveDistribution pred;
    pred.mean = VectorXd::Zero(3);
    pred.latent_variance = VectorXd::Constant(3, 0.1);
    pred.observation_variance = VectorXd::Constant(3, 0.2);
    CHECK_THROWS_AS(evaluate(pred, VectorXd::Constant(3, 1.0)), InvalidArgumentError);
  }
}

TEST_CASE("nlpp against a hand-computed Gaussian density") {
  PredictiveDistribution pred;
  pred.mean = VectorXd::Zero(2);
  pred.latent_variance = VectorXd::Constant(2, 0.5);
  pred.observation_variance = VectorXd::Constant(2, 1.0);
  VectorXd y(2);
  y << 1.0, -1.0;
  // each point contributes -log N(+-1; 0, 1) = 0.5 log(2 pi) + 0.5
  CHECK(evaluate(pred, y, 0.0).nlpp ==
        doctest::Approx(0.5 * std::log(2.0 * std::numbers::pi) + 0.5)
            .epsilon(1e-12));
}
