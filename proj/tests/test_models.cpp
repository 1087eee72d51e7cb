#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracle.hpp"
#include "sgp/model.hpp"

using namespace sgp;
using namespace sgp::testing;

namespace {

constexpr Method kSparseMethods[] = {Method::FITC, Method::VFE, Method::DTC};

double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

VectorXd pack_params(const Hyperparameters& h, const MatrixXd& Z) {
  const int d = h.input_dim();
  VectorXd x(2 + d + Z.size());
  x(0) = h.log_signal_variance();
  x.segment(1, d) = h.log_lengthscales();
  x(1 + d) = h.log_noise_variance();
  for (Eigen::Index i = 0; i < Z.rows(); ++i)
    x.segment(2 + d + i * d, d) = Z.row(i).transpose();
  return x;
}

SparseModel model_from_params(const RandomInstance& inst, Method method,
                              const VectorXd& x) {
  const int d = inst.hyper.input_dim();
  const auto h = Hyperparameters::from_log(x(0), x.segment(1, d), x(1 + d));
  MatrixXd Z(inst.inducing.size(), d);
  for (Eigen::Index i = 0; i < Z.rows(); ++i)
    Z.row(i) = x.segment(2 + d + i * d, d).transpose();
  return SparseModel(inst.data, h, InducingSet(Z), method);
}

}  // namespace

TEST_CASE("full_nlml single point closed form") {
  MatrixXd x(1, 1);
  x << 0.0;
  VectorXd y(1);
  y << 0.0;
  const auto h = Hyperparameters::isotropic(1.0, 1.0, 1.0);
  const auto b = full_nlml(Dataset(x, y), h);
  CHECK(b.total == doctest::Approx(0.5 * std::log(4.0 * std::numbers::pi)).epsilon(1e-10));
  CHECK(b.trace_term == 0.0);
  CHECK(b.data_fit == 0.0);
  CHECK(b.total == b.constant + b.data_fit + b.complexity_penalty + b.trace_term);
}

TEST_CASE("full_nlml matches direct dense Gaussian log-density") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = random_instance(seed, 3, 1, 2);
    const auto b = full_nlml(inst.data, inst.hyper);

    MatrixXd c = kernel_matrix(inst.data.X, inst.data.X, inst.hyper);
    c.diagonal().array() += inst.hyper.noise_variance();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(c);
    const VectorXd yproj = eig.eigenvectors().transpose() * inst.data.y;
    const double expected =
        0.5 * inst.data.size() * std::log(2.0 * std::numbers::pi) +
        0.5 * eig.eigenvalues().array().log().sum() +
        0.5 * (yproj.array().square() / eig.eigenvalues().array()).sum();
    CHECK(rel_diff(b.total, expected) <= 1e-10);
  }
}

TEST_CASE("sparse_nlml matches the dense Q_ff + G oracle") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto inst = random_instance(seed);
    for (Method method : kSparseMethods) {
      SparseModel model(inst.data, inst.hyper, inst.inducing, method);
      const auto fast = sparse_nlml(model);
      const auto dense =
          dense_sparse_nlml(inst.data, inst.hyper, inst.inducing, method);
      CHECK(rel_diff(fast.total, dense.total) <= 1e-8);
      CHECK(rel_diff(fast.data_fit, dense.data_fit) <= 1e-8);
      CHECK(rel_diff(fast.complexity_penalty, dense.complexity_penalty) <= 1e-8);
      CHECK(rel_diff(fast.trace_term, dense.trace_term) <= 1e-8);
      CHECK(fast.total ==
            fast.constant + fast.data_fit + fast.complexity_penalty + fast.trace_term);
    }
  }
}

TEST_CASE("breakdown structure per method") {
  const auto inst = random_instance(123);
  for (Method method : kSparseMethods) {
    SparseModel model(inst.data, inst.hyper, inst.inducing, method);
    const auto b = sparse_nlml(model);
    if (method == Method::VFE)
      CHECK(b.trace_term >= -1e-10);
    else
      CHECK(b.trace_term == 0.0);
  }
}

TEST_CASE("VFE upper-bounds the full NLML, DTC relation is exact") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto inst = random_instance(seed + 1000);
    const auto full = full_nlml(inst.data, inst.hyper);

    SparseModel vfe(inst.data, inst.hyper, inst.inducing, Method::VFE);
    SparseModel dtc(inst.data, inst.hyper, inst.inducing, Method::DTC);
    const auto bv = sparse_nlml(vfe);
    const auto bd = sparse_nlml(dtc);

    CHECK(bv.total >= full.total - 1e-9 * std::abs(full.total));
    // F_VFE - F_DTC is exactly the trace term
    CHECK(bv.total - bd.total == doctest::Approx(bv.trace_term).epsilon(1e-12));
    CHECK(bv.total >= bd.total - 1e-12);
  }
}

TEST_CASE("Z = X collapses every method onto the full GP") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto inst = lattice_instance(seed, 60);
    const Dataset& data = inst.data;
    const auto full = full_nlml(data, inst.hyper);

    // tiny initial jitter keeps the K_uu perturbation below the check scale
    const JitterPolicy tight{1e-12, 10.0, 1e-2};
    for (Method method : kSparseMethods) {
      SparseModel model(data, inst.hyper, InducingSet(data.X), method, tight);
      const auto b = sparse_nlml(model);
      CHECK(rel_diff(b.total, full.total) <= 1e-8);
      if (method == Method::VFE) CHECK(b.trace_term <= 1e-8 * std::abs(full.total));
    }

    // VFE / DTC predictions equal the full GP's at held-out points
    MatrixXd xs(7, data.dim());
    Rng rng(seed + 5000);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < data.dim(); ++j) xs(i, j) = rng.uniform(-1.0, 9.0);
    SparseModel vfe(data, inst.hyper, InducingSet(data.X), Method::VFE, tight);
    SparseModel fullm(data, inst.hyper);
    const auto pv = predict(vfe, xs);
    const auto pf = predict(fullm, xs);
    for (int i = 0; i < 7; ++i) {
      CHECK(rel_diff(pv.mean(i), pf.mean(i)) <= 1e-8);
      CHECK(rel_diff(pv.latent_variance(i), pf.latent_variance(i)) <= 1e-8);
    }
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto inst = random_instance(seed + 31);
    for (Method method : kSparseMethods) {
      SparseModel model(inst.data, inst.hyper, inst.inducing, method);
      const auto grad = nlml_gradient(model);

      VectorXd flat(grad.grad_log_hyper.size() + grad.grad_inducing.size());
      flat.head(grad.grad_log_hyper.size()) = grad.grad_log_hyper;
      const int d = inst.hyper.input_dim();
      for (Eigen::Index i = 0; i < grad.grad_inducing.rows(); ++i)
        flat.segment(grad.grad_log_hyper.size() + i * d, d) =
            grad.grad_inducing.row(i).transpose();

      const VectorXd x0 = pack_params(inst.hyper, inst.inducing.Z);
      const VectorXd fd = finite_difference_gradient(
          [&](const VectorXd& x) {
            return sparse_nlml(model_from_params(inst, method, x)).total;
          },
          x0);

      const double scale = std::max(1.0, flat.cwiseAbs().maxCoeff());
      for (Eigen::Index i = 0; i < flat.size(); ++i) {
        const double err = std::abs(flat(i) - fd(i)) /
                           std::max({std::abs(flat(i)), std::abs(fd(i)), 1e-2 * scale});
        CHECK(err <= 1e-4);
      }
      ++checked;
    }
  }
  CHECK(checked == 75);
}

TEST_CASE("full GP gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = random_instance(seed + 400);
    SparseModel model(inst.data, inst.hyper);
    const auto grad = nlml_gradient(model);
    CHECK(grad.grad_inducing.size() == 0);

    const int d = inst.hyper.input_dim();
    VectorXd x0(2 + d);
    x0(0) = inst.hyper.log_signal_variance();
    x0.segment(1, d) = inst.hyper.log_lengthscales();
    x0(1 + d) = inst.hyper.log_noise_variance();
    const VectorXd fd = finite_difference_gradient(
        [&](const VectorXd& x) {
          const auto h = Hyperparameters::from_log(x(0), x.segment(1, d), x(1 + d));
          return full_nlml(inst.data, h).total;
        },
        x0);
    for (Eigen::Index i = 0; i < fd.size(); ++i) {
      const double err =
          std::abs(grad.grad_log_hyper(i) - fd(i)) /
          std::max({std::abs(grad.grad_log_hyper(i)), std::abs(fd(i)), 1e-2});
      CHECK(err <= 1e-4);
    }
  }
}

TEST_CASE("VFE inducing gradient vanishes at Z = X") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto inst = lattice_instance(seed + 50, 80);
    const JitterPolicy tight{1e-12, 10.0, 1e-2};
    SparseModel model(inst.data, inst.hyper, InducingSet(inst.data.X), Method::VFE,
                      tight);
    const auto grad = nlml_gradient(model);
    const auto fac = factorize(model);
    // jitter perturbs the stationary point; tolerance scales with it
    const double tol =
        1e3 * fac.applied_jitter / inst.hyper.noise_variance() + 1e-7;
    CHECK(grad.grad_inducing.cwiseAbs().maxCoeff() <= tol);
  }
}

TEST_CASE("mirror symmetry of the inducing gradient") {
  Rng rng(17);
  const Eigen::Index n = 14;
  MatrixXd x(n, 1);
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n / 2; ++i) {
    x(i, 0) = rng.uniform(0.1, 3.0);
    x(n / 2 + i, 0) = -x(i, 0);
    y(i) = rng.normal();
    y(n / 2 + i) = y(i);  // even function of the input
  }
  MatrixXd z(4, 1);
  z << 0.4, 1.3, -0.4, -1.3;
  const auto hyper = Hyperparameters::isotropic(0.9, 0.8, 0.1);

  for (Method method : kSparseMethods) {
    SparseModel model(Dataset(x, y), hyper, InducingSet(z), method);
    const auto grad = nlml_gradient(model);
    // mirrored inducing inputs carry mirrored gradients
    CHECK(grad.grad_inducing(0, 0) == doctest::Approx(-grad.grad_inducing(2, 0)).epsilon(1e-7));
    CHECK(grad.grad_inducing(1, 0) == doctest::Approx(-grad.grad_inducing(3, 0)).epsilon(1e-7));
  }
}

TEST_CASE("predictions match the dense Q/G oracle") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = random_instance(seed + 600);
    MatrixXd xs(5, inst.data.dim());
    Rng rng(seed + 9000);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < inst.data.dim(); ++j) xs(i, j) = rng.uniform(-2.5, 2.5);

    for (Method method : kSparseMethods) {
      SparseModel model(inst.data, inst.hyper, inst.inducing, method);
      const auto fast = predict(model, xs);
      const auto dense =
          dense_predict(inst.data, inst.hyper, inst.inducing, method, xs);
      for (int i = 0; i < 5; ++i) {
        CHECK(rel_diff(fast.mean(i), dense.mean(i)) <= 1e-8);
        CHECK(rel_diff(fast.latent_variance(i), dense.latent_variance(i)) <= 1e-8);
        CHECK(fast.observation_variance(i) ==
              doctest::Approx(fast.latent_variance(i) + inst.hyper.noise_variance())
                  .epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("VFE and DTC share predictions") {
  const auto inst = random_instance(42);
  MatrixXd xs(4, inst.data.dim());
  xs.setZero();
  SparseModel vfe(inst.data, inst.hyper, inst.inducing, Method::VFE);
  SparseModel dtc(inst.data, inst.hyper, inst.inducing, Method::DTC);
  const auto pv = predict(vfe, xs);
  const auto pd = predict(dtc, xs);
  CHECK((pv.mean - pd.mean).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((pv.latent_variance - pd.latent_variance).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("prior reversion far from data and inducing inputs") {
  Rng rng(8);
  MatrixXd x(20, 1);
  for (int i = 0; i < 20; ++i) x(i, 0) = rng.uniform(-2.0, 2.0);
  VectorXd y(20);
  for (int i = 0; i < 20; ++i) y(i) = rng.normal();
  MatrixXd z(3, 1);
  z << -1.0, 0.0, 1.0;
  const auto hyper = Hyperparameters::isotropic(1.7, 0.5, 0.1);

  MatrixXd far(1, 1);
  far << 50.0;
  for (Method method : {Method::FITC, Method::VFE}) {
    SparseModel model(Dataset(x, y), hyper, InducingSet(z), method);
    const auto p = predict(model, far);
    CHECK(std::abs(p.mean(0)) <= 1e-10);
    CHECK(p.latent_variance(0) == doctest::Approx(1.7).epsilon(1e-8));
  }
  SparseModel full(Dataset(x, y), hyper);
  const auto p = predict(full, far);
  CHECK(std::abs(p.mean(0)) <= 1e-10);
  CHECK(p.latent_variance(0) == doctest::Approx(1.7).epsilon(1e-8));
}

TEST_CASE("heteroscedastic_diag") {
  MatrixXd z(3, 1);
  z << -1.0, 0.3, 2.0;
  const auto hyper = Hyperparameters::isotropic(1.3, 0.6, 0.05);
  const InducingSet inducing{z};

  SUBCASE("zero at inducing inputs, prior variance far away") {
    MatrixXd pts(4, 1);
    pts << -1.0, 0.3, 2.0, 40.0;
    // the residual at an inducing input is O(jitter), so measure it with a
    // tight ladder
    const VectorXd h = heteroscedastic_diag(pts, inducing, hyper, {1e-12, 10.0, 1e-2});
    for (int i = 0; i < 3; ++i) CHECK(h(i) <= 1e-8 * 1.3);
    CHECK(h(3) == doctest::Approx(1.3).epsilon(1e-6));
    CHECK((h.array() >= 0.0).all());
  }
  SUBCASE("pointwise non-increasing under additions") {
    Rng rng(12);
    MatrixXd pts(50, 1);
    for (int i = 0; i < 50; ++i) pts(i, 0) = rng.uniform(-4.0, 4.0);
    VectorXd before = heteroscedastic_diag(pts, inducing, hyper);
    MatrixXd grown = z;
    for (int add = 0; add < 10; ++add) {
      grown.conservativeResize(grown.rows() + 1, 1);
      grown(grown.rows() - 1, 0) = rng.uniform(-4.0, 4.0);
      const VectorXd after = heteroscedastic_diag(pts, InducingSet(grown), hyper);
      CHECK((after.array() <= before.array() + 1e-10).all());
      before = after;
    }
  }
}

TEST_CASE("internal consistency and error propagation") {
  SUBCASE("cache is dropped on parameter change") {
    const auto inst = random_instance(3);
    SparseModel model(inst.data, inst.hyper, inst.inducing, Method::VFE);
    const auto cached = model.factorized();
    CHECK(cached.cache() != nullptr);
    const double before = sparse_nlml(cached).total;
    auto mutated = cached;
    mutated.set_hyper(Hyperparameters::isotropic(2.0, 1.0, 0.3, inst.data.dim()));
    CHECK(mutated.cache() == nullptr);
    CHECK(sparse_nlml(mutated).total != doctest::Approx(before));
  }
  SUBCASE("full model rejects sparse-only calls") {
    const auto inst = random_instance(4);
    SparseModel full(inst.data, inst.hyper);
    CHECK_THROWS_AS(sparse_nlml(full), InvalidArgumentError);
    CHECK_THROWS_AS(factorize(full), InvalidArgumentError);
  }
  SUBCASE("dimension mismatches are rejected") {
    const auto inst = random_instance(5, 8, 4, 1);
    MatrixXd z2(2, 2);
    z2.setZero();
    CHECK_THROWS_AS(SparseModel(inst.data, inst.hyper, InducingSet(z2), Method::VFE),
                    InvalidArgumentError);
    SparseModel ok(inst.data, inst.hyper, inst.inducing, Method::VFE);
    CHECK_THROWS_AS(predict(ok, MatrixXd::Zero(3, 2)), InvalidArgumentError);
  }
}
