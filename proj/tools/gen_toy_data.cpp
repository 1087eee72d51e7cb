// Regenerates data/toy1d_200.txt: a seeded 1-D GP draw with 200 points,
// clustered inputs on [0, 6] with a gap, used as the default dataset for the
// experiment commands and the acceptance suite. Run with no arguments from
// the repository root; the file is bit-reproducible.

#include <algorithm>
#include <cstdio>

#include "sgp/data_io.hpp"
#include "sgp/kernels.hpp"
#include "sgp/rng.hpp"

using namespace sgp;

int main(int argc, char** argv) {
  const std::string out = argc > 1 ? argv[1] : "data/toy1d_200.txt";
  const Eigen::Index n = 200;
  const double gap_lo = 3.1, gap_hi = 3.9;

  Rng rng(20240614);
  MatrixXd x(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    double v;
    do {
      v = rng.uniform(0.0, 6.0);
    } while (v > gap_lo && v < gap_hi);
    x(i, 0) = v;
  }
  std::sort(x.data(), x.data() + n);

  const auto hyper = Hyperparameters::isotropic(0.8, 0.6, 0.0784);  // sigma_n = 0.28
  const MatrixXd k = kernel_matrix(x, x, hyper);
  const auto chol = jittered_cholesky(k, {1e-10, 10.0, 1e-4});
  VectorXd white(n);
  for (Eigen::Index i = 0; i < n; ++i) white(i) = rng.normal();
  VectorXd y = chol.L.triangularView<Eigen::Lower>() * white;
  for (Eigen::Index i = 0; i < n; ++i) y(i) += 0.28 * rng.normal();

  const Dataset data(x, y);
  save_xy(data, out);
  std::printf("wrote %s (%s)\n", out.c_str(), dataset_hash(data).c_str());
  return 0;
}
