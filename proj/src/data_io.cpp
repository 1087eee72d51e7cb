#include "sgp/data_io.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sgp/kernels.hpp"
#include "sgp/rng.hpp"

namespace sgp {

namespace {

std::vector<double> parse_line(const std::string& line, const std::string& path,
                               std::size_t lineno) {
  std::string cleaned = line;
  std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
  std::istringstream in(cleaned);
  std::vector<double> values;
  std::string token;
  while (in >> token) {
    try {
      std::size_t used = 0;
      const double v = std::stod(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
      if (!std::isfinite(v)) {
        throw IngestionError(path + ":" + std::to_string(lineno) +
                             ": non-finite value '" + token + "'");
      }
      values.push_back(v);
    } catch (const IngestionError&) {
      throw;
    } catch (const std::exception&) {
      throw IngestionError(path + ":" + std::to_string(lineno) +
                           ": cannot parse '" + token + "' as a number");
    }
  }
  return values;
}

std::vector<std::vector<double>> read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto values = parse_line(line, path, lineno);
    if (values.empty()) continue;
    if (!rows.empty() && values.size() != rows.front().size())
      throw IngestionError(path + ":" + std::to_string(lineno) +
                           ": expected " + std::to_string(rows.front().size()) +
                           " columns, got " + std::to_string(values.size()));
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw IngestionError("'" + path + "' contains no data rows");
  return rows;
}

}  // namespace

Dataset load_xy(const DataSource& source) {
  const auto rows = read_table(source.path);
  const int ncols = static_cast<int>(rows.front().size());

  if (source.outputs_path) {
    // Paired layout: inputs file holds all columns of X, outputs file one
    // target per line.
    const auto yrows = read_table(*source.outputs_path);
    if (yrows.front().size() != 1)
      throw IngestionError("'" + *source.outputs_path +
                           "': outputs file must have one column");
    if (yrows.size() != rows.size())
      throw IngestionError("paired files disagree on row count: " +
                           std::to_string(rows.size()) + " vs " +
                           std::to_string(yrows.size()));
    MatrixXd X(rows.size(), ncols);
    VectorXd y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (int j = 0; j < ncols; ++j) X(i, j) = rows[i][j];
      y(i) = yrows[i][0];
    }
    return Dataset(std::move(X), std::move(y));
  }

  if (ncols < 2)
    throw IngestionError("'" + source.path +
                         "': need at least one input column and one target column");
  const int target = source.target_column.value_or(ncols - 1);
  if (target < 0 || target >= ncols)
    throw IngestionError("'" + source.path + "': target column " +
                         std::to_string(target) + " out of range");
  std::vector<int> inputs = source.input_columns;
  if (inputs.empty()) {
    for (int j = 0; j < ncols; ++j)
      if (j != target) inputs.push_back(j);
  }
  for (int j : inputs)
    if (j < 0 || j >= ncols)
      throw IngestionError("'" + source.path + "': input column " +
                           std::to_string(j) + " out of range");

  MatrixXd X(rows.size(), inputs.size());
  VectorXd y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < inputs.size(); ++j) X(i, j) = rows[i][inputs[j]];
    y(i) = rows[i][target];
  }
  return Dataset(std::move(X), std::move(y));
}

Dataset subset(const Dataset& dataset, Eigen::Index n, SubsetRule rule,
               std::uint64_t seed) {
  const Eigen::Index total = dataset.size();
  if (n < 1 || n > total)
    throw InvalidArgumentError("subset: n must be in [1, N]");

  std::vector<Eigen::Index> idx;
  idx.reserve(n);
  switch (rule) {
    case SubsetRule::FIRST:
      for (Eigen::Index i = 0; i < n; ++i) idx.push_back(i);
      break;
    case SubsetRule::EVERY_OTHER:
      for (Eigen::Index i = 0; idx.size() < static_cast<std::size_t>(n); i += 2) {
        if (i >= total)
          throw InvalidArgumentError("subset: EVERY_OTHER cannot reach n points");
        idx.push_back(i);
      }
      break;
    case SubsetRule::SEEDED_RANDOM: {
      std::vector<Eigen::Index> pool(total);
      std::iota(pool.begin(), pool.end(), Eigen::Index{0});
      Rng rng(seed);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto j = i + static_cast<Eigen::Index>(rng.uniform_index(total - i));
        std::swap(pool[i], pool[j]);
        idx.push_back(pool[i]);
      }
      std::sort(idx.begin(), idx.end());
      break;
    }
  }

  MatrixXd X(n, dataset.dim());
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i) = dataset.X.row(idx[i]);
    y(i) = dataset.y(idx[i]);
  }
  return Dataset(std::move(X), std::move(y));
}

SyntheticDraw sample_gp(const SyntheticSpec& spec) {
  if (spec.dim < 1 || spec.n_train < 1 || spec.n_test < 1)
    throw InvalidArgumentError("sample_gp: dim and sample counts must be >= 1");
  const Eigen::Index total = spec.n_train + spec.n_test;
  if (total > 4096)
    throw InvalidArgumentError(
        "sample_gp: joint draw capped at 4096 points (needs a dense factorization)");
  if (spec.hyper.input_dim() != spec.dim)
    throw InvalidArgumentError("sample_gp: hyper dimension != dim");

  Rng rng(spec.seed);
  MatrixXd X(total, spec.dim);
  for (Eigen::Index i = 0; i < total; ++i)
    for (int j = 0; j < spec.dim; ++j)
      X(i, j) = spec.input_distribution == SyntheticSpec::InputDistribution::GAUSSIAN
                    ? spec.input_scale * rng.normal()
                    : rng.uniform(-spec.input_scale, spec.input_scale);

  MatrixXd k = kernel_matrix(X, X, spec.hyper);
  const auto chol = jittered_cholesky(k, {1e-10, 10.0, 1e-4});
  VectorXd white(total);
  for (Eigen::Index i = 0; i < total; ++i) white(i) = rng.normal();
  VectorXd f = chol.L.triangularView<Eigen::Lower>() * white;

  const double noise_std = std::sqrt(spec.hyper.noise_variance());
  VectorXd y(total);
  for (Eigen::Index i = 0; i < total; ++i) y(i) = f(i) + noise_std * rng.normal();

  SyntheticDraw draw;
  draw.train = Dataset(X.topRows(spec.n_train), y.head(spec.n_train));
  draw.test = Dataset(X.bottomRows(spec.n_test), y.tail(spec.n_test));
  draw.ground_truth = spec.hyper;
  return draw;
}

Dataset AffineTransform::apply(const Dataset& d) const {
  MatrixXd X = (d.X.rowwise() - x_shift.transpose()).array().rowwise() /
               x_scale.transpose().array();
  VectorXd y = (d.y.array() - y_shift) / y_scale;
  return Dataset(std::move(X), std::move(y));
}

Dataset AffineTransform::invert(const Dataset& d) const {
  MatrixXd X = (d.X.array().rowwise() * x_scale.transpose().array()).matrix()
                   .rowwise() + x_shift.transpose();
  VectorXd y = d.y.array() * y_scale + y_shift;
  return Dataset(std::move(X), std::move(y));
}

VectorXd AffineTransform::invert_mean(const VectorXd& mean) const {
  return mean.array() * y_scale + y_shift;
}

VectorXd AffineTransform::invert_variance(const VectorXd& variance) const {
  return variance.array() * (y_scale * y_scale);
}

std::pair<Dataset, AffineTransform> standardize(const Dataset& dataset) {
  const double n = static_cast<double>(dataset.size());
  AffineTransform t;
  t.x_shift = dataset.X.colwise().mean();
  t.x_scale.resize(dataset.dim());
  for (int j = 0; j < dataset.dim(); ++j) {
    const double var =
        (dataset.X.col(j).array() - t.x_shift(j)).square().sum() / n;
    if (!(var > 0.0))
      throw InvalidArgumentError("standardize: input column " +
                                 std::to_string(j) + " has zero variance");
    t.x_scale(j) = std::sqrt(var);
  }
  t.y_shift = dataset.y.mean();
  const double yvar = (dataset.y.array() - t.y_shift).square().sum() / n;
  if (!(yvar > 0.0))
    throw InvalidArgumentError("standardize: targets have zero variance");
  t.y_scale = std::sqrt(yvar);
  return {t.apply(dataset), t};
}

void save_xy(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write '" + path + "'");
  char buf[64];
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    for (int j = 0; j < dataset.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", dataset.X(i, j));
      out << buf << ' ';
    }
    std::snprintf(buf, sizeof buf, "%.17g", dataset.y(i));
    out << buf << '\n';
  }
}

std::string dataset_hash(const Dataset& dataset) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](double v) {
    char buf[64];
    const int len = std::snprintf(buf, sizeof buf, "%.17g,", v);
    for (int i = 0; i < len; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  };
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    for (int j = 0; j < dataset.dim(); ++j) feed(dataset.X(i, j));
    feed(dataset.y(i));
  }
  char out[32];
  std::snprintf(out, sizeof out, "fnv1a64:%016llx",
                static_cast<unsigned long long>(h));
  return out;
}

}  // namespace sgp
