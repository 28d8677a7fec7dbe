#include "sblkit/problem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sblkit/threading.hpp"

namespace sblkit {

namespace {

constexpr int kRedrawCap = 100;

void require(bool ok, const std::string& message) {
  if (!ok) throw DomainError(message);
}

}  // namespace

void DatasetSpec::validate() const {
  require(m >= 1 && n >= 1, "DatasetSpec: m and n must be >= 1");
  require(total_count > 0, "DatasetSpec: total_count must be > 0");
  require(!snr_grid.empty(), "DatasetSpec: snr_grid must be non-empty");
  require(!rho_grid.empty(), "DatasetSpec: rho_grid must be non-empty");
  for (double rho : rho_grid)
    require(rho >= 0.0 && rho <= 1.0, "DatasetSpec: rho must lie in [0,1]");
  if (matrix_kind.is_correlated())
    require(matrix_kind.c >= 0.0 && matrix_kind.c < 1.0,
            "DatasetSpec: correlation c must lie in [0,1)");
  require(train_fraction >= 0.0 && validation_fraction >= 0.0 &&
              train_fraction + validation_fraction <= 1.0,
          "DatasetSpec: split fractions must be nonnegative and sum to <= 1");
}

Eigen::VectorXd gen_sparse_signal(int n, double rho, Rng& rng) {
  require(n >= 1, "gen_sparse_signal: n must be >= 1");
  require(rho >= 0.0 && rho <= 1.0, "gen_sparse_signal: rho must lie in [0,1]");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    // One uniform then one normal per active entry keeps the stream layout
    // independent of rho ordering decisions elsewhere.
    if (rng.bernoulli(rho)) x[i] = rng.normal();
  }
  return x;
}

Eigen::MatrixXd gen_iid_gaussian_matrix(int m, int n, Rng& rng) {
  require(m >= 1 && n >= 1, "gen_iid_gaussian_matrix: m and n must be >= 1");
  Eigen::MatrixXd g(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = rng.normal();
  return g;
}

Eigen::MatrixXd correlation_sqrt(int dim, double c) {
  require(dim >= 1, "correlation_sqrt: dim must be >= 1");
  require(c >= 0.0 && c < 1.0, "correlation_sqrt: c must lie in [0,1)");
  Eigen::MatrixXd corr(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) corr(i, j) = std::pow(c, std::abs(i - j));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
  if (es.info() != Eigen::Success)
    throw NumericalError("correlation_sqrt: eigendecomposition failed");
  Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd gen_correlated_matrix_with(const Eigen::MatrixXd& sqrt_left,
                                           const Eigen::MatrixXd& sqrt_right,
                                           Rng& rng) {
  Eigen::MatrixXd g = gen_iid_gaussian_matrix(
      static_cast<int>(sqrt_left.rows()), static_cast<int>(sqrt_right.rows()), rng);
  return sqrt_left * g * sqrt_right;
}

Eigen::MatrixXd gen_correlated_matrix(int m, int n, double c, Rng& rng) {
  require(c >= 0.0 && c < 1.0, "gen_correlated_matrix: c must lie in [0,1)");
  return gen_correlated_matrix_with(correlation_sqrt(m, c), correlation_sqrt(n, c), rng);
}

double noise_precision_for_snr(const Eigen::MatrixXd& a, const Eigen::VectorXd& x,
                               double snr_db) {
  if (a.cols() != x.size())
    throw DimensionError("noise_precision_for_snr: a has " +
                         std::to_string(a.cols()) + " columns but x has length " +
                         std::to_string(x.size()));
  const double signal_power = (a * x).squaredNorm();
  if (signal_power == 0.0)
    throw ZeroSignalError("noise_precision_for_snr: a·x = 0, redraw the signal");
  return static_cast<double>(a.rows()) * std::pow(10.0, snr_db / 10.0) / signal_power;
}

Eigen::VectorXd noise_vector(std::uint64_t instance_seed, int m, double beta) {
  require(beta > 0.0, "noise_vector: beta must be positive");
  Rng rng(tag_seed(instance_seed, "noise"));
  Eigen::VectorXd u(m);
  for (int i = 0; i < m; ++i) u[i] = rng.normal();
  return u / std::sqrt(beta);
}

ProblemInstance gen_instance(const InstanceParams& params, std::uint64_t seed,
                             const Eigen::MatrixXd* shared_matrix) {
  require(params.m >= 1 && params.n >= 1, "gen_instance: m and n must be >= 1");
  require(params.rho >= 0.0 && params.rho <= 1.0,
          "gen_instance: rho must lie in [0,1]");

  ProblemInstance inst;
  inst.snr_db = params.snr_db;
  inst.rho = params.rho;
  inst.matrix_kind = params.matrix_kind;
  inst.seed = seed;

  if (shared_matrix != nullptr) {
    if (shared_matrix->rows() != params.m || shared_matrix->cols() != params.n)
      throw DimensionError("gen_instance: shared matrix is " +
                           std::to_string(shared_matrix->rows()) + "x" +
                           std::to_string(shared_matrix->cols()) + ", expected " +
                           std::to_string(params.m) + "x" + std::to_string(params.n));
    inst.a = *shared_matrix;
  } else {
    Rng matrix_rng(tag_seed(seed, "matrix"));
    inst.a = params.matrix_kind.is_correlated()
                 ? gen_correlated_matrix(params.m, params.n, params.matrix_kind.c,
                                         matrix_rng)
                 : gen_iid_gaussian_matrix(params.m, params.n, matrix_rng);
  }

  Rng signal_rng(tag_seed(seed, "signal"));
  bool drawn = false;
  for (int attempt = 0; attempt < kRedrawCap && !drawn; ++attempt) {
    inst.x_true = gen_sparse_signal(params.n, params.rho, signal_rng);
    try {
      inst.beta_true = noise_precision_for_snr(inst.a, inst.x_true, params.snr_db);
      drawn = true;
    } catch (const ZeroSignalError&) {
      // all-zero draw, try again
    }
  }
  if (!drawn)
    throw DomainError("gen_instance: no non-zero signal after " +
                      std::to_string(kRedrawCap) + " draws (rho = " +
                      std::to_string(params.rho) + " is degenerate)");

  inst.y = inst.a * inst.x_true + noise_vector(seed, params.m, inst.beta_true);
  return inst;
}

Dataset gen_dataset(const DatasetSpec& spec, std::size_t threads) {
  spec.validate();

  Dataset ds;
  ds.spec = spec;
  ds.instances.resize(spec.total_count);

  Eigen::MatrixXd shared;
  const bool use_shared = !spec.fresh_matrix_per_sample;
  if (use_shared) {
    Rng matrix_rng(tag_seed(spec.seed, "matrix"));
    shared = spec.matrix_kind.is_correlated()
                 ? gen_correlated_matrix(spec.m, spec.n, spec.matrix_kind.c, matrix_rng)
                 : gen_iid_gaussian_matrix(spec.m, spec.n, matrix_rng);
  }

  // Correlation square roots depend only on (dim, c); precompute once so
  // per-sample draws stay cheap.
  Eigen::MatrixXd sqrt_left, sqrt_right;
  if (!use_shared && spec.matrix_kind.is_correlated()) {
    sqrt_left = correlation_sqrt(spec.m, spec.matrix_kind.c);
    sqrt_right = correlation_sqrt(spec.n, spec.matrix_kind.c);
  }

  const std::size_t cells = spec.snr_grid.size() * spec.rho_grid.size();

  parallel_for(ds.instances.size(), threads, [&](std::size_t k) {
    const std::size_t cell = k % cells;
    InstanceParams params;
    params.m = spec.m;
    params.n = spec.n;
    params.snr_db = spec.snr_grid[cell / spec.rho_grid.size()];
    params.rho = spec.rho_grid[cell % spec.rho_grid.size()];
    params.matrix_kind = spec.matrix_kind;
    const std::uint64_t seed = dataset_instance_seed(spec, k);

    if (use_shared) {
      ds.instances[k] = gen_instance(params, seed, &shared);
    } else if (spec.matrix_kind.is_correlated()) {
      // Same draw as gen_instance's fresh-matrix path, with cached roots.
      Rng matrix_rng(tag_seed(seed, "matrix"));
      Eigen::MatrixXd a = gen_correlated_matrix_with(sqrt_left, sqrt_right, matrix_rng);
      ds.instances[k] = gen_instance(params, seed, &a);
    } else {
      ds.instances[k] = gen_instance(params, seed);
    }
  });

  SplitIndices split = compute_split(spec.total_count, spec.train_fraction,
                                     spec.validation_fraction, spec.seed);
  ds.train_indices = std::move(split.train);
  ds.validation_indices = std::move(split.validation);
  ds.test_indices = std::move(split.test);
  return ds;
}

SplitIndices compute_split(int total_count, double train_fraction,
                           double validation_fraction, std::uint64_t seed) {
  std::vector<int> order(total_count);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(tag_seed(seed, "split"));
  std::shuffle(order.begin(), order.end(), split_rng.engine());

  const int train_count = static_cast<int>(train_fraction * total_count);
  const int val_count = static_cast<int>(validation_fraction * total_count);
  SplitIndices split;
  split.train.assign(order.begin(), order.begin() + train_count);
  split.validation.assign(order.begin() + train_count,
                          order.begin() + train_count + val_count);
  split.test.assign(order.begin() + train_count + val_count, order.end());
  return split;
}

std::uint64_t dataset_instance_seed(const DatasetSpec& spec, std::size_t k) {
  return mix_seed(tag_seed(spec.seed, "instance"), k);
}

}  // namespace sblkit
