#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "sblkit/errors.hpp"
#include "sblkit/rng.hpp"

namespace sblkit {

/// Thrown when the drawn signal gives a·x = 0 and the noise precision is
/// undefined; callers redraw x.
class ZeroSignalError : public DomainError {
public:
  using DomainError::DomainError;
};

/// Measurement-matrix family: i.i.d. standard Gaussian entries, or the
/// correlated construction C_L^{1/2} G C_R^{1/2} with (i,j) entries c^|i-j|.
struct MatrixKind {
  enum class Tag { IidGaussian, Correlated };

  Tag tag = Tag::IidGaussian;
  double c = 0.0;

  static MatrixKind iid() { return {Tag::IidGaussian, 0.0}; }
  static MatrixKind correlated(double c) { return {Tag::Correlated, c}; }
  bool is_correlated() const { return tag == Tag::Correlated; }
  bool operator==(const MatrixKind&) const = default;
};

/// One realization of the linear model y = A x + noise, with noise drawn at
/// variance 1/beta_true. Regenerating with the stored seed reproduces every
/// field bit-identically (within one build).
struct ProblemInstance {
  Eigen::MatrixXd a;        // M x N measurement matrix
  Eigen::VectorXd x_true;   // length-N sparse signal
  Eigen::VectorXd y;        // length-M observation
  double beta_true = 0.0;   // noise precision (inverse variance)
  double snr_db = 0.0;
  double rho = 0.0;         // non-zero probability of x entries
  MatrixKind matrix_kind;
  std::uint64_t seed = 0;

  int m() const { return static_cast<int>(a.rows()); }
  int n() const { return static_cast<int>(a.cols()); }
};

/// Parameters for one instance draw.
struct InstanceParams {
  int m = 80;
  int n = 100;
  double rho = 0.1;
  double snr_db = 50.0;
  MatrixKind matrix_kind = MatrixKind::iid();
};

struct DatasetSpec {
  int m = 80;
  int n = 100;
  std::vector<double> snr_grid{10, 20, 30, 40, 50};
  std::vector<double> rho_grid{0.1, 0.2, 0.3, 0.4, 0.5};
  int total_count = 0;
  MatrixKind matrix_kind = MatrixKind::iid();
  bool fresh_matrix_per_sample = true;
  std::uint64_t seed = 0;
  double train_fraction = 0.4;
  double validation_fraction = 0.4;

  void validate() const;
};

struct Dataset {
  std::vector<ProblemInstance> instances;
  std::vector<int> train_indices;
  std::vector<int> validation_indices;
  std::vector<int> test_indices;
  DatasetSpec spec;
};

/// Bernoulli-Gaussian draw: each entry is zero with probability 1-rho,
/// otherwise standard normal.
Eigen::VectorXd gen_sparse_signal(int n, double rho, Rng& rng);

Eigen::MatrixXd gen_iid_gaussian_matrix(int m, int n, Rng& rng);

/// C_L^{1/2} G C_R^{1/2} with Toeplitz correlation c^|i-j| on both sides.
/// Square roots come from a symmetric eigendecomposition with tiny negative
/// eigenvalues clamped to zero.
Eigen::MatrixXd gen_correlated_matrix(int m, int n, double c, Rng& rng);

/// Symmetric square root of the dim x dim Toeplitz matrix with entries
/// c^|i-j|. Exposed so dataset generation can reuse it across draws.
Eigen::MatrixXd correlation_sqrt(int dim, double c);

/// Draw with precomputed correlation square roots (same output distribution
/// and rng consumption as gen_correlated_matrix).
Eigen::MatrixXd gen_correlated_matrix_with(const Eigen::MatrixXd& sqrt_left,
                                           const Eigen::MatrixXd& sqrt_right,
                                           Rng& rng);

/// beta such that ||a·x||^2 / (M/beta) = 10^(snr_db/10).
/// Throws ZeroSignalError when a·x = 0 so the caller can redraw x.
double noise_precision_for_snr(const Eigen::MatrixXd& a, const Eigen::VectorXd& x,
                               double snr_db);

/// The noise vector an instance seed implies: u / sqrt(beta) with u drawn
/// standard-normal from the seed's "noise" stream. Used to rebuild y exactly.
Eigen::VectorXd noise_vector(std::uint64_t instance_seed, int m, double beta);

/// Fully populated instance. Redraws x (cap 100) while a·x = 0, then throws
/// DomainError for unrecoverable specs (rho = 0). When `shared_matrix` is
/// non-null it is used instead of drawing a fresh A.
ProblemInstance gen_instance(const InstanceParams& params, std::uint64_t seed,
                             const Eigen::MatrixXd* shared_matrix = nullptr);

/// total_count instances with (snr, rho) cycling over the grid product and a
/// 40/40/20 split (by default) from a deterministic shuffle of DatasetSpec::seed.
/// Generation fans out over `threads` workers; results are order-independent.
Dataset gen_dataset(const DatasetSpec& spec, std::size_t threads = 1);

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;
};

/// The deterministic 40/40/20 (by default) partition a spec implies.
SplitIndices compute_split(int total_count, double train_fraction,
                           double validation_fraction, std::uint64_t seed);

/// The seed gen_dataset assigns to instance k of a spec.
std::uint64_t dataset_instance_seed(const DatasetSpec& spec, std::size_t k);

}  // namespace sblkit
