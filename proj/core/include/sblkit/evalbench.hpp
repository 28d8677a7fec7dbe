#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "sblkit/errors.hpp"
#include "sblkit/problem.hpp"
#include "sblkit/tuners.hpp"

namespace sblkit {

// Reported dB values are floored here so that exact recoveries stay numeric.
inline constexpr double kNmseFloorDb = -120.0;

enum class Algorithm { Sbl, UampSbl };
std::string algorithm_name(Algorithm algorithm);

// Per-trial normalized squared error ||x_hat - x||^2 / ||x||^2.
// Throws DomainError when the truth vector is all-zero.
double normalized_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth);

// Mean of per-trial normalized errors over a batch (linear scale).
double nmse_linear(const std::vector<Eigen::VectorXd>& estimates,
                   const std::vector<Eigen::VectorXd>& truths);

// 10*log10 with the floor above applied; linear must be >= 0.
double nmse_db_from_linear(double linear);

// Single-pair convenience: dB of normalized_error.
double nmse_db(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth);

// Known-support MMSE estimator under the unit-variance prior on nonzeros:
// x_S = (beta A_S^T A_S + I)^{-1} beta A_S^T y, zero off support. Returns its
// normalized squared error.
double oracle_bound(const ProblemInstance& instance);

struct ExperimentSpec {
  Algorithm algorithm = Algorithm::UampSbl;
  Tuner tuner = Tuner::empirical();
  int m = 80;
  int n = 100;
  std::vector<double> snr_grid;
  std::vector<double> rho_grid;
  MatrixKind matrix_kind = MatrixKind::correlated(0.1);
  int trials = 200;
  int iterations = 50;
  std::uint64_t seed = 0;
  bool include_oracle = true;

  void validate() const;
};

struct ResultRow {
  double snr_db = 0.0;
  double rho = 0.0;
  int iteration = 0;
  double nmse_db = 0.0;
  std::string algorithm;
  std::string tuner;
};

struct CellFailure {
  double snr_db = 0.0;
  double rho = 0.0;
  int failed = 0;
};

struct ResultTable {
  std::vector<ResultRow> rows;
  std::vector<CellFailure> failures;  // cells with at least one failed trial
  int total_trials = 0;

  int failed_trials() const;
};

// Runs trials x grid cells of the configured algorithm, averaging per-trial
// normalized errors at every iteration (linear mean, then dB). Appends one
// oracle row per cell at the final iteration when include_oracle is set.
// Failed trials are excluded and counted per cell; a cell where every trial
// fails raises NumericalError. Output is independent of thread count.
ResultTable run_experiment(const ExperimentSpec& spec, int threads = 1);

std::string csv_string(const ResultTable& table);
void emit_csv(const ResultTable& table, const std::filesystem::path& path);

}  // namespace sblkit
