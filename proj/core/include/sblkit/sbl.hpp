#pragma once

#include <Eigen/Core>
#include <optional>

#include "sblkit/errors.hpp"
#include "sblkit/problem.hpp"
#include "sblkit/result.hpp"
#include "sblkit/tuners.hpp"

namespace sblkit {

// State of the matrix-inversion recovery loop. Fields mirror the update
// order: posterior covariance z, mean x_hat, precisions gamma, then the
// shape/rate pair (epsilon, eta) consumed by the *next* gamma update.
struct SblState {
  Eigen::MatrixXd z;       // n x n posterior covariance
  Eigen::VectorXd x_hat;   // n
  Eigen::VectorXd gamma;   // n, positive
  double epsilon = 0.0;
  double eta = 0.0;
  double beta = 0.0;       // known noise precision, constant across iterations
  int iter = 0;            // completed iterations
};

SblState sbl_init(int n, double beta, double epsilon0, double eta0);

// One iteration:
//   z     = (beta * a^T a + Diag(gamma))^{-1}
//   x_hat = beta * z * a^T y
//   gamma_i = (2*epsilon + 1) / (2*eta + x_hat_i^2 + z_ii)   [previous epsilon/eta]
//   epsilon = tuner(gamma)
// ata and aty are the precomputed Gram matrix and projected observation.
// Throws NumericalError (with the failing iteration) if the linear solve
// breaks down or the state leaves the finite range.
void sbl_iterate(SblState& state, const Eigen::MatrixXd& ata,
                 const Eigen::VectorXd& aty, const Tuner& tuner);

struct SblOptions {
  int iterations = 50;
  std::optional<double> epsilon0;  // default: fixed value, or 0.001 otherwise
  std::optional<double> eta0;      // default: 1e-4 for fixed policy, 0 otherwise
  bool record_nmse = true;
};

RecoveryResult sbl_run(const ProblemInstance& instance, const Tuner& tuner,
                       const SblOptions& options = {});

}  // namespace sblkit
