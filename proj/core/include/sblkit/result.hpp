#pragma once

#include <Eigen/Core>
#include <vector>

namespace sblkit {

// Output of a recovery run. Traces are indexed by iteration (entry i is the
// state after iteration i+1); per_iteration_nmse_db is filled only when the
// caller supplied the true signal.
struct RecoveryResult {
  Eigen::VectorXd x_hat;
  std::vector<double> per_iteration_nmse_db;
  std::vector<double> epsilon_trace;
  std::vector<double> beta_trace;
  int iterations_run = 0;
};

}  // namespace sblkit
