#include "sblkit/sbl.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "sblkit/evalbench.hpp"

namespace sblkit {

SblState sbl_init(int n, double beta, double epsilon0, double eta0) {
  if (n <= 0) throw DimensionError("sbl_init: n must be positive");
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw DomainError("sbl_init: beta must be a positive finite value");
  if (!(epsilon0 > -0.5))
    throw DomainError("sbl_init: epsilon0 must exceed -0.5");
  if (eta0 < 0.0) throw DomainError("sbl_init: eta0 must be non-negative");
  SblState state;
  state.z.resize(n, n);
  state.x_hat = Eigen::VectorXd::Zero(n);
  state.gamma = Eigen::VectorXd::Ones(n);
  state.epsilon = epsilon0;
  state.eta = eta0;
  state.beta = beta;
  state.iter = 0;
  return state;
}

void sbl_iterate(SblState& state, const Eigen::MatrixXd& ata,
                 const Eigen::VectorXd& aty, const Tuner& tuner) {
  const int n = static_cast<int>(state.gamma.size());
  if (ata.rows() != n || ata.cols() != n || aty.size() != n)
    throw DimensionError("sbl_iterate: ata/aty do not match state dimension");
  const int iter = state.iter + 1;

  Eigen::MatrixXd precision = state.beta * ata;
  precision.diagonal() += state.gamma;
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success)
    throw NumericalError("sbl_iterate: posterior precision is not positive definite",
                         iter);
  state.z = llt.solve(Eigen::MatrixXd::Identity(n, n));
  state.x_hat = state.beta * (state.z * aty);
  if (!state.z.allFinite() || !state.x_hat.allFinite())
    throw NumericalError("sbl_iterate: non-finite posterior", iter);

  const double scale = 2.0 * state.epsilon + 1.0;
  for (int i = 0; i < n; ++i) {
    const double denom = 2.0 * state.eta + state.x_hat[i] * state.x_hat[i] +
                         state.z(i, i);
    if (!(denom > 0.0) || !std::isfinite(denom))
      throw NumericalError("sbl_iterate: gamma denominator is not positive at index " +
                               std::to_string(i),
                           iter);
    state.gamma[i] = scale / denom;
  }
  if (!state.gamma.allFinite() || state.gamma.minCoeff() <= 0.0)
    throw NumericalError("sbl_iterate: gamma left the positive range", iter);

  state.epsilon = tuner.epsilon(state.gamma);
  if (!std::isfinite(state.epsilon) || !(state.epsilon > -0.5))
    throw NumericalError("sbl_iterate: tuner produced epsilon = " +
                             std::to_string(state.epsilon),
                         iter);
  state.iter = iter;
}

RecoveryResult sbl_run(const ProblemInstance& instance, const Tuner& tuner,
                       const SblOptions& options) {
  if (options.iterations <= 0)
    throw DomainError("sbl_run: iterations must be positive");
  const double epsilon0 =
      options.epsilon0.value_or(tuner.is_fixed() ? tuner.fixed_value() : 0.001);
  const double eta0 = options.eta0.value_or(tuner.is_fixed() ? 1e-4 : 0.0);

  SblState state = sbl_init(instance.n(), instance.beta_true, epsilon0, eta0);
  const Eigen::MatrixXd ata = instance.a.transpose() * instance.a;
  const Eigen::VectorXd aty = instance.a.transpose() * instance.y;

  RecoveryResult result;
  result.epsilon_trace.reserve(options.iterations);
  if (options.record_nmse)
    result.per_iteration_nmse_db.reserve(options.iterations);
  for (int i = 0; i < options.iterations; ++i) {
    sbl_iterate(state, ata, aty, tuner);
    result.epsilon_trace.push_back(state.epsilon);
    if (options.record_nmse)
      result.per_iteration_nmse_db.push_back(nmse_db(state.x_hat, instance.x_true));
  }
  result.x_hat = state.x_hat;
  result.beta_trace.assign(options.iterations, state.beta);
  result.iterations_run = state.iter;
  return result;
}

}  // namespace sblkit
