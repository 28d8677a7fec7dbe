#include "sblkit/uamp.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "sblkit/evalbench.hpp"

namespace sblkit {

namespace {

constexpr double kDenomFloor = 1e-300;

void check_finite(const Eigen::VectorXd& v, const char* line, int iter) {
  if (!v.allFinite())
    throw NumericalError(std::string("uamp_sbl_iterate: non-finite ") + line, iter);
}

void check_finite(double v, const char* line, int iter) {
  if (!std::isfinite(v))
    throw NumericalError(std::string("uamp_sbl_iterate: non-finite ") + line, iter);
}

void check_denom(double v, const char* line, int iter) {
  if (!(v > kDenomFloor) || !std::isfinite(v))
    throw NumericalError(std::string("uamp_sbl_iterate: vanishing denominator in ") +
                             line,
                         iter);
}

}  // namespace

UnitaryModel unitary_transform(const Eigen::MatrixXd& a, const Eigen::VectorXd& y) {
  if (a.rows() == 0 || a.cols() == 0)
    throw DimensionError("unitary_transform: empty matrix");
  if (y.size() != a.rows())
    throw DimensionError("unitary_transform: y has length " +
                         std::to_string(y.size()) + ", expected " +
                         std::to_string(a.rows()));
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU);
  UnitaryModel model;
  const Eigen::MatrixXd ut = svd.matrixU().transpose();
  model.phi = ut * a;
  model.r = ut * y;
  model.lambda_vec = Eigen::VectorXd::Zero(a.rows());
  const Eigen::VectorXd& sv = svd.singularValues();  // descending
  const Eigen::Index k = std::min<Eigen::Index>(sv.size(), a.rows());
  model.lambda_vec.head(k) = sv.head(k).array().square();
  return model;
}

UampState uamp_sbl_init(int m, int n) {
  if (m <= 0 || n <= 0)
    throw DimensionError("uamp_sbl_init: dimensions must be positive");
  UampState state;
  state.x_hat = Eigen::VectorXd::Zero(n);
  state.tau_x = kUampInitTauX;
  state.s = Eigen::VectorXd::Zero(m);
  state.beta_hat = kUampInitBeta;
  state.gamma_hat = Eigen::VectorXd::Constant(n, kUampInitGamma);
  state.epsilon = kUampInitEpsilon;
  state.iter = 0;
  state.tau_p.resize(m);
  state.p.resize(m);
  state.v_h.resize(m);
  state.h_hat.resize(m);
  state.tau_s.resize(m);
  state.q.resize(n);
  return state;
}

void uamp_sbl_iterate(UampState& state, const UnitaryModel& model, const Tuner& tuner) {
  const int m = model.m();
  const int n = model.n();
  if (state.x_hat.size() != n || state.s.size() != m)
    throw DimensionError("uamp_sbl_iterate: state does not match model dimensions");
  const int iter = state.iter + 1;
  const double beta_prev = state.beta_hat;

  state.tau_p = state.tau_x * model.lambda_vec;
  check_finite(state.tau_p, "tau_p", iter);

  state.p = model.phi * state.x_hat - state.tau_p.cwiseProduct(state.s);
  check_finite(state.p, "p", iter);

  // v_h and h_hat use the previous beta estimate.
  const Eigen::ArrayXd denom_h = 1.0 + beta_prev * state.tau_p.array();
  for (int i = 0; i < m; ++i) check_denom(denom_h[i], "h denominator", iter);
  state.v_h = (state.tau_p.array() / denom_h).matrix();
  check_finite(state.v_h, "v_h", iter);
  state.h_hat =
      ((beta_prev * state.tau_p.array() * model.r.array() + state.p.array()) /
       denom_h)
          .matrix();
  check_finite(state.h_hat, "h_hat", iter);

  const double resid = (model.r - state.h_hat).squaredNorm() + state.v_h.sum();
  check_denom(resid, "beta_hat", iter);
  state.beta_hat = static_cast<double>(m) / resid;
  check_finite(state.beta_hat, "beta_hat", iter);

  const Eigen::ArrayXd tau_s_denom = state.tau_p.array() + 1.0 / state.beta_hat;
  for (int i = 0; i < m; ++i) check_denom(tau_s_denom[i], "tau_s", iter);
  state.tau_s = tau_s_denom.inverse().matrix();
  check_finite(state.tau_s, "tau_s", iter);

  state.s = state.tau_s.cwiseProduct(model.r - state.p);
  check_finite(state.s, "s", iter);

  const double lambda_tau_s = model.lambda_vec.dot(state.tau_s);
  check_denom(lambda_tau_s, "tau_q", iter);
  state.tau_q = static_cast<double>(n) / lambda_tau_s;
  check_finite(state.tau_q, "tau_q", iter);

  state.q = state.x_hat + state.tau_q * (model.phi.transpose() * state.s);
  check_finite(state.q, "q", iter);

  // tau_x and x_hat use the previous gamma estimate.
  const Eigen::ArrayXd denom_x = 1.0 + state.tau_q * state.gamma_hat.array();
  for (int i = 0; i < n; ++i) check_denom(denom_x[i], "x denominator", iter);
  state.tau_x = (state.tau_q / n) * denom_x.inverse().sum();
  check_finite(state.tau_x, "tau_x", iter);
  state.x_hat = (state.q.array() / denom_x).matrix();
  check_finite(state.x_hat, "x_hat", iter);

  const double scale = 2.0 * state.epsilon + 1.0;
  for (int i = 0; i < n; ++i) {
    const double denom = state.x_hat[i] * state.x_hat[i] + state.tau_x;
    check_denom(denom, "gamma_hat", iter);
    state.gamma_hat[i] = scale / denom;
  }
  check_finite(state.gamma_hat, "gamma_hat", iter);
  if (state.gamma_hat.minCoeff() <= 0.0)
    throw NumericalError("uamp_sbl_iterate: gamma_hat left the positive range", iter);

  state.epsilon = tuner.epsilon(state.gamma_hat);
  if (!std::isfinite(state.epsilon) || !(state.epsilon > -0.5))
    throw NumericalError("uamp_sbl_iterate: tuner produced epsilon = " +
                             std::to_string(state.epsilon),
                         iter);
  state.iter = iter;
}

RecoveryResult uamp_sbl_run_model(const UnitaryModel& model,
                                  const Eigen::VectorXd& x_true, const Tuner& tuner,
                                  const UampOptions& options) {
  if (options.iterations <= 0)
    throw DomainError("uamp_sbl_run: iterations must be positive");
  const bool record = options.record_nmse && x_true.size() == model.n();
  UampState state = uamp_sbl_init(model.m(), model.n());

  RecoveryResult result;
  result.epsilon_trace.reserve(options.iterations);
  result.beta_trace.reserve(options.iterations);
  if (record) result.per_iteration_nmse_db.reserve(options.iterations);
  for (int i = 0; i < options.iterations; ++i) {
    uamp_sbl_iterate(state, model, tuner);
    result.epsilon_trace.push_back(state.epsilon);
    result.beta_trace.push_back(state.beta_hat);
    if (record) result.per_iteration_nmse_db.push_back(nmse_db(state.x_hat, x_true));
  }
  result.x_hat = state.x_hat;
  result.iterations_run = state.iter;
  return result;
}

RecoveryResult uamp_sbl_run(const ProblemInstance& instance, const Tuner& tuner,
                            const UampOptions& options) {
  const UnitaryModel model = unitary_transform(instance.a, instance.y);
  return uamp_sbl_run_model(model, instance.x_true, tuner, options);
}

}  // namespace sblkit
