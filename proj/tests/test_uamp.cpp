#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "sblkit/evalbench.hpp"
#include "sblkit/uamp.hpp"
#include "test_helpers.hpp"

using namespace sblkit;
using testutil::exact_eq;

TEST_CASE("identity matrix transforms to unit spectrum") {
  const int n = 3;
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd y(n);
  y << 1.0, -2.0, 0.5;
  const UnitaryModel model = unitary_transform(a, y);
  CHECK(model.m() == n);
  CHECK(model.n() == n);
  for (int i = 0; i < n; ++i) CHECK(model.lambda_vec[i] == doctest::Approx(1.0));
  CHECK(model.r.norm() == doctest::Approx(y.norm()).epsilon(1e-12));
  // Phi is orthogonal when A is.
  CHECK((model.phi.transpose() * model.phi - a).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("diagonal matrix yields squared singular values") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  a(0, 0) = 3.0;
  a(1, 1) = 2.0;
  Eigen::VectorXd y(2);
  y << 1.0, 1.0;
  const UnitaryModel model = unitary_transform(a, y);
  CHECK(model.lambda_vec[0] == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(model.lambda_vec[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("transform preserves the Gram matrix and norms") {
  InstanceParams params;
  params.m = 80;
  params.n = 100;
  params.rho = 0.1;
  params.snr_db = 50.0;
  const ProblemInstance inst = gen_instance(params, 17);
  const UnitaryModel model = unitary_transform(inst.a, inst.y);
  const Eigen::MatrixXd lhs = model.phi.transpose() * model.phi;
  const Eigen::MatrixXd rhs = inst.a.transpose() * inst.a;
  CHECK((lhs - rhs).norm() / rhs.norm() < 1e-10);
  CHECK(std::abs(model.phi.norm() - inst.a.norm()) / inst.a.norm() < 1e-10);
  CHECK(std::abs(model.r.norm() - inst.y.norm()) / inst.y.norm() < 1e-10);
  // Spectrum is nonnegative and descending.
  for (int i = 0; i + 1 < model.m(); ++i)
    CHECK(model.lambda_vec[i] >= model.lambda_vec[i + 1]);
  CHECK(model.lambda_vec.minCoeff() >= 0.0);
  // M < N: all M squared singular values are positive.
  CHECK(model.lambda_vec.minCoeff() > 0.0);
}

TEST_CASE("tall matrices pad the spectrum with zeros") {
  Rng rng(40);
  const Eigen::MatrixXd a = gen_iid_gaussian_matrix(5, 3, rng);
  const Eigen::VectorXd y = Eigen::VectorXd::Ones(5);
  const UnitaryModel model = unitary_transform(a, y);
  CHECK(model.lambda_vec.size() == 5);
  CHECK(model.lambda_vec[3] == 0.0);
  CHECK(model.lambda_vec[4] == 0.0);
  CHECK(model.lambda_vec[2] > 0.0);
}

TEST_CASE("init places the documented starting state") {
  const UampState state = uamp_sbl_init(4, 6);
  CHECK(state.tau_x == kUampInitTauX);
  CHECK(state.beta_hat == kUampInitBeta);
  CHECK((state.gamma_hat.array() == kUampInitGamma).all());
  CHECK(state.epsilon == kUampInitEpsilon);
  CHECK((state.x_hat.array() == 0.0).all());
  CHECK((state.s.array() == 0.0).all());
  CHECK(state.x_hat.size() == 6);
  CHECK(state.s.size() == 4);
  CHECK(state.iter == 0);
}

TEST_CASE("first iteration from init sets tau_p to lambda and p to zero") {
  InstanceParams params;
  params.m = 6;
  params.n = 8;
  params.rho = 0.4;
  params.snr_db = 20.0;
  const ProblemInstance inst = gen_instance(params, 23);
  const UnitaryModel model = unitary_transform(inst.a, inst.y);
  UampState state = uamp_sbl_init(model.m(), model.n());
  uamp_sbl_iterate(state, model, Tuner::empirical());
  CHECK(exact_eq(state.tau_p, model.lambda_vec));
  CHECK((state.p.array() == 0.0).all());
  CHECK(state.iter == 1);
}

TEST_CASE("scalar iteration matches the hand evaluation") {
  // lambda = [1], r = [1], init state: v_h = 1/2, h_hat = 1/2,
  // beta_hat = 1/((1/2)^2 + 1/2) = 4/3.
  UnitaryModel model;
  model.phi = Eigen::MatrixXd::Ones(1, 1);
  model.r = Eigen::VectorXd::Ones(1);
  model.lambda_vec = Eigen::VectorXd::Ones(1);
  UampState state = uamp_sbl_init(1, 1);
  uamp_sbl_iterate(state, model, Tuner::fixed(0.001));
  CHECK(state.v_h[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(state.h_hat[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(state.beta_hat == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("gamma update with zero epsilon is the pure reciprocal") {
  InstanceParams params;
  params.m = 5;
  params.n = 7;
  params.rho = 0.5;
  params.snr_db = 15.0;
  const ProblemInstance inst = gen_instance(params, 3);
  const UnitaryModel model = unitary_transform(inst.a, inst.y);
  UampState state = uamp_sbl_init(model.m(), model.n());
  state.epsilon = 0.0;  // previous-epsilon convention feeds line 12
  uamp_sbl_iterate(state, model, Tuner::fixed(0.0));
  for (int i = 0; i < model.n(); ++i) {
    const double expected = 1.0 / (state.x_hat[i] * state.x_hat[i] + state.tau_x);
    CHECK(state.gamma_hat[i] == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("fixed tuner keeps the epsilon trace constant") {
  InstanceParams params;
  params.m = 10;
  params.n = 12;
  params.rho = 0.3;
  params.snr_db = 25.0;
  const ProblemInstance inst = gen_instance(params, 55);
  UampOptions options;
  options.iterations = 8;
  const RecoveryResult result = uamp_sbl_run(inst, Tuner::fixed(0.01), options);
  CHECK(result.epsilon_trace.size() == 8);
  for (double eps : result.epsilon_trace) CHECK(eps == 0.01);
  CHECK(result.beta_trace.size() == 8);
  CHECK(result.iterations_run == 8);
  CHECK(result.per_iteration_nmse_db.size() == 8);
}

TEST_CASE("single iteration records a single trace entry") {
  InstanceParams params;
  params.m = 4;
  params.n = 6;
  params.rho = 0.5;
  params.snr_db = 20.0;
  const ProblemInstance inst = gen_instance(params, 9);
  UampOptions options;
  options.iterations = 1;
  const RecoveryResult result = uamp_sbl_run(inst, Tuner::empirical(), options);
  CHECK(result.iterations_run == 1);
  CHECK(result.per_iteration_nmse_db.size() == 1);
  CHECK(result.epsilon_trace.size() == 1);
}

TEST_CASE("runner and model variant agree bitwise") {
  InstanceParams params;
  params.m = 20;
  params.n = 24;
  params.rho = 0.2;
  params.snr_db = 30.0;
  const ProblemInstance inst = gen_instance(params, 70);
  UampOptions options;
  options.iterations = 15;
  const RecoveryResult direct = uamp_sbl_run(inst, Tuner::empirical(), options);
  const UnitaryModel model = unitary_transform(inst.a, inst.y);
  const RecoveryResult via_model =
      uamp_sbl_run_model(model, inst.x_true, Tuner::empirical(), options);
  CHECK(exact_eq(direct.x_hat, via_model.x_hat));
  CHECK(direct.per_iteration_nmse_db == via_model.per_iteration_nmse_db);
  CHECK(direct.epsilon_trace == via_model.epsilon_trace);
  CHECK(direct.beta_trace == via_model.beta_trace);
}

TEST_CASE("state invariants hold across a long run") {
  InstanceParams params;
  params.m = 40;
  params.n = 50;
  params.rho = 0.2;
  params.snr_db = 15.0;
  const ProblemInstance inst = gen_instance(params, 4242);
  const UnitaryModel model = unitary_transform(inst.a, inst.y);
  UampState state = uamp_sbl_init(model.m(), model.n());
  const Tuner tuner = Tuner::empirical();
  for (int it = 0; it < 50; ++it) {
    uamp_sbl_iterate(state, model, tuner);
    CHECK(state.tau_x > 0.0);
    CHECK(state.beta_hat > 0.0);
    CHECK((state.gamma_hat.array() > 0.0).all());
    CHECK(state.epsilon > -0.5);
  }
}

TEST_CASE("permutation equivariance under the empirical tuner") {
  InstanceParams params;
  params.m = 30;
  params.n = 40;
  params.rho = 0.25;
  params.snr_db = 30.0;
  const ProblemInstance inst = gen_instance(params, 500);
  UampOptions options;
  options.iterations = 20;
  const RecoveryResult base = uamp_sbl_run(inst, Tuner::empirical(), options);

  std::vector<int> perm(params.n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(1);
  std::shuffle(perm.begin(), perm.end(), rng.engine());

  ProblemInstance permuted = inst;
  for (int j = 0; j < params.n; ++j) {
    permuted.a.col(j) = inst.a.col(perm[j]);
    permuted.x_true[j] = inst.x_true[perm[j]];
  }
  const RecoveryResult shuffled = uamp_sbl_run(permuted, Tuner::empirical(), options);
  double max_diff = 0.0;
  for (int j = 0; j < params.n; ++j)
    max_diff = std::max(max_diff, std::abs(shuffled.x_hat[j] - base.x_hat[perm[j]]));
  CHECK(max_diff < 1e-8);
}

TEST_CASE("noise precision estimate lands near the truth") {
  InstanceParams params;
  params.m = 80;
  params.n = 100;
  params.rho = 0.1;
  params.snr_db = 15.0;
  UampOptions options;
  options.iterations = 50;
  options.record_nmse = false;
  double ratio_sum = 0.0;
  const int seeds = 100;
  for (int t = 0; t < seeds; ++t) {
    const ProblemInstance inst = gen_instance(params, mix_seed(31337, t));
    const RecoveryResult result = uamp_sbl_run(inst, Tuner::empirical(), options);
    ratio_sum += result.beta_trace.back() / inst.beta_true;
  }
  const double mean_ratio = ratio_sum / seeds;
  CHECK(mean_ratio > 0.5);
  CHECK(mean_ratio < 2.0);
}

TEST_CASE("degenerate spectrum raises a tagged numerical error") {
  UnitaryModel model;
  model.phi = Eigen::MatrixXd::Ones(1, 1);
  model.r = Eigen::VectorXd::Ones(1);
  model.lambda_vec = Eigen::VectorXd::Zero(1);
  UampState state = uamp_sbl_init(1, 1);
  try {
    uamp_sbl_iterate(state, model, Tuner::fixed(0.001));
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("tau_q") != std::string::npos);
    CHECK(e.iteration() == 1);
  }
}

TEST_CASE("iterate rejects mismatched state and model") {
  InstanceParams params;
  params.m = 4;
  params.n = 6;
  params.rho = 0.5;
  params.snr_db = 20.0;
  const ProblemInstance inst = gen_instance(params, 1);
  const UnitaryModel model = unitary_transform(inst.a, inst.y);
  UampState state = uamp_sbl_init(3, 6);
  CHECK_THROWS_AS(uamp_sbl_iterate(state, model, Tuner::empirical()), DimensionError);
}
