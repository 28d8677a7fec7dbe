#pragma once

#include <Eigen/Core>

#include "sblkit/errors.hpp"
#include "sblkit/problem.hpp"
#include "sblkit/result.hpp"
#include "sblkit/tuners.hpp"

namespace sblkit {

// SVD-based reparametrization y = A x + noise  ->  r = Phi x + transformed
// noise, with Phi = U^T A and lambda the squared singular values of A padded
// to length M (descending).
struct UnitaryModel {
  Eigen::MatrixXd phi;        // m x n
  Eigen::VectorXd r;          // m
  Eigen::VectorXd lambda_vec; // m, nonnegative

  int m() const { return static_cast<int>(phi.rows()); }
  int n() const { return static_cast<int>(phi.cols()); }
};

UnitaryModel unitary_transform(const Eigen::MatrixXd& a, const Eigen::VectorXd& y);

// Message-passing state. tau_* are variance-like quantities and stay
// positive; beta_hat and gamma_hat are the running noise/signal precision
// estimates. Scratch vectors persist across iterations to avoid reallocation
// and double as the per-line trace consumed by the unrolled trainer.
struct UampState {
  Eigen::VectorXd x_hat;      // n
  double tau_x = 1.0;
  Eigen::VectorXd s;          // m
  double beta_hat = 1.0;
  Eigen::VectorXd gamma_hat;  // n, positive
  double epsilon = 0.001;
  int iter = 0;

  // per-line intermediates of the most recent iteration
  Eigen::VectorXd tau_p;      // m
  Eigen::VectorXd p;          // m
  Eigen::VectorXd v_h;        // m
  Eigen::VectorXd h_hat;      // m
  Eigen::VectorXd tau_s;      // m
  double tau_q = 0.0;
  Eigen::VectorXd q;          // n
};

// Documented initialization constants; uamp_sbl_init applies them and the
// unrolled trainer's reverse sweep needs them at the first-layer boundary.
inline constexpr double kUampInitTauX = 1.0;
inline constexpr double kUampInitBeta = 1.0;
inline constexpr double kUampInitGamma = 1.0;
inline constexpr double kUampInitEpsilon = 0.001;

UampState uamp_sbl_init(int m, int n);

// One full iteration of the message-passing loop followed by the tuner
// update. Throws NumericalError naming the failing quantity and iteration if
// any intermediate leaves the finite range or a denominator collapses.
void uamp_sbl_iterate(UampState& state, const UnitaryModel& model, const Tuner& tuner);

struct UampOptions {
  int iterations = 50;
  bool record_nmse = true;
};

RecoveryResult uamp_sbl_run(const ProblemInstance& instance, const Tuner& tuner,
                            const UampOptions& options = {});

// Variant reusing an existing transform (the training loop transforms once
// per sample, then unrolls many times).
RecoveryResult uamp_sbl_run_model(const UnitaryModel& model,
                                  const Eigen::VectorXd& x_true, const Tuner& tuner,
                                  const UampOptions& options = {});

}  // namespace sblkit
