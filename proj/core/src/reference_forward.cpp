#include "sblkit/reference_forward.hpp"

#include <cmath>

namespace sblkit {

namespace {

using LdVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
using LdArray = Eigen::Array<long double, Eigen::Dynamic, 1>;
using LdMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

}  // namespace

long double reference_unrolled_loss(const UnitaryModel& model,
                                    const Eigen::VectorXd& x_true,
                                    const NnTunerParams& params, double clamp_low,
                                    int iters) {
  const int m = model.m();
  const int n = model.n();
  const int l = params.l_hidden();

  const LdMatrix phi = model.phi.cast<long double>();
  const LdArray r = model.r.cast<long double>().array();
  const LdArray lambda = model.lambda_vec.cast<long double>().array();
  const LdMatrix w = params.w.cast<long double>();
  const LdArray b = params.b.cast<long double>().array();
  const LdVector alpha = params.alpha.cast<long double>();
  const long double d = static_cast<long double>(params.d);
  const long double clamp = static_cast<long double>(clamp_low);

  LdVector x_hat = LdVector::Zero(n);
  LdArray s = LdArray::Zero(m);
  LdArray gamma = LdArray::Constant(n, static_cast<long double>(kUampInitGamma));
  long double tau_x = static_cast<long double>(kUampInitTauX);
  long double beta_hat = static_cast<long double>(kUampInitBeta);
  long double epsilon = static_cast<long double>(kUampInitEpsilon);

  for (int i = 0; i < iters; ++i) {
    const LdArray tau_p = tau_x * lambda;
    const LdArray p = (phi * x_hat).array() - tau_p * s;
    const LdArray denom_h = 1.0L + beta_hat * tau_p;
    const LdArray v_h = tau_p / denom_h;
    const LdArray h_hat = (beta_hat * tau_p * r + p) / denom_h;
    beta_hat = static_cast<long double>(m) / ((r - h_hat).square().sum() + v_h.sum());
    const LdArray tau_s = (tau_p + 1.0L / beta_hat).inverse();
    s = tau_s * (r - p);
    const long double tau_q =
        static_cast<long double>(n) / (lambda * tau_s).sum();
    const LdVector q =
        x_hat + tau_q * (phi.transpose() * s.matrix());
    const LdArray w_x = 1.0L + tau_q * gamma;
    tau_x = (tau_q / n) * w_x.inverse().sum();
    x_hat = (q.array() / w_x).matrix();
    const long double scale = 2.0L * epsilon + 1.0L;
    gamma = scale / (x_hat.array().square() + tau_x);

    LdArray gamma_clipped = gamma.max(static_cast<long double>(kGammaClipLo))
                                .min(static_cast<long double>(kGammaClipHi));
    LdArray z = (w * gamma_clipped.matrix()).array() + b;
    LdArray psi(l);
    for (int j = 0; j < l; ++j) psi[j] = std::tanh(z[j]);
    const long double raw = std::tanh(alpha.dot(psi.matrix()) + d);
    epsilon = raw < clamp ? clamp : raw;
  }

  return 0.5L *
         (x_hat.array() - x_true.cast<long double>().array()).square().sum();
}

}  // namespace sblkit
