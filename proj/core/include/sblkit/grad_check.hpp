#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sblkit/tuners.hpp"
#include "sblkit/unroll.hpp"

namespace sblkit {

// Central-difference verification of the tied unrolled gradient against the
// long-double reference forward, over every network parameter.
struct GradCheckConfig {
  int m = 6;
  int n = 8;
  int l_hidden = 4;
  int iters = 3;
  int seeds = 5;
  double fd_step = 1e-6;
  double clamp_low = -0.49;  // keeps the whole tanh range differentiable
  double snr_db = 20.0;
  double rho = 0.25;
  std::uint64_t seed = 15;
};

struct GradCheckSeedResult {
  std::uint64_t instance_seed = 0;
  double max_rel_err = 0.0;
  int worst_index = -1;
  std::string worst_param;
  // Largest analytic gradient magnitude; 0 means the loss was locally flat
  // (every layer's tuner output clamped), which agrees with the oracle only
  // vacuously.
  double max_abs_gradient = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckSeedResult> per_seed;
  double max_rel_err = 0.0;
  int worst_seed = -1;
  std::string worst_param;
};

GradCheckReport run_grad_check(const GradCheckConfig& config);

// Flat parameter indexing shared by the checker and its report: w row-major
// first, then b, alpha, d.
int flat_param_count(const NnTunerParams& params);
double& flat_param(NnTunerParams& params, int index);
double flat_gradient(const GradientBundle& bundle, int index);
std::string flat_param_name(const NnTunerParams& params, int index);

// Relative error with a floor tied to the gradient scale, so near-zero
// components are compared absolutely against the vector's magnitude.
double gradient_rel_err(double analytic, double reference, double scale);

}  // namespace sblkit
