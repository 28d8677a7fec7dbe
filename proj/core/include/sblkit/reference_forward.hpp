#pragma once

#include <Eigen/Core>

#include "sblkit/tuners.hpp"
#include "sblkit/uamp.hpp"

namespace sblkit {

// Self-contained long-double re-implementation of the unrolled forward pass,
// returning 0.5 * ||x_hat_final - x_true||^2. Written independently of
// uamp_sbl_iterate so the finite-difference oracle does not share code with
// the graph it is checking; the extra mantissa keeps central differences at
// step 1e-6 meaningful.
long double reference_unrolled_loss(const UnitaryModel& model,
                                    const Eigen::VectorXd& x_true,
                                    const NnTunerParams& params, double clamp_low,
                                    int iters);

}  // namespace sblkit
