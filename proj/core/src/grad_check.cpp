#include "sblkit/grad_check.hpp"

#include <cmath>

#include "sblkit/problem.hpp"
#include "sblkit/reference_forward.hpp"
#include "sblkit/rng.hpp"

namespace sblkit {

int flat_param_count(const NnTunerParams& params) {
  return static_cast<int>(params.parameter_count());
}

double& flat_param(NnTunerParams& params, int index) {
  const int n = params.n_input();
  const int l = params.l_hidden();
  if (index < 0 || index >= flat_param_count(params))
    throw DomainError("flat_param: index out of range");
  if (index < l * n) return params.w(index / n, index % n);
  index -= l * n;
  if (index < l) return params.b[index];
  index -= l;
  if (index < l) return params.alpha[index];
  return params.d;
}

double flat_gradient(const GradientBundle& bundle, int index) {
  const int n = static_cast<int>(bundle.dw.cols());
  const int l = static_cast<int>(bundle.dw.rows());
  if (index < l * n) return bundle.dw(index / n, index % n);
  index -= l * n;
  if (index < l) return bundle.db[index];
  index -= l;
  if (index < l) return bundle.dalpha[index];
  return bundle.dd;
}

std::string flat_param_name(const NnTunerParams& params, int index) {
  const int n = params.n_input();
  const int l = params.l_hidden();
  if (index < l * n)
    return "w(" + std::to_string(index / n) + "," + std::to_string(index % n) + ")";
  index -= l * n;
  if (index < l) return "b(" + std::to_string(index) + ")";
  index -= l;
  if (index < l) return "alpha(" + std::to_string(index) + ")";
  return "d";
}

double gradient_rel_err(double analytic, double reference, double scale) {
  const double denom =
      std::max({std::abs(analytic), std::abs(reference), 1e-3 * scale});
  if (denom == 0.0) return 0.0;
  return std::abs(analytic - reference) / denom;
}

GradCheckReport run_grad_check(const GradCheckConfig& config) {
  if (config.seeds < 1) throw DomainError("grad check: seeds must be at least 1");
  if (!(config.fd_step > 0.0))
    throw DomainError("grad check: fd_step must be positive");

  GradCheckReport report;
  for (int s = 0; s < config.seeds; ++s) {
    const std::uint64_t instance_seed =
        mix_seed(tag_seed(config.seed, "gradcheck-instance"), s);
    const std::uint64_t param_seed =
        mix_seed(tag_seed(config.seed, "gradcheck-params"), s);

    InstanceParams iparams;
    iparams.m = config.m;
    iparams.n = config.n;
    iparams.rho = config.rho;
    iparams.snr_db = config.snr_db;
    iparams.matrix_kind = MatrixKind::iid();
    const ProblemInstance instance = gen_instance(iparams, instance_seed);

    NnTunerParams params = init_params(config.n, config.l_hidden, param_seed);
    const UnitaryModel model = unitary_transform(instance.a, instance.y);

    const GradientTape tape =
        unrolled_forward(model, params, config.iters, config.clamp_low);
    const GradientBundle analytic =
        unrolled_backward(tape, instance.x_true, params);

    const int count = flat_param_count(params);
    std::vector<double> fd(count, 0.0);
    const long double h = static_cast<long double>(config.fd_step);
    for (int p = 0; p < count; ++p) {
      NnTunerParams perturbed = params;
      double& slot = flat_param(perturbed, p);
      const double saved = slot;
      slot = saved + config.fd_step;
      const long double f_plus = reference_unrolled_loss(
          model, instance.x_true, perturbed, config.clamp_low, config.iters);
      slot = saved - config.fd_step;
      const long double f_minus = reference_unrolled_loss(
          model, instance.x_true, perturbed, config.clamp_low, config.iters);
      fd[p] = static_cast<double>((f_plus - f_minus) / (2.0L * h));
    }

    double scale = 0.0;
    for (int p = 0; p < count; ++p)
      scale = std::max({scale, std::abs(flat_gradient(analytic, p)),
                        std::abs(fd[p])});

    GradCheckSeedResult seed_result;
    seed_result.instance_seed = instance_seed;
    seed_result.max_abs_gradient = analytic.max_abs();
    for (int p = 0; p < count; ++p) {
      const double err = gradient_rel_err(flat_gradient(analytic, p), fd[p], scale);
      if (err > seed_result.max_rel_err) {
        seed_result.max_rel_err = err;
        seed_result.worst_index = p;
        seed_result.worst_param = flat_param_name(params, p);
      }
    }
    if (seed_result.worst_index < 0) seed_result.worst_param = "none";

    if (seed_result.max_rel_err >= report.max_rel_err) {
      report.max_rel_err = seed_result.max_rel_err;
      report.worst_seed = s;
      report.worst_param = seed_result.worst_param;
    }
    report.per_seed.push_back(std::move(seed_result));
  }
  return report;
}

}  // namespace sblkit
