#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "sblkit/problem.hpp"
#include "sblkit/sbl.hpp"
#include "sblkit/tuners.hpp"
#include "sblkit/uamp.hpp"
#include "sblkit/unroll.hpp"

namespace {

using namespace sblkit;

ProblemInstance make_instance(int m, int n, std::uint64_t seed) {
  InstanceParams params;
  params.m = m;
  params.n = n;
  params.rho = 0.1;
  params.snr_db = 50.0;
  params.matrix_kind = MatrixKind::correlated(0.1);
  return gen_instance(params, seed);
}

void bm_unitary_transform(benchmark::State& state) {
  const ProblemInstance inst =
      make_instance(static_cast<int>(state.range(0)),
                    static_cast<int>(state.range(0)) * 5 / 4, 11);
  for (auto _ : state) {
    UnitaryModel model = unitary_transform(inst.a, inst.y);
    benchmark::DoNotOptimize(model.phi.data());
  }
}
BENCHMARK(bm_unitary_transform)->Arg(40)->Arg(80)->Arg(160);

void bm_uamp_iterate(benchmark::State& state) {
  const ProblemInstance inst =
      make_instance(static_cast<int>(state.range(0)),
                    static_cast<int>(state.range(0)) * 5 / 4, 13);
  const UnitaryModel model = unitary_transform(inst.a, inst.y);
  const Tuner tuner = Tuner::empirical();
  UampState s = uamp_sbl_init(model.m(), model.n());
  for (auto _ : state) {
    uamp_sbl_iterate(s, model, tuner);
    benchmark::DoNotOptimize(s.x_hat.data());
  }
}
BENCHMARK(bm_uamp_iterate)->Arg(40)->Arg(80)->Arg(160);

void bm_sbl_iterate(benchmark::State& state) {
  const ProblemInstance inst =
      make_instance(static_cast<int>(state.range(0)),
                    static_cast<int>(state.range(0)) * 5 / 4, 17);
  const Eigen::MatrixXd ata = inst.a.transpose() * inst.a;
  const Eigen::VectorXd aty = inst.a.transpose() * inst.y;
  const Tuner tuner = Tuner::empirical();
  SblState s = sbl_init(inst.n(), inst.beta_true, 0.001, 0.0);
  for (auto _ : state) {
    sbl_iterate(s, ata, aty, tuner);
    benchmark::DoNotOptimize(s.x_hat.data());
  }
}
BENCHMARK(bm_sbl_iterate)->Arg(40)->Arg(80)->Arg(160);

void bm_empirical_epsilon(benchmark::State& state) {
  Rng rng(19);
  Eigen::VectorXd gamma(state.range(0));
  for (int i = 0; i < gamma.size(); ++i) gamma[i] = std::exp(rng.normal());
  for (auto _ : state) benchmark::DoNotOptimize(empirical_epsilon(gamma));
}
BENCHMARK(bm_empirical_epsilon)->Arg(100)->Arg(1000);

void bm_neural_epsilon(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const NnTunerParams params = init_params(n, 256, 23);
  const Tuner tuner =
      Tuner::neural(std::make_shared<const NnTunerParams>(params), 0.0);
  Rng rng(29);
  Eigen::VectorXd gamma(n);
  for (int i = 0; i < n; ++i) gamma[i] = std::exp(rng.normal());
  for (auto _ : state) benchmark::DoNotOptimize(tuner.epsilon(gamma));
}
BENCHMARK(bm_neural_epsilon)->Arg(100);

void bm_unrolled_forward(benchmark::State& state) {
  const ProblemInstance inst = make_instance(40, 50, 31);
  const NnTunerParams params = init_params(50, 64, 37);
  const int iters = static_cast<int>(state.range(0));
  for (auto _ : state) {
    GradientTape tape = unrolled_forward(inst, params, iters, -0.49);
    benchmark::DoNotOptimize(tape.layers.data());
  }
}
BENCHMARK(bm_unrolled_forward)->Arg(10)->Arg(25);

void bm_unrolled_backward(benchmark::State& state) {
  const ProblemInstance inst = make_instance(40, 50, 41);
  const NnTunerParams params = init_params(50, 64, 43);
  const GradientTape tape =
      unrolled_forward(inst, params, static_cast<int>(state.range(0)), -0.49);
  for (auto _ : state) {
    GradientBundle grads = unrolled_backward(tape, inst.x_true, params);
    benchmark::DoNotOptimize(grads.dw.data());
  }
}
BENCHMARK(bm_unrolled_backward)->Arg(10)->Arg(25);

}  // namespace

BENCHMARK_MAIN();
