#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <utility>

#include "doctest.h"
#include "sblkit/problem.hpp"
#include "test_helpers.hpp"

using namespace sblkit;
using testutil::exact_eq;

TEST_CASE("sparse signal is Bernoulli-Gaussian") {
  Rng rng(7);
  const int n = 100000;
  const Eigen::VectorXd x = gen_sparse_signal(n, 0.3, rng);
  int nonzero = 0;
  double sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    if (x[i] != 0.0) {
      ++nonzero;
      sumsq += x[i] * x[i];
    }
  }
  const double rate = static_cast<double>(nonzero) / n;
  CHECK(rate == doctest::Approx(0.3).epsilon(0.03));
  CHECK(sumsq / nonzero == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("sparse signal rejects bad arguments") {
  Rng rng(1);
  CHECK_THROWS_AS(gen_sparse_signal(10, -0.1, rng), DomainError);
  CHECK_THROWS_AS(gen_sparse_signal(10, 1.5, rng), DomainError);
  CHECK_THROWS_AS(gen_sparse_signal(0, 0.5, rng), DomainError);
}

TEST_CASE("iid matrix is reproducible and standard normal") {
  Rng rng_a(42);
  Rng rng_b(42);
  const Eigen::MatrixXd a = gen_iid_gaussian_matrix(2, 2, rng_a);
  const Eigen::MatrixXd b = gen_iid_gaussian_matrix(2, 2, rng_b);
  CHECK(exact_eq(a, b));

  Rng rng(3);
  const Eigen::MatrixXd big = gen_iid_gaussian_matrix(1000, 1000, rng);
  CHECK(std::abs(big.mean()) < 0.01);
  const double var = big.array().square().mean() - big.mean() * big.mean();
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("correlation sqrt squares back to the Toeplitz matrix") {
  const int dim = 6;
  const double c = 0.1;
  const Eigen::MatrixXd root = correlation_sqrt(dim, c);
  const Eigen::MatrixXd cl = root * root;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      CHECK(cl(i, j) == doctest::Approx(std::pow(c, std::abs(i - j))).epsilon(1e-12));
  CHECK(cl(0, 1) == doctest::Approx(0.1));
  CHECK(cl(0, 2) == doctest::Approx(0.01));
}

TEST_CASE("correlated matrix with c=0 matches the iid draw") {
  Rng rng_a(9);
  Rng rng_b(9);
  const Eigen::MatrixXd corr = gen_correlated_matrix(5, 7, 0.0, rng_a);
  const Eigen::MatrixXd iid = gen_iid_gaussian_matrix(5, 7, rng_b);
  CHECK(testutil::max_abs_diff(corr, iid) < 1e-12);
}

TEST_CASE("correlated matrix rejects c outside [0,1)") {
  Rng rng(1);
  CHECK_THROWS_AS(gen_correlated_matrix(4, 4, -0.2, rng), DomainError);
  CHECK_THROWS_AS(gen_correlated_matrix(4, 4, 1.0, rng), DomainError);
}

TEST_CASE("row covariance of correlated draws approaches the left factor") {
  const int m = 4;
  const int n = 6;
  const double c = 0.4;
  const int draws = 10000;
  Rng rng(11);
  const Eigen::MatrixXd sqrt_left = correlation_sqrt(m, c);
  const Eigen::MatrixXd sqrt_right = correlation_sqrt(n, c);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m, m);
  for (int t = 0; t < draws; ++t) {
    const Eigen::MatrixXd a = gen_correlated_matrix_with(sqrt_left, sqrt_right, rng);
    acc += a * a.transpose();
  }
  // E[A A^T] = tr(C_R) C_L and tr(C_R) = n.
  const Eigen::MatrixXd estimate = acc / (draws * static_cast<double>(n));
  Eigen::MatrixXd cl(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) cl(i, j) = std::pow(c, std::abs(i - j));
  CHECK((estimate - cl).norm() / cl.norm() < 0.05);
}

TEST_CASE("noise precision hits the target power ratio") {
  Eigen::MatrixXd a(2, 2);
  a << 1, 0, 0, 1;
  Eigen::VectorXd x(2);

  SUBCASE("unit power both sides") {
    // ||a x||^2 = M = 2 at snr 0 dB -> beta = 1.
    x << 1, 1;
    CHECK(noise_precision_for_snr(a, x, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("direct formula") {
    // beta = M 10^(snr/10) / ||a x||^2 with ||a x||^2 = M -> beta = 10.
    x << 1, 1;
    CHECK(noise_precision_for_snr(a, x, 10.0) == doctest::Approx(10.0).epsilon(1e-12));
  }
  SUBCASE("zero signal throws") {
    x << 0, 0;
    CHECK_THROWS_AS(noise_precision_for_snr(a, x, 10.0), ZeroSignalError);
  }
}

TEST_CASE("realized instance SNR concentrates on the target") {
  InstanceParams params;
  params.m = 40;
  params.n = 50;
  params.rho = 0.2;
  params.snr_db = 50.0;
  const int trials = 1000;
  double db_sum = 0.0;
  for (int t = 0; t < trials; ++t) {
    const ProblemInstance inst = gen_instance(params, mix_seed(123, t));
    const Eigen::VectorXd noise = inst.y - inst.a * inst.x_true;
    const double ratio = (inst.a * inst.x_true).squaredNorm() / noise.squaredNorm();
    db_sum += 10.0 * std::log10(ratio);
  }
  CHECK(std::abs(db_sum / trials - 50.0) < 0.5);
}

TEST_CASE("instance generation is deterministic and dimensioned") {
  InstanceParams params;
  params.m = 80;
  params.n = 100;
  params.rho = 0.1;
  params.snr_db = 50.0;
  const ProblemInstance a = gen_instance(params, 77);
  const ProblemInstance b = gen_instance(params, 77);
  CHECK(exact_eq(a.a, b.a));
  CHECK(exact_eq(a.x_true, b.x_true));
  CHECK(exact_eq(a.y, b.y));
  CHECK(a.beta_true == b.beta_true);
  CHECK(a.m() == 80);
  CHECK(a.n() == 100);
  CHECK(a.y.size() == 80);
}

TEST_CASE("rho = 0 is rejected after the redraw cap") {
  InstanceParams params;
  params.m = 4;
  params.n = 5;
  params.rho = 0.0;
  CHECK_THROWS_AS(gen_instance(params, 1), DomainError);
}

TEST_CASE("stored noise vector rebuilds y exactly") {
  InstanceParams params;
  params.m = 20;
  params.n = 30;
  params.rho = 0.3;
  params.snr_db = 20.0;
  const ProblemInstance inst = gen_instance(params, 5150);
  const Eigen::VectorXd noise = noise_vector(inst.seed, inst.m(), inst.beta_true);
  CHECK(testutil::max_abs_diff(inst.a * inst.x_true + noise, inst.y) == 0.0);
}

TEST_CASE("shared matrix replaces the per-instance draw") {
  InstanceParams params;
  params.m = 6;
  params.n = 8;
  params.rho = 0.5;
  params.snr_db = 10.0;
  Rng rng(2);
  const Eigen::MatrixXd shared = gen_iid_gaussian_matrix(6, 8, rng);
  const ProblemInstance inst = gen_instance(params, 3, &shared);
  CHECK(exact_eq(inst.a, shared));
}

TEST_CASE("dataset split is a deterministic partition") {
  const SplitIndices split = compute_split(100, 0.4, 0.4, 99);
  CHECK(split.train.size() == 40);
  CHECK(split.validation.size() == 40);
  CHECK(split.test.size() == 20);
  std::set<int> all;
  for (int i : split.train) all.insert(i);
  for (int i : split.validation) all.insert(i);
  for (int i : split.test) all.insert(i);
  CHECK(all.size() == 100);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 99);

  const SplitIndices again = compute_split(100, 0.4, 0.4, 99);
  CHECK(split.train == again.train);
  CHECK(split.validation == again.validation);
  CHECK(split.test == again.test);
}

TEST_CASE("dataset cycles the grid product uniformly") {
  DatasetSpec spec;
  spec.m = 6;
  spec.n = 8;
  spec.snr_grid = {10, 20};
  spec.rho_grid = {0.3, 0.5};
  spec.total_count = 40;
  spec.seed = 4;
  const Dataset ds = gen_dataset(spec);
  REQUIRE(ds.instances.size() == 40);
  std::map<std::pair<double, double>, int> counts;
  for (const auto& inst : ds.instances) ++counts[{inst.snr_db, inst.rho}];
  CHECK(counts.size() == 4);
  for (const auto& [cell, count] : counts) CHECK(count == 10);
}

TEST_CASE("dataset generation is independent of thread count") {
  DatasetSpec spec;
  spec.m = 10;
  spec.n = 12;
  spec.snr_grid = {15};
  spec.rho_grid = {0.2, 0.4};
  spec.total_count = 24;
  spec.seed = 21;
  spec.matrix_kind = MatrixKind::correlated(0.1);
  const Dataset one = gen_dataset(spec, 1);
  const Dataset four = gen_dataset(spec, 4);
  REQUIRE(one.instances.size() == four.instances.size());
  for (std::size_t k = 0; k < one.instances.size(); ++k) {
    CHECK(exact_eq(one.instances[k].a, four.instances[k].a));
    CHECK(exact_eq(one.instances[k].x_true, four.instances[k].x_true));
    CHECK(exact_eq(one.instances[k].y, four.instances[k].y));
    CHECK(one.instances[k].beta_true == four.instances[k].beta_true);
  }
  CHECK(one.train_indices == four.train_indices);
  CHECK(one.validation_indices == four.validation_indices);
  CHECK(one.test_indices == four.test_indices);
}

TEST_CASE("fixed-matrix datasets share one A") {
  DatasetSpec spec;
  spec.m = 5;
  spec.n = 7;
  spec.snr_grid = {20};
  spec.rho_grid = {0.4};
  spec.total_count = 6;
  spec.fresh_matrix_per_sample = false;
  spec.seed = 8;
  const Dataset ds = gen_dataset(spec);
  for (const auto& inst : ds.instances) CHECK(exact_eq(inst.a, ds.instances[0].a));

  spec.fresh_matrix_per_sample = true;
  const Dataset fresh = gen_dataset(spec);
  CHECK_FALSE(exact_eq(fresh.instances[0].a, fresh.instances[1].a));
}

TEST_CASE("dataset spec validation rejects nonsense") {
  DatasetSpec spec;
  spec.total_count = 10;
  SUBCASE("empty grid") {
    spec.snr_grid.clear();
    CHECK_THROWS_AS(spec.validate(), DomainError);
  }
  SUBCASE("zero count") {
    spec.total_count = 0;
    CHECK_THROWS_AS(spec.validate(), DomainError);
  }
  SUBCASE("fractions above one") {
    spec.train_fraction = 0.8;
    spec.validation_fraction = 0.5;
    CHECK_THROWS_AS(spec.validate(), DomainError);
  }
}
