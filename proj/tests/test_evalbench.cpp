#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "sblkit/evalbench.hpp"
#include "test_helpers.hpp"

using namespace sblkit;

TEST_CASE("normalized error is the energy ratio") {
  Eigen::VectorXd truth(2);
  truth << 3.0, 4.0;
  SUBCASE("zero estimate gives ratio one") {
    CHECK(normalized_error(Eigen::VectorXd::Zero(2), truth) == doctest::Approx(1.0));
  }
  SUBCASE("perfect estimate gives zero") {
    CHECK(normalized_error(truth, truth) == 0.0);
  }
  SUBCASE("all-zero truth is rejected") {
    CHECK_THROWS_AS(normalized_error(truth, Eigen::VectorXd::Zero(2)), DomainError);
  }
  SUBCASE("shape mismatch is rejected") {
    CHECK_THROWS_AS(normalized_error(Eigen::VectorXd::Zero(3), truth), DimensionError);
  }
}

TEST_CASE("batch nmse averages per-trial ratios") {
  Eigen::VectorXd truth(1);
  truth << 1.0;
  Eigen::VectorXd est_a(1), est_b(1);
  est_a << 1.1;  // ratio 0.01
  est_b << 1.0 + std::sqrt(0.03);
  const double linear = nmse_linear({est_a, est_b}, {truth, truth});
  CHECK(linear == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(nmse_db_from_linear(linear) ==
        doctest::Approx(-16.989700043360187).epsilon(1e-12));
}

TEST_CASE("duplicating the trial list leaves nmse unchanged") {
  Eigen::VectorXd truth(2);
  truth << 1.0, -2.0;
  Eigen::VectorXd est(2);
  est << 0.5, -1.0;
  const double once = nmse_linear({est}, {truth});
  const double twice = nmse_linear({est, est}, {truth, truth});
  CHECK(once == doctest::Approx(twice).epsilon(1e-15));
}

TEST_CASE("db conversion floors exact recovery") {
  CHECK(nmse_db_from_linear(0.0) == kNmseFloorDb);
  CHECK(nmse_db_from_linear(1.0) == doctest::Approx(0.0));
  CHECK(nmse_db_from_linear(1e-13) == kNmseFloorDb);
  CHECK_THROWS_AS(nmse_db_from_linear(-0.1), DomainError);
  CHECK_THROWS_AS(nmse_db_from_linear(std::nan("")), DomainError);
}

TEST_CASE("oracle bound matches the scalar closed form") {
  ProblemInstance inst;
  inst.a = Eigen::MatrixXd::Ones(1, 1);
  inst.x_true = Eigen::VectorXd::Ones(1);
  inst.beta_true = 1.0;
  inst.y = Eigen::VectorXd::Constant(1, 1.3);  // 1 + zeta with zeta = 0.3
  // x_hat = beta a y / (beta a^2 + 1) = 1.3/2.
  const double x_hat = 1.3 / 2.0;
  const double expected = (x_hat - 1.0) * (x_hat - 1.0);
  CHECK(oracle_bound(inst) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("oracle bound vanishes in the noiseless limit") {
  InstanceParams params;
  params.m = 20;
  params.n = 30;
  params.rho = 0.2;
  params.snr_db = 140.0;  // effectively noiseless, beta very large
  const ProblemInstance inst = gen_instance(params, 77);
  CHECK(oracle_bound(inst) < 1e-10);
}

TEST_CASE("oracle bound requires a non-empty support") {
  ProblemInstance inst;
  inst.a = Eigen::MatrixXd::Ones(2, 2);
  inst.x_true = Eigen::VectorXd::Zero(2);
  inst.beta_true = 1.0;
  inst.y = Eigen::VectorXd::Ones(2);
  CHECK_THROWS_AS(oracle_bound(inst), DomainError);
}

TEST_CASE("experiment produces the promised row grid") {
  ExperimentSpec spec;
  spec.algorithm = Algorithm::UampSbl;
  spec.tuner = Tuner::empirical();
  spec.m = 8;
  spec.n = 10;
  spec.snr_grid = {20.0};
  spec.rho_grid = {0.3};
  spec.trials = 1;
  spec.iterations = 2;
  spec.seed = 5;
  const ResultTable table = run_experiment(spec);
  // 2 algorithm rows + 1 oracle row.
  REQUIRE(table.rows.size() == 3);
  CHECK(table.rows[0].iteration == 1);
  CHECK(table.rows[1].iteration == 2);
  CHECK(table.rows[0].algorithm == "uamp-sbl");
  CHECK(table.rows[0].tuner == "empirical");
  CHECK(table.rows[2].algorithm == "oracle");
  CHECK(table.rows[2].tuner == "none");
  CHECK(table.rows[2].iteration == 2);
  CHECK(table.total_trials == 1);
  CHECK(table.failed_trials() == 0);
  for (const ResultRow& row : table.rows) CHECK(std::isfinite(row.nmse_db));

  spec.include_oracle = false;
  CHECK(run_experiment(spec).rows.size() == 2);
}

TEST_CASE("experiment results are thread-count independent") {
  ExperimentSpec spec;
  spec.algorithm = Algorithm::UampSbl;
  spec.tuner = Tuner::empirical();
  spec.m = 16;
  spec.n = 20;
  spec.snr_grid = {15.0, 40.0};
  spec.rho_grid = {0.2};
  spec.trials = 10;
  spec.iterations = 10;
  spec.seed = 9;
  const ResultTable one = run_experiment(spec, 1);
  const ResultTable four = run_experiment(spec, 4);
  REQUIRE(one.rows.size() == four.rows.size());
  for (std::size_t i = 0; i < one.rows.size(); ++i) {
    CHECK(one.rows[i].nmse_db == four.rows[i].nmse_db);
    CHECK(one.rows[i].algorithm == four.rows[i].algorithm);
  }
}

TEST_CASE("oracle rows dominate the algorithm rows at high snr") {
  ExperimentSpec spec;
  spec.algorithm = Algorithm::UampSbl;
  spec.tuner = Tuner::empirical();
  spec.m = 40;
  spec.n = 50;
  spec.snr_grid = {50.0};
  spec.rho_grid = {0.2};
  spec.trials = 100;
  spec.iterations = 30;
  spec.seed = 123;
  const ResultTable table = run_experiment(spec, 4);
  double final_alg = 0.0;
  double oracle = 0.0;
  for (const ResultRow& row : table.rows) {
    if (row.algorithm == "oracle") oracle = row.nmse_db;
    else if (row.iteration == 30) final_alg = row.nmse_db;
  }
  CHECK(oracle <= final_alg);
}

TEST_CASE("sbl experiments tag their rows") {
  ExperimentSpec spec;
  spec.algorithm = Algorithm::Sbl;
  spec.tuner = Tuner::fixed(1e-4);
  spec.m = 8;
  spec.n = 10;
  spec.snr_grid = {25.0};
  spec.rho_grid = {0.4};
  spec.trials = 2;
  spec.iterations = 3;
  spec.seed = 77;
  const ResultTable table = run_experiment(spec);
  CHECK(table.rows[0].algorithm == "sbl");
  CHECK(table.rows[0].tuner == "fixed");
}

TEST_CASE("experiment spec validation rejects nonsense") {
  ExperimentSpec spec;
  spec.snr_grid = {10.0};
  spec.rho_grid = {0.1};
  SUBCASE("no trials") {
    spec.trials = 0;
    CHECK_THROWS_AS(spec.validate(), DomainError);
  }
  SUBCASE("empty grid") {
    spec.snr_grid.clear();
    CHECK_THROWS_AS(spec.validate(), DomainError);
  }
  SUBCASE("no iterations") {
    spec.iterations = 0;
    CHECK_THROWS_AS(spec.validate(), DomainError);
  }
}

TEST_CASE("csv output is deterministic and round-trips") {
  ResultTable table;
  table.rows.push_back({50.0, 0.1, 1, -12.345678, "uamp-sbl", "empirical"});
  table.rows.push_back({15.0, 0.3, 2, -120.0, "sbl", "fixed"});
  table.total_trials = 2;
  const std::string csv = csv_string(table);
  CHECK(csv == csv_string(table));
  CHECK(csv.rfind("snr_db,rho,iteration,nmse_db,algorithm,tuner\n", 0) == 0);
  CHECK(csv.find("\r") == std::string::npos);

  std::stringstream stream(csv);
  std::string line;
  std::getline(stream, line);
  std::getline(stream, line);
  std::stringstream row(line);
  std::string field;
  std::getline(row, field, ',');
  CHECK(std::stod(field) == 50.0);
  std::getline(row, field, ',');
  CHECK(std::stod(field) == 0.1);
  std::getline(row, field, ',');
  CHECK(std::stoi(field) == 1);
  std::getline(row, field, ',');
  CHECK(std::stod(field) == doctest::Approx(-12.345678).epsilon(1e-5));
  std::getline(row, field, ',');
  CHECK(field == "uamp-sbl");
  std::getline(row, field, ',');
  CHECK(field == "empirical");
}

TEST_CASE("empty tables emit a header-only file") {
  ResultTable table;
  testutil::TempDir dir("sblkit-csv");
  const auto path = dir.path / "out.csv";
  emit_csv(table, path);
  std::ifstream in(path);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  CHECK(content == "snr_db,rho,iteration,nmse_db,algorithm,tuner\n");
}

TEST_CASE("failed-trial footers appear only when trials fail") {
  ResultTable table;
  table.rows.push_back({10.0, 0.1, 1, -3.0, "sbl", "empirical"});
  table.total_trials = 10;
  CHECK(csv_string(table).find("#") == std::string::npos);
  table.failures.push_back({10.0, 0.1, 2});
  const std::string csv = csv_string(table);
  CHECK(csv.find("#") != std::string::npos);
  CHECK(table.failed_trials() == 2);
}

TEST_CASE("csv emission failures carry the path") {
  ResultTable table;
  try {
    emit_csv(table, "/nonexistent-dir/out.csv");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("/nonexistent-dir/out.csv") != std::string::npos);
  }
}
