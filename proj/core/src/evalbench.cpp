#include "sblkit/evalbench.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "sblkit/rng.hpp"
#include "sblkit/sbl.hpp"
#include "sblkit/threading.hpp"
#include "sblkit/uamp.hpp"

namespace sblkit {

std::string algorithm_name(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::Sbl:
      return "sbl";
    case Algorithm::UampSbl:
      return "uamp-sbl";
  }
  throw DomainError("unknown algorithm value");
}

double normalized_error(const Eigen::VectorXd& estimate,
                        const Eigen::VectorXd& truth) {
  if (estimate.size() != truth.size())
    throw DimensionError("normalized_error: length mismatch");
  const double energy = truth.squaredNorm();
  if (energy == 0.0) throw DomainError("normalized_error: all-zero truth vector");
  return (estimate - truth).squaredNorm() / energy;
}

double nmse_linear(const std::vector<Eigen::VectorXd>& estimates,
                   const std::vector<Eigen::VectorXd>& truths) {
  if (estimates.empty()) throw DomainError("nmse: empty trial list");
  if (estimates.size() != truths.size())
    throw DimensionError("nmse: trial count mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i)
    sum += normalized_error(estimates[i], truths[i]);
  return sum / static_cast<double>(estimates.size());
}

double nmse_db_from_linear(double linear) {
  if (linear < 0.0 || !std::isfinite(linear))
    throw DomainError("nmse: linear value must be finite and non-negative");
  if (linear == 0.0) return kNmseFloorDb;
  return std::max(10.0 * std::log10(linear), kNmseFloorDb);
}

double nmse_db(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  return nmse_db_from_linear(normalized_error(estimate, truth));
}

double oracle_bound(const ProblemInstance& instance) {
  std::vector<int> support;
  for (int i = 0; i < instance.n(); ++i)
    if (instance.x_true[i] != 0.0) support.push_back(i);
  if (support.empty()) throw DomainError("oracle_bound: empty support");

  const int k = static_cast<int>(support.size());
  Eigen::MatrixXd a_s(instance.m(), k);
  for (int j = 0; j < k; ++j) a_s.col(j) = instance.a.col(support[j]);

  Eigen::MatrixXd gram = instance.beta_true * (a_s.transpose() * a_s);
  gram.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success)
    throw NumericalError("oracle_bound: singular oracle system");
  const Eigen::VectorXd coeffs =
      llt.solve(instance.beta_true * (a_s.transpose() * instance.y));

  Eigen::VectorXd x_hat = Eigen::VectorXd::Zero(instance.n());
  for (int j = 0; j < k; ++j) x_hat[support[j]] = coeffs[j];
  return normalized_error(x_hat, instance.x_true);
}

void ExperimentSpec::validate() const {
  if (m <= 0 || n <= 0) throw DomainError("experiment: dimensions must be positive");
  if (snr_grid.empty() || rho_grid.empty())
    throw DomainError("experiment: SNR and rho grids must be non-empty");
  if (trials < 1) throw DomainError("experiment: trials must be at least 1");
  if (iterations < 1) throw DomainError("experiment: iterations must be at least 1");
  for (double rho : rho_grid)
    if (!(rho > 0.0) || !(rho <= 1.0))
      throw DomainError("experiment: rho must lie in (0, 1]");
}

int ResultTable::failed_trials() const {
  int total = 0;
  for (const CellFailure& f : failures) total += f.failed;
  return total;
}

namespace {

struct TrialOutcome {
  std::vector<double> nmse_linear;  // per iteration
  double oracle = 0.0;
  bool ok = false;
};

}  // namespace

ResultTable run_experiment(const ExperimentSpec& spec, int threads) {
  spec.validate();
  const std::size_t workers =
      resolve_threads(static_cast<std::size_t>(std::max(threads, 0)));
  const std::size_t cells = spec.snr_grid.size() * spec.rho_grid.size();
  const std::size_t total = cells * static_cast<std::size_t>(spec.trials);

  std::vector<TrialOutcome> outcomes(total);
  const std::string alg_name = algorithm_name(spec.algorithm);
  const std::string tuner_name = spec.tuner.name();

  parallel_for(total, workers, [&](std::size_t t) {
    const std::size_t cell = t / static_cast<std::size_t>(spec.trials);
    const std::size_t trial = t % static_cast<std::size_t>(spec.trials);
    const std::size_t si = cell / spec.rho_grid.size();
    const std::size_t ri = cell % spec.rho_grid.size();

    InstanceParams params;
    params.m = spec.m;
    params.n = spec.n;
    params.snr_db = spec.snr_grid[si];
    params.rho = spec.rho_grid[ri];
    params.matrix_kind = spec.matrix_kind;
    const std::uint64_t inst_seed = mix_seed(mix_seed(spec.seed, cell), trial);

    TrialOutcome& out = outcomes[t];
    try {
      const ProblemInstance instance = gen_instance(params, inst_seed);
      RecoveryResult result;
      if (spec.algorithm == Algorithm::Sbl) {
        SblOptions options;
        options.iterations = spec.iterations;
        options.record_nmse = true;
        result = sbl_run(instance, spec.tuner, options);
      } else {
        UampOptions options;
        options.iterations = spec.iterations;
        options.record_nmse = true;
        result = uamp_sbl_run(instance, spec.tuner, options);
      }
      out.nmse_linear.resize(result.per_iteration_nmse_db.size());
      for (std::size_t i = 0; i < out.nmse_linear.size(); ++i)
        out.nmse_linear[i] = std::pow(10.0, result.per_iteration_nmse_db[i] / 10.0);
      if (spec.include_oracle) out.oracle = oracle_bound(instance);
      out.ok = true;
    } catch (const Error&) {
      out.ok = false;  // excluded and counted below
    }
  });

  ResultTable table;
  table.total_trials = static_cast<int>(total);
  table.rows.reserve(cells * static_cast<std::size_t>(spec.iterations) +
                     (spec.include_oracle ? cells : 0));

  for (std::size_t cell = 0; cell < cells; ++cell) {
    const std::size_t si = cell / spec.rho_grid.size();
    const std::size_t ri = cell % spec.rho_grid.size();
    const double snr = spec.snr_grid[si];
    const double rho = spec.rho_grid[ri];

    std::vector<double> iter_sum(spec.iterations, 0.0);
    double oracle_sum = 0.0;
    int ok_count = 0;
    int failed = 0;
    for (int trial = 0; trial < spec.trials; ++trial) {
      const TrialOutcome& out =
          outcomes[cell * static_cast<std::size_t>(spec.trials) +
                   static_cast<std::size_t>(trial)];
      if (!out.ok) {
        ++failed;
        continue;
      }
      ++ok_count;
      for (int i = 0; i < spec.iterations; ++i) iter_sum[i] += out.nmse_linear[i];
      oracle_sum += out.oracle;
    }
    if (failed > 0) table.failures.push_back({snr, rho, failed});
    if (ok_count == 0)
      throw NumericalError("run_experiment: every trial failed in cell snr=" +
                           std::to_string(snr) + " rho=" + std::to_string(rho));

    for (int i = 0; i < spec.iterations; ++i) {
      ResultRow row;
      row.snr_db = snr;
      row.rho = rho;
      row.iteration = i + 1;
      row.nmse_db = nmse_db_from_linear(iter_sum[i] / ok_count);
      row.algorithm = alg_name;
      row.tuner = tuner_name;
      table.rows.push_back(std::move(row));
    }
    if (spec.include_oracle) {
      ResultRow row;
      row.snr_db = snr;
      row.rho = rho;
      row.iteration = spec.iterations;
      row.nmse_db = nmse_db_from_linear(oracle_sum / ok_count);
      row.algorithm = "oracle";
      row.tuner = "none";
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

namespace {

std::string format_g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string csv_string(const ResultTable& table) {
  std::string out = "snr_db,rho,iteration,nmse_db,algorithm,tuner\n";
  for (const ResultRow& row : table.rows) {
    out += format_g6(row.snr_db);
    out += ',';
    out += format_g6(row.rho);
    out += ',';
    out += std::to_string(row.iteration);
    out += ',';
    out += format_g6(row.nmse_db);
    out += ',';
    out += row.algorithm;
    out += ',';
    out += row.tuner;
    out += '\n';
  }
  if (!table.failures.empty()) {
    out += "# failed trials excluded from averages\n";
    for (const CellFailure& f : table.failures) {
      out += "# snr_db=" + format_g6(f.snr_db) + " rho=" + format_g6(f.rho) +
             " failed=" + std::to_string(f.failed) + "\n";
    }
  }
  return out;
}

void emit_csv(const ResultTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << csv_string(table);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace sblkit
