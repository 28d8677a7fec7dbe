#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "sblkit/dataset_io.hpp"
#include "sblkit/digest.hpp"
#include "sblkit/evalbench.hpp"
#include "sblkit/grad_check.hpp"
#include "sblkit/problem.hpp"
#include "sblkit/threading.hpp"
#include "sblkit/tuners.hpp"
#include "sblkit/unroll.hpp"

namespace fs = std::filesystem;
using namespace sblkit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitPartialFailure = 5;

// Flat key=value manifest describing a finished run: the resolved
// configuration plus content hashes of every file input, enough to reproduce
// the run from the same binary.
class RunManifest {
 public:
  void add(const std::string& key, const std::string& value) {
    lines_.push_back(key + "=" + value);
  }
  void add(const std::string& key, double value) {
    char buf[32];
    const auto result = std::to_chars(buf, buf + sizeof buf, value);
    add(key, std::string(buf, result.ptr));
  }
  void add(const std::string& key, std::uint64_t value) {
    add(key, std::to_string(value));
  }
  void add(const std::string& key, int value) { add(key, std::to_string(value)); }
  // Inputs are recorded as filename plus content hash; absolute paths would
  // make reruns into different directories diverge byte-for-byte.
  void add_input(const std::string& key, const fs::path& path) {
    add(key, path.filename().string());
    add(key + "_fnv1a64", digest_hex(digest_file(path)));
  }

  void write(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const std::string& line : lines_) out << line << '\n';
    if (!out) throw IoError("failed writing " + path.string());
  }

 private:
  std::vector<std::string> lines_;
};

std::string grid_to_string(const std::vector<double>& grid) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (i) out += ',';
    const auto result = std::to_chars(buf, buf + sizeof buf, grid[i]);
    out.append(buf, result.ptr);
  }
  return out;
}

struct TunerChoice {
  std::string spec = "empirical";
  double clamp_low = 0.0;

  // "fixed:<v>", "empirical", "neural:<weights-path>"
  Tuner build() const {
    if (spec == "empirical") return Tuner::empirical();
    if (spec.rfind("fixed:", 0) == 0)
      return Tuner::fixed(std::stod(spec.substr(6)));
    if (spec.rfind("neural:", 0) == 0) {
      const fs::path path = spec.substr(7);
      auto params = std::make_shared<NnTunerParams>(load_params(path));
      return Tuner::neural(std::move(params), clamp_low);
    }
    throw DomainError("--tuner: expected fixed:<epsilon>, empirical, or"
                      " neural:<weights>, got " + spec);
  }

  fs::path weights_path() const {
    if (spec.rfind("neural:", 0) == 0) return spec.substr(7);
    return {};
  }
};

void add_experiment_flags(CLI::App* cmd, ExperimentSpec& spec, TunerChoice& tuner,
                          std::string& alg, std::string& matrix, int& threads,
                          std::string& out) {
  cmd->add_option("--alg", alg, "Algorithm: sbl or uamp-sbl")
      ->envname("SBLKIT_ALG")
      ->check(CLI::IsMember({"sbl", "uamp-sbl"}));
  cmd->add_option("--tuner", tuner.spec,
                  "Tuner: fixed:<epsilon>, empirical, or neural:<weights-file>")
      ->envname("SBLKIT_TUNER");
  cmd->add_option("--clamp-low", tuner.clamp_low,
                  "Lower clamp for the neural tuner output")
      ->envname("SBLKIT_CLAMP_LOW");
  cmd->add_option("--m", spec.m, "Measurement count")->envname("SBLKIT_M");
  cmd->add_option("--n", spec.n, "Signal length")->envname("SBLKIT_N");
  cmd->add_option("--snr", spec.snr_grid, "SNR grid in dB (comma separated)")
      ->envname("SBLKIT_SNR")
      ->delimiter(',');
  cmd->add_option("--rho", spec.rho_grid, "Sparsity grid (comma separated)")
      ->envname("SBLKIT_RHO")
      ->delimiter(',');
  cmd->add_option("--matrix", matrix, "Matrix kind: iid or corr:<c>")
      ->envname("SBLKIT_MATRIX");
  cmd->add_option("--iters", spec.iterations, "Iterations per trial")
      ->envname("SBLKIT_ITERS");
  cmd->add_option("--trials", spec.trials, "Monte-Carlo trials per grid cell")
      ->envname("SBLKIT_TRIALS");
  cmd->add_option("--seed", spec.seed, "Master seed")->envname("SBLKIT_SEED");
  cmd->add_option("--threads", threads, "Worker threads (0 = machine parallelism)")
      ->envname("SBLKIT_THREADS");
  cmd->add_option("--out", out, "Output CSV path")->envname("SBLKIT_OUT");
  cmd->add_flag("--no-oracle", "Skip the support-oracle rows");
}

int run_experiment_command(CLI::App* cmd, ExperimentSpec& spec, TunerChoice& tuner,
                           const std::string& alg, const std::string& matrix,
                           int threads, const std::string& out) {
  spec.algorithm = alg == "sbl" ? Algorithm::Sbl : Algorithm::UampSbl;
  spec.matrix_kind = parse_matrix_kind(matrix);
  spec.tuner = tuner.build();
  spec.include_oracle = cmd->count("--no-oracle") == 0;
  spec.validate();

  const ResultTable table = run_experiment(spec, threads);
  const fs::path out_path = out;
  emit_csv(table, out_path);

  RunManifest manifest;
  manifest.add("command", cmd->get_name());
  manifest.add("algorithm", algorithm_name(spec.algorithm));
  manifest.add("tuner", tuner.spec);
  if (spec.tuner.is_neural()) manifest.add("clamp_low", tuner.clamp_low);
  manifest.add("m", spec.m);
  manifest.add("n", spec.n);
  manifest.add("snr_grid", grid_to_string(spec.snr_grid));
  manifest.add("rho_grid", grid_to_string(spec.rho_grid));
  manifest.add("matrix_kind", format_matrix_kind(spec.matrix_kind));
  manifest.add("iterations", spec.iterations);
  manifest.add("trials", spec.trials);
  manifest.add("seed", spec.seed);
  manifest.add("include_oracle", spec.include_oracle ? 1 : 0);
  if (!tuner.weights_path().empty())
    manifest.add_input("weights", tuner.weights_path());
  manifest.add_input("output_csv", out_path);
  manifest.write(out_path.string() + ".manifest.txt");

  std::cout << "wrote " << table.rows.size() << " rows to " << out_path.string()
            << "\n";
  if (table.failed_trials() > 0) {
    std::cout << "excluded " << table.failed_trials() << " failed trials\n";
    for (const CellFailure& f : table.failures) {
      if (f.failed * 10 > spec.trials) {
        std::cerr << "cell snr=" << f.snr_db << " rho=" << f.rho << " lost "
                  << f.failed << "/" << spec.trials << " trials\n";
        return kExitPartialFailure;
      }
    }
  }
  return kExitOk;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Expands "--config FILE" into "--key=value" tokens for the active
// subcommand. The file is flat key=value text with full-line # comments;
// keys are the subcommand's long option names without the dashes. Keys
// already present on the command line are not expanded, so explicit flags
// win over file values.
std::vector<std::string> expand_config_tokens(const CLI::App& app,
                                              std::vector<std::string> args) {
  std::size_t sub_index = args.size();
  const CLI::App* sub = nullptr;
  for (std::size_t i = 0; i < args.size() && sub == nullptr; ++i) {
    sub = app.get_subcommand_no_throw(args[i]);
    sub_index = i;
  }
  if (sub == nullptr) return args;

  std::string file;
  bool have_file = false;
  for (std::size_t i = sub_index + 1; i < args.size() && !have_file; ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[i + 1];
      have_file = true;
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
      have_file = true;
    }
  }
  if (!have_file) return args;

  std::ifstream in(file);
  if (!in) throw IoError("cannot read config file " + file);

  std::map<std::string, std::string> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0)
      throw DomainError("config file " + file + " line " +
                        std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(text.substr(0, eq));
    if (key == "config")
      throw DomainError("config file " + file + ": config files do not nest");
    if (sub->get_option_no_throw("--" + key) == nullptr)
      throw DomainError("config file " + file + ": unknown key '" + key +
                        "' for " + sub->get_name());
    std::string value = trim(text.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    values[key] = std::move(value);
  }

  for (const auto& [key, value] : values) {
    bool given = false;
    for (std::size_t i = sub_index + 1; i < args.size() && !given; ++i)
      given = args[i] == "--" + key || args[i].rfind("--" + key + "=", 0) == 0;
    if (!given) args.push_back("--" + key + "=" + value);
  }
  return args;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Sparse-signal recovery toolkit: SBL and UAMP-SBL with"
               " auto-tuned hyper-parameters"};
  app.require_subcommand(1);

  // --config names a flat key=value file expanded by expand_config_tokens
  // before parsing; the option itself only has to exist so the token parses.
  std::string config_path;
  const auto with_config = [&config_path](CLI::App* sub) {
    sub->add_option("--config", config_path,
                    "Read options from a key=value file (explicit flags win)");
    return sub;
  };

  // gen-data
  auto* gen =
      with_config(app.add_subcommand("gen-data", "Generate a problem dataset"));
  DatasetSpec dspec;
  dspec.total_count = 1000;
  std::string gen_matrix = "iid";
  std::string gen_out = "dataset";
  int gen_threads = 0;
  bool shared_matrix = false;
  gen->add_option("--m", dspec.m, "Measurement count")->envname("SBLKIT_M");
  gen->add_option("--n", dspec.n, "Signal length")->envname("SBLKIT_N");
  gen->add_option("--count", dspec.total_count, "Total instance count")
      ->envname("SBLKIT_COUNT")
      ->check(CLI::PositiveNumber);
  gen->add_option("--snr", dspec.snr_grid, "SNR grid in dB")->delimiter(',');
  gen->add_option("--rho", dspec.rho_grid, "Sparsity grid")->delimiter(',');
  gen->add_option("--matrix", gen_matrix, "Matrix kind: iid or corr:<c>");
  gen->add_flag("--shared-matrix", shared_matrix,
                "Reuse one measurement matrix for every instance");
  gen->add_option("--train-fraction", dspec.train_fraction, "Train split fraction");
  gen->add_option("--val-fraction", dspec.validation_fraction,
                  "Validation split fraction");
  gen->add_option("--seed", dspec.seed, "Master seed")->envname("SBLKIT_SEED");
  gen->add_option("--threads", gen_threads, "Worker threads")
      ->envname("SBLKIT_THREADS");
  gen->add_option("--out", gen_out, "Output directory")->envname("SBLKIT_OUT");
  gen->callback([&]() {
    dspec.matrix_kind = parse_matrix_kind(gen_matrix);
    dspec.fresh_matrix_per_sample = !shared_matrix;
    dspec.validate();
    const Dataset dataset = gen_dataset(
        dspec, resolve_threads(static_cast<std::size_t>(std::max(gen_threads, 0))));
    save_dataset(dataset, gen_out);

    RunManifest manifest;
    manifest.add("command", "gen-data");
    manifest.add("m", dspec.m);
    manifest.add("n", dspec.n);
    manifest.add("count", dspec.total_count);
    manifest.add("snr_grid", grid_to_string(dspec.snr_grid));
    manifest.add("rho_grid", grid_to_string(dspec.rho_grid));
    manifest.add("matrix_kind", format_matrix_kind(dspec.matrix_kind));
    manifest.add("fresh_matrix_per_sample", dspec.fresh_matrix_per_sample ? 1 : 0);
    manifest.add("train_fraction", dspec.train_fraction);
    manifest.add("validation_fraction", dspec.validation_fraction);
    manifest.add("seed", dspec.seed);
    manifest.add_input("records", fs::path(gen_out) / "records.sbld");
    manifest.add_input("dataset_manifest", fs::path(gen_out) / "manifest.txt");
    manifest.write(fs::path(gen_out) / "run_manifest.txt");

    std::cout << "wrote " << dataset.instances.size() << " records to " << gen_out
              << " (train " << dataset.train_indices.size() << ", validation "
              << dataset.validation_indices.size() << ", test "
              << dataset.test_indices.size() << ")\n";
  });

  // train
  auto* tr = with_config(
      app.add_subcommand("train", "Train the neural tuner by unrolling"));
  TrainConfig tconf;
  std::string train_data;
  std::string train_out = "train_out";
  tr->add_option("--data", train_data, "Dataset directory")
      ->envname("SBLKIT_DATA")
      ->required();
  tr->add_option("--iters", tconf.unroll_iters, "Unrolled iterations I")
      ->envname("SBLKIT_ITERS");
  tr->add_option("--batch", tconf.batch_size, "Mini-batch size");
  tr->add_option("--epochs", tconf.epochs, "Training epochs");
  tr->add_option("--lr", tconf.learning_rate, "Adam learning rate");
  tr->add_option("--l-hidden", tconf.l_hidden, "Hidden layer width");
  tr->add_option("--clamp-low", tconf.clamp_low, "Lower clamp for the tuner output");
  tr->add_option("--seed", tconf.seed, "Master seed")->envname("SBLKIT_SEED");
  tr->add_option("--threads", tconf.threads, "Worker threads")
      ->envname("SBLKIT_THREADS");
  tr->add_option("--out", train_out, "Output directory")->envname("SBLKIT_OUT");
  tr->callback([&]() {
    const Dataset dataset = load_dataset(train_data);
    const TrainResult result = train(dataset, tconf);

    std::error_code ec;
    fs::create_directories(train_out, ec);
    if (ec) throw IoError("cannot create " + train_out + ": " + ec.message());
    const fs::path weights_path = fs::path(train_out) / "weights.sbnn";
    save_params(result.params, weights_path);
    save_history_csv(result.history, fs::path(train_out) / "history.csv");

    std::ofstream checkpoint(fs::path(train_out) / "checkpoint.txt");
    checkpoint << "best_epoch=" << result.history.best_epoch << '\n'
               << "best_validation_loss=" << result.history.best_validation_loss
               << '\n'
               << "initial_validation_loss="
               << result.history.initial_validation_loss << '\n';

    RunManifest manifest;
    manifest.add("command", "train");
    manifest.add("I", tconf.unroll_iters);
    manifest.add("batch", tconf.batch_size);
    manifest.add("epochs", tconf.epochs);
    manifest.add("lr", tconf.learning_rate);
    manifest.add("l_hidden", tconf.l_hidden);
    manifest.add("clamp_low", tconf.clamp_low);
    manifest.add("adam_beta1", tconf.adam_beta1);
    manifest.add("adam_beta2", tconf.adam_beta2);
    manifest.add("adam_eps", tconf.adam_eps);
    manifest.add("seed", tconf.seed);
    manifest.add("best_epoch", result.history.best_epoch);
    manifest.add_input("dataset_manifest", fs::path(train_data) / "manifest.txt");
    manifest.add_input("dataset_records", fs::path(train_data) / "records.sbld");
    manifest.add_input("weights", weights_path);
    manifest.write(fs::path(train_out) / "run_manifest.txt");

    std::cout << "I=" << tconf.unroll_iters << " batch=" << tconf.batch_size
              << " epochs=" << tconf.epochs << " lr=" << tconf.learning_rate << "\n"
              << "best epoch " << result.history.best_epoch << " validation loss "
              << result.history.best_validation_loss << " (initial "
              << result.history.initial_validation_loss << ")\n"
              << "weights written to " << weights_path.string() << "\n";
  });

  // eval and sweep share one implementation; eval is meant for a single cell,
  // sweep for grids, but both accept lists.
  ExperimentSpec espec;
  espec.snr_grid = {50};
  espec.rho_grid = {0.1};
  TunerChoice etuner;
  std::string ealg = "uamp-sbl";
  std::string ematrix = "corr:0.1";
  int ethreads = 0;
  std::string eout = "results.csv";
  auto* ev = with_config(
      app.add_subcommand("eval", "Evaluate one experiment configuration"));
  add_experiment_flags(ev, espec, etuner, ealg, ematrix, ethreads, eout);

  ExperimentSpec sspec;
  sspec.snr_grid = {10, 20, 30, 40, 50};
  sspec.rho_grid = {0.1, 0.2, 0.3, 0.4, 0.5};
  TunerChoice stuner;
  std::string salg = "uamp-sbl";
  std::string smatrix = "corr:0.1";
  int sthreads = 0;
  std::string sout = "sweep.csv";
  auto* sw = with_config(
      app.add_subcommand("sweep", "Run an NMSE sweep over a parameter grid"));
  add_experiment_flags(sw, sspec, stuner, salg, smatrix, sthreads, sout);

  // grad-check
  auto* gc = with_config(
      app.add_subcommand("grad-check",
                         "Verify the unrolled gradient against central"
                         " finite differences"));
  GradCheckConfig gconf;
  double gc_threshold = 1e-5;
  gc->add_option("--m", gconf.m, "Measurement count");
  gc->add_option("--n", gconf.n, "Signal length");
  gc->add_option("--l-hidden", gconf.l_hidden, "Hidden layer width");
  gc->add_option("--iters", gconf.iters, "Unrolled iterations");
  gc->add_option("--seeds", gconf.seeds, "Number of random seeds")
      ->check(CLI::PositiveNumber);
  gc->add_option("--fd-step", gconf.fd_step, "Central-difference step");
  gc->add_option("--clamp-low", gconf.clamp_low, "Lower clamp for the tuner output");
  gc->add_option("--threshold", gc_threshold, "Pass threshold on max_rel_err");
  gc->add_option("--seed", gconf.seed, "Master seed")->envname("SBLKIT_SEED");

  int exit_code = kExitOk;
  gc->callback([&]() {
    const GradCheckReport report = run_grad_check(gconf);
    for (std::size_t s = 0; s < report.per_seed.size(); ++s) {
      const GradCheckSeedResult& r = report.per_seed[s];
      std::printf("seed %zu: max_rel_err=%.3e at %s (max|g|=%.3e)\n", s,
                  r.max_rel_err, r.worst_param.c_str(), r.max_abs_gradient);
    }
    const bool pass = report.max_rel_err < gc_threshold;
    std::printf("max_rel_err=%.3e (worst %s, seed %d)\n", report.max_rel_err,
                report.worst_param.c_str(), report.worst_seed);
    std::printf("max_rel_err < %g: %s\n", gc_threshold, pass ? "PASS" : "FAIL");
    if (!pass) exit_code = kExitCheckFailure;
  });

  if (argc > 0) app.name(argv[0]);
  std::vector<std::string> args =
      expand_config_tokens(app, std::vector<std::string>(argv + 1, argv + argc));
  std::reverse(args.begin(), args.end());

  try {
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (ev->parsed())
    return run_experiment_command(ev, espec, etuner, ealg, ematrix, ethreads, eout);
  if (sw->parsed())
    return run_experiment_command(sw, sspec, stuner, salg, smatrix, sthreads, sout);
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailure;
  }
}
