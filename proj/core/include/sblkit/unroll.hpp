#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "sblkit/errors.hpp"
#include "sblkit/problem.hpp"
#include "sblkit/tuners.hpp"
#include "sblkit/uamp.hpp"

namespace sblkit {

// Everything the reverse sweep needs from one unrolled layer. Values are the
// post-line states of a single uamp_sbl_iterate call plus the tuner-network
// intermediates of its line-13 call.
struct LayerSnapshot {
  Eigen::VectorXd tau_p;          // m
  Eigen::VectorXd p;              // m
  Eigen::VectorXd v_h;            // m
  Eigen::VectorXd h_hat;          // m
  double beta_hat = 0.0;
  Eigen::VectorXd tau_s;          // m
  Eigen::VectorXd s;              // m
  double tau_q = 0.0;
  Eigen::VectorXd q;              // n
  double tau_x = 0.0;
  Eigen::VectorXd x_hat;          // n
  Eigen::VectorXd gamma_hat;      // n
  Eigen::VectorXd gamma_clipped;  // n, tuner input after clipping
  Eigen::VectorXd psi;            // l_hidden
  double raw_epsilon = 0.0;       // pre-clamp tanh output
  double epsilon = 0.0;
  bool clamped = false;
};

struct GradientTape {
  UnitaryModel model;
  std::vector<LayerSnapshot> layers;
  double clamp_low = 0.0;

  int iterations() const { return static_cast<int>(layers.size()); }
  const Eigen::VectorXd& x_hat() const;
  void validate() const;
};

// Loss partials with respect to the tied tuner parameters, summed over all
// unrolled layers.
struct GradientBundle {
  Eigen::MatrixXd dw;      // l_hidden x n_input
  Eigen::VectorXd db;      // l_hidden
  Eigen::VectorXd dalpha;  // l_hidden
  double dd = 0.0;

  static GradientBundle zero(int n_input, int l_hidden);
  void accumulate(const GradientBundle& other);
  void scale(double factor);
  bool all_finite() const;
  double max_abs() const;
};

// Mean over the batch of squared Euclidean errors.
double mse_loss(const std::vector<Eigen::VectorXd>& x_hat_batch,
                const std::vector<Eigen::VectorXd>& x_true_batch);

// Runs uamp_sbl_iterate for iters steps with the neural tuner, recording a
// complete snapshot per layer. The trajectory is bitwise identical to
// uamp_sbl_run with the same tuner.
GradientTape unrolled_forward(const UnitaryModel& model, const NnTunerParams& params,
                              int iters, double clamp_low = 0.0);
GradientTape unrolled_forward(const ProblemInstance& instance,
                              const NnTunerParams& params, int iters,
                              double clamp_low = 0.0);

// Reverse-mode gradient of 0.5 * ||x_hat_final - x_true||^2 through every
// line of the unrolled graph, parameters tied across layers. Clamped tuner
// outputs and clipped gamma entries propagate zero gradient.
GradientBundle unrolled_backward(const GradientTape& tape,
                                 const Eigen::VectorXd& x_true,
                                 const NnTunerParams& params);

// Oracle variant: per-layer gradients with each layer's parameter copy
// treated as independent (sweep k collects only layer k's partials). Their
// sum must match the tied gradient.
std::vector<GradientBundle> unrolled_backward_untied(const GradientTape& tape,
                                                     const Eigen::VectorXd& x_true,
                                                     const NnTunerParams& params);

struct AdamState {
  Eigen::MatrixXd m_w, v_w;
  Eigen::VectorXd m_b, v_b;
  Eigen::VectorXd m_alpha, v_alpha;
  double m_d = 0.0, v_d = 0.0;
  long step = 0;

  static AdamState zero(int n_input, int l_hidden);
};

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam update with bias correction, in place.
void adam_step(NnTunerParams& params, const GradientBundle& grads, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
  int unroll_iters = 50;
  int batch_size = 32;
  int epochs = 150;
  double learning_rate = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int l_hidden = 256;
  double clamp_low = -0.49;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate(std::size_t train_size) const;
};

struct TrainHistory {
  std::vector<double> train_loss;  // per-epoch mean over processed samples
  std::vector<double> val_loss;    // per-epoch validation loss
  double initial_validation_loss = 0.0;
  int best_epoch = -1;
  double best_validation_loss = 0.0;
};

struct TrainResult {
  NnTunerParams params;  // best-validation checkpoint
  TrainHistory history;
};

// Mini-batch training of the tied tuner parameters on the dataset's train
// split with per-epoch validation and best-checkpoint selection. Throws
// TrainingError with epoch/batch indices if the loss leaves the finite range.
TrainResult train(const Dataset& dataset, const TrainConfig& config);

// History CSV: header "epoch,train_loss,val_loss", one row per epoch.
std::string history_csv(const TrainHistory& history);
void save_history_csv(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace sblkit
