#include "sblkit/unroll.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>

#include "sblkit/rng.hpp"
#include "sblkit/threading.hpp"

namespace sblkit {

namespace {

// Non-owning view; the referenced params must outlive the tuner.
Tuner borrow_neural(const NnTunerParams& params, double clamp_low) {
  return Tuner::neural(
      std::shared_ptr<const NnTunerParams>(std::shared_ptr<const NnTunerParams>(),
                                           &params),
      clamp_low);
}

}  // namespace

const Eigen::VectorXd& GradientTape::x_hat() const {
  if (layers.empty()) throw StateError("gradient tape is empty");
  return layers.back().x_hat;
}

void GradientTape::validate() const {
  if (layers.empty()) throw StateError("gradient tape is empty");
  const int m = model.m();
  const int n = model.n();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSnapshot& layer = layers[i];
    const bool shapes_ok = layer.tau_p.size() == m && layer.p.size() == m &&
                           layer.v_h.size() == m && layer.h_hat.size() == m &&
                           layer.tau_s.size() == m && layer.s.size() == m &&
                           layer.q.size() == n && layer.x_hat.size() == n &&
                           layer.gamma_hat.size() == n &&
                           layer.gamma_clipped.size() == n && layer.psi.size() > 0;
    if (!shapes_ok)
      throw StateError("gradient tape layer " + std::to_string(i) +
                       " has inconsistent shapes");
    const bool finite =
        layer.tau_p.allFinite() && layer.p.allFinite() && layer.v_h.allFinite() &&
        layer.h_hat.allFinite() && layer.tau_s.allFinite() && layer.s.allFinite() &&
        layer.q.allFinite() && layer.x_hat.allFinite() &&
        layer.gamma_hat.allFinite() && layer.gamma_clipped.allFinite() &&
        layer.psi.allFinite() && std::isfinite(layer.beta_hat) &&
        std::isfinite(layer.tau_q) && std::isfinite(layer.tau_x) &&
        std::isfinite(layer.raw_epsilon) && std::isfinite(layer.epsilon);
    if (!finite)
      throw StateError("gradient tape layer " + std::to_string(i) +
                       " holds non-finite values");
  }
}

GradientBundle GradientBundle::zero(int n_input, int l_hidden) {
  GradientBundle bundle;
  bundle.dw = Eigen::MatrixXd::Zero(l_hidden, n_input);
  bundle.db = Eigen::VectorXd::Zero(l_hidden);
  bundle.dalpha = Eigen::VectorXd::Zero(l_hidden);
  bundle.dd = 0.0;
  return bundle;
}

void GradientBundle::accumulate(const GradientBundle& other) {
  if (dw.rows() != other.dw.rows() || dw.cols() != other.dw.cols())
    throw DimensionError("gradient bundle shape mismatch");
  dw += other.dw;
  db += other.db;
  dalpha += other.dalpha;
  dd += other.dd;
}

void GradientBundle::scale(double factor) {
  dw *= factor;
  db *= factor;
  dalpha *= factor;
  dd *= factor;
}

bool GradientBundle::all_finite() const {
  return dw.allFinite() && db.allFinite() && dalpha.allFinite() && std::isfinite(dd);
}

double GradientBundle::max_abs() const {
  double m = std::abs(dd);
  m = std::max(m, dw.cwiseAbs().maxCoeff());
  m = std::max(m, db.cwiseAbs().maxCoeff());
  m = std::max(m, dalpha.cwiseAbs().maxCoeff());
  return m;
}

double mse_loss(const std::vector<Eigen::VectorXd>& x_hat_batch,
                const std::vector<Eigen::VectorXd>& x_true_batch) {
  if (x_hat_batch.empty()) throw DomainError("mse_loss: empty batch");
  if (x_hat_batch.size() != x_true_batch.size())
    throw DimensionError("mse_loss: batch size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < x_hat_batch.size(); ++i) {
    if (x_hat_batch[i].size() != x_true_batch[i].size())
      throw DimensionError("mse_loss: vector length mismatch at sample " +
                           std::to_string(i));
    sum += (x_hat_batch[i] - x_true_batch[i]).squaredNorm();
  }
  return sum / static_cast<double>(x_hat_batch.size());
}

GradientTape unrolled_forward(const UnitaryModel& model, const NnTunerParams& params,
                              int iters, double clamp_low) {
  if (iters <= 0) throw DomainError("unrolled_forward: iters must be positive");
  if (model.n() != params.n_input())
    throw DimensionError("unrolled_forward: model n = " + std::to_string(model.n()) +
                         " does not match params n_input = " +
                         std::to_string(params.n_input()));
  const Tuner tuner = borrow_neural(params, clamp_low);

  GradientTape tape;
  tape.model = model;
  tape.clamp_low = clamp_low;
  tape.layers.reserve(iters);

  UampState state = uamp_sbl_init(model.m(), model.n());
  for (int i = 0; i < iters; ++i) {
    uamp_sbl_iterate(state, model, tuner);
    LayerSnapshot layer;
    layer.tau_p = state.tau_p;
    layer.p = state.p;
    layer.v_h = state.v_h;
    layer.h_hat = state.h_hat;
    layer.beta_hat = state.beta_hat;
    layer.tau_s = state.tau_s;
    layer.s = state.s;
    layer.tau_q = state.tau_q;
    layer.q = state.q;
    layer.tau_x = state.tau_x;
    layer.x_hat = state.x_hat;
    layer.gamma_hat = state.gamma_hat;
    // Replays the tuner call on the identical input, recovering the hidden
    // activations without touching the runner's code path.
    NnTrace trace = nn_epsilon_traced(params, state.gamma_hat, clamp_low);
    layer.gamma_clipped = std::move(trace.gamma_clipped);
    layer.psi = std::move(trace.psi);
    layer.raw_epsilon = trace.raw;
    layer.epsilon = trace.epsilon;
    layer.clamped = trace.clamped;
    tape.layers.push_back(std::move(layer));
  }
  return tape;
}

GradientTape unrolled_forward(const ProblemInstance& instance,
                              const NnTunerParams& params, int iters,
                              double clamp_low) {
  return unrolled_forward(unitary_transform(instance.a, instance.y), params, iters,
                          clamp_low);
}

namespace {

// Reverse sweep over the whole unrolled graph; the adjoint of every named
// quantity is d(0.5*||x_hat_I - x_true||^2)/d(quantity). collect_layer == -1
// accumulates parameter partials at every layer (the tied gradient); a
// specific index isolates that layer's copy for the untied oracle.
GradientBundle reverse_sweep(const GradientTape& tape, const Eigen::VectorXd& x_true,
                             const NnTunerParams& params, int collect_layer) {
  const UnitaryModel& model = tape.model;
  const int m = model.m();
  const int n = model.n();
  const int iters = tape.iterations();
  if (x_true.size() != n)
    throw DimensionError("unrolled_backward: x_true length does not match model");
  if (params.n_input() != n || params.l_hidden() != tape.layers.front().psi.size())
    throw DimensionError("unrolled_backward: params do not match tape");

  GradientBundle bundle = GradientBundle::zero(params.n_input(), params.l_hidden());

  // Adjoints of the layer outputs, owned across the loop. Start at the loss.
  Eigen::ArrayXd a_x = (tape.layers.back().x_hat - x_true).array();
  Eigen::ArrayXd a_s = Eigen::ArrayXd::Zero(m);
  Eigen::ArrayXd a_gamma = Eigen::ArrayXd::Zero(n);
  double a_tau_x = 0.0;
  double a_beta = 0.0;
  double a_eps = 0.0;

  const Eigen::ArrayXd r = model.r.array();
  const Eigen::ArrayXd lambda = model.lambda_vec.array();

  for (int i = iters - 1; i >= 0; --i) {
    const LayerSnapshot& cur = tape.layers[i];
    const bool first = (i == 0);
    const double beta_prev = first ? kUampInitBeta : tape.layers[i - 1].beta_hat;
    Eigen::ArrayXd gamma_prev;
    Eigen::ArrayXd s_prev;
    if (first) {
      gamma_prev = Eigen::ArrayXd::Constant(n, kUampInitGamma);
      s_prev = Eigen::ArrayXd::Zero(m);
    } else {
      gamma_prev = tape.layers[i - 1].gamma_hat.array();
      s_prev = tape.layers[i - 1].s.array();
    }

    const Eigen::ArrayXd tau_p = cur.tau_p.array();
    const Eigen::ArrayXd tau_s = cur.tau_s.array();
    const Eigen::ArrayXd x_hat = cur.x_hat.array();
    const Eigen::ArrayXd gamma = cur.gamma_hat.array();

    // Line 13: epsilon = clamp(tanh(alpha . tanh(W gc + b) + d)). A clamped
    // output is locally constant, so the whole subgraph propagates nothing.
    if (a_eps != 0.0 && !cur.clamped) {
      const Eigen::ArrayXd psi = cur.psi.array();
      const double du = a_eps * (1.0 - cur.raw_epsilon * cur.raw_epsilon);
      const Eigen::VectorXd dz =
          ((du * params.alpha.array()) * (1.0 - psi * psi)).matrix();
      if (collect_layer < 0 || collect_layer == i) {
        bundle.dalpha += du * cur.psi;
        bundle.dd += du;
        bundle.dw += dz * cur.gamma_clipped.transpose();
        bundle.db += dz;
      }
      const Eigen::VectorXd d_gc = params.w.transpose() * dz;
      for (int k = 0; k < n; ++k) {
        if (gamma[k] > kGammaClipLo && gamma[k] < kGammaClipHi)
          a_gamma[k] += d_gc[k];
      }
    }

    // Line 12: gamma_k = (2 eps_prev + 1) / (x_hat_k^2 + tau_x).
    double a_eps_in = 0.0;
    {
      const Eigen::ArrayXd d = x_hat.square() + cur.tau_x;
      a_eps_in = (a_gamma * 2.0 / d).sum();
      a_x += a_gamma * (-2.0) * gamma * x_hat / d;
      a_tau_x += (a_gamma * (-gamma) / d).sum();
    }

    // Lines 11 and 10 share w_k = 1 + tau_q * gamma_prev_k.
    const Eigen::ArrayXd w = 1.0 + cur.tau_q * gamma_prev;
    Eigen::ArrayXd a_gamma_in = Eigen::ArrayXd::Zero(n);
    double a_tau_q = 0.0;

    // Line 11: x_hat = q / w.
    const Eigen::ArrayXd a_q = a_x / w;
    a_tau_q += (a_x * (-x_hat) * gamma_prev / w).sum();
    a_gamma_in += a_x * (-x_hat) * (cur.tau_q / w);

    // Line 10: tau_x = (tau_q / n) sum(1 / w); d tau_x / d tau_q
    // telescopes to (1/n) sum(1 / w^2).
    a_tau_q += a_tau_x * w.square().inverse().sum() / n;
    a_gamma_in += a_tau_x * (-cur.tau_q * cur.tau_q / n) * w.square().inverse();

    // Line 9: q = x_hat_prev + tau_q * Phi^T s.
    Eigen::ArrayXd a_x_in = a_q;
    a_tau_q += a_q.matrix().dot(model.phi.transpose() * cur.s);
    Eigen::ArrayXd a_s_cur = a_s + (cur.tau_q * (model.phi * a_q.matrix())).array();

    // Line 8: tau_q = n / (lambda . tau_s).
    Eigen::ArrayXd a_tau_s = a_tau_q * (-cur.tau_q * cur.tau_q / n) * lambda;

    // Line 7: s = tau_s * (r - p).
    a_tau_s += a_s_cur * (r - cur.p.array());
    Eigen::ArrayXd a_p = -a_s_cur * tau_s;

    // Line 6: tau_s = 1 / (tau_p + 1/beta_hat); uses this layer's beta_hat.
    Eigen::ArrayXd a_tau_p = -a_tau_s * tau_s.square();
    double a_beta_cur =
        a_beta + (a_tau_s * tau_s.square()).sum() / (cur.beta_hat * cur.beta_hat);

    // Line 5: beta_hat = m / (||r - h_hat||^2 + sum v_h).
    const Eigen::ArrayXd resid = r - cur.h_hat.array();
    const double beta_sq_m = cur.beta_hat * cur.beta_hat / m;
    const Eigen::ArrayXd a_h = a_beta_cur * 2.0 * beta_sq_m * resid;
    const double a_vh_each = -a_beta_cur * beta_sq_m;

    // Lines 4 and 3 share denom = 1 + beta_prev * tau_p.
    const Eigen::ArrayXd denom = 1.0 + beta_prev * tau_p;
    double a_beta_in = 0.0;

    // Line 4: h_hat = (beta_prev * tau_p * r + p) / denom.
    a_p += a_h / denom;
    a_tau_p += a_h * beta_prev * resid / denom;
    a_beta_in += (a_h * tau_p * resid / denom).sum();

    // Line 3: v_h = tau_p / denom.
    a_tau_p += a_vh_each * denom.square().inverse();
    a_beta_in += (a_vh_each * (-tau_p.square()) * denom.square().inverse()).sum();

    // Line 2: p = Phi x_hat_prev - tau_p * s_prev.
    a_x_in += (model.phi.transpose() * a_p.matrix()).array();
    a_tau_p += -a_p * s_prev;
    const Eigen::ArrayXd a_s_in = -a_p * tau_p;

    // Line 1: tau_p = tau_x_prev * lambda.
    const double a_tau_x_in = (a_tau_p * lambda).sum();

    a_x = std::move(a_x_in);
    a_s = a_s_in;
    a_gamma = std::move(a_gamma_in);
    a_tau_x = a_tau_x_in;
    a_beta = a_beta_in;
    a_eps = a_eps_in;
  }

  if (!bundle.all_finite())
    throw NumericalError("unrolled_backward: non-finite gradient");
  return bundle;
}

}  // namespace

GradientBundle unrolled_backward(const GradientTape& tape,
                                 const Eigen::VectorXd& x_true,
                                 const NnTunerParams& params) {
  tape.validate();
  return reverse_sweep(tape, x_true, params, -1);
}

std::vector<GradientBundle> unrolled_backward_untied(const GradientTape& tape,
                                                     const Eigen::VectorXd& x_true,
                                                     const NnTunerParams& params) {
  tape.validate();
  std::vector<GradientBundle> per_layer;
  per_layer.reserve(tape.iterations());
  for (int k = 0; k < tape.iterations(); ++k)
    per_layer.push_back(reverse_sweep(tape, x_true, params, k));
  return per_layer;
}

AdamState AdamState::zero(int n_input, int l_hidden) {
  AdamState state;
  state.m_w = Eigen::MatrixXd::Zero(l_hidden, n_input);
  state.v_w = Eigen::MatrixXd::Zero(l_hidden, n_input);
  state.m_b = Eigen::VectorXd::Zero(l_hidden);
  state.v_b = Eigen::VectorXd::Zero(l_hidden);
  state.m_alpha = Eigen::VectorXd::Zero(l_hidden);
  state.v_alpha = Eigen::VectorXd::Zero(l_hidden);
  state.m_d = 0.0;
  state.v_d = 0.0;
  state.step = 0;
  return state;
}

namespace {

template <typename T>
void adam_update(T& theta, T& m, T& v, const T& g, double lr, double b1, double b2,
                 double eps, double corr1, double corr2) {
  m = b1 * m + (1.0 - b1) * g;
  v = (b2 * v.array() + (1.0 - b2) * g.array().square()).matrix();
  theta -= (lr * (m.array() / corr1) / ((v.array() / corr2).sqrt() + eps)).matrix();
}

void adam_update_scalar(double& theta, double& m, double& v, double g, double lr,
                        double b1, double b2, double eps, double corr1,
                        double corr2) {
  m = b1 * m + (1.0 - b1) * g;
  v = b2 * v + (1.0 - b2) * g * g;
  theta -= lr * (m / corr1) / (std::sqrt(v / corr2) + eps);
}

}  // namespace

void adam_step(NnTunerParams& params, const GradientBundle& grads, AdamState& state,
               const AdamConfig& config) {
  if (grads.dw.rows() != params.w.rows() || grads.dw.cols() != params.w.cols())
    throw DimensionError("adam_step: gradient shape does not match params");
  if (!grads.all_finite()) throw DomainError("adam_step: non-finite gradient");
  state.step += 1;
  const double corr1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  adam_update(params.w, state.m_w, state.v_w, grads.dw, config.learning_rate,
              config.beta1, config.beta2, config.eps, corr1, corr2);
  adam_update(params.b, state.m_b, state.v_b, grads.db, config.learning_rate,
              config.beta1, config.beta2, config.eps, corr1, corr2);
  adam_update(params.alpha, state.m_alpha, state.v_alpha, grads.dalpha,
              config.learning_rate, config.beta1, config.beta2, config.eps, corr1,
              corr2);
  adam_update_scalar(params.d, state.m_d, state.v_d, grads.dd, config.learning_rate,
                     config.beta1, config.beta2, config.eps, corr1, corr2);
}

void TrainConfig::validate(std::size_t train_size) const {
  if (unroll_iters <= 0) throw DomainError("train: unroll_iters must be positive");
  if (batch_size <= 0) throw DomainError("train: batch_size must be positive");
  if (epochs <= 0) throw DomainError("train: epochs must be positive");
  if (!(learning_rate > 0.0)) throw DomainError("train: learning_rate must be positive");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
    throw DomainError("train: adam betas must lie in (0, 1)");
  if (!(adam_eps > 0.0)) throw DomainError("train: adam_eps must be positive");
  if (l_hidden <= 0) throw DomainError("train: l_hidden must be positive");
  if (!(clamp_low >= -0.49))
    throw DomainError("train: clamp_low must be at least -0.49");
  if (threads < 0) throw DomainError("train: threads must be non-negative");
  if (static_cast<std::size_t>(batch_size) > train_size)
    throw DomainError("train: batch_size " + std::to_string(batch_size) +
                      " exceeds train split size " + std::to_string(train_size));
}

namespace {

double split_validation_loss(const std::vector<std::unique_ptr<UnitaryModel>>& models,
                             const Dataset& dataset,
                             const std::vector<int>& indices,
                             const NnTunerParams& params, const TrainConfig& config,
                             std::size_t threads) {
  const Tuner tuner = borrow_neural(params, config.clamp_low);
  UampOptions options;
  options.iterations = config.unroll_iters;
  options.record_nmse = false;
  std::vector<double> errors(indices.size(), 0.0);
  parallel_for(indices.size(), threads, [&](std::size_t k) {
    const std::size_t idx = static_cast<std::size_t>(indices[k]);
    RecoveryResult res = uamp_sbl_run_model(
        *models[idx], dataset.instances[idx].x_true, tuner, options);
    errors[k] = (res.x_hat - dataset.instances[idx].x_true).squaredNorm();
  });
  double sum = 0.0;
  for (double e : errors) sum += e;
  return sum / static_cast<double>(indices.size());
}

}  // namespace

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
  config.validate(dataset.train_indices.size());
  if (dataset.train_indices.empty() || dataset.validation_indices.empty())
    throw DomainError("train: dataset must carry train and validation splits");
  const int n = dataset.spec.n;
  const std::size_t threads =
      resolve_threads(static_cast<std::size_t>(std::max(config.threads, 0)));

  // One transform per instance, shared across every epoch.
  std::vector<std::unique_ptr<UnitaryModel>> models(dataset.instances.size());
  {
    std::vector<int> used = dataset.train_indices;
    used.insert(used.end(), dataset.validation_indices.begin(),
                dataset.validation_indices.end());
    parallel_for(used.size(), threads, [&](std::size_t k) {
      const std::size_t idx = static_cast<std::size_t>(used[k]);
      const ProblemInstance& inst = dataset.instances[idx];
      models[idx] = std::make_unique<UnitaryModel>(unitary_transform(inst.a, inst.y));
    });
  }

  NnTunerParams params = init_params(n, config.l_hidden, tag_seed(config.seed, "init"));
  AdamState astate = AdamState::zero(n, config.l_hidden);
  const AdamConfig aconf{config.learning_rate, config.adam_beta1, config.adam_beta2,
                         config.adam_eps};

  TrainResult result;
  result.history.initial_validation_loss = split_validation_loss(
      models, dataset, dataset.validation_indices, params, config, threads);
  result.history.best_validation_loss =
      std::numeric_limits<double>::infinity();

  std::vector<int> order;
  const std::uint64_t shuffle_seed = tag_seed(config.seed, "shuffle");

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order = dataset.train_indices;
    Rng shuffle_rng(mix_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

    double epoch_error_sum = 0.0;
    std::size_t epoch_samples = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size), ++batch_index) {
      const std::size_t len =
          std::min<std::size_t>(config.batch_size, order.size() - start);
      std::vector<GradientBundle> bundles(len);
      std::vector<double> errors(len, 0.0);
      parallel_for(len, threads, [&](std::size_t k) {
        const std::size_t idx = static_cast<std::size_t>(order[start + k]);
        const ProblemInstance& inst = dataset.instances[idx];
        GradientTape tape = unrolled_forward(*models[idx], params,
                                             config.unroll_iters, config.clamp_low);
        errors[k] = (tape.x_hat() - inst.x_true).squaredNorm();
        bundles[k] = reverse_sweep(tape, inst.x_true, params, -1);
      });

      GradientBundle batch_grad = GradientBundle::zero(n, config.l_hidden);
      for (std::size_t k = 0; k < len; ++k) {
        batch_grad.accumulate(bundles[k]);
        epoch_error_sum += errors[k];
      }
      batch_grad.scale(1.0 / static_cast<double>(len));
      epoch_samples += len;

      if (!batch_grad.all_finite() ||
          !std::isfinite(epoch_error_sum))
        throw TrainingError("training diverged: non-finite batch gradient or loss",
                            epoch, batch_index);
      adam_step(params, batch_grad, astate, aconf);
    }

    const double train_loss = epoch_error_sum / static_cast<double>(epoch_samples);
    const double val_loss = split_validation_loss(
        models, dataset, dataset.validation_indices, params, config, threads);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
      throw TrainingError("training diverged: non-finite epoch loss", epoch, -1);
    result.history.train_loss.push_back(train_loss);
    result.history.val_loss.push_back(val_loss);
    if (val_loss < result.history.best_validation_loss) {
      result.history.best_validation_loss = val_loss;
      result.history.best_epoch = epoch;
      result.params = params;
    }
  }
  return result;
}

std::string history_csv(const TrainHistory& history) {
  std::string out = "epoch,train_loss,val_loss\n";
  char buf[96];
  for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e, history.train_loss[e],
                  history.val_loss[e]);
    out += buf;
  }
  return out;
}

void save_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << history_csv(history);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace sblkit
