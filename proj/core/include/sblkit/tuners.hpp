#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <memory>
#include <string>
#include <variant>

#include "sblkit/errors.hpp"
#include "sblkit/rng.hpp"

namespace sblkit {

// Shallow network mapping a precision vector gamma (length n_input) to a
// scalar shape parameter: hidden psi = tanh(W*gamma + b), output
// epsilon = max(tanh(alpha.psi + d), clamp_low).
struct NnTunerParams {
  Eigen::MatrixXd w;      // l_hidden x n_input
  Eigen::VectorXd b;      // l_hidden
  Eigen::VectorXd alpha;  // l_hidden
  double d = 0.0;

  int n_input() const { return static_cast<int>(w.cols()); }
  int l_hidden() const { return static_cast<int>(w.rows()); }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(w.size() + b.size() + alpha.size()) + 1;
  }
  void validate() const;
};

// Inputs to the network are clipped into [kGammaClipLo, kGammaClipHi] to keep
// tanh saturation finite when gamma diverges; the clip is observational only
// and never feeds back into the algorithm state.
inline constexpr double kGammaClipLo = 1e-10;
inline constexpr double kGammaClipHi = 1e10;

// Closed-form shape estimate from the spread of the precision vector:
// 0.5 * sqrt(log(mean(gamma)) - mean(log(gamma))).
// Throws DomainError if gamma has a non-positive or non-finite entry, or if
// rounding noise aside the radicand is negative.
double empirical_epsilon(const Eigen::VectorXd& gamma);

// Forward pass of the network above. gamma is clipped, not modified.
double nn_epsilon(const NnTunerParams& params, const Eigen::VectorXd& gamma,
                  double clamp_low);

// Same forward pass but exposing intermediates for gradient replay.
struct NnTrace {
  Eigen::VectorXd gamma_clipped;
  Eigen::VectorXd psi;       // tanh of hidden pre-activation
  double raw = 0.0;          // tanh of output pre-activation, before clamping
  double epsilon = 0.0;
  bool clamped = false;      // true when epsilon == clamp_low won out
};
NnTrace nn_epsilon_traced(const NnTunerParams& params, const Eigen::VectorXd& gamma,
                          double clamp_low);

// Interchangeable epsilon policy used by both recovery algorithms.
class Tuner {
 public:
  static Tuner fixed(double epsilon0);
  static Tuner empirical();
  static Tuner neural(std::shared_ptr<const NnTunerParams> params,
                      double clamp_low = 0.0);

  double epsilon(const Eigen::VectorXd& gamma) const;

  bool is_fixed() const { return std::holds_alternative<Fixed>(policy_); }
  bool is_empirical() const { return std::holds_alternative<Empirical>(policy_); }
  bool is_neural() const { return std::holds_alternative<Neural>(policy_); }

  // Fixed-policy value; throws DomainError for other policies.
  double fixed_value() const;
  // Neural-policy accessors; throw DomainError for other policies.
  const NnTunerParams& params() const;
  double clamp_low() const;

  std::string name() const;

 private:
  struct Fixed {
    double epsilon0;
  };
  struct Empirical {};
  struct Neural {
    std::shared_ptr<const NnTunerParams> params;
    double clamp_low;
  };
  using Policy = std::variant<Fixed, Empirical, Neural>;

  explicit Tuner(Policy policy) : policy_(std::move(policy)) {}
  Policy policy_;
};

// Binary weight container, format "SBNN": magic, u32 version, u32 n_input,
// u32 l_hidden, then little-endian f64 payload w (row-major), b, alpha, d.
inline constexpr std::uint32_t kWeightsFormatVersion = 1;
void save_params(const NnTunerParams& params, const std::filesystem::path& path);
NnTunerParams load_params(const std::filesystem::path& path);

// Glorot-uniform initialization: w in +-sqrt(6/(n_input+l_hidden)),
// alpha in +-sqrt(6/(l_hidden+1)), b = 0, d = 0.
NnTunerParams init_params(int n_input, int l_hidden, std::uint64_t seed);

}  // namespace sblkit
