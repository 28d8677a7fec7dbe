#include "sblkit/tuners.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "weight I/O assumes a little-endian host");

namespace sblkit {

namespace {

constexpr char kWeightsMagic[4] = {'S', 'B', 'N', 'N'};
constexpr std::uint32_t kMaxLayerDim = 1u << 20;

// Rounding in mean/log can push an exactly-zero radicand a hair negative.
constexpr double kRadicandSlack = -1e-12;

void check_gamma(const Eigen::VectorXd& gamma) {
  if (gamma.size() == 0) throw DomainError("empirical tuner: empty gamma");
  for (Eigen::Index i = 0; i < gamma.size(); ++i) {
    const double g = gamma[i];
    if (!std::isfinite(g) || g <= 0.0)
      throw DomainError("empirical tuner: gamma[" + std::to_string(i) +
                        "] = " + std::to_string(g) + " is not a positive finite value");
  }
}

Eigen::VectorXd clip_gamma(const Eigen::VectorXd& gamma) {
  return gamma.cwiseMax(kGammaClipLo).cwiseMin(kGammaClipHi);
}

}  // namespace

void NnTunerParams::validate() const {
  if (w.rows() == 0 || w.cols() == 0)
    throw DimensionError("tuner network: empty weight matrix");
  if (b.size() != w.rows())
    throw DimensionError("tuner network: b has length " + std::to_string(b.size()) +
                         ", expected " + std::to_string(w.rows()));
  if (alpha.size() != w.rows())
    throw DimensionError("tuner network: alpha has length " +
                         std::to_string(alpha.size()) + ", expected " +
                         std::to_string(w.rows()));
  if (!w.allFinite() || !b.allFinite() || !alpha.allFinite() || !std::isfinite(d))
    throw DomainError("tuner network: non-finite parameter");
}

double empirical_epsilon(const Eigen::VectorXd& gamma) {
  check_gamma(gamma);
  // Normalizing by the max makes the radicand exactly zero for a constant
  // vector instead of accumulating rounding noise under the sqrt.
  const double gmax = gamma.maxCoeff();
  const Eigen::ArrayXd t = gamma.array() / gmax;
  const double log_mean = std::log(t.mean());
  const double mean_log = t.log().mean();
  double radicand = log_mean - mean_log;
  if (radicand < 0.0) {
    if (radicand < kRadicandSlack)
      throw DomainError("empirical tuner: negative radicand " +
                        std::to_string(radicand));
    radicand = 0.0;
  }
  return 0.5 * std::sqrt(radicand);
}

double nn_epsilon(const NnTunerParams& params, const Eigen::VectorXd& gamma,
                  double clamp_low) {
  return nn_epsilon_traced(params, gamma, clamp_low).epsilon;
}

NnTrace nn_epsilon_traced(const NnTunerParams& params, const Eigen::VectorXd& gamma,
                          double clamp_low) {
  if (gamma.size() != params.n_input())
    throw DimensionError("tuner network: gamma has length " +
                         std::to_string(gamma.size()) + ", expected " +
                         std::to_string(params.n_input()));
  NnTrace trace;
  trace.gamma_clipped = clip_gamma(gamma);
  trace.psi = (params.w * trace.gamma_clipped + params.b).array().tanh();
  trace.raw = std::tanh(params.alpha.dot(trace.psi) + params.d);
  trace.clamped = trace.raw < clamp_low;
  trace.epsilon = trace.clamped ? clamp_low : trace.raw;
  return trace;
}

Tuner Tuner::fixed(double epsilon0) {
  if (!(epsilon0 > -0.5))
    throw DomainError("fixed tuner: epsilon0 = " + std::to_string(epsilon0) +
                      " must exceed -0.5");
  return Tuner(Policy(Fixed{epsilon0}));
}

Tuner Tuner::empirical() { return Tuner(Policy(Empirical{})); }

Tuner Tuner::neural(std::shared_ptr<const NnTunerParams> params, double clamp_low) {
  if (!params) throw DomainError("neural tuner: null parameters");
  params->validate();
  if (!(clamp_low >= -0.49))
    throw DomainError("neural tuner: clamp_low = " + std::to_string(clamp_low) +
                      " must be at least -0.49");
  return Tuner(Policy(Neural{std::move(params), clamp_low}));
}

double Tuner::epsilon(const Eigen::VectorXd& gamma) const {
  return std::visit(
      [&](const auto& policy) -> double {
        using T = std::decay_t<decltype(policy)>;
        if constexpr (std::is_same_v<T, Fixed>) {
          return policy.epsilon0;
        } else if constexpr (std::is_same_v<T, Empirical>) {
          return empirical_epsilon(gamma);
        } else {
          return nn_epsilon(*policy.params, gamma, policy.clamp_low);
        }
      },
      policy_);
}

double Tuner::fixed_value() const {
  if (const auto* f = std::get_if<Fixed>(&policy_)) return f->epsilon0;
  throw DomainError("tuner is not fixed-policy");
}

const NnTunerParams& Tuner::params() const {
  if (const auto* n = std::get_if<Neural>(&policy_)) return *n->params;
  throw DomainError("tuner is not neural-policy");
}

double Tuner::clamp_low() const {
  if (const auto* n = std::get_if<Neural>(&policy_)) return n->clamp_low;
  throw DomainError("tuner is not neural-policy");
}

std::string Tuner::name() const {
  if (is_fixed()) return "fixed";
  if (is_empirical()) return "empirical";
  return "learned";
}

void save_params(const NnTunerParams& params, const std::filesystem::path& path) {
  params.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kWeightsMagic, 4);
  const std::uint32_t version = kWeightsFormatVersion;
  const std::uint32_t n = static_cast<std::uint32_t>(params.n_input());
  const std::uint32_t l = static_cast<std::uint32_t>(params.l_hidden());
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&l), 4);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w_row =
      params.w;
  out.write(reinterpret_cast<const char*>(w_row.data()),
            static_cast<std::streamsize>(sizeof(double) * w_row.size()));
  out.write(reinterpret_cast<const char*>(params.b.data()),
            static_cast<std::streamsize>(sizeof(double) * params.b.size()));
  out.write(reinterpret_cast<const char*>(params.alpha.data()),
            static_cast<std::streamsize>(sizeof(double) * params.alpha.size()));
  out.write(reinterpret_cast<const char*>(&params.d),
            static_cast<std::streamsize>(sizeof(double)));
  if (!out) throw IoError("failed writing " + path.string());
}

NnTunerParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kWeightsMagic, 4) != 0)
    throw FormatError("bad weight file magic in " + path.string() +
                      " (expected SBNN)");
  std::uint32_t version = 0, n = 0, l = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&n), 4);
  in.read(reinterpret_cast<char*>(&l), 4);
  if (!in) throw FormatError("weight file truncated in header: " + path.string());
  if (version != kWeightsFormatVersion)
    throw FormatError("unsupported weight file version " + std::to_string(version) +
                      " in " + path.string());
  if (n == 0 || l == 0 || n > kMaxLayerDim || l > kMaxLayerDim)
    throw FormatError("weight file dimensions out of range: " + std::to_string(l) +
                      "x" + std::to_string(n));

  NnTunerParams params;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w_row(l, n);
  in.read(reinterpret_cast<char*>(w_row.data()),
          static_cast<std::streamsize>(sizeof(double) * w_row.size()));
  params.b.resize(l);
  in.read(reinterpret_cast<char*>(params.b.data()),
          static_cast<std::streamsize>(sizeof(double) * l));
  params.alpha.resize(l);
  in.read(reinterpret_cast<char*>(params.alpha.data()),
          static_cast<std::streamsize>(sizeof(double) * l));
  in.read(reinterpret_cast<char*>(&params.d),
          static_cast<std::streamsize>(sizeof(double)));
  if (!in) throw FormatError("weight file truncated in payload: " + path.string());
  params.w = w_row;
  params.validate();
  return params;
}

NnTunerParams init_params(int n_input, int l_hidden, std::uint64_t seed) {
  if (n_input <= 0 || l_hidden <= 0)
    throw DimensionError("init_params: dimensions must be positive");
  Rng rng(seed);
  NnTunerParams params;
  const double w_bound = std::sqrt(6.0 / (n_input + l_hidden));
  params.w.resize(l_hidden, n_input);
  for (int j = 0; j < l_hidden; ++j)
    for (int i = 0; i < n_input; ++i) params.w(j, i) = rng.uniform(-w_bound, w_bound);
  params.b = Eigen::VectorXd::Zero(l_hidden);
  const double a_bound = std::sqrt(6.0 / (l_hidden + 1));
  params.alpha.resize(l_hidden);
  for (int j = 0; j < l_hidden; ++j) params.alpha[j] = rng.uniform(-a_bound, a_bound);
  params.d = 0.0;
  return params;
}

}  // namespace sblkit
