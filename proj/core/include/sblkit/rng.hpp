#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sblkit {

/// SplitMix64 finalizer. Used to derive well-separated sub-seeds from one
/// master seed; every stream in the toolkit flows from (seed, purpose, index)
/// through this, so runs are reproducible from a single seed knob.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Derive a sub-seed for the index-th item of a stream.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ull));
}

/// Derive a sub-seed for a named purpose ("matrix", "signal", "noise", ...).
constexpr std::uint64_t tag_seed(std::uint64_t seed, std::string_view tag) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return splitmix64(seed ^ h);
}

/// Seeded generator wrapping mt19937_64. Determinism contract: a given seed
/// reproduces the same stream within one build (distributions are the
/// standard library's, so streams are not pinned across standard libraries).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform01() { return unif01_(engine_); }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * unif01_(engine_);
  }
  bool bernoulli(double p) { return unif01_(engine_) < p; }

  std::mt19937_64& engine() noexcept { return engine_; }

private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unif01_{0.0, 1.0};
};

}  // namespace sblkit
