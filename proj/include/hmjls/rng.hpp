#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include <Eigen/Core>

namespace hmjls {

/// Identifies one reproducible random stream: equal (seed, stream) pairs
/// always produce identical draw sequences.
struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// Counter-based generator: the k-th output of a stream is a fixed mix of
/// (seed, stream, k) and nothing else, so paths generated on different
/// streams are reproducible independent of evaluation order. The output
/// function is the SplitMix64 finalizer applied to a Weyl sequence.
class CounterRng {
 public:
  explicit CounterRng(RngSpec spec) : key_(derive_key(spec.seed, spec.stream)) {}
  CounterRng(std::uint64_t seed, std::uint64_t stream) : CounterRng(RngSpec{seed, stream}) {}

  std::uint64_t next_u64() {
    counter_ += kGamma;
    return mix(key_ ^ counter_);
  }

  /// Uniform on [0, 1), 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal (Box-Muller).
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = kTwoPi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Index i with probability weights[i] / sum(weights). Weights must be
  /// nonnegative with positive sum.
  int next_categorical(const Eigen::VectorXd& weights) {
    const double total = weights.sum();
    if (!(total > 0.0)) throw std::invalid_argument("categorical weights must have positive sum");
    double u = next_double() * total;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;  // rounding guard
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
  static constexpr double kTwoPi = 6.283185307179586476925286766559;

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }
  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
    return mix(seed + kGamma * mix(stream + kGamma));
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace hmjls
