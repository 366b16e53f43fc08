#ifndef MECO_RNG_HPP
#define MECO_RNG_HPP

#include <cmath>
#include <cstdint>

namespace meco {

/// Counter-based generator: the i-th output is a pure function of
/// (seed, stream, i), so independent streams never share state and any
/// draw can be reproduced without replaying the sequence.
///
/// The mixing function is the SplitMix64 finalizer.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix(mix(seed) ^ (stream * kGolden + 0x632be59bd9b4e019ULL))) {}

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Output at an explicit counter position; does not advance.
  std::uint64_t at(std::uint64_t counter) const { return mix(key_ + counter * kGolden); }

  std::uint64_t next() { return at(counter_++); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unit-mean exponential draw (|h|^2 for a unit-variance Rayleigh channel).
  double exponential() { return -std::log1p(-uniform()); }

  std::uint64_t position() const { return counter_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Stream identifiers. Distinct purposes draw from disjoint streams so that,
/// e.g., adding a Monte Carlo channel check never perturbs scenario sampling.
namespace streams {
constexpr std::uint64_t device(std::uint64_t index) { return 0x1000'0000ULL + index; }
constexpr std::uint64_t channel_mc = 0x2000'0000ULL;
constexpr std::uint64_t channel_trial(std::uint64_t trial) { return 0x3000'0000ULL + trial; }
constexpr std::uint64_t diagnostics = 0x4000'0000ULL;
}  // namespace streams

}  // namespace meco

#endif  // MECO_RNG_HPP
