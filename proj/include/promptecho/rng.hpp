#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>

namespace promptecho {

/// splitmix64 step (Vigna). Advances `state` and returns the next value.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic, platform-independent RNG. All sampling in the project
/// goes through this type; std:: distributions are avoided because their
/// output is implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) { (void)splitmix64(state_); }

  uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be > 0.
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Draw from a categorical distribution. `probs` need not be perfectly
  /// normalized; the last index absorbs rounding slack.
  int categorical(std::span<const double> probs) {
    double u = uniform01();
    double cum = 0.0;
    for (size_t i = 0; i + 1 < probs.size(); ++i) {
      cum += probs[i];
      if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

 private:
  uint64_t state_;
};

/// Derives an independent stream seed from a root seed and a path of
/// indices, e.g. stream_seed(seed, {iteration, prompt_idx, sample_idx}).
/// Pure function, so concurrent or resumed runs see identical streams.
inline uint64_t stream_seed(uint64_t seed, std::initializer_list<uint64_t> path) {
  uint64_t s = seed;
  (void)splitmix64(s);
  for (uint64_t v : path) {
    s ^= 0x9e3779b97f4a7c15ULL + v;
    (void)splitmix64(s);
  }
  return s;
}

}  // namespace promptecho
