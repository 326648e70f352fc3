#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace strucdiff {

// SplitMix64 finalizer; used to expand one seed into independent streams.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seeded random source. `split(k)` yields the k-th child stream of a seed
// without touching this generator's state, so parallel trials stay
// reproducible regardless of evaluation order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix_seed(seed)) {}

  std::uint64_t seed() const { return seed_; }
  Rng split(std::uint64_t stream) const { return Rng(mix_seed(seed_ ^ mix_seed(stream + 0x51ed27ULL))); }

  std::mt19937_64& engine() { return engine_; }
  std::uint64_t next_u64() { return engine_(); }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  // Uniform integer in [0, n).
  int index(int n) { return std::uniform_int_distribution<int>(0, n - 1)(engine_); }
  bool bernoulli(double p) { return uniform() < p; }

  // Draws from an unnormalized nonnegative weight vector.
  int categorical(const std::vector<double>& weights) {
    return std::discrete_distribution<int>(weights.begin(), weights.end())(engine_);
  }

  template <class It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, engine_);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace strucdiff
