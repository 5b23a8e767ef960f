#pragma once

#include <cstdint>

namespace hkt::num {

// xoshiro256++ seeded through splitmix64. Same seed, same stream on every
// platform; std::mt19937 + std distributions do not give that guarantee for
// the distributions.
class Prng {
 public:
  explicit Prng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller; the second deviate is cached.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent child stream, e.g. one per trial or worker.
  Prng split(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace hkt::num
