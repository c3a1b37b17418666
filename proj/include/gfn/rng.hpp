#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace gfn::diff {

/// Counter-based deterministic generator (splitmix-style output function).
/// Identical seed and call sequence produce identical streams on every
/// platform, and the full state is just (seed, counter), which makes
/// checkpointing trivial.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), counter_(0) {}

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("SeededRng: uniform_int(0)");
    return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Derives an independent stream; deterministic in (current state, tag).
  SeededRng fork(std::uint64_t tag) const {
    std::uint64_t z = seed_ ^ (0xD1B54A32D192ED03ULL + tag * 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return SeededRng(z ^ (z >> 31));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

/// Independent Bernoulli(keep_prob) 0/1 vector of the given length.
inline std::vector<std::int32_t> bernoulli_mask(SeededRng& rng, int length, double keep_prob) {
  if (length < 1) throw std::invalid_argument("bernoulli_mask: length must be >= 1");
  if (keep_prob < 0.0 || keep_prob > 1.0)
    throw std::invalid_argument("bernoulli_mask: keep_prob outside [0, 1]");
  std::vector<std::int32_t> mask(static_cast<std::size_t>(length));
  for (auto& m : mask) m = rng.bernoulli(keep_prob) ? 1 : 0;
  return mask;
}

}  // namespace gfn::diff
